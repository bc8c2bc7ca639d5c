/* tslint:disable */
/* eslint-disable */

/**
 * Solves a built-in circuit under an accident budget and samples one lap.
 */
export function solve_circuit(layout: string, budget: number, horizon: number, drift: number, seed: bigint): string;

/**
 * Baseline threat of one moving obstacle around an agent with velocity
 * code `velocity` (0 still, 1..=4 for N, E, S, W). Returns `{"grid": rows}`.
 */
export function threat_heatmap(velocity: number, radius: number, move_prob: number, horizon: number): string;

/**
 * Per-step threshold for every horizon in `1..=max_horizon`, in both modes.
 */
export function threshold_curve(budget: number, beta: number, max_horizon: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly solve_circuit: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number, number, number];
    readonly threat_heatmap: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly threshold_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
