//! Grid race circuit with momentum.
//!
//! The car has a cell, one of eight headings and a speed in `0..=max_speed`.
//! Each of the nine actions steers by one heading step (left, straight, right)
//! and changes speed by -1, 0 or +1; the car then advances `speed` cells. A
//! wall on the path is a collision: the car stops on the last free cell and the
//! step carries danger 1. After the move the heading may drift by one step and
//! the speed may surge by one, so danger is a deterministic function of the
//! state and action.
//!
//! Reward is angular progress around the track centroid scaled by the mean
//! track radius, a grid stand-in for distance travelled along the course.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::layout::{Layout, HEADINGS};
use crate::cmdp::{Cmdp, Kernel};
use crate::error::{Error, Result};

/// Width-2 loop used for training.
pub const TRAINING_RING: &str = "\
##########
#>.......#
#........#
#..####..#
#..####..#
#........#
#........#
##########
";

/// The training loop narrowed to width 1.
pub const NARROW_RING: &str = "\
##########
#>.......#
#.######.#
#.######.#
#.######.#
#.######.#
#........#
##########
";

/// Rounded loop of width 2.
pub const CIRCLE: &str = "\
############
####....####
##........##
#...####...#
#^.######..#
#..######..#
#...####...#
##........##
####....####
############
";

/// Twelve-cell loop.
pub const SMALL_RING: &str = "\
######
#>...#
#.##.#
#.##.#
#....#
######
";

pub fn builtin_layout(name: &str) -> Option<&'static str> {
    match name {
        "training" | "ring" => Some(TRAINING_RING),
        "narrow" => Some(NARROW_RING),
        "circle" => Some(CIRCLE),
        "small" => Some(SMALL_RING),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CircuitConfig {
    /// ASCII layout or the name of a built-in one.
    pub layout: String,
    pub max_speed: usize,
    /// Probability of a one-step heading drift (split evenly left and right).
    pub drift: f64,
    /// Probability of a one-step speed surge.
    pub surge: f64,
    pub horizon: usize,
    pub gamma: f64,
    pub beta: f64,
    pub collision_penalty: f64,
    pub stop_penalty: f64,
    pub progress_scale: f64,
}

impl Default for CircuitConfig {
    fn default() -> Self {
        Self {
            layout: "training".into(),
            max_speed: 2,
            drift: 0.1,
            surge: 0.05,
            horizon: 40,
            gamma: 0.99,
            beta: 0.99,
            collision_penalty: -200.0,
            stop_penalty: -1.0,
            progress_scale: 1.0,
        }
    }
}

impl CircuitConfig {
    pub fn with_layout(layout: &str) -> Self {
        Self { layout: layout.into(), ..Self::default() }
    }

    fn layout_text(&self) -> &str {
        builtin_layout(&self.layout).unwrap_or(&self.layout)
    }
}

/// Car pose: cell, heading and speed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub heading: usize,
    pub speed: usize,
}

/// Outcome of the deterministic part of a step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Move {
    pub pose: Pose,
    pub collided: bool,
    pub reward: f64,
}

#[derive(Clone, Debug)]
pub struct Circuit {
    pub config: CircuitConfig,
    pub layout: Layout,
    pub cells: Vec<(usize, usize)>,
    cell_index: Vec<Option<usize>>,
    centroid: (f64, f64),
    pub mean_radius: f64,
    direction: f64,
    pub cmdp: Cmdp,
}

impl Circuit {
    pub fn n_speeds(&self) -> usize {
        self.config.max_speed + 1
    }

    pub fn state(&self, pose: Pose) -> Option<usize> {
        let c = self.cell_index[pose.y * self.layout.width + pose.x]?;
        Some((c * 8 + pose.heading) * self.n_speeds() + pose.speed)
    }

    pub fn pose(&self, s: usize) -> Pose {
        let v = self.n_speeds();
        let speed = s % v;
        let heading = (s / v) % 8;
        let (x, y) = self.cells[s / v / 8];
        Pose { x, y, heading, speed }
    }

    fn angle(&self, x: usize, y: usize) -> f64 {
        (-(y as f64 + 0.5 - self.centroid.1)).atan2(x as f64 + 0.5 - self.centroid.0)
    }

    /// Signed progress from one cell to another along the course direction.
    pub fn progress(&self, from: (usize, usize), to: (usize, usize)) -> f64 {
        let mut d = self.angle(to.0, to.1) - self.angle(from.0, from.1);
        if d > PI {
            d -= 2.0 * PI;
        } else if d <= -PI {
            d += 2.0 * PI;
        }
        self.direction * d * self.mean_radius
    }

    /// Length of one lap in progress units.
    pub fn lap_length(&self) -> f64 {
        2.0 * PI * self.mean_radius
    }

    /// Steering and acceleration of action `a`: `(steer, accel)` in `{-1, 0, 1}^2`.
    pub fn decode_action(a: usize) -> (i32, i32) {
        (a as i32 / 3 - 1, a as i32 % 3 - 1)
    }

    /// Steers, accelerates and advances without noise.
    pub fn advance(&self, pose: Pose, a: usize) -> Move {
        let c = &self.config;
        let (steer, accel) = Self::decode_action(a);
        let heading = (pose.heading as i32 - steer).rem_euclid(8) as usize;
        let speed = (pose.speed as i32 + accel).clamp(0, c.max_speed as i32) as usize;
        let (dx, dy) = HEADINGS[heading];
        let (mut x, mut y) = (pose.x as i32, pose.y as i32);
        let mut collided = false;
        for _ in 0..speed {
            if self.layout.is_passable(x + dx, y + dy) {
                x += dx;
                y += dy;
            } else {
                collided = true;
                break;
            }
        }
        let end = (x as usize, y as usize);
        let mut reward = c.progress_scale * self.progress((pose.x, pose.y), end);
        if collided {
            reward += c.collision_penalty;
        }
        if speed == 0 {
            reward += c.stop_penalty;
        }
        let speed = if collided { 0 } else { speed };
        Move { pose: Pose { x: end.0, y: end.1, heading, speed }, collided, reward }
    }

    /// Distribution of the pose after drift and surge noise.
    pub fn noisy(&self, pose: Pose) -> Vec<(Pose, f64)> {
        let c = &self.config;
        let mut out: BTreeMap<Pose, f64> = BTreeMap::new();
        let headings = [((pose.heading + 7) % 8, c.drift / 2.0), (pose.heading, 1.0 - c.drift), ((pose.heading + 1) % 8, c.drift / 2.0)];
        let speeds = [(pose.speed, 1.0 - c.surge), ((pose.speed + 1).min(c.max_speed), c.surge)];
        for (h, ph) in headings {
            for (v, pv) in speeds {
                if ph * pv > 0.0 {
                    *out.entry(Pose { heading: h, speed: v, ..pose }).or_default() += ph * pv;
                }
            }
        }
        out.into_iter().collect()
    }
}

pub fn grid_circuit(config: &CircuitConfig) -> Result<Circuit> {
    let c = config;
    for (name, p) in [("drift", c.drift), ("surge", c.surge)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Config(format!("{name} probability {p} outside [0, 1]")));
        }
    }
    let layout = Layout::parse(c.layout_text())?;
    let Some(start) = layout.start else {
        return Err(Error::Config("circuit layout has no start cell".into()));
    };
    if !layout.is_connected() {
        return Err(Error::Config("disconnected track".into()));
    }
    let cells = layout.passable_cells();
    let mut cell_index = vec![None; layout.width * layout.height];
    for (i, &(x, y)) in cells.iter().enumerate() {
        cell_index[y * layout.width + x] = Some(i);
    }
    let k = cells.len() as f64;
    let centroid = (
        cells.iter().map(|p| p.0 as f64 + 0.5).sum::<f64>() / k,
        cells.iter().map(|p| p.1 as f64 + 0.5).sum::<f64>() / k,
    );
    let mean_radius =
        cells.iter().map(|p| (p.0 as f64 + 0.5 - centroid.0).hypot(p.1 as f64 + 0.5 - centroid.1)).sum::<f64>() / k;
    let placeholder = Cmdp::new(1, 0.0, 0.0, Kernel::from_rows(1, 1, vec![vec![(0, 1.0)]])?, vec![0.0], vec![0.0], vec![1.0])?;
    let mut circuit = Circuit {
        config: c.clone(),
        layout,
        cells,
        cell_index,
        centroid,
        mean_radius,
        direction: 1.0,
        cmdp: placeholder,
    };
    // orient progress so that driving along the start heading counts positive
    let (dx, dy) = HEADINGS[circuit.layout.start_heading];
    let ahead = (start.0 as i32 + dx, start.1 as i32 + dy);
    if circuit.layout.is_passable(ahead.0, ahead.1) && circuit.progress(start, (ahead.0 as usize, ahead.1 as usize)) < 0.0 {
        circuit.direction = -1.0;
    }

    let n = circuit.cells.len() * 8 * circuit.n_speeds();
    let m = 9;
    let mut rows = Vec::with_capacity(n * m);
    let mut reward = vec![0.0; n * m];
    let mut danger = vec![0.0; n * m];
    for s in 0..n {
        let pose = circuit.pose(s);
        for a in 0..m {
            let mv = circuit.advance(pose, a);
            reward[s * m + a] = mv.reward;
            danger[s * m + a] = if mv.collided { 1.0 } else { 0.0 };
            let row = circuit
                .noisy(mv.pose)
                .into_iter()
                .map(|(p, q)| (circuit.state(p).expect("moves stay on the track"), q))
                .collect();
            rows.push(row);
        }
    }
    let mut initial = vec![0.0; n];
    let s0 = circuit
        .state(Pose { x: start.0, y: start.1, heading: circuit.layout.start_heading, speed: 0 })
        .expect("start is on the track");
    initial[s0] = 1.0;
    circuit.cmdp = Cmdp::new(c.horizon, c.gamma, c.beta, Kernel::from_rows(n, m, rows)?, reward, danger, initial)?;
    Ok(circuit)
}
