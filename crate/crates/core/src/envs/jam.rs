//! Factored grid escape with randomly moving obstacles.
//!
//! The agent moves one cell per step in its current direction and steers by
//! pushing north, east, south or west (pushing against the motion stops it).
//! Obstacles random-walk independently of the agent and of each other: each
//! stays put with probability `1 - move_prob` and otherwise tries a uniform
//! compass step. Obstacles cannot enter the exit and disappear in the safety
//! zones around the other three corners. Static obstacles never move.
//!
//! A step collides with an obstacle when the obstacle occupies the agent's
//! cell or the cell the agent moves into. Because obstacle motion is
//! independent given the agent's path, the probability of any collision is
//! bounded by the sum of the per-obstacle collision probabilities, and each
//! per-obstacle term is the threat of a small agent-plus-one-obstacle CMDP.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cmdp::{Cmdp, Kernel, ThreatMode};
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::sim::Environment;
use crate::threat::{argmin, threat_table, ThreatTable};

/// Unit moves for velocity / push codes 1..=4 (north, east, south, west).
const DIRS: [(i32, i32); 5] = [(0, 0), (0, -1), (1, 0), (0, 1), (-1, 0)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JamConfig {
    pub width: usize,
    pub height: usize,
    pub n_obstacles: usize,
    pub static_obstacles: Vec<(usize, usize)>,
    pub move_prob: f64,
    /// Cells within this Euclidean distance of a non-exit corner are safety zones.
    pub zone_radius: f64,
    /// Defaults to the top-left corner.
    pub exit: Option<(usize, usize)>,
    /// No exit and no safety zones; the agent roams until the horizon.
    pub open_field: bool,
    /// Defaults to the bottom-right corner.
    pub start: Option<(usize, usize)>,
    pub horizon: usize,
    /// Lookahead of the per-obstacle threat tables.
    pub threat_horizon: usize,
    pub gamma: f64,
    pub beta: f64,
    /// Total shaping reward for walking from the start to the exit.
    pub progress_total: f64,
    pub exit_reward: f64,
    pub stop_penalty: f64,
    pub collision_penalty: f64,
}

impl Default for JamConfig {
    fn default() -> Self {
        Self {
            width: 7,
            height: 7,
            n_obstacles: 8,
            static_obstacles: Vec::new(),
            move_prob: 0.5,
            zone_radius: 1.0,
            exit: None,
            open_field: false,
            start: None,
            horizon: 30,
            threat_horizon: 5,
            gamma: 0.99,
            beta: 0.99,
            progress_total: 75.0,
            exit_reward: 10.0,
            stop_penalty: -0.05,
            collision_penalty: -50.0,
        }
    }
}

/// Agent cell and velocity code (0 still, 1..=4 north/east/south/west).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Agent {
    At { x: usize, y: usize, v: usize },
    Exited,
}

/// A moving obstacle's cell, or `None` once it vanished in a safety zone.
pub type Obstacle = Option<(usize, usize)>;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JamState {
    pub agent: Agent,
    pub obstacles: Vec<Obstacle>,
}

#[derive(Clone, Debug)]
pub struct Jam {
    pub config: JamConfig,
    pub exit: Option<(usize, usize)>,
    pub start: (usize, usize),
    zone: Vec<bool>,
}

impl Jam {
    pub fn new(config: &JamConfig) -> Result<Self> {
        let c = config;
        if c.width < 2 || c.height < 2 {
            return Err(Error::Config("field must be at least 2x2".into()));
        }
        if !(0.0..=1.0).contains(&c.move_prob) {
            return Err(Error::Config(format!("move probability {} outside [0, 1]", c.move_prob)));
        }
        if c.horizon == 0 || c.threat_horizon == 0 {
            return Err(Error::Config("horizons must be at least 1".into()));
        }
        let exit = (!c.open_field).then(|| c.exit.unwrap_or((0, 0)));
        let start = c.start.unwrap_or((c.width - 1, c.height - 1));
        for p in exit.iter().chain([&start]).chain(&c.static_obstacles) {
            if p.0 >= c.width || p.1 >= c.height {
                return Err(Error::Config(format!("cell {p:?} is outside the field")));
            }
        }
        if exit == Some(start) {
            return Err(Error::Config("start and exit coincide".into()));
        }
        let corners = [(0, 0), (c.width - 1, 0), (0, c.height - 1), (c.width - 1, c.height - 1)];
        let mut zone = vec![false; c.width * c.height];
        let zoned = if c.open_field { &corners[..0] } else { &corners[..] };
        for &corner in zoned.iter().filter(|&&k| Some(k) != exit) {
            for y in 0..c.height {
                for x in 0..c.width {
                    let d = (x as f64 - corner.0 as f64).hypot(y as f64 - corner.1 as f64);
                    if d <= c.zone_radius {
                        zone[y * c.width + x] = true;
                    }
                }
            }
        }
        let jam = Self { config: c.clone(), exit, start, zone };
        let capacity = jam.spawn_cells().len();
        if c.n_obstacles > capacity {
            return Err(Error::Config(format!(
                "{} obstacles exceed the field capacity of {capacity} spawn cells",
                c.n_obstacles
            )));
        }
        Ok(jam)
    }

    pub fn with_obstacles(&self, n: usize) -> Result<Self> {
        Self::new(&JamConfig { n_obstacles: n, ..self.config.clone() })
    }

    pub fn is_zone(&self, x: usize, y: usize) -> bool {
        self.zone[y * self.config.width + x]
    }

    /// Cells where moving obstacles may start: off the zones, the exit, static
    /// obstacles, and at Chebyshev distance at least 2 from the agent start.
    pub fn spawn_cells(&self) -> Vec<(usize, usize)> {
        let c = &self.config;
        (0..c.height)
            .flat_map(|y| (0..c.width).map(move |x| (x, y)))
            .filter(|&(x, y)| {
                !self.is_zone(x, y)
                    && Some((x, y)) != self.exit
                    && !c.static_obstacles.contains(&(x, y))
                    && x.abs_diff(self.start.0).max(y.abs_diff(self.start.1)) >= 2
            })
            .collect()
    }

    fn in_field(&self, x: i32, y: i32) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.config.width && (y as usize) < self.config.height
    }

    fn distance_to_exit(&self, x: usize, y: usize) -> f64 {
        self.exit.map_or(0.0, |e| (x.abs_diff(e.0) + y.abs_diff(e.1)) as f64)
    }

    /// Deterministic agent step: `(next, cells)` where `cells` are the current
    /// and entered cells that a collision check must cover.
    pub fn agent_step(&self, agent: Agent, a: usize) -> (Agent, [(usize, usize); 2]) {
        let Agent::At { x, y, v } = agent else { return (Agent::Exited, [(0, 0); 2]) };
        let v = match a {
            0 => v,
            p if v != 0 && (p + 1) % 4 + 1 == v => 0,
            p => p,
        };
        let (dx, dy) = DIRS[v];
        let (nx, ny) = (x as i32 + dx, y as i32 + dy);
        let (nx, ny, v) = if v != 0 && self.in_field(nx, ny) { (nx as usize, ny as usize, v) } else { (x, y, 0) };
        let next = if Some((nx, ny)) == self.exit { Agent::Exited } else { Agent::At { x: nx, y: ny, v } };
        (next, [(x, y), (nx, ny)])
    }

    /// Agent-only reward: shaped progress toward the exit, the exit bonus, and
    /// a penalty for standing still.
    pub fn agent_reward(&self, agent: Agent, a: usize) -> f64 {
        let Agent::At { x, y, .. } = agent else { return 0.0 };
        let c = &self.config;
        let scale = c.progress_total / self.distance_to_exit(self.start.0, self.start.1).max(1.0);
        let (next, cells) = self.agent_step(agent, a);
        let (nx, ny) = cells[1];
        let mut r = scale * (self.distance_to_exit(x, y) - self.distance_to_exit(nx, ny));
        match next {
            Agent::Exited => r += c.exit_reward,
            Agent::At { v: 0, .. } => r += c.stop_penalty,
            Agent::At { .. } => {}
        }
        r
    }

    /// Successor distribution of one moving obstacle.
    pub fn obstacle_successors(&self, o: Obstacle) -> Vec<(Obstacle, f64)> {
        let Some((x, y)) = o else { return vec![(None, 1.0)] };
        let m = self.config.move_prob;
        let mut stay = 1.0 - m;
        let mut out = Vec::with_capacity(5);
        for (dx, dy) in &DIRS[1..] {
            let (nx, ny) = (x as i32 + dx, y as i32 + dy);
            if !self.in_field(nx, ny) || Some((nx as usize, ny as usize)) == self.exit {
                stay += m / 4.0;
            } else if self.is_zone(nx as usize, ny as usize) {
                out.push((None, m / 4.0));
            } else {
                out.push((Some((nx as usize, ny as usize)), m / 4.0));
            }
        }
        out.push((Some((x, y)), stay));
        // merge the vanishing outcomes
        let gone: f64 = out.iter().filter(|e| e.0.is_none()).map(|e| e.1).sum();
        out.retain(|e| e.0.is_some() && e.1 > 0.0);
        if gone > 0.0 {
            out.push((None, gone));
        }
        out
    }

    pub fn collides(&self, agent: Agent, a: usize, o: Obstacle) -> bool {
        match (agent, o) {
            (Agent::At { .. }, Some(cell)) => self.agent_step(agent, a).1.contains(&cell),
            _ => false,
        }
    }

    pub fn n_agent_states(&self) -> usize {
        self.config.width * self.config.height * 5 + 1
    }

    pub fn agent_index(&self, agent: Agent) -> usize {
        match agent {
            Agent::At { x, y, v } => (y * self.config.width + x) * 5 + v,
            Agent::Exited => self.n_agent_states() - 1,
        }
    }

    pub fn agent_from_index(&self, i: usize) -> Agent {
        if i + 1 == self.n_agent_states() {
            Agent::Exited
        } else {
            let cell = i / 5;
            Agent::At { x: cell % self.config.width, y: cell / self.config.width, v: i % 5 }
        }
    }

    pub fn n_obstacle_states(&self) -> usize {
        self.config.width * self.config.height + 1
    }

    pub fn obstacle_index(&self, o: Obstacle) -> usize {
        match o {
            Some((x, y)) => y * self.config.width + x,
            None => self.n_obstacle_states() - 1,
        }
    }

    pub fn obstacle_from_index(&self, i: usize) -> Obstacle {
        (i + 1 < self.n_obstacle_states()).then(|| (i % self.config.width, i / self.config.width))
    }

    /// Symmetric agent-only baseline: coast with probability 0.6; when still,
    /// push each way with 0.1; when moving, turn either way with 0.1 and brake
    /// with 0.2.
    pub fn baseline_dist(&self, agent: Agent) -> [f64; 5] {
        match agent {
            Agent::Exited | Agent::At { v: 0, .. } => [0.6, 0.1, 0.1, 0.1, 0.1],
            Agent::At { v, .. } => {
                let mut p = [0.6, 0.0, 0.0, 0.0, 0.0];
                p[(v + 1) % 4 + 1] = 0.2; // opposite push
                p[v % 4 + 1] = 0.1; // clockwise neighbor
                p[(v + 2) % 4 + 1] = 0.1; // counterclockwise neighbor
                p
            }
        }
    }

    /// CMDP over the agent and a single obstacle, with `horizon` steps.
    /// `moving = false` pins the obstacle in place.
    pub fn subsystem_cmdp(&self, horizon: usize, moving: bool) -> Result<Cmdp> {
        let (na, no) = (self.n_agent_states(), self.n_obstacle_states());
        let n = na * no;
        let mut rows = Vec::with_capacity(n * 5);
        let mut reward = vec![0.0; n * 5];
        let mut danger = vec![0.0; n * 5];
        let obs_succ: Vec<Vec<(usize, f64)>> = (0..no)
            .map(|j| {
                let o = self.obstacle_from_index(j);
                if moving {
                    self.obstacle_successors(o).into_iter().map(|(o2, p)| (self.obstacle_index(o2), p)).collect()
                } else {
                    vec![(j, 1.0)]
                }
            })
            .collect();
        for i in 0..na {
            let agent = self.agent_from_index(i);
            for (j, succ) in obs_succ.iter().enumerate() {
                let s = i * no + j;
                let o = self.obstacle_from_index(j);
                for a in 0..5 {
                    let (next, _) = self.agent_step(agent, a);
                    let ni = self.agent_index(next);
                    reward[s * 5 + a] = self.agent_reward(agent, a);
                    danger[s * 5 + a] = if self.collides(agent, a, o) { 1.0 } else { 0.0 };
                    rows.push(succ.iter().map(|&(j2, p)| (ni * no + j2, p)).collect());
                }
            }
        }
        let mut initial = vec![0.0; n];
        initial[self.agent_index(Agent::At { x: self.start.0, y: self.start.1, v: 0 }) * no + no - 1] = 1.0;
        let c = &self.config;
        Cmdp::new(horizon, c.gamma, c.beta, Kernel::from_rows(n, 5, rows)?, reward, danger, initial)
    }

    /// The agent-only baseline lifted to a subsystem CMDP.
    pub fn subsystem_baseline(&self, horizon: usize) -> Result<Policy> {
        let no = self.n_obstacle_states();
        let mut probs = Vec::with_capacity(self.n_agent_states() * no * 5);
        for i in 0..self.n_agent_states() {
            let row = self.baseline_dist(self.agent_from_index(i));
            for _ in 0..no {
                probs.extend_from_slice(&row);
            }
        }
        Policy::from_probs(horizon, self.n_agent_states() * no, 5, true, probs)
    }

    /// Per-obstacle accident threat tables for moving and static obstacles.
    pub fn subsystem_threats(&self) -> Result<SubsystemThreats> {
        let h = self.config.threat_horizon;
        let eta = self.subsystem_baseline(h)?;
        let moving = threat_table(&self.subsystem_cmdp(h, true)?, &eta, ThreatMode::AccidentProbability)?;
        let fixed = threat_table(&self.subsystem_cmdp(h, false)?, &eta, ThreatMode::AccidentProbability)?;
        Ok(SubsystemThreats { n_obstacle_states: self.n_obstacle_states(), moving, fixed })
    }

    /// Agent-only action values `Q_t(agent, a)` for `t in [0, T)`, ignoring obstacles.
    pub fn agent_values(&self) -> Vec<Vec<[f64; 5]>> {
        let (na, horizon, g) = (self.n_agent_states(), self.config.horizon, self.config.gamma);
        let mut q = vec![vec![[0.0; 5]; na]; horizon];
        let mut next_v = vec![0.0; na];
        for t in (0..horizon).rev() {
            for i in 0..na {
                let agent = self.agent_from_index(i);
                for a in 0..5 {
                    let (next, _) = self.agent_step(agent, a);
                    q[t][i][a] = g * self.agent_reward(agent, a) + g * next_v[self.agent_index(next)];
                }
            }
            for i in 0..na {
                next_v[i] = q[t][i].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            }
        }
        q
    }

    /// Observation for tabular learners: agent state plus a 24-bit occupancy
    /// mask of the surrounding 5x5 window.
    pub fn observation(&self, state: &JamState) -> u64 {
        let Agent::At { x, y, .. } = state.agent else { return u64::MAX };
        let mut mask = 0u64;
        let mut bit = 0;
        for dy in -2i32..=2 {
            for dx in -2i32..=2 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let cell = (x as i32 + dx, y as i32 + dy);
                let hit = state.obstacles.iter().flatten().chain(&self.config.static_obstacles).any(|&(ox, oy)| {
                    (ox as i32, oy as i32) == cell
                });
                if hit {
                    mask |= 1 << bit;
                }
                bit += 1;
            }
        }
        ((self.agent_index(state.agent) as u64) << 24) | mask
    }
}

impl Environment for Jam {
    type State = JamState;

    fn n_actions(&self) -> usize {
        5
    }

    fn horizon(&self) -> usize {
        self.config.horizon
    }

    fn gamma(&self) -> f64 {
        self.config.gamma
    }

    fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> JamState {
        let cells = self.spawn_cells();
        let picks = index::sample(rng, cells.len(), self.config.n_obstacles);
        JamState {
            agent: Agent::At { x: self.start.0, y: self.start.1, v: 0 },
            obstacles: picks.into_iter().map(|i| Some(cells[i])).collect(),
        }
    }

    fn successors(&self, state: &JamState, action: usize) -> Vec<(JamState, f64)> {
        let (agent, _) = self.agent_step(state.agent, action);
        let mut out = vec![(JamState { agent, obstacles: Vec::with_capacity(state.obstacles.len()) }, 1.0)];
        for &o in &state.obstacles {
            let succ = self.obstacle_successors(o);
            out = out
                .into_iter()
                .flat_map(|(s, p)| {
                    succ.iter().map(move |&(o2, q)| {
                        let mut s2 = s.clone();
                        s2.obstacles.push(o2);
                        (s2, p * q)
                    })
                })
                .collect();
        }
        out
    }

    fn sample_next<R: Rng + ?Sized>(&self, state: &JamState, action: usize, rng: &mut R) -> JamState {
        let (agent, _) = self.agent_step(state.agent, action);
        let obstacles = state
            .obstacles
            .iter()
            .map(|&o| {
                let succ = self.obstacle_successors(o);
                let probs: Vec<f64> = succ.iter().map(|e| e.1).collect();
                succ[crate::policy::sample_index(&probs, rng)].0
            })
            .collect();
        JamState { agent, obstacles }
    }

    fn reward(&self, state: &JamState, action: usize) -> f64 {
        let r = self.agent_reward(state.agent, action);
        if self.danger(state, action) > 0.0 {
            r + self.config.collision_penalty
        } else {
            r
        }
    }

    fn danger(&self, state: &JamState, action: usize) -> f64 {
        let hit = state.obstacles.iter().any(|&o| self.collides(state.agent, action, o))
            || self.config.static_obstacles.iter().any(|&c| self.collides(state.agent, action, Some(c)));
        if hit {
            1.0
        } else {
            0.0
        }
    }
}

/// Threat tables of the agent-plus-one-obstacle subsystems.
#[derive(Clone, Debug)]
pub struct SubsystemThreats {
    n_obstacle_states: usize,
    pub moving: ThreatTable,
    pub fixed: ThreatTable,
}

impl SubsystemThreats {
    pub fn horizon(&self) -> usize {
        self.moving.horizon
    }

    /// Sum of per-obstacle threats of action `a` at lookahead offset `tau`,
    /// clipped at 1.
    pub fn composed(&self, jam: &Jam, state: &JamState, tau: usize, a: usize) -> f64 {
        let i = jam.agent_index(state.agent) * self.n_obstacle_states;
        let mut total: f64 = state
            .obstacles
            .iter()
            .filter(|o| o.is_some())
            .map(|&o| self.moving.value(tau, i + jam.obstacle_index(o), a))
            .sum();
        total += jam.config.static_obstacles.iter().map(|&c| self.fixed.value(tau, i + jam.obstacle_index(Some(c)), a)).sum::<f64>();
        total.min(1.0)
    }
}

/// Runtime controller: plays the best agent-only action among those whose
/// composed threat is at most `threshold`, and the least threatening action
/// when none is.
#[derive(Clone, Debug)]
pub struct JamController {
    pub threats: SubsystemThreats,
    pub q: Vec<Vec<[f64; 5]>>,
    pub threshold: f64,
}

impl JamController {
    pub fn new(jam: &Jam, threshold: f64) -> Result<Self> {
        Ok(Self { threats: jam.subsystem_threats()?, q: jam.agent_values(), threshold })
    }

    /// Reuses threat tables on another field of the same geometry.
    pub fn transfer(&self, jam: &Jam) -> Result<Self> {
        let same = jam.n_agent_states() * jam.n_obstacle_states() == self.threats.moving.n_states;
        if !same {
            return Err(Error::Dimension("threat tables do not match the new field".into()));
        }
        Ok(Self { threats: self.threats.clone(), q: jam.agent_values(), threshold: self.threshold })
    }

    /// Returns the action and whether it met the threshold.
    pub fn decide(&self, jam: &Jam, t: usize, state: &JamState) -> (usize, bool) {
        let h = self.threats.horizon();
        let to_go = jam.config.horizon - t.min(jam.config.horizon);
        let tau = h.saturating_sub(to_go).min(h - 1);
        let threat: Vec<f64> = (0..5).map(|a| self.threats.composed(jam, state, tau, a)).collect();
        let q = &self.q[t.min(self.q.len() - 1)][jam.agent_index(state.agent)];
        let mut best: Option<usize> = None;
        for a in (0..5).filter(|&a| threat[a] <= self.threshold) {
            if best.is_none_or(|b| q[a] > q[b]) {
                best = Some(a);
            }
        }
        match best {
            Some(a) => (a, true),
            None => (argmin(&threat), false),
        }
    }
}

/// Baseline accident threat of the agent-plus-one-obstacle subsystem with the
/// agent still or moving at the center of an open `(2r + 1)^2` field, for
/// every obstacle cell. Rows are indexed by `y`.
pub fn threat_heatmap(velocity: usize, radius: usize, move_prob: f64, horizon: usize) -> Result<Vec<Vec<f64>>> {
    if velocity > 4 {
        return Err(Error::Argument(format!("velocity code {velocity} outside 0..=4")));
    }
    let side = 2 * radius + 1;
    let jam = Jam::new(&JamConfig {
        width: side,
        height: side,
        n_obstacles: 0,
        move_prob,
        open_field: true,
        start: Some((radius, radius)),
        horizon,
        threat_horizon: horizon,
        ..JamConfig::default()
    })?;
    let table = threat_table(&jam.subsystem_cmdp(horizon, true)?, &jam.subsystem_baseline(horizon)?, ThreatMode::AccidentProbability)?;
    let agent = jam.agent_index(Agent::At { x: radius, y: radius, v: velocity }) * jam.n_obstacle_states();
    Ok((0..side)
        .map(|y| (0..side).map(|x| table.state_value(0, agent + jam.obstacle_index(Some((x, y))))).collect())
        .collect())
}

/// Exact joint accident threat with two moving obstacles, by backward
/// induction that marginalizes one obstacle at a time.
#[derive(Clone, Debug)]
pub struct JointThreat {
    pub horizon: usize,
    na: usize,
    no: usize,
    values: Vec<f64>,
}

impl JointThreat {
    pub fn value(&self, tau: usize, agent: usize, o1: usize, o2: usize, a: usize) -> f64 {
        self.values[((((tau * self.na + agent) * self.no + o1) * self.no + o2) * 5) + a]
    }
}

pub fn joint_threat_two(jam: &Jam, horizon: usize) -> JointThreat {
    let (na, no) = (jam.n_agent_states(), jam.n_obstacle_states());
    let succ: Vec<Vec<(usize, f64)>> = (0..no)
        .map(|j| jam.obstacle_successors(jam.obstacle_from_index(j)).into_iter().map(|(o, p)| (jam.obstacle_index(o), p)).collect())
        .collect();
    let mut values = vec![0.0; horizon * na * no * no * 5];
    // state value of (agent, o1, o2) at the next step
    let mut next_v = vec![0.0; na * no * no];
    let mut half = vec![0.0; no * no];
    for tau in (0..horizon).rev() {
        let mut cur_v = vec![0.0; na * no * no];
        for i in 0..na {
            let agent = jam.agent_from_index(i);
            let eta = jam.baseline_dist(agent);
            for a in 0..5 {
                let (next, _) = jam.agent_step(agent, a);
                let ni = jam.agent_index(next);
                let block = &next_v[ni * no * no..(ni + 1) * no * no];
                // expectation over the second obstacle, then the first
                if tau + 1 < horizon {
                    for o1 in 0..no {
                        for o2 in 0..no {
                            half[o1 * no + o2] = succ[o2].iter().map(|&(k, p)| p * block[o1 * no + k]).sum();
                        }
                    }
                }
                for o1 in 0..no {
                    let c1 = jam.collides(agent, a, jam.obstacle_from_index(o1));
                    for o2 in 0..no {
                        let d = if c1 || jam.collides(agent, a, jam.obstacle_from_index(o2)) { 1.0 } else { 0.0 };
                        let cont =
                            if tau + 1 < horizon { succ[o1].iter().map(|&(k, p)| p * half[k * no + o2]).sum() } else { 0.0 };
                        let v = d + (1.0 - d) * cont;
                        values[((((tau * na + i) * no + o1) * no + o2) * 5) + a] = v;
                        cur_v[(i * no + o1) * no + o2] += eta[a] * v;
                    }
                }
            }
        }
        next_v = cur_v;
    }
    JointThreat { horizon, na, no, values }
}

/// Materialized joint CMDP with two moving obstacles (tiny fields only).
pub fn joint_cmdp_two(jam: &Jam, horizon: usize) -> Result<Cmdp> {
    let (na, no) = (jam.n_agent_states(), jam.n_obstacle_states());
    let n = na * no * no;
    let mut rows = Vec::with_capacity(n * 5);
    let mut danger = vec![0.0; n * 5];
    for s in 0..n {
        let (i, o1, o2) = (s / (no * no), (s / no) % no, s % no);
        let agent = jam.agent_from_index(i);
        let state = JamState { agent, obstacles: vec![jam.obstacle_from_index(o1), jam.obstacle_from_index(o2)] };
        for a in 0..5 {
            danger[s * 5 + a] = jam.danger(&state, a);
            let row = jam
                .successors(&state, a)
                .into_iter()
                .map(|(s2, p)| {
                    let idx = (jam.agent_index(s2.agent) * no + jam.obstacle_index(s2.obstacles[0])) * no
                        + jam.obstacle_index(s2.obstacles[1]);
                    (idx, p)
                })
                .collect();
            rows.push(row);
        }
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    let c = &jam.config;
    Cmdp::new(horizon, c.gamma, c.beta, Kernel::from_rows(n, 5, rows)?, vec![0.0; n * 5], danger, initial)
}
