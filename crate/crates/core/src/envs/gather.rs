//! Grid hazard-gather: collect apples, avoid bombs.
//!
//! The state is the agent cell plus a bitmask of collected apples. Moving onto
//! an uncollected apple pays `apple_reward`; moving onto (or staying on) a bomb
//! carries danger 1.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::cmdp::{Cmdp, Kernel};
use crate::error::{Error, Result};
use crate::rng;

/// Stay, north, east, south, west.
pub const MOVES: [(i32, i32); 5] = [(0, 0), (0, -1), (1, 0), (0, 1), (-1, 0)];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatherConfig {
    pub width: usize,
    pub height: usize,
    pub n_apples: usize,
    pub n_bombs: usize,
    /// Explicit placements; drawn from `placement_seed` when absent.
    pub apples: Option<Vec<(usize, usize)>>,
    pub bombs: Option<Vec<(usize, usize)>>,
    /// Defaults to the center cell.
    pub start: Option<(usize, usize)>,
    pub horizon: usize,
    pub gamma: f64,
    pub beta: f64,
    pub apple_reward: f64,
    pub placement_seed: u64,
}

impl Default for GatherConfig {
    fn default() -> Self {
        Self {
            width: 7,
            height: 7,
            n_apples: 2,
            n_bombs: 10,
            apples: None,
            bombs: None,
            start: None,
            horizon: 20,
            gamma: 0.95,
            beta: 0.9,
            apple_reward: 10.0,
            placement_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Gather {
    pub config: GatherConfig,
    pub apples: Vec<(usize, usize)>,
    pub bombs: Vec<(usize, usize)>,
    pub start: (usize, usize),
    pub cmdp: Cmdp,
}

impl Gather {
    pub fn state(&self, cell: (usize, usize), mask: usize) -> usize {
        (cell.1 * self.config.width + cell.0) * (1 << self.apples.len()) + mask
    }

    pub fn decode(&self, s: usize) -> ((usize, usize), usize) {
        let k = 1 << self.apples.len();
        let cell = s / k;
        ((cell % self.config.width, cell / self.config.width), s % k)
    }
}

fn in_field(c: &GatherConfig, p: (usize, usize)) -> bool {
    p.0 < c.width && p.1 < c.height
}

pub fn grid_gather(config: &GatherConfig) -> Result<Gather> {
    let c = config;
    if c.width == 0 || c.height == 0 {
        return Err(Error::Config("field must be at least 1x1".into()));
    }
    let start = c.start.unwrap_or((c.width / 2, c.height / 2));
    if !in_field(c, start) {
        return Err(Error::Config(format!("start {start:?} is outside the field")));
    }
    let n_apples = c.apples.as_ref().map_or(c.n_apples, Vec::len);
    let n_bombs = c.bombs.as_ref().map_or(c.n_bombs, Vec::len);
    if n_apples > 16 {
        return Err(Error::Config("at most 16 apples".into()));
    }
    let cells = c.width * c.height;
    if n_apples + n_bombs + 1 > cells {
        return Err(Error::Config(format!(
            "field of {cells} cells is too small for {n_apples} apples, {n_bombs} bombs and the start"
        )));
    }
    let (apples, bombs) = match (&c.apples, &c.bombs) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => {
            let free: Vec<(usize, usize)> = (0..c.height)
                .flat_map(|y| (0..c.width).map(move |x| (x, y)))
                .filter(|&p| p != start)
                .collect();
            let mut r = rng::stream(c.placement_seed, 0x6A7);
            let picks = index::sample(&mut r, free.len(), n_apples + n_bombs).into_vec();
            let placed: Vec<_> = picks.iter().map(|&i| free[i]).collect();
            (
                c.apples.clone().unwrap_or_else(|| placed[..n_apples].to_vec()),
                c.bombs.clone().unwrap_or_else(|| placed[n_apples..].to_vec()),
            )
        }
    };
    let mut all = apples.clone();
    all.extend(&bombs);
    all.push(start);
    for (i, p) in all.iter().enumerate() {
        if !in_field(c, *p) {
            return Err(Error::Config(format!("placement {p:?} is outside the field")));
        }
        if all[..i].contains(p) {
            return Err(Error::Config(format!("cell {p:?} is used twice")));
        }
    }

    let k = 1usize << apples.len();
    let n = cells * k;
    let m = MOVES.len();
    let mut rows = Vec::with_capacity(n * m);
    let mut reward = vec![0.0; n * m];
    let mut danger = vec![0.0; n * m];
    for s in 0..n {
        let cell = s / k;
        let mask = s % k;
        let (x, y) = ((cell % c.width) as i32, (cell / c.width) as i32);
        for (a, (dx, dy)) in MOVES.iter().enumerate() {
            let (mut tx, mut ty) = (x + dx, y + dy);
            if tx < 0 || ty < 0 || tx as usize >= c.width || ty as usize >= c.height {
                (tx, ty) = (x, y);
            }
            let target = (tx as usize, ty as usize);
            let mut next_mask = mask;
            if let Some(i) = apples.iter().position(|&p| p == target) {
                if mask & (1 << i) == 0 {
                    next_mask |= 1 << i;
                    reward[s * m + a] = c.apple_reward;
                }
            }
            if bombs.contains(&target) {
                danger[s * m + a] = 1.0;
            }
            rows.push(vec![((target.1 * c.width + target.0) * k + next_mask, 1.0)]);
        }
    }
    let mut initial = vec![0.0; n];
    initial[(start.1 * c.width + start.0) * k] = 1.0;
    let kernel = Kernel::from_rows(n, m, rows)?;
    let cmdp = Cmdp::new(c.horizon, c.gamma, c.beta, kernel, reward, danger, initial)?;
    Ok(Gather { config: c.clone(), apples, bombs, start, cmdp })
}
