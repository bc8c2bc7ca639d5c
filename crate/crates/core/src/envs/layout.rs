//! ASCII grid layouts.
//!
//! `#` wall, `.` open, `E` exit, `Z` safety zone. The start cell is `S`
//! (facing east) or one of `>`, `^`, `<`, `v`, which also fix the heading.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tile {
    Wall,
    Open,
    Exit,
    Zone,
}

/// Eight compass headings counterclockwise from east; `y` grows downward.
pub const HEADINGS: [(i32, i32); 8] = [(1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1)];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    tiles: Vec<Tile>,
    pub start: Option<(usize, usize)>,
    pub start_heading: usize,
}

impl Layout {
    pub fn parse(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().map(str::trim_end).filter(|l| !l.is_empty()).collect();
        let height = lines.len();
        let width = lines.iter().map(|l| l.chars().count()).max().unwrap_or(0);
        if width == 0 {
            return Err(Error::Config("empty layout".into()));
        }
        let mut tiles = vec![Tile::Wall; width * height];
        let mut start = None;
        let mut start_heading = 0;
        for (y, line) in lines.iter().enumerate() {
            for (x, c) in line.chars().enumerate() {
                let tile = match c {
                    '#' | ' ' => Tile::Wall,
                    '.' => Tile::Open,
                    'E' => Tile::Exit,
                    'Z' => Tile::Zone,
                    'S' | '>' | '^' | '<' | 'v' => {
                        if start.is_some() {
                            return Err(Error::Config("layout has more than one start cell".into()));
                        }
                        start = Some((x, y));
                        start_heading = match c {
                            '^' => 2,
                            '<' => 4,
                            'v' => 6,
                            _ => 0,
                        };
                        Tile::Open
                    }
                    other => return Err(Error::Config(format!("unknown layout character {other:?} at ({x}, {y})"))),
                };
                tiles[y * width + x] = tile;
            }
        }
        Ok(Self { width, height, tiles, start, start_heading })
    }

    /// Fully open `width x height` field.
    pub fn open(width: usize, height: usize) -> Self {
        Self { width, height, tiles: vec![Tile::Open; width * height], start: None, start_heading: 0 }
    }

    pub fn tile(&self, x: i32, y: i32) -> Tile {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            Tile::Wall
        } else {
            self.tiles[y as usize * self.width + x as usize]
        }
    }

    pub fn set(&mut self, x: usize, y: usize, tile: Tile) {
        self.tiles[y * self.width + x] = tile;
    }

    pub fn is_passable(&self, x: i32, y: i32) -> bool {
        self.tile(x, y) != Tile::Wall
    }

    /// Non-wall cells in row-major order.
    pub fn passable_cells(&self) -> Vec<(usize, usize)> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.is_passable(x as i32, y as i32))
            .collect()
    }

    /// Whether the passable cells form one 8-connected component.
    pub fn is_connected(&self) -> bool {
        let cells = self.passable_cells();
        let Some(&first) = cells.first() else { return false };
        let mut seen = vec![false; self.width * self.height];
        let mut stack = vec![first];
        seen[first.1 * self.width + first.0] = true;
        let mut count = 0;
        while let Some((x, y)) = stack.pop() {
            count += 1;
            for (dx, dy) in HEADINGS {
                let (nx, ny) = (x as i32 + dx, y as i32 + dy);
                if self.is_passable(nx, ny) {
                    let i = ny as usize * self.width + nx as usize;
                    if !seen[i] {
                        seen[i] = true;
                        stack.push((nx as usize, ny as usize));
                    }
                }
            }
        }
        count == cells.len()
    }
}
