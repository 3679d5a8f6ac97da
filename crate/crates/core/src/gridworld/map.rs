use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};

/// Row-major cell index (`y * width + x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell(pub usize);

impl Cell {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Moves in tie-break order: up, down, left, right.
pub const MOVES: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

/// Static occupancy grid. Every free cell is 4-connected to every other.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridMap {
    width: usize,
    height: usize,
    obstacle: Vec<bool>,
    free: Vec<Cell>,
}

impl GridMap {
    /// Builds a map from an occupancy vector (`true` = obstacle), validating
    /// size, the presence of a free cell and connectivity.
    pub fn new(width: usize, height: usize, obstacle: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || obstacle.len() != width * height {
            return Err(Error::EmptyMap);
        }
        let free: Vec<Cell> = (0..obstacle.len()).filter(|&i| !obstacle[i]).map(Cell).collect();
        if free.is_empty() {
            return Err(Error::NoFreeCells);
        }
        let map = Self { width, height, obstacle, free };
        let dist = map.bfs(map.free[0]);
        if let Some(c) = map.free.iter().find(|c| dist[c.0] == u32::MAX) {
            let (x, y) = map.coords(*c);
            return Err(Error::DisconnectedFreeSpace { x, y });
        }
        Ok(map)
    }

    /// An obstacle-free `width x height` map.
    pub fn open(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.obstacle.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obstacle.is_empty()
    }

    #[inline]
    pub fn is_free(&self, c: Cell) -> bool {
        c.0 < self.obstacle.len() && !self.obstacle[c.0]
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        !self.is_free(c)
    }

    pub fn free_cells(&self) -> &[Cell] {
        &self.free
    }

    pub fn obstacles(&self) -> &[bool] {
        &self.obstacle
    }

    #[inline]
    pub fn coords(&self, c: Cell) -> (usize, usize) {
        (c.0 % self.width, c.0 / self.width)
    }

    #[inline]
    pub fn cell(&self, x: usize, y: usize) -> Option<Cell> {
        (x < self.width && y < self.height).then(|| Cell(y * self.width + x))
    }

    /// Free 4-neighbours in tie-break order.
    pub fn neighbours(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        let (x, y) = self.coords(c);
        MOVES.iter().filter_map(move |&(dx, dy)| {
            let nx = x.checked_add_signed(dx)?;
            let ny = y.checked_add_signed(dy)?;
            self.cell(nx, ny).filter(|&n| self.is_free(n))
        })
    }

    pub fn manhattan(&self, a: Cell, b: Cell) -> usize {
        let (ax, ay) = self.coords(a);
        let (bx, by) = self.coords(b);
        ax.abs_diff(bx) + ay.abs_diff(by)
    }

    /// Breadth-first move counts from `origin` (`u32::MAX` if unreachable).
    pub fn bfs(&self, origin: Cell) -> Vec<u32> {
        let mut dist = vec![u32::MAX; self.len()];
        if !self.is_free(origin) {
            return dist;
        }
        let mut queue = VecDeque::from([origin]);
        dist[origin.0] = 0;
        while let Some(c) = queue.pop_front() {
            for n in self.neighbours(c) {
                if dist[n.0] == u32::MAX {
                    dist[n.0] = dist[c.0] + 1;
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// '#' for obstacles, '.' for free cells.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.len() + self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                s.push(if self.obstacle[y * self.width + x] { '#' } else { '.' });
            }
            s.push('\n');
        }
        s
    }
}

/// Parses an ASCII map: one row per line, `#` obstacle, `.` free.
pub fn load_map(text: &str) -> Result<GridMap> {
    let rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
    let end = rows.iter().rposition(|r| !r.is_empty()).map_or(0, |i| i + 1);
    let rows = &rows[..end];
    if rows.is_empty() {
        return Err(Error::EmptyMap);
    }
    let width = rows[0].chars().count();
    let mut obstacle = Vec::with_capacity(width * rows.len());
    for (row, line) in rows.iter().enumerate() {
        let found = line.chars().count();
        if found != width {
            return Err(Error::NonRectangular { row, expected: width, found });
        }
        for (col, ch) in line.chars().enumerate() {
            obstacle.push(match ch {
                '#' => true,
                '.' => false,
                _ => return Err(Error::UnknownCharacter { ch, row, col }),
            });
        }
    }
    GridMap::new(width, rows.len(), obstacle)
}

/// Walks from `from` toward a target whose BFS field is `dist`, taking the
/// first move in tie-break order that decreases the distance. The result is
/// the lexicographically smallest move sequence among shortest paths.
fn descend(map: &GridMap, from: Cell, to: Cell, dist: impl Fn(Cell) -> u32) -> Result<Vec<Cell>> {
    let d0 = dist(from);
    if d0 == u32::MAX {
        return Err(Error::Unreachable { from: from.0, to: to.0 });
    }
    let mut path = Vec::with_capacity(d0 as usize + 1);
    let mut cur = from;
    path.push(cur);
    while cur != to {
        let here = dist(cur);
        cur = map
            .neighbours(cur)
            .find(|&n| dist(n) + 1 == here)
            .ok_or(Error::Unreachable { from: from.0, to: to.0 })?;
        path.push(cur);
    }
    Ok(path)
}

/// Minimal 4-connected path from `from` to `to`, both endpoints included.
pub fn shortest_path(map: &GridMap, from: Cell, to: Cell) -> Result<Vec<Cell>> {
    for c in [from, to] {
        if !map.is_free(c) {
            return Err(Error::TargetIsObstacle(c.0));
        }
    }
    let dist = map.bfs(to);
    descend(map, from, to, |c| dist[c.0])
}

/// All-pairs distances, so repeated path queries skip the search.
#[derive(Debug, Clone)]
pub struct PathTable {
    n: usize,
    dist: Vec<u16>,
}

impl PathTable {
    pub fn new(map: &GridMap) -> Self {
        let n = map.len();
        let mut dist = vec![u16::MAX; n * n];
        for &to in map.free_cells() {
            let d = map.bfs(to);
            for (i, &v) in d.iter().enumerate() {
                if v != u32::MAX {
                    dist[to.0 * n + i] = v.min(u16::MAX as u32 - 1) as u16;
                }
            }
        }
        Self { n, dist }
    }

    /// Move count between two free cells.
    #[inline]
    pub fn distance(&self, from: Cell, to: Cell) -> Option<usize> {
        let d = self.dist[to.0 * self.n + from.0];
        (d != u16::MAX).then_some(d as usize)
    }

    /// Same path as [`shortest_path`].
    pub fn path(&self, map: &GridMap, from: Cell, to: Cell) -> Result<Vec<Cell>> {
        if !map.is_free(to) {
            return Err(Error::TargetIsObstacle(to.0));
        }
        if !map.is_free(from) {
            return Err(Error::TargetIsObstacle(from.0));
        }
        let row = &self.dist[to.0 * self.n..(to.0 + 1) * self.n];
        descend(map, from, to, |c| if row[c.0] == u16::MAX { u32::MAX } else { row[c.0] as u32 })
    }
}
