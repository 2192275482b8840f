//! Global route planning: shortest 8-connected path over an occupancy
//! grid, shortcut through line-of-sight pruning.
//!
//! The grid covers the bounding box of the start, the goal and every
//! inflated obstacle, padded so detours around boundary obstacles stay
//! representable. Cells are occupied when their center lies inside an
//! obstacle grown by the robot's effective radius, so any path over free
//! cells keeps the full planning clearance.

use crate::NavError;
use linnav_planner::{obstacle_distance, Obstacle, Scenario};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Default cell size of the occupancy grid.
pub const DEFAULT_GRID_RESOLUTION: f64 = 0.1;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// True when the segment from `p` to `q` stays at least `clearance` away
/// from the center of every obstacle plus its radius.
pub fn line_of_sight(p: [f64; 2], q: [f64; 2], obstacles: &[Obstacle], clearance: f64) -> bool {
    obstacles
        .iter()
        .all(|o| segment_point_distance(p, q, [o.x, o.y]) >= o.r + clearance)
}

/// Euclidean distance from `c` to the closed segment `p`-`q`.
fn segment_point_distance(p: [f64; 2], q: [f64; 2], c: [f64; 2]) -> f64 {
    let dx = q[0] - p[0];
    let dy = q[1] - p[1];
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((c[0] - p[0]) * dx + (c[1] - p[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let ex = p[0] + t * dx - c[0];
    let ey = p[1] + t * dy - c[1];
    (ex * ex + ey * ey).sqrt()
}

struct Grid {
    x0: f64,
    y0: f64,
    res: f64,
    nx: usize,
    ny: usize,
    occupied: Vec<bool>,
}

impl Grid {
    fn build(scenario: &Scenario, res: f64) -> Grid {
        let inflation = scenario.effective_radius();
        let mut xmin = scenario.start.x.min(scenario.goal.x);
        let mut xmax = scenario.start.x.max(scenario.goal.x);
        let mut ymin = scenario.start.y.min(scenario.goal.y);
        let mut ymax = scenario.start.y.max(scenario.goal.y);
        for o in &scenario.obstacles {
            xmin = xmin.min(o.x - o.r - inflation);
            xmax = xmax.max(o.x + o.r + inflation);
            ymin = ymin.min(o.y - o.r - inflation);
            ymax = ymax.max(o.y + o.r + inflation);
        }
        // Padding beyond the tight bounding box keeps room to swing around
        // obstacles that sit on the box edge.
        let pad = 1.0 + inflation;
        xmin -= pad;
        ymin -= pad;
        xmax += pad;
        ymax += pad;
        let nx = ((xmax - xmin) / res).ceil() as usize + 1;
        let ny = ((ymax - ymin) / res).ceil() as usize + 1;
        let mut occupied = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let x = xmin + i as f64 * res;
                let y = ymin + j as f64 * res;
                occupied[j * nx + i] = scenario
                    .obstacles
                    .iter()
                    .any(|o| obstacle_distance(x, y, o, inflation) <= 0.0);
            }
        }
        Grid {
            x0: xmin,
            y0: ymin,
            res,
            nx,
            ny,
            occupied,
        }
    }

    fn cell_of(&self, x: f64, y: f64) -> usize {
        let i = (((x - self.x0) / self.res).round() as isize).clamp(0, self.nx as isize - 1);
        let j = (((y - self.y0) / self.res).round() as isize).clamp(0, self.ny as isize - 1);
        j as usize * self.nx + i as usize
    }

    fn center(&self, cell: usize) -> [f64; 2] {
        let i = cell % self.nx;
        let j = cell / self.nx;
        [self.x0 + i as f64 * self.res, self.y0 + j as f64 * self.res]
    }
}

/// Heap entry ordered so the smallest f-cost pops first; ties break on the
/// most recently pushed entry, which keeps expansion deterministic.
struct Node {
    f: f64,
    seq: u64,
    cell: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.seq == other.seq
    }
}

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn octile(res: f64, di: usize, dj: usize) -> f64 {
    let (lo, hi) = if di < dj { (di, dj) } else { (dj, di) };
    res * ((hi - lo) as f64 + SQRT_2 * lo as f64)
}

fn astar(grid: &Grid, start: usize, goal: usize) -> Option<Vec<usize>> {
    let n = grid.nx * grid.ny;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    let (gi, gj) = (goal % grid.nx, goal / grid.nx);
    g[start] = 0.0;
    heap.push(Node {
        f: 0.0,
        seq,
        cell: start,
    });
    while let Some(node) = heap.pop() {
        let cell = node.cell;
        if cell == goal {
            let mut path = vec![goal];
            let mut c = goal;
            while parent[c] != usize::MAX {
                c = parent[c];
                path.push(c);
            }
            path.reverse();
            return Some(path);
        }
        let ci = (cell % grid.nx) as isize;
        let cj = (cell / grid.nx) as isize;
        // A popped node whose recorded cost is stale was already expanded
        // through a cheaper route.
        let h_here = octile(grid.res, ci.abs_diff(gi as isize), cj.abs_diff(gj as isize));
        if node.f > g[cell] + h_here + 1e-12 {
            continue;
        }
        for (di, dj) in [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ] {
            let ni = ci + di;
            let nj = cj + dj;
            if ni < 0 || nj < 0 || ni >= grid.nx as isize || nj >= grid.ny as isize {
                continue;
            }
            let next = nj as usize * grid.nx + ni as usize;
            if grid.occupied[next] {
                continue;
            }
            // Diagonal moves may not cut past an occupied orthogonal
            // neighbor; the robot body would clip it.
            if di != 0 && dj != 0 {
                let side_a = cj as usize * grid.nx + ni as usize;
                let side_b = nj as usize * grid.nx + ci as usize;
                if grid.occupied[side_a] || grid.occupied[side_b] {
                    continue;
                }
            }
            let step = if di != 0 && dj != 0 {
                SQRT_2 * grid.res
            } else {
                grid.res
            };
            let cand = g[cell] + step;
            if cand < g[next] - 1e-12 {
                g[next] = cand;
                parent[next] = cell;
                seq += 1;
                let h = octile(grid.res, ni.abs_diff(gi as isize), nj.abs_diff(gj as isize));
                heap.push(Node {
                    f: cand + h,
                    seq,
                    cell: next,
                });
            }
        }
    }
    None
}

/// Prune interior waypoints that a straight, fully clear segment can skip.
/// Consecutive grid cells are always accepted as connected, so the result
/// is never shorter than two waypoints.
fn prune_line_of_sight(
    points: &[[f64; 2]],
    obstacles: &[Obstacle],
    clearance: f64,
) -> Vec<[f64; 2]> {
    let mut out = vec![points[0]];
    let mut i = 0;
    while i + 1 < points.len() {
        let mut j = points.len() - 1;
        while j > i + 1 && !line_of_sight(points[i], points[j], obstacles, clearance) {
            j -= 1;
        }
        out.push(points[j]);
        i = j;
    }
    out
}

/// Shortest collision-free route from the scenario start to its goal, as a
/// sparse list of waypoints whose first entry is the exact start position
/// and whose last is the exact goal position.
///
/// Fails when the goal or start sits inside an inflated obstacle, or when
/// no free route exists at the given resolution.
pub fn global_path(scenario: &Scenario, resolution: f64) -> Result<Vec<[f64; 2]>, NavError> {
    scenario.validate()?;
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(NavError::Config(format!(
            "grid resolution must be positive, got {resolution}"
        )));
    }
    let inflation = scenario.effective_radius();
    let start = [scenario.start.x, scenario.start.y];
    let goal = [scenario.goal.x, scenario.goal.y];
    for (label, p) in [("start", start), ("goal", goal)] {
        if scenario
            .obstacles
            .iter()
            .any(|o| obstacle_distance(p[0], p[1], o, inflation) < 0.0)
        {
            return Err(NavError::Planning(format!(
                "{label} ({}, {}) lies inside an inflated obstacle",
                p[0], p[1]
            )));
        }
    }

    let grid = Grid::build(scenario, resolution);
    let start_cell = grid.cell_of(start[0], start[1]);
    let goal_cell = grid.cell_of(goal[0], goal[1]);
    if start_cell == goal_cell {
        return Ok(vec![start, goal]);
    }
    // The exact endpoints are known free; their cells may still be flagged
    // when a center falls just inside an inflated disk the point clears.
    let mut grid = grid;
    grid.occupied[start_cell] = false;
    grid.occupied[goal_cell] = false;

    let cells = astar(&grid, start_cell, goal_cell).ok_or_else(|| {
        NavError::Planning(format!(
            "no collision-free route from ({}, {}) to ({}, {}) at resolution {resolution}",
            start[0], start[1], goal[0], goal[1]
        ))
    })?;
    let mut points: Vec<[f64; 2]> = cells.iter().map(|&c| grid.center(c)).collect();
    *points.first_mut().expect("path has a start") = start;
    *points.last_mut().expect("path has a goal") = goal;
    Ok(prune_line_of_sight(
        &points,
        &scenario.obstacles,
        inflation,
    ))
}
