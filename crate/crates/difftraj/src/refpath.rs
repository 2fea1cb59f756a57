//! Reference-path generation on the inflated occupancy grid: 8-connected A*
//! search, shortcut smoothing, resampling, and heading assignment. Paths are
//! parameterized by arc length for the MPC projection schedule.

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::scene::OccupancyGrid;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// An arc-length-parameterized pose sequence `[x, y, phi]`.
#[derive(Debug, Clone)]
pub struct ReferencePath {
    /// Dense samples along the path.
    pub points: Vec<(f64, f64, f64)>,
    /// Cumulative arc length at each sample; strictly increasing.
    pub arc_length: Vec<f64>,
}

impl ReferencePath {
    pub fn from_waypoints(way: &[(f64, f64)], spacing: f64) -> Result<Self> {
        if way.len() < 2 {
            return Err(Error::invalid("need at least two waypoints"));
        }
        // resample at uniform spacing
        let mut pts: Vec<(f64, f64)> = vec![way[0]];
        for w in way.windows(2) {
            let (a, b) = (w[0], w[1]);
            let seg = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            if seg < 1e-12 {
                continue;
            }
            let n = (seg / spacing).ceil() as usize;
            for i in 1..=n {
                let t = i as f64 / n as f64;
                pts.push((a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
            }
        }
        if pts.len() < 2 {
            return Err(Error::invalid("degenerate path"));
        }
        // light corner smoothing; endpoints pinned
        for _ in 0..3 {
            let prev = pts.clone();
            for i in 1..pts.len() - 1 {
                pts[i].0 = 0.25 * prev[i - 1].0 + 0.5 * prev[i].0 + 0.25 * prev[i + 1].0;
                pts[i].1 = 0.25 * prev[i - 1].1 + 0.5 * prev[i].1 + 0.25 * prev[i + 1].1;
            }
        }
        let mut points = Vec::with_capacity(pts.len());
        let mut arc_length = Vec::with_capacity(pts.len());
        let mut s = 0.0;
        for i in 0..pts.len() {
            let phi = if i + 1 < pts.len() {
                (pts[i + 1].1 - pts[i].1).atan2(pts[i + 1].0 - pts[i].0)
            } else {
                points.last().map(|&(_, _, p)| p).unwrap_or(0.0)
            };
            if i > 0 {
                let d = ((pts[i].0 - pts[i - 1].0).powi(2) + (pts[i].1 - pts[i - 1].1).powi(2))
                    .sqrt();
                if d < 1e-12 {
                    continue;
                }
                s += d;
            }
            points.push((pts[i].0, pts[i].1, phi));
            arc_length.push(s);
        }
        Ok(ReferencePath { points, arc_length })
    }

    pub fn total_length(&self) -> f64 {
        *self.arc_length.last().unwrap()
    }

    /// Pose at arc length `s` (clamped), linearly interpolated.
    pub fn pose_at(&self, s: f64) -> (f64, f64, f64) {
        let s = s.clamp(0.0, self.total_length());
        let idx = match self
            .arc_length
            .binary_search_by(|probe| probe.partial_cmp(&s).unwrap())
        {
            Ok(i) => return self.points[i],
            Err(i) => i,
        };
        if idx == 0 {
            return self.points[0];
        }
        let (s0, s1) = (self.arc_length[idx - 1], self.arc_length[idx]);
        let t = (s - s0) / (s1 - s0);
        let (x0, y0, p0) = self.points[idx - 1];
        let (x1, y1, _) = self.points[idx];
        (x0 + t * (x1 - x0), y0 + t * (y1 - y0), p0)
    }

    /// Arc length of the sample nearest to `(x, y)`.
    pub fn project(&self, x: f64, y: f64) -> f64 {
        let mut best = (f64::INFINITY, 0.0);
        for (i, &(px, py, _)) in self.points.iter().enumerate() {
            let d2 = (px - x).powi(2) + (py - y).powi(2);
            if d2 < best.0 {
                best = (d2, self.arc_length[i]);
            }
        }
        best.1
    }
}

#[derive(PartialEq)]
struct Node {
    f: f64,
    idx: usize,
}

impl Eq for Node {}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.partial_cmp(&self.f).unwrap_or(Ordering::Equal)
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const DIRS: [(i64, i64, f64); 8] = [
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, std::f64::consts::SQRT_2),
    (1, -1, std::f64::consts::SQRT_2),
    (-1, 1, std::f64::consts::SQRT_2),
    (-1, -1, std::f64::consts::SQRT_2),
];

/// 8-connected A* on the grid; returns cell waypoints from start to goal.
pub fn astar_cells(
    grid: &OccupancyGrid,
    start: (i64, i64),
    goal: (i64, i64),
) -> Result<Vec<(i64, i64)>> {
    if grid.is_occupied_cell(start.0, start.1) || grid.is_occupied_cell(goal.0, goal.1) {
        return Err(Error::NoPath);
    }
    let w = grid.width as i64;
    let h = grid.height as i64;
    let idx = |c: (i64, i64)| (c.1 * w + c.0) as usize;
    let heur = |c: (i64, i64)| {
        let dx = (c.0 - goal.0).abs() as f64;
        let dy = (c.1 - goal.1).abs() as f64;
        // octile distance
        dx.max(dy) + (std::f64::consts::SQRT_2 - 1.0) * dx.min(dy)
    };
    let n = (w * h) as usize;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();
    g[idx(start)] = 0.0;
    heap.push(Node {
        f: heur(start),
        idx: idx(start),
    });
    while let Some(Node { idx: cur, .. }) = heap.pop() {
        if closed[cur] {
            continue;
        }
        closed[cur] = true;
        let c = (cur as i64 % w, cur as i64 / w);
        if c == goal {
            let mut path = vec![c];
            let mut p = cur;
            while parent[p] != usize::MAX {
                p = parent[p];
                path.push((p as i64 % w, p as i64 / w));
            }
            path.reverse();
            return Ok(path);
        }
        for &(dx, dy, cost) in &DIRS {
            let nc = (c.0 + dx, c.1 + dy);
            if nc.0 < 0 || nc.1 < 0 || nc.0 >= w || nc.1 >= h {
                continue;
            }
            if grid.is_occupied_cell(nc.0, nc.1) {
                continue;
            }
            // no corner cutting on diagonal moves
            if dx != 0 && dy != 0
                && (grid.is_occupied_cell(c.0 + dx, c.1) || grid.is_occupied_cell(c.0, c.1 + dy))
            {
                continue;
            }
            let ni = idx(nc);
            let ng = g[cur] + cost;
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = cur;
                heap.push(Node {
                    f: ng + heur(nc),
                    idx: ni,
                });
            }
        }
    }
    Err(Error::NoPath)
}

/// Greedy line-of-sight shortcutting of a waypoint sequence.
fn shortcut(grid: &OccupancyGrid, way: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = vec![way[0]];
    let mut i = 0;
    while i + 1 < way.len() {
        let mut j = way.len() - 1;
        while j > i + 1 && !grid.line_free(way[i], way[j]) {
            j -= 1;
        }
        out.push(way[j]);
        i = j;
    }
    out
}

/// Collision-free reference path on the grid inflated by `inflation` meters.
/// Fails with [`Error::NoPath`] when start and goal are disconnected.
pub fn generate_reference_path(
    grid: &OccupancyGrid,
    start: &Pose,
    goal: &Pose,
    inflation: f64,
) -> Result<ReferencePath> {
    let inflated = grid.inflate(inflation);
    let sc = inflated.cell_of(start.x, start.y);
    let gc = inflated.cell_of(goal.x, goal.y);
    let cells = astar_cells(&inflated, sc, gc)?;
    let mut way: Vec<(f64, f64)> = vec![(start.x, start.y)];
    way.extend(
        cells
            .iter()
            .map(|&(ix, iy)| inflated.cell_center(ix as usize, iy as usize)),
    );
    way.push((goal.x, goal.y));
    let way = shortcut(&inflated, &way);
    ReferencePath::from_waypoints(&way, grid.resolution * 0.5)
}
