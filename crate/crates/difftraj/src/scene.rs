//! Scene definition: static occupancy grid, straight-line dynamic obstacles,
//! distance queries, and the JSON scene file format.

use crate::error::{Error, Result};
use crate::geom::{footprint_vertices, quat_to_yaw, Pose};
use crate::vehicle::VehicleParams;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Binary occupancy grid with a metric origin and resolution. Cells outside
/// the grid are treated as occupied.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    /// Meters per cell.
    pub resolution: f64,
    /// World coordinates of the grid's lower-left corner.
    pub origin: (f64, f64),
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(width: usize, height: usize, resolution: f64, origin: (f64, f64)) -> Result<Self> {
        if resolution <= 0.0 || !resolution.is_finite() {
            return Err(Error::invalid("grid resolution must be positive"));
        }
        Ok(OccupancyGrid {
            width,
            height,
            resolution,
            origin,
            cells: vec![false; width * height],
        })
    }

    pub fn is_occupied_cell(&self, ix: i64, iy: i64) -> bool {
        if ix < 0 || iy < 0 || ix >= self.width as i64 || iy >= self.height as i64 {
            return true;
        }
        self.cells[iy as usize * self.width + ix as usize]
    }

    pub fn set_cell(&mut self, ix: usize, iy: usize, occupied: bool) {
        self.cells[iy * self.width + ix] = occupied;
    }

    pub fn cell_of(&self, x: f64, y: f64) -> (i64, i64) {
        (
            ((x - self.origin.0) / self.resolution).floor() as i64,
            ((y - self.origin.1) / self.resolution).floor() as i64,
        )
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> (f64, f64) {
        (
            self.origin.0 + (ix as f64 + 0.5) * self.resolution,
            self.origin.1 + (iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn is_occupied_at(&self, x: f64, y: f64) -> bool {
        let (ix, iy) = self.cell_of(x, y);
        self.is_occupied_cell(ix, iy)
    }

    /// Mark every cell whose center lies inside the axis-aligned rectangle
    /// `[x0, x1] x [y0, y1]` as occupied.
    pub fn fill_rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64) {
        for iy in 0..self.height {
            for ix in 0..self.width {
                let (cx, cy) = self.cell_center(ix, iy);
                if cx >= x0 && cx <= x1 && cy >= y0 && cy <= y1 {
                    self.set_cell(ix, iy, true);
                }
            }
        }
    }

    /// A copy with every occupied cell dilated by `radius` meters
    /// (Euclidean, via the distance field).
    pub fn inflate(&self, radius: f64) -> OccupancyGrid {
        let df = DistanceField::build(self);
        let mut out = self.clone();
        for iy in 0..self.height {
            for ix in 0..self.width {
                if df.at_cell(ix, iy) <= radius {
                    out.set_cell(ix, iy, true);
                }
            }
        }
        out
    }

    /// Straight-line visibility between two points on the grid, sampled at
    /// half-resolution steps.
    pub fn line_free(&self, a: (f64, f64), b: (f64, f64)) -> bool {
        let dist = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let n = (dist / (self.resolution * 0.5)).ceil().max(1.0) as usize;
        (0..=n).all(|i| {
            let t = i as f64 / n as f64;
            !self.is_occupied_at(a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1))
        })
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Exact Euclidean distance (meters) from each cell center to the nearest
/// occupied cell center. Felzenszwalb-Huttenlocher two-pass transform.
#[derive(Debug, Clone)]
pub struct DistanceField {
    width: usize,
    height: usize,
    resolution: f64,
    origin: (f64, f64),
    dist: Vec<f64>,
}

fn dt_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                if k == 0 {
                    // should not happen with z[0] = -inf
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }
    let mut k = 0usize;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k] as f64;
        d[q] = (q as f64 - p) * (q as f64 - p) + f[v[k]];
    }
}

impl DistanceField {
    pub fn build(grid: &OccupancyGrid) -> Self {
        let (w, h) = (grid.width, grid.height);
        const INF: f64 = 1e18;
        let mut g = vec![INF; w * h];
        for iy in 0..h {
            for ix in 0..w {
                if grid.is_occupied_cell(ix as i64, iy as i64) {
                    g[iy * w + ix] = 0.0;
                }
            }
        }
        // columns
        let mut col = vec![0.0; h];
        let mut out_col = vec![0.0; h];
        for ix in 0..w {
            for iy in 0..h {
                col[iy] = g[iy * w + ix];
            }
            dt_1d(&col, &mut out_col);
            for iy in 0..h {
                g[iy * w + ix] = out_col[iy];
            }
        }
        // rows
        let mut out_row = vec![0.0; w];
        for iy in 0..h {
            dt_1d(&g[iy * w..(iy + 1) * w].to_vec(), &mut out_row);
            for ix in 0..w {
                g[iy * w + ix] = out_row[ix];
            }
        }
        let dist = g.iter().map(|&d2| d2.sqrt() * grid.resolution).collect();
        DistanceField {
            width: w,
            height: h,
            resolution: grid.resolution,
            origin: grid.origin,
            dist,
        }
    }

    pub fn at_cell(&self, ix: usize, iy: usize) -> f64 {
        self.dist[iy * self.width + ix]
    }

    /// Bilinear sample at a world point. Points outside the grid return 0.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = (x - self.origin.0) / self.resolution - 0.5;
        let fy = (y - self.origin.1) / self.resolution - 0.5;
        if fx < 0.0 || fy < 0.0 || fx > (self.width - 1) as f64 || fy > (self.height - 1) as f64 {
            return 0.0;
        }
        let (ix, iy) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - ix as f64, fy - iy as f64);
        let ix1 = (ix + 1).min(self.width - 1);
        let iy1 = (iy + 1).min(self.height - 1);
        let d00 = self.at_cell(ix, iy);
        let d10 = self.at_cell(ix1, iy);
        let d01 = self.at_cell(ix, iy1);
        let d11 = self.at_cell(ix1, iy1);
        d00 * (1.0 - tx) * (1.0 - ty) + d10 * tx * (1.0 - ty) + d01 * (1.0 - tx) * ty + d11 * tx * ty
    }
}

/// A straight-line dynamic obstacle: it starts at a pose, moves along its
/// heading at constant speed for `duration` seconds, then stays frozen at
/// the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicObstacle {
    pub x: f64,
    pub y: f64,
    pub q_z: f64,
    pub q_w: f64,
    pub speed: f64,
    pub duration: f64,
}

impl DynamicObstacle {
    /// Position at time `t >= 0`; frozen at the track endpoint after
    /// `duration`.
    pub fn position(&self, t: f64) -> (f64, f64) {
        let phi = quat_to_yaw(self.q_z, self.q_w);
        let tt = t.max(0.0).min(self.duration);
        (
            self.x + tt * self.speed * phi.cos(),
            self.y + tt * self.speed * phi.sin(),
        )
    }

    /// Sample the track at `l` points spaced `dt` seconds apart, starting at
    /// `t = 0`.
    pub fn sample_track(&self, l: usize, dt: f64) -> ObstacleTrack {
        let points = (0..l).map(|k| self.position(k as f64 * dt)).collect();
        ObstacleTrack { points, dt }
    }
}

/// A `2 x L` position sequence of one dynamic obstacle at fixed `dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleTrack {
    pub points: Vec<(f64, f64)>,
    pub dt: f64,
}

impl ObstacleTrack {
    /// Position at time index `k`, clamped to the last sample.
    pub fn at_index(&self, k: usize) -> (f64, f64) {
        self.points[k.min(self.points.len() - 1)]
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Run-length encoded grid rows for the scene file: `(count, occupied)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneFile {
    version: u32,
    resolution: f64,
    origin: (f64, f64),
    width: usize,
    height: usize,
    rows: Vec<Vec<(u32, u8)>>,
    dynamic: Vec<DynamicObstacle>,
    #[serde(default)]
    name: String,
}

/// A complete scene: static grid plus scripted dynamic obstacles.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub grid: OccupancyGrid,
    pub dynamic: Vec<DynamicObstacle>,
    pub name: String,
}

impl SceneSpec {
    pub fn new(grid: OccupancyGrid, dynamic: Vec<DynamicObstacle>, name: impl Into<String>) -> Self {
        SceneSpec {
            grid,
            dynamic,
            name: name.into(),
        }
    }

    /// Map extent `(x0, y0, x1, y1)` in world coordinates.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        let g = &self.grid;
        (
            g.origin.0,
            g.origin.1,
            g.origin.0 + g.width as f64 * g.resolution,
            g.origin.1 + g.height as f64 * g.resolution,
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut rows = Vec::with_capacity(self.grid.height);
        for iy in 0..self.grid.height {
            let mut row: Vec<(u32, u8)> = Vec::new();
            for ix in 0..self.grid.width {
                let occ = self.grid.is_occupied_cell(ix as i64, iy as i64) as u8;
                match row.last_mut() {
                    Some((count, v)) if *v == occ => *count += 1,
                    _ => row.push((1, occ)),
                }
            }
            rows.push(row);
        }
        let file = SceneFile {
            version: 1,
            resolution: self.grid.resolution,
            origin: self.grid.origin,
            width: self.grid.width,
            height: self.grid.height,
            rows,
            dynamic: self.dynamic.clone(),
            name: self.name.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: SceneFile = serde_json::from_str(&text)?;
        if file.version != 1 {
            return Err(Error::format(0, format!("unsupported scene version {}", file.version)));
        }
        let mut grid = OccupancyGrid::new(file.width, file.height, file.resolution, file.origin)?;
        if file.rows.len() != file.height {
            return Err(Error::format(0, "row count does not match height"));
        }
        for (iy, row) in file.rows.iter().enumerate() {
            let mut ix = 0usize;
            for &(count, v) in row {
                for _ in 0..count {
                    if ix >= file.width {
                        return Err(Error::format(0, "row longer than width"));
                    }
                    grid.set_cell(ix, iy, v != 0);
                    ix += 1;
                }
            }
            if ix != file.width {
                return Err(Error::format(0, "row shorter than width"));
            }
        }
        Ok(SceneSpec::new(grid, file.dynamic, file.name))
    }

    /// FNV-1a hash of the serialized scene; identifies the scene in dataset
    /// headers and manifests.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x100000001b3);
            }
        };
        eat(&(self.grid.width as u64).to_le_bytes());
        eat(&(self.grid.height as u64).to_le_bytes());
        eat(&self.grid.resolution.to_le_bytes());
        for iy in 0..self.grid.height {
            for ix in 0..self.grid.width {
                eat(&[self.grid.is_occupied_cell(ix as i64, iy as i64) as u8]);
            }
        }
        for d in &self.dynamic {
            for v in [d.x, d.y, d.q_z, d.q_w, d.speed, d.duration] {
                eat(&v.to_le_bytes());
            }
        }
        h
    }
}

/// Signed distance from a point to a rotated rectangle footprint; zero when
/// the point is inside.
pub fn point_to_footprint_distance(point: (f64, f64), pose: &Pose, length: f64, width: f64) -> f64 {
    let phi = pose.yaw();
    let (c, s) = (phi.cos(), phi.sin());
    let dx = point.0 - pose.x;
    let dy = point.1 - pose.y;
    // into footprint frame
    let lx = c * dx + s * dy;
    let ly = -s * dx + c * dy;
    let ex = (lx.abs() - length / 2.0).max(0.0);
    let ey = (ly.abs() - width / 2.0).max(0.0);
    (ex * ex + ey * ey).sqrt()
}

/// Footprint-vs-grid overlap test: true if any occupied cell center lies
/// inside the rectangle, or any footprint vertex lies in an occupied cell.
pub fn footprint_collides(grid: &OccupancyGrid, pose: &Pose, params: &VehicleParams) -> bool {
    let verts = footprint_vertices(pose, params.length, params.width);
    if verts
        .iter()
        .any(|&(x, y)| grid.is_occupied_at(x, y))
    {
        return true;
    }
    // cells whose centers fall inside the rectangle
    let min_x = verts.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let max_x = verts.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    let min_y = verts.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
    let max_y = verts.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
    let (ix0, iy0) = grid.cell_of(min_x, min_y);
    let (ix1, iy1) = grid.cell_of(max_x, max_y);
    for iy in iy0..=iy1 {
        for ix in ix0..=ix1 {
            if !grid.is_occupied_cell(ix, iy) {
                continue;
            }
            if ix < 0 || iy < 0 || ix >= grid.width as i64 || iy >= grid.height as i64 {
                continue; // off-grid counts only via the vertex test
            }
            let center = grid.cell_center(ix as usize, iy as usize);
            if point_to_footprint_distance(center, pose, params.length, params.width) == 0.0 {
                return true;
            }
        }
    }
    false
}
