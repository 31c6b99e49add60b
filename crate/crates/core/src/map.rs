//! The robot's local occupancy map.
//!
//! One writer integrates scans and merges completion output; planners read
//! through immutable snapshots. Observation dominates prediction: a cell that
//! was ever seen free or occupied is never overwritten by a predicted state,
//! while stale predictions decay back to unknown on the next merge.

use std::path::Path;
use std::sync::Arc;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, GridDims, GridFrame};
use crate::occ::{io as occ_io, OccupancyLabelGrid, PointCloud, EMPTY};
use crate::world::{RobotPose, SensorModel};

/// State of one map cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellState {
    Unknown,
    Free,
    Occupied,
    /// Filled in by the completion pipeline, not by a sensor ray.
    PredictedOccupied,
}

impl CellState {
    pub fn is_blocked(self) -> bool {
        matches!(self, CellState::Occupied | CellState::PredictedOccupied)
    }

    fn is_observed(self) -> bool {
        matches!(self, CellState::Free | CellState::Occupied)
    }
}

/// Mutable occupancy map owned by the perception loop.
#[derive(Debug, Clone)]
pub struct LocalMap {
    frame: GridFrame,
    cells: Arc<Vec<CellState>>,
    version: u64,
}

impl LocalMap {
    pub fn new(frame: GridFrame) -> Self {
        let n = frame.dims.cell_count();
        Self {
            frame,
            cells: Arc::new(vec![CellState::Unknown; n]),
            version: 0,
        }
    }

    pub fn frame(&self) -> GridFrame {
        self.frame
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn state(&self, x: usize, y: usize, z: usize) -> CellState {
        self.cells[self.frame.dims.flat_index(x, y, z)]
    }

    /// Integrates one scan taken at `pose`. `hits` are sensor-frame points.
    ///
    /// Cells along each ray up to the hit (or up to the sensor's maximum
    /// range, whichever is closer) become free; the hit cell becomes occupied
    /// unless the hit lies beyond the maximum range. Rays outside the sensor
    /// field of view are ignored. The version increments once per call.
    pub fn integrate_scan(&mut self, pose: &RobotPose, hits: &PointCloud, sensor: &SensorModel) {
        let mut free = Vec::new();
        let mut occupied = Vec::new();
        for hit in &hits.points {
            let range = hit.coords.norm();
            if range < 1e-9 {
                continue;
            }
            if !sensor.direction_in_fov(&hit.coords) {
                continue;
            }
            let clamped = range.min(sensor.max_range);
            let end_world = pose.sensor_to_world(&Point3::from(hit.coords / range * clamped));
            let cells = self.walk_ray(&pose.position, &end_world);
            if range <= sensor.max_range {
                if let Some((&last, rest)) = cells.split_last() {
                    free.extend_from_slice(rest);
                    occupied.push(last);
                }
            } else {
                free.extend_from_slice(&cells);
            }
        }
        // Apply free marks first so an occupied mark from one ray is never
        // erased by another ray of the same scan grazing through the cell.
        let cells = Arc::make_mut(&mut self.cells);
        for &i in &free {
            cells[i] = CellState::Free;
        }
        for &i in &occupied {
            cells[i] = CellState::Occupied;
        }
        self.version += 1;
    }

    /// Amanatides-Woo integer grid walk from `from` to `to`, returning the
    /// flat indices of crossed cells that lie inside the map (in order).
    fn walk_ray(&self, from: &Point3<f64>, to: &Point3<f64>) -> Vec<usize> {
        let res = self.frame.resolution;
        let dims = self.frame.dims;
        let dir = to - from;
        let length = dir.norm();
        if length < 1e-12 {
            return match self.frame.world_to_cell(from) {
                Some((x, y, z)) => vec![dims.flat_index(x, y, z)],
                None => Vec::new(),
            };
        }
        let dir = dir / length;

        let mut cell = [
            ((from.x - self.frame.origin.x) / res).floor() as i64,
            ((from.y - self.frame.origin.y) / res).floor() as i64,
            ((from.z - self.frame.origin.z) / res).floor() as i64,
        ];
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        let mut t_delta = [f64::INFINITY; 3];
        for axis in 0..3 {
            let o = from[axis] - self.frame.origin[axis];
            if dir[axis] > 1e-12 {
                step[axis] = 1;
                t_max[axis] = ((cell[axis] + 1) as f64 * res - o) / dir[axis];
                t_delta[axis] = res / dir[axis];
            } else if dir[axis] < -1e-12 {
                step[axis] = -1;
                t_max[axis] = (cell[axis] as f64 * res - o) / dir[axis];
                t_delta[axis] = res / -dir[axis];
            }
        }

        let mut out = Vec::new();
        let mut t = 0.0;
        while t <= length + 1e-12 {
            if dims.contains(cell[0], cell[1], cell[2]) {
                out.push(dims.flat_index(cell[0] as usize, cell[1] as usize, cell[2] as usize));
            }
            let axis = (0..3).min_by(|&a, &b| t_max[a].total_cmp(&t_max[b])).unwrap();
            t = t_max[axis];
            if t > length {
                break;
            }
            cell[axis] += step[axis];
            t_max[axis] += t_delta[axis];
        }
        out
    }

    /// Merges a completed occupancy prediction into the map.
    ///
    /// Previous predictions decay to unknown first, then every cell that is
    /// unknown in the map and carries a non-empty observed label in
    /// `predicted` becomes predicted-occupied. Observed cells never change.
    pub fn merge_prediction(&mut self, predicted: &OccupancyLabelGrid) -> Result<()> {
        if predicted.frame.dims != self.frame.dims
            || (predicted.frame.origin - self.frame.origin).norm() > 1e-9
            || (predicted.frame.resolution - self.frame.resolution).abs() > 1e-12
        {
            return Err(Error::DimensionMismatch(
                "prediction grid geometry does not match the map".into(),
            ));
        }
        let cells = Arc::make_mut(&mut self.cells);
        for c in cells.iter_mut() {
            if *c == CellState::PredictedOccupied {
                *c = CellState::Unknown;
            }
        }
        for (flat, c) in cells.iter_mut().enumerate() {
            if *c == CellState::Unknown
                && !predicted.raw_unknown_at(flat)
                && predicted.raw_label_at(flat) != EMPTY
            {
                *c = CellState::PredictedOccupied;
            }
        }
        self.version += 1;
        Ok(())
    }

    /// O(1) immutable snapshot for planner queries.
    pub fn snapshot(&self) -> MapView {
        MapView {
            frame: self.frame,
            cells: Arc::clone(&self.cells),
            version: self.version,
        }
    }

    /// The grid as seen by the completion stage: occupied cells labeled 1,
    /// free cells empty, everything else (including previous predictions)
    /// unknown.
    pub fn observed_label_grid(&self, num_classes: u8) -> OccupancyLabelGrid {
        let mut grid = OccupancyLabelGrid::new_unknown(self.frame, num_classes);
        for (flat, c) in self.cells.iter().enumerate() {
            match c {
                CellState::Occupied => grid.set_flat(flat, 1, false),
                CellState::Free => grid.set_flat(flat, EMPTY, false),
                CellState::Unknown | CellState::PredictedOccupied => {}
            }
        }
        grid
    }

    /// The planner-facing occupancy as a label grid (blocked cells labeled 1),
    /// used for map-quality metrics against the rasterized world.
    pub fn blocked_label_grid(&self) -> OccupancyLabelGrid {
        let mut grid = OccupancyLabelGrid::new_empty(self.frame, 1);
        for (flat, c) in self.cells.iter().enumerate() {
            if c.is_blocked() {
                grid.set_flat(flat, 1, false);
            }
        }
        grid
    }

    /// Writes `map.bin` (binary grid: free 0, occupied 1, predicted 2,
    /// unknown 255) and `map.json` (origin, resolution, version) into `dir`.
    pub fn dump(&self, dir: &Path) -> Result<()> {
        let mut grid = OccupancyLabelGrid::new_unknown(self.frame, 2);
        for (flat, c) in self.cells.iter().enumerate() {
            match c {
                CellState::Unknown => {}
                CellState::Free => grid.set_flat(flat, 0, false),
                CellState::Occupied => grid.set_flat(flat, 1, false),
                CellState::PredictedOccupied => grid.set_flat(flat, 2, false),
            }
        }
        occ_io::write_grid(&grid, &dir.join("map.bin"))?;
        let header = MapHeader {
            dims: self.frame.dims,
            origin: [self.frame.origin.x, self.frame.origin.y, self.frame.origin.z],
            resolution: self.frame.resolution,
            version: self.version,
        };
        std::fs::write(
            dir.join("map.json"),
            serde_json::to_string_pretty(&header)?,
        )?;
        Ok(())
    }
}

/// JSON header accompanying a map dump.
#[derive(Debug, Serialize, Deserialize)]
pub struct MapHeader {
    pub dims: GridDims,
    pub origin: [f64; 3],
    pub resolution: f64,
    pub version: u64,
}

/// Immutable view of the map at one version. Cheap to clone and safe to hand
/// to planners on other threads; later map mutations never show through.
#[derive(Debug, Clone)]
pub struct MapView {
    frame: GridFrame,
    cells: Arc<Vec<CellState>>,
    version: u64,
}

impl MapView {
    pub fn frame(&self) -> GridFrame {
        self.frame
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn state(&self, x: usize, y: usize, z: usize) -> CellState {
        self.cells[self.frame.dims.flat_index(x, y, z)]
    }

    /// Whether the cell blocks the robot; predicted-occupied counts as
    /// blocked.
    pub fn is_blocked(&self, x: usize, y: usize, z: usize) -> bool {
        self.state(x, y, z).is_blocked()
    }

    /// Whether the cell containing `p` is blocked. Points outside the map are
    /// not blocked; keeping the robot inside the arena is the planner's job.
    pub fn is_blocked_at(&self, p: &Point3<f64>) -> bool {
        match self.frame.world_to_cell(p) {
            Some((x, y, z)) => self.is_blocked(x, y, z),
            None => false,
        }
    }

    /// Whether any cell overlapping the box is blocked.
    pub fn is_blocked_region(&self, region: &Aabb) -> bool {
        let res = self.frame.resolution;
        let dims = self.frame.dims;
        let lo = |v: f64, o: f64| (((v - o) / res).floor() as i64).max(0);
        let hi = |v: f64, o: f64, n: usize| {
            ((((v - o) / res).ceil() as i64) - 1).min(n as i64 - 1)
        };
        let x0 = lo(region.min.x, self.frame.origin.x);
        let y0 = lo(region.min.y, self.frame.origin.y);
        let z0 = lo(region.min.z, self.frame.origin.z);
        let x1 = hi(region.max.x, self.frame.origin.x, dims.l);
        let y1 = hi(region.max.y, self.frame.origin.y, dims.w);
        let z1 = hi(region.max.z, self.frame.origin.z, dims.h);
        for z in z0..=z1 {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    if x < 0 || y < 0 || z < 0 {
                        continue;
                    }
                    if self.is_blocked(x as usize, y as usize, z as usize) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Point query inflated by a radius (a cube of half-extent `inflation`).
    /// `inflation = 0` is a plain cell lookup.
    pub fn is_blocked_point(&self, p: &Point3<f64>, inflation: f64) -> bool {
        if inflation <= 0.0 {
            self.is_blocked_at(p)
        } else {
            let half = nalgebra::Vector3::from_element(inflation);
            self.is_blocked_region(&Aabb::new(p - half, p + half))
        }
    }

    pub(crate) fn cells(&self) -> &[CellState] {
        &self.cells
    }

    /// Precomputed blocked mask dilated by `inflation` meters (Chebyshev
    /// ball, i.e. a cube), for planners that probe many points. Dilation by a
    /// cube is slightly conservative compared to the exact sphere.
    pub fn inflated(&self, inflation: f64) -> BlockedMask {
        let dims = self.frame.dims;
        let mut bits: Vec<bool> = self.cells.iter().map(|c| c.is_blocked()).collect();
        let r = if inflation > 0.0 {
            (inflation / self.frame.resolution).ceil() as usize
        } else {
            0
        };
        if r > 0 {
            // Separable 1-D max filters along each axis.
            let strides = [1usize, dims.l, dims.l * dims.w];
            let extents = [dims.l, dims.w, dims.h];
            for axis in 0..3 {
                let mut next = bits.clone();
                for (i, slot) in next.iter_mut().enumerate() {
                    if *slot {
                        continue;
                    }
                    let coord = (i / strides[axis]) % extents[axis];
                    let lo = coord.saturating_sub(r);
                    let hi = (coord + r).min(extents[axis] - 1);
                    for k in lo..=hi {
                        let j = (i as isize
                            + (k as isize - coord as isize) * strides[axis] as isize)
                            as usize;
                        if bits[j] {
                            *slot = true;
                            break;
                        }
                    }
                }
                bits = next;
            }
        }
        BlockedMask {
            frame: self.frame,
            bits,
        }
    }
}

/// Dense blocked/free bitmap derived from a [`MapView`], optionally dilated
/// by a robot radius. Point queries are single array lookups.
#[derive(Debug, Clone)]
pub struct BlockedMask {
    frame: GridFrame,
    bits: Vec<bool>,
}

impl BlockedMask {
    pub fn frame(&self) -> GridFrame {
        self.frame
    }

    pub fn is_blocked_cell(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.frame.dims.flat_index(x, y, z)]
    }

    /// Whether the cell containing `p` is blocked; points outside the map are
    /// free, matching [`MapView::is_blocked_at`].
    pub fn is_blocked_at(&self, p: &Point3<f64>) -> bool {
        match self.frame.world_to_cell(p) {
            Some((x, y, z)) => self.bits[self.frame.dims.flat_index(x, y, z)],
            None => false,
        }
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.bits
    }
}
