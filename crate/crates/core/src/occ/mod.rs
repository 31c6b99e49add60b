//! Deterministic geometry of the occupancy pipeline: voxelization of point
//! clouds, bird's-eye-view projection, pluggable occupancy completion, and
//! the occupancy/semantic evaluation metrics.

mod complete;
pub mod io;
mod metrics;

pub use complete::{complete, CompletionStrategy, Identity, Oracle, ShadowExtrude};
pub use metrics::{occupancy_iou, semantic_miou, ConfusionCounts};

use std::collections::BTreeMap;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::geom::{GridDims, GridFrame};

/// Label id meaning "nothing here". Class labels start at 1.
pub const EMPTY: u8 = 0;
/// Byte written for unobserved cells in the binary grid format.
pub const UNKNOWN_BYTE: u8 = 255;

/// A set of 3-D points in the sensor frame, meters.
#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3<f64>>) -> Result<Self> {
        if points
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "point cloud coordinates must be finite".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// One occupied voxel: its flat index, the elementwise max of the per-point
/// offsets from the cell center, and how many points fell in it.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupiedVoxel {
    pub flat_index: usize,
    pub offset_max: Vector3<f64>,
    pub hits: u32,
}

impl OccupiedVoxel {
    /// Dense feature channels: the three pooled offsets plus the hit count.
    pub fn feature(&self) -> [f64; 4] {
        [
            self.offset_max.x,
            self.offset_max.y,
            self.offset_max.z,
            self.hits as f64,
        ]
    }
}

/// Sparse voxel features produced by [`voxelize`]. Voxels are stored sorted
/// by flat index; indices are unique.
#[derive(Debug, Clone)]
pub struct VoxelFeatureGrid {
    pub frame: GridFrame,
    pub voxels: Vec<OccupiedVoxel>,
    /// Points outside the grid bounds, dropped during binning.
    pub dropped: usize,
}

impl VoxelFeatureGrid {
    pub const CHANNELS: usize = 4;

    pub fn occupied_count(&self) -> usize {
        self.voxels.len()
    }
}

/// Dense top-down feature image: `channels` values per (x, y) column.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub l: usize,
    pub w: usize,
    pub channels: usize,
    /// Row-major with x fastest: `data[(y * l + x) * channels + c]`.
    pub data: Vec<f64>,
}

impl BevGrid {
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.l + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    pub fn is_nonzero(&self, x: usize, y: usize) -> bool {
        self.cell(x, y).iter().any(|&v| v != 0.0)
    }
}

/// Per-cell semantic labels with an explicit unknown mask.
///
/// Labels are `0` (empty) or `1..=num_classes`. The unknown mask marks cells
/// that were never observed; their label byte is ignored until completion or
/// observation fills them.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyLabelGrid {
    pub frame: GridFrame,
    pub num_classes: u8,
    labels: Vec<u8>,
    unknown: Vec<bool>,
}

impl OccupancyLabelGrid {
    /// A fully-unknown grid.
    pub fn new_unknown(frame: GridFrame, num_classes: u8) -> Self {
        let n = frame.dims.cell_count();
        Self {
            frame,
            num_classes,
            labels: vec![EMPTY; n],
            unknown: vec![true; n],
        }
    }

    /// A fully-observed, all-empty grid.
    pub fn new_empty(frame: GridFrame, num_classes: u8) -> Self {
        let n = frame.dims.cell_count();
        Self {
            frame,
            num_classes,
            labels: vec![EMPTY; n],
            unknown: vec![false; n],
        }
    }

    pub fn dims(&self) -> GridDims {
        self.frame.dims
    }

    pub fn label(&self, x: usize, y: usize, z: usize) -> u8 {
        self.labels[self.frame.dims.flat_index(x, y, z)]
    }

    pub fn is_unknown(&self, x: usize, y: usize, z: usize) -> bool {
        self.unknown[self.frame.dims.flat_index(x, y, z)]
    }

    /// Sets a label and marks the cell observed.
    pub fn set_label(&mut self, x: usize, y: usize, z: usize, label: u8) {
        let i = self.frame.dims.flat_index(x, y, z);
        self.labels[i] = label;
        self.unknown[i] = false;
    }

    pub fn set_unknown(&mut self, x: usize, y: usize, z: usize) {
        let i = self.frame.dims.flat_index(x, y, z);
        self.labels[i] = EMPTY;
        self.unknown[i] = true;
    }

    /// Label of a cell by flat index, treating unknown cells as empty.
    pub fn effective_label_at(&self, flat: usize) -> u8 {
        if self.unknown[flat] {
            EMPTY
        } else {
            self.labels[flat]
        }
    }

    pub fn cell_count(&self) -> usize {
        self.labels.len()
    }

    pub fn unknown_count(&self) -> usize {
        self.unknown.iter().filter(|&&u| u).count()
    }

    pub(crate) fn raw_label_at(&self, flat: usize) -> u8 {
        self.labels[flat]
    }

    pub(crate) fn raw_unknown_at(&self, flat: usize) -> bool {
        self.unknown[flat]
    }

    pub(crate) fn set_flat(&mut self, flat: usize, label: u8, unknown: bool) {
        self.labels[flat] = label;
        self.unknown[flat] = unknown;
    }

    fn validate_labels(&self) -> Result<()> {
        if let Some(bad) = self
            .labels
            .iter()
            .zip(&self.unknown)
            .find(|(l, u)| !**u && **l > self.num_classes)
        {
            return Err(Error::InvalidParameter(format!(
                "label {} exceeds class count {}",
                bad.0, self.num_classes
            )));
        }
        Ok(())
    }

    pub(crate) fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.frame.dims != other.frame.dims {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.frame.dims, other.frame.dims
            )));
        }
        Ok(())
    }
}

/// Bins a point cloud into voxels at one scale.
///
/// Each occupied voxel pools the per-point features (offsets from the cell
/// center) with an elementwise max and counts its hits. Points outside the
/// grid are dropped and counted. Multi-scale use is repeated calls at
/// resolutions `s`, `2s`, `4s`.
pub fn voxelize(
    cloud: &PointCloud,
    resolution: f64,
    dims: GridDims,
    origin: Point3<f64>,
) -> Result<VoxelFeatureGrid> {
    if !(resolution.is_finite() && resolution > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    if dims.cell_count() == 0 {
        return Err(Error::InvalidParameter("grid dims must be positive".into()));
    }
    let frame = GridFrame::new(dims, resolution, origin);
    let mut bins: BTreeMap<usize, (Vector3<f64>, u32)> = BTreeMap::new();
    let mut dropped = 0usize;
    for p in &cloud.points {
        match frame.world_to_cell(p) {
            Some((x, y, z)) => {
                let offset = p - frame.cell_center(x, y, z);
                let entry = bins
                    .entry(dims.flat_index(x, y, z))
                    .or_insert((Vector3::from_element(f64::NEG_INFINITY), 0));
                entry.0 = Vector3::new(
                    entry.0.x.max(offset.x),
                    entry.0.y.max(offset.y),
                    entry.0.z.max(offset.z),
                );
                entry.1 += 1;
            }
            None => dropped += 1,
        }
    }
    let voxels = bins
        .into_iter()
        .map(|(flat_index, (offset_max, hits))| OccupiedVoxel {
            flat_index,
            offset_max,
            hits,
        })
        .collect();
    Ok(VoxelFeatureGrid {
        frame,
        voxels,
        dropped,
    })
}

/// Projects a voxel grid to a dense bird's-eye-view image.
///
/// Voxels sharing an (x, y) column are max-pooled over z; columns with no
/// occupied voxel stay zero-filled.
pub fn bev_project(grid: &VoxelFeatureGrid) -> BevGrid {
    let dims = grid.frame.dims;
    let channels = VoxelFeatureGrid::CHANNELS;
    let mut data = vec![0.0f64; dims.l * dims.w * channels];
    let mut seen = vec![false; dims.l * dims.w];
    for voxel in &grid.voxels {
        let (x, y, _z) = dims.unflatten(voxel.flat_index);
        let column = y * dims.l + x;
        let base = column * channels;
        let feature = voxel.feature();
        if seen[column] {
            for c in 0..channels {
                data[base + c] = data[base + c].max(feature[c]);
            }
        } else {
            data[base..base + channels].copy_from_slice(&feature);
            seen[column] = true;
        }
    }
    BevGrid {
        l: dims.l,
        w: dims.w,
        channels,
        data,
    }
}

pub(crate) fn validate_metric_inputs(
    pred: &OccupancyLabelGrid,
    truth: &OccupancyLabelGrid,
) -> Result<()> {
    pred.check_same_shape(truth)?;
    pred.validate_labels()?;
    truth.validate_labels()?;
    Ok(())
}
