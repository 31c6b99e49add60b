//! File formats for label grids and point-cloud fixtures.
//!
//! Label grids serialize to a flat binary layout: a 12-byte header with the
//! three dimensions as little-endian u32 (l, w, h), then one byte per cell in
//! flat-index order (x fastest). The byte is the label id; 255 marks an
//! unobserved cell. A JSON sidecar names the classes.

use std::fs;
use std::path::Path;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::{OccupancyLabelGrid, PointCloud, UNKNOWN_BYTE};
use crate::error::{Error, Result};
use crate::geom::{GridDims, GridFrame};

pub const HEADER_LEN: usize = 12;

/// Sidecar document naming the semantic classes; class id `i + 1` maps to
/// `classes[i]`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct ClassNames {
    pub classes: Vec<String>,
}

pub fn grid_to_bytes(grid: &OccupancyLabelGrid) -> Vec<u8> {
    let dims = grid.dims();
    let mut bytes = Vec::with_capacity(HEADER_LEN + grid.cell_count());
    bytes.extend_from_slice(&(dims.l as u32).to_le_bytes());
    bytes.extend_from_slice(&(dims.w as u32).to_le_bytes());
    bytes.extend_from_slice(&(dims.h as u32).to_le_bytes());
    for flat in 0..grid.cell_count() {
        if grid.raw_unknown_at(flat) {
            bytes.push(UNKNOWN_BYTE);
        } else {
            bytes.push(grid.raw_label_at(flat));
        }
    }
    bytes
}

/// Decodes a grid, placing it with the supplied resolution and origin.
pub fn grid_from_bytes(
    bytes: &[u8],
    resolution: f64,
    origin: Point3<f64>,
    num_classes: u8,
) -> Result<OccupancyLabelGrid> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::MalformedFile(format!(
            "grid file too short: {} bytes",
            bytes.len()
        )));
    }
    let read_u32 =
        |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let dims = GridDims::new(
        read_u32(0) as usize,
        read_u32(4) as usize,
        read_u32(8) as usize,
    );
    let expected = HEADER_LEN + dims.cell_count();
    if bytes.len() != expected {
        return Err(Error::MalformedFile(format!(
            "expected {} bytes for dims {:?}, found {}",
            expected,
            dims,
            bytes.len()
        )));
    }
    let frame = GridFrame::new(dims, resolution, origin);
    let mut grid = OccupancyLabelGrid::new_unknown(frame, num_classes);
    for (flat, &byte) in bytes[HEADER_LEN..].iter().enumerate() {
        if byte != UNKNOWN_BYTE {
            if byte > num_classes {
                return Err(Error::MalformedFile(format!(
                    "label {byte} exceeds class count {num_classes}"
                )));
            }
            grid.set_flat(flat, byte, false);
        }
    }
    Ok(grid)
}

pub fn write_grid(grid: &OccupancyLabelGrid, path: &Path) -> Result<()> {
    fs::write(path, grid_to_bytes(grid))?;
    Ok(())
}

pub fn read_grid(
    path: &Path,
    resolution: f64,
    origin: Point3<f64>,
    num_classes: u8,
) -> Result<OccupancyLabelGrid> {
    let bytes = fs::read(path)?;
    grid_from_bytes(&bytes, resolution, origin, num_classes)
}

pub fn write_class_names(names: &ClassNames, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(names)?)?;
    Ok(())
}

pub fn read_class_names(path: &Path) -> Result<ClassNames> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// Parses an `x,y,z` per-line CSV into a point cloud. Blank lines and lines
/// starting with `#` are skipped.
pub fn cloud_from_csv(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::MalformedFile(format!(
                "line {}: expected 3 fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        let mut coords = [0.0f64; 3];
        for (i, f) in fields.iter().enumerate() {
            coords[i] = f.parse().map_err(|_| {
                Error::MalformedFile(format!("line {}: bad number {f:?}", lineno + 1))
            })?;
        }
        points.push(Point3::new(coords[0], coords[1], coords[2]));
    }
    PointCloud::new(points)
}

pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for p in &cloud.points {
        out.push_str(&format!("{},{},{}\n", p.x, p.y, p.z));
    }
    out
}

pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    cloud_from_csv(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> OccupancyLabelGrid {
        let frame = GridFrame::new(GridDims::new(3, 2, 2), 0.5, Point3::origin());
        let mut g = OccupancyLabelGrid::new_unknown(frame, 3);
        g.set_label(0, 0, 0, 1);
        g.set_label(2, 1, 1, 3);
        g.set_label(1, 0, 1, 0);
        g
    }

    #[test]
    fn grid_bytes_round_trip() {
        let grid = sample_grid();
        let bytes = grid_to_bytes(&grid);
        assert_eq!(bytes.len(), HEADER_LEN + 12);
        assert_eq!(&bytes[0..4], &3u32.to_le_bytes());
        let back = grid_from_bytes(&bytes, 0.5, Point3::origin(), 3).unwrap();
        assert_eq!(back, grid);
    }

    #[test]
    fn header_encodes_dims_and_unknown_byte() {
        let grid = sample_grid();
        let bytes = grid_to_bytes(&grid);
        // Cell (1, 0, 0) was never observed.
        let flat = grid.dims().flat_index(1, 0, 0);
        assert_eq!(bytes[HEADER_LEN + flat], UNKNOWN_BYTE);
        let flat_occ = grid.dims().flat_index(0, 0, 0);
        assert_eq!(bytes[HEADER_LEN + flat_occ], 1);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let grid = sample_grid();
        let mut bytes = grid_to_bytes(&grid);
        bytes.pop();
        assert!(grid_from_bytes(&bytes, 0.5, Point3::origin(), 3).is_err());
    }

    #[test]
    fn csv_round_trip_and_comments() {
        let text = "# fixture\n0.5,1.25,-3\n\n1,2,3\n";
        let cloud = cloud_from_csv(text).unwrap();
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.points[0], Point3::new(0.5, 1.25, -3.0));
        let back = cloud_from_csv(&cloud_to_csv(&cloud)).unwrap();
        assert_eq!(back.points, cloud.points);
    }

    #[test]
    fn csv_rejects_bad_rows() {
        assert!(cloud_from_csv("1,2\n").is_err());
        assert!(cloud_from_csv("a,b,c\n").is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grid = sample_grid();
        let grid_path = dir.path().join("grid.bin");
        write_grid(&grid, &grid_path).unwrap();
        let back = read_grid(&grid_path, 0.5, Point3::origin(), 3).unwrap();
        assert_eq!(back, grid);

        let names = ClassNames {
            classes: vec!["box".into(), "ring".into(), "cylinder".into()],
        };
        let names_path = dir.path().join("grid.classes.json");
        write_class_names(&names, &names_path).unwrap();
        assert_eq!(read_class_names(&names_path).unwrap(), names);
    }
}
