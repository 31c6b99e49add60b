//! Small shared geometry types: grid shapes, grid frames, and boxes.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

/// Cell counts of a 3-D grid: `l` along x, `w` along y, `h` along z.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridDims {
    pub l: usize,
    pub w: usize,
    pub h: usize,
}

impl GridDims {
    pub fn new(l: usize, w: usize, h: usize) -> Self {
        Self { l, w, h }
    }

    pub fn cell_count(&self) -> usize {
        self.l * self.w * self.h
    }

    /// Flat index with x fastest: `(z * w + y) * l + x`.
    pub fn flat_index(&self, x: usize, y: usize, z: usize) -> usize {
        (z * self.w + y) * self.l + x
    }

    pub fn unflatten(&self, index: usize) -> (usize, usize, usize) {
        let x = index % self.l;
        let y = (index / self.l) % self.w;
        let z = index / (self.l * self.w);
        (x, y, z)
    }

    pub fn contains(&self, x: i64, y: i64, z: i64) -> bool {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < self.l
            && (y as usize) < self.w
            && (z as usize) < self.h
    }
}

/// Placement of a grid in the world: shape, cell size, and the world position
/// of the minimum corner of cell (0, 0, 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFrame {
    pub dims: GridDims,
    pub resolution: f64,
    pub origin: Point3<f64>,
}

impl GridFrame {
    pub fn new(dims: GridDims, resolution: f64, origin: Point3<f64>) -> Self {
        Self {
            dims,
            resolution,
            origin,
        }
    }

    /// Cell containing the world point, or `None` when outside the grid.
    pub fn world_to_cell(&self, p: &Point3<f64>) -> Option<(usize, usize, usize)> {
        let x = ((p.x - self.origin.x) / self.resolution).floor() as i64;
        let y = ((p.y - self.origin.y) / self.resolution).floor() as i64;
        let z = ((p.z - self.origin.z) / self.resolution).floor() as i64;
        if self.dims.contains(x, y, z) {
            Some((x as usize, y as usize, z as usize))
        } else {
            None
        }
    }

    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Point3<f64> {
        self.origin
            + Vector3::new(
                (x as f64 + 0.5) * self.resolution,
                (y as f64 + 0.5) * self.resolution,
                (z as f64 + 0.5) * self.resolution,
            )
    }

    /// World-space extent covered by the grid.
    pub fn bounds(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: self.origin
                + Vector3::new(
                    self.dims.l as f64 * self.resolution,
                    self.dims.w as f64 * self.resolution,
                    self.dims.h as f64 * self.resolution,
                ),
        }
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn new(min: Point3<f64>, max: Point3<f64>) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Squared distance from a point to the box (zero inside).
    pub fn distance_sq(&self, p: &Point3<f64>) -> f64 {
        (0..3)
            .map(|i| {
                let v = p[i].clamp(self.min[i], self.max[i]) - p[i];
                v * v
            })
            .sum()
    }

    pub fn center(&self) -> Point3<f64> {
        nalgebra::center(&self.min, &self.max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_index_round_trips() {
        let dims = GridDims::new(4, 5, 6);
        for z in 0..6 {
            for y in 0..5 {
                for x in 0..4 {
                    let f = dims.flat_index(x, y, z);
                    assert_eq!(dims.unflatten(f), (x, y, z));
                }
            }
        }
    }

    #[test]
    fn world_to_cell_handles_bounds() {
        let frame = GridFrame::new(GridDims::new(2, 2, 2), 0.5, Point3::new(-0.5, -0.5, 0.0));
        assert_eq!(frame.world_to_cell(&Point3::new(0.0, 0.0, 0.1)), Some((1, 1, 0)));
        assert_eq!(frame.world_to_cell(&Point3::new(-0.6, 0.0, 0.1)), None);
        assert_eq!(frame.world_to_cell(&Point3::new(0.0, 0.0, 1.1)), None);
    }

    #[test]
    fn aabb_distance() {
        let b = Aabb::new(Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 1.0, 1.0));
        assert_eq!(b.distance_sq(&Point3::new(0.5, 0.5, 0.5)), 0.0);
        assert!((b.distance_sq(&Point3::new(2.0, 0.5, 0.5)) - 1.0).abs() < 1e-15);
    }
}
