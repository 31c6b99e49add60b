//! Analytic ground-truth world for the simulator: static boxes, ring gates,
//! and moving cylinders, with ray casting, sphere collision checks, and
//! rasterization to label grids.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Aabb, GridFrame};
use crate::occ::{OccupancyLabelGrid, PointCloud};

/// Semantic class ids used when rasterizing the world.
pub const CLASS_BOX: u8 = 1;
pub const CLASS_RING: u8 = 2;
pub const CLASS_CYLINDER: u8 = 3;
pub const NUM_CLASSES: u8 = 3;

/// Robot position and heading; the sensor frame is x forward along the yaw
/// direction, y left, z up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotPose {
    pub position: Point3<f64>,
    pub yaw: f64,
}

impl RobotPose {
    pub fn sensor_to_world(&self, p: &Point3<f64>) -> Point3<f64> {
        self.position + self.rotate_to_world(&p.coords)
    }

    pub fn rotate_to_world(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let (s, c) = self.yaw.sin_cos();
        Vector3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
    }
}

/// Pinhole-style range sensor: a grid of rays inside a field of view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorModel {
    pub h_fov_deg: f64,
    pub v_fov_deg: f64,
    pub max_range: f64,
    pub rays_h: usize,
    pub rays_v: usize,
}

impl SensorModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(Error::InvalidParameter(
                "sensor max range must be positive".into(),
            ));
        }
        if self.rays_h == 0 || self.rays_v == 0 {
            return Err(Error::InvalidParameter(
                "sensor needs at least one ray".into(),
            ));
        }
        Ok(())
    }

    /// Whether a sensor-frame direction lies inside the field of view.
    pub fn direction_in_fov(&self, dir: &Vector3<f64>) -> bool {
        let horizontal = dir.y.atan2(dir.x).abs().to_degrees();
        let vertical = dir.z.atan2(dir.xy().norm()).abs().to_degrees();
        horizontal <= self.h_fov_deg / 2.0 + 1e-9 && vertical <= self.v_fov_deg / 2.0 + 1e-9
    }

    /// Sensor-frame unit directions of every ray, row by row.
    pub fn ray_directions(&self) -> Vec<Vector3<f64>> {
        let mut dirs = Vec::with_capacity(self.rays_h * self.rays_v);
        for iv in 0..self.rays_v {
            let pitch = spread(iv, self.rays_v, self.v_fov_deg).to_radians();
            for ih in 0..self.rays_h {
                let yaw = spread(ih, self.rays_h, self.h_fov_deg).to_radians();
                dirs.push(Vector3::new(
                    pitch.cos() * yaw.cos(),
                    pitch.cos() * yaw.sin(),
                    pitch.sin(),
                ));
            }
        }
        dirs
    }
}

fn spread(i: usize, n: usize, fov_deg: f64) -> f64 {
    if n == 1 {
        0.0
    } else {
        -fov_deg / 2.0 + fov_deg * i as f64 / (n - 1) as f64
    }
}

/// A ring gate: a rectangular frame of four bars around an opening. The
/// opening normal is horizontal, along x or y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    pub center: Point3<f64>,
    /// `true`: opening faces along x; `false`: along y.
    pub normal_x: bool,
    pub opening_w: f64,
    pub opening_h: f64,
    pub thickness: f64,
    pub depth: f64,
}

impl Ring {
    /// The four bars as boxes: bottom, top, and the two side posts.
    pub fn bars(&self) -> [Aabb; 4] {
        let c = self.center;
        let (hw, hh, t, hd) = (
            self.opening_w / 2.0,
            self.opening_h / 2.0,
            self.thickness,
            self.depth / 2.0,
        );
        let make = |u0: f64, u1: f64, z0: f64, z1: f64| {
            if self.normal_x {
                Aabb::new(
                    Point3::new(c.x - hd, c.y + u0, c.z + z0),
                    Point3::new(c.x + hd, c.y + u1, c.z + z1),
                )
            } else {
                Aabb::new(
                    Point3::new(c.x + u0, c.y - hd, c.z + z0),
                    Point3::new(c.x + u1, c.y + hd, c.z + z1),
                )
            }
        };
        [
            make(-hw - t, hw + t, -hh - t, -hh), // bottom bar
            make(-hw - t, hw + t, hh, hh + t),   // top bar
            make(-hw - t, -hw, -hh, hh),         // near post
            make(hw, hw + t, -hh, hh),           // far post
        ]
    }
}

/// Upright cylinder that translates with constant velocity, reflecting at the
/// arena walls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovingCylinder {
    /// Center of the base circle.
    pub base: Point3<f64>,
    pub radius: f64,
    pub height: f64,
    pub velocity: Vector3<f64>,
    /// Reflect off the arena bounds; when false the cylinder stops there.
    pub bounce: bool,
}

/// Ground-truth scene: arena bounds plus static and moving obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldModel {
    pub bounds: Aabb,
    pub boxes: Vec<Aabb>,
    pub rings: Vec<Ring>,
    pub cylinders: Vec<MovingCylinder>,
}

impl WorldModel {
    pub fn empty(bounds: Aabb) -> Self {
        Self {
            bounds,
            boxes: Vec::new(),
            rings: Vec::new(),
            cylinders: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for b in self.static_bars() {
            if !(self.bounds.contains(&b.min) && self.bounds.contains(&b.max)) {
                return Err(Error::InvalidConfig(
                    "static obstacle extends outside the arena".into(),
                ));
            }
        }
        for c in &self.cylinders {
            let inside = c.base.x - c.radius >= self.bounds.min.x
                && c.base.x + c.radius <= self.bounds.max.x
                && c.base.y - c.radius >= self.bounds.min.y
                && c.base.y + c.radius <= self.bounds.max.y;
            if !inside {
                return Err(Error::InvalidConfig(
                    "moving cylinder starts outside the arena".into(),
                ));
            }
        }
        Ok(())
    }

    fn static_bars(&self) -> Vec<Aabb> {
        let mut bars = self.boxes.clone();
        for r in &self.rings {
            bars.extend_from_slice(&r.bars());
        }
        bars
    }

    /// Advances moving obstacles by `dt` seconds, reflecting velocities at
    /// the arena bounds. Deterministic; `dt = 0` returns an identical world.
    pub fn advance(&self, dt: f64) -> WorldModel {
        let mut next = self.clone();
        for c in &mut next.cylinders {
            let mut p = c.base + c.velocity * dt;
            for axis in 0..2 {
                let lo = self.bounds.min[axis] + c.radius;
                let hi = self.bounds.max[axis] - c.radius;
                if lo >= hi {
                    p[axis] = (lo + hi) / 2.0;
                    c.velocity[axis] = 0.0;
                    continue;
                }
                if c.bounce {
                    // Fold the coordinate back into [lo, hi], flipping the
                    // velocity once per crossing.
                    while p[axis] < lo || p[axis] > hi {
                        if p[axis] < lo {
                            p[axis] = 2.0 * lo - p[axis];
                            c.velocity[axis] = -c.velocity[axis];
                        } else {
                            p[axis] = 2.0 * hi - p[axis];
                            c.velocity[axis] = -c.velocity[axis];
                        }
                    }
                } else if p[axis] < lo || p[axis] > hi {
                    p[axis] = p[axis].clamp(lo, hi);
                    c.velocity[axis] = 0.0;
                }
            }
            c.base = p;
        }
        next
    }

    /// First-hit distance of a world-frame ray, if any, within `max_range`.
    pub fn ray_cast(
        &self,
        origin: &Point3<f64>,
        dir: &Vector3<f64>,
        max_range: f64,
    ) -> Option<f64> {
        let mut best: Option<f64> = None;
        let mut consider = |t: Option<f64>| {
            if let Some(t) = t {
                if t >= 0.0 && t <= max_range && best.map_or(true, |b| t < b) {
                    best = Some(t);
                }
            }
        };
        for b in &self.boxes {
            consider(ray_aabb(origin, dir, b));
        }
        for r in &self.rings {
            for bar in r.bars() {
                consider(ray_aabb(origin, dir, &bar));
            }
        }
        for c in &self.cylinders {
            consider(ray_cylinder(origin, dir, c));
        }
        best
    }

    /// Whether a sphere intersects any obstacle geometry.
    pub fn sphere_intersects(&self, center: &Point3<f64>, radius: f64) -> bool {
        let r2 = radius * radius;
        if self.boxes.iter().any(|b| b.distance_sq(center) <= r2) {
            return true;
        }
        if self
            .rings
            .iter()
            .any(|r| r.bars().iter().any(|b| b.distance_sq(center) <= r2))
        {
            return true;
        }
        self.cylinders.iter().any(|c| {
            let dz = center.z - center.z.clamp(c.base.z, c.base.z + c.height);
            let radial =
                ((center.xy() - c.base.xy()).norm() - c.radius).max(0.0);
            radial * radial + dz * dz <= r2
        })
    }

    /// Per-ray measurement at `pose`: sensor-frame direction and hit range.
    pub fn render_scan_rays(&self, pose: &RobotPose, sensor: &SensorModel) -> Vec<RayMeasurement> {
        sensor
            .ray_directions()
            .into_iter()
            .map(|dir| {
                let world_dir = pose.rotate_to_world(&dir);
                let range = self.ray_cast(&pose.position, &world_dir, sensor.max_range);
                RayMeasurement {
                    direction: dir,
                    range,
                }
            })
            .collect()
    }

    /// First-hit points of a scan, as a sensor-frame point cloud.
    pub fn render_scan(&self, pose: &RobotPose, sensor: &SensorModel) -> PointCloud {
        let points = self
            .render_scan_rays(pose, sensor)
            .into_iter()
            .filter_map(|m| m.range.map(|r| Point3::from(m.direction * r)))
            .collect();
        PointCloud { points }
    }

    /// Labels every grid cell whose center lies inside an obstacle. Cells are
    /// all observed; moving cylinders are rasterized at their current pose.
    pub fn rasterize(&self, frame: GridFrame) -> OccupancyLabelGrid {
        let mut grid = OccupancyLabelGrid::new_empty(frame, NUM_CLASSES);
        let mut stamp_box = |b: &Aabb, label: u8, grid: &mut OccupancyLabelGrid| {
            let res = frame.resolution;
            let cell_of = |v: f64, o: f64| ((v - o) / res).floor() as i64;
            let x0 = cell_of(b.min.x, frame.origin.x).max(0);
            let y0 = cell_of(b.min.y, frame.origin.y).max(0);
            let z0 = cell_of(b.min.z, frame.origin.z).max(0);
            let x1 = cell_of(b.max.x, frame.origin.x).min(frame.dims.l as i64 - 1);
            let y1 = cell_of(b.max.y, frame.origin.y).min(frame.dims.w as i64 - 1);
            let z1 = cell_of(b.max.z, frame.origin.z).min(frame.dims.h as i64 - 1);
            for z in z0..=z1 {
                for y in y0..=y1 {
                    for x in x0..=x1 {
                        if x < 0 || y < 0 || z < 0 {
                            continue;
                        }
                        let center = frame.cell_center(x as usize, y as usize, z as usize);
                        if b.contains(&center) {
                            grid.set_label(x as usize, y as usize, z as usize, label);
                        }
                    }
                }
            }
        };
        for b in &self.boxes {
            stamp_box(b, CLASS_BOX, &mut grid);
        }
        for r in &self.rings {
            for bar in r.bars() {
                stamp_box(&bar, CLASS_RING, &mut grid);
            }
        }
        for c in &self.cylinders {
            let bb = Aabb::new(
                Point3::new(c.base.x - c.radius, c.base.y - c.radius, c.base.z),
                Point3::new(
                    c.base.x + c.radius,
                    c.base.y + c.radius,
                    c.base.z + c.height,
                ),
            );
            let res = frame.resolution;
            let cell_of = |v: f64, o: f64| ((v - o) / res).floor() as i64;
            let x0 = cell_of(bb.min.x, frame.origin.x).max(0);
            let y0 = cell_of(bb.min.y, frame.origin.y).max(0);
            let z0 = cell_of(bb.min.z, frame.origin.z).max(0);
            let x1 = cell_of(bb.max.x, frame.origin.x).min(frame.dims.l as i64 - 1);
            let y1 = cell_of(bb.max.y, frame.origin.y).min(frame.dims.w as i64 - 1);
            let z1 = cell_of(bb.max.z, frame.origin.z).min(frame.dims.h as i64 - 1);
            for z in z0.max(0)..=z1 {
                for y in y0.max(0)..=y1 {
                    for x in x0.max(0)..=x1 {
                        let center = frame.cell_center(x as usize, y as usize, z as usize);
                        let in_radius = (center.xy() - c.base.xy()).norm() <= c.radius;
                        let in_height =
                            center.z >= c.base.z && center.z <= c.base.z + c.height;
                        if in_radius && in_height {
                            grid.set_label(x as usize, y as usize, z as usize, CLASS_CYLINDER);
                        }
                    }
                }
            }
        }
        grid
    }
}

/// One ray of a rendered scan: sensor-frame direction plus hit range
/// (`None` when nothing was hit within the sensor range).
#[derive(Debug, Clone, Copy)]
pub struct RayMeasurement {
    pub direction: Vector3<f64>,
    pub range: Option<f64>,
}

/// Slab-test ray/box intersection; returns the entry distance (0 when the
/// origin is inside).
fn ray_aabb(origin: &Point3<f64>, dir: &Vector3<f64>, aabb: &Aabb) -> Option<f64> {
    let mut t_min = 0.0f64;
    let mut t_max = f64::INFINITY;
    for axis in 0..3 {
        if dir[axis].abs() < 1e-12 {
            if origin[axis] < aabb.min[axis] || origin[axis] > aabb.max[axis] {
                return None;
            }
        } else {
            let inv = 1.0 / dir[axis];
            let mut t1 = (aabb.min[axis] - origin[axis]) * inv;
            let mut t2 = (aabb.max[axis] - origin[axis]) * inv;
            if t1 > t2 {
                std::mem::swap(&mut t1, &mut t2);
            }
            t_min = t_min.max(t1);
            t_max = t_max.min(t2);
            if t_min > t_max {
                return None;
            }
        }
    }
    Some(t_min)
}

/// Ray against an upright finite cylinder: side surface plus end caps.
fn ray_cylinder(origin: &Point3<f64>, dir: &Vector3<f64>, cyl: &MovingCylinder) -> Option<f64> {
    let z0 = cyl.base.z;
    let z1 = cyl.base.z + cyl.height;
    let mut best: Option<f64> = None;
    let mut consider = |t: f64| {
        if t >= 0.0 && best.map_or(true, |b| t < b) {
            best = Some(t);
        }
    };

    // Side surface: project onto the horizontal plane.
    let od = origin.xy() - cyl.base.xy();
    let dd = Vector3::new(dir.x, dir.y, 0.0).xy();
    let a = dd.norm_squared();
    if a > 1e-12 {
        let b = 2.0 * od.dot(&dd);
        let c = od.norm_squared() - cyl.radius * cyl.radius;
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            for t in [(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)] {
                let z = origin.z + t * dir.z;
                if z >= z0 && z <= z1 {
                    consider(t);
                }
            }
        }
    }

    // End caps.
    if dir.z.abs() > 1e-12 {
        for plane_z in [z0, z1] {
            let t = (plane_z - origin.z) / dir.z;
            let hit = origin.xy() + dd * t;
            if (hit - cyl.base.xy()).norm() <= cyl.radius {
                consider(t);
            }
        }
    }
    best
}
