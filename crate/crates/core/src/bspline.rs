//! Uniform B-spline trajectories with matrix evaluation.
//!
//! A trajectory of degree `p` with control points `Q_0 .. Q_{N-1}` and knot
//! spacing `dt` is evaluated on the span `[t_i, t_{i+1})` as
//! `[1, u, ..., u^p] * M_{p+1} * [Q_{i-p} .. Q_i]^T` with `u = (t - t_i)/dt`,
//! where `M_{p+1}` is the constant uniform basis matrix. The valid parameter
//! range is `[t_p, t_N)` with knots `t_m = t0 + m*dt`.
//!
//! Derivatives are again B-splines: the velocity curve has control points
//! `V_i = (Q_{i+1} - Q_i)/dt` and degree `p-1`, with its knot origin shifted
//! by `dt` so that `derivative(s).evaluate(t)` equals `d/dt s(t)` at the same
//! clock time.

use nalgebra::{DMatrix, DVector, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether a trajectory lives on the ground plane (z = 0) or in free space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryMode {
    Ground,
    Aerial,
}

/// Uniform B-spline basis matrix `M_{p+1}` for degrees 0 through 3.
///
/// Rows are indexed by the power of `u`, columns by the local control point.
/// Each matrix satisfies partition of unity: the weight vector
/// `[1, u, ..., u^p] * M` sums to 1 for every `u`.
#[derive(Debug, Clone)]
pub struct BasisMatrix {
    pub degree: usize,
    entries: Vec<f64>,
}

impl BasisMatrix {
    pub fn for_degree(degree: usize) -> Result<Self> {
        let entries: Vec<f64> = match degree {
            0 => vec![1.0],
            1 => vec![1.0, 0.0, -1.0, 1.0],
            2 => [1.0, 1.0, 0.0, -2.0, 2.0, 0.0, 1.0, -2.0, 1.0]
                .iter()
                .map(|v| v / 2.0)
                .collect(),
            3 => [
                1.0, 4.0, 1.0, 0.0, //
                -3.0, 0.0, 3.0, 0.0, //
                3.0, -6.0, 3.0, 0.0, //
                -1.0, 3.0, -3.0, 1.0,
            ]
            .iter()
            .map(|v| v / 6.0)
            .collect(),
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "basis matrices are defined for degrees 0..=3, got {degree}"
                )))
            }
        };
        Ok(Self { degree, entries })
    }

    /// Basis weights at local parameter `u`: one weight per span control point.
    pub fn weights(&self, u: f64) -> Vec<f64> {
        let n = self.degree + 1;
        let mut powers = vec![1.0; n];
        for k in 1..n {
            powers[k] = powers[k - 1] * u;
        }
        (0..n)
            .map(|j| (0..n).map(|k| powers[k] * self.entries[k * n + j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BSplineTrajectory {
    degree: usize,
    dt: f64,
    /// Knot origin: knots sit at `t0 + m*dt`. Zero for fitted trajectories;
    /// derivative curves shift it so evaluation times line up with the source.
    t0: f64,
    mode: TrajectoryMode,
    control_points: Vec<Point3<f64>>,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryJson {
    degree: usize,
    dt: f64,
    mode: TrajectoryMode,
    control_points: Vec<[f64; 3]>,
}

impl BSplineTrajectory {
    pub fn new(
        degree: usize,
        dt: f64,
        mode: TrajectoryMode,
        control_points: Vec<Point3<f64>>,
    ) -> Result<Self> {
        Self::with_origin(degree, dt, 0.0, mode, control_points)
    }

    fn with_origin(
        degree: usize,
        dt: f64,
        t0: f64,
        mode: TrajectoryMode,
        control_points: Vec<Point3<f64>>,
    ) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "knot spacing must be positive, got {dt}"
            )));
        }
        if control_points.len() < degree + 1 {
            return Err(Error::InvalidParameter(format!(
                "degree {} needs at least {} control points, got {}",
                degree,
                degree + 1,
                control_points.len()
            )));
        }
        if control_points
            .iter()
            .any(|p| !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()))
        {
            return Err(Error::InvalidParameter(
                "control points must be finite".into(),
            ));
        }
        if mode == TrajectoryMode::Ground && control_points.iter().any(|p| p.z.abs() > 1e-9) {
            return Err(Error::InvalidParameter(
                "ground-mode control points must have no vertical component".into(),
            ));
        }
        BasisMatrix::for_degree(degree)?;
        Ok(Self {
            degree,
            dt,
            t0,
            mode,
            control_points,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn mode(&self) -> TrajectoryMode {
        self.mode
    }

    pub fn control_points(&self) -> &[Point3<f64>] {
        &self.control_points
    }

    pub fn control_points_mut(&mut self) -> &mut [Point3<f64>] {
        &mut self.control_points
    }

    /// Valid parameter range `[start, end)`.
    pub fn domain(&self) -> (f64, f64) {
        (
            self.t0 + self.degree as f64 * self.dt,
            self.t0 + self.control_points.len() as f64 * self.dt,
        )
    }

    pub fn duration(&self) -> f64 {
        let (start, end) = self.domain();
        end - start
    }

    fn span_weights(&self, t: f64) -> Result<(usize, Vec<f64>)> {
        let (start, end) = self.domain();
        if !t.is_finite() || t < start || t >= end {
            return Err(Error::OutOfDomain {
                t,
                min: start,
                max: end,
            });
        }
        let s = (t - self.t0) / self.dt;
        let i = (s.floor() as usize)
            .max(self.degree)
            .min(self.control_points.len() - 1);
        let u = s - i as f64;
        let basis = BasisMatrix::for_degree(self.degree)?;
        Ok((i, basis.weights(u)))
    }

    pub fn evaluate(&self, t: f64) -> Result<Point3<f64>> {
        let (i, weights) = self.span_weights(t)?;
        let mut acc = Vector3::zeros();
        for (j, w) in weights.iter().enumerate() {
            acc += self.control_points[i - self.degree + j].coords * *w;
        }
        Ok(Point3::from(acc))
    }

    /// Evaluates with `t` clamped into the valid range; the right endpoint
    /// returns the curve's terminal limit.
    pub fn evaluate_clamped(&self, t: f64) -> Point3<f64> {
        let (start, end) = self.domain();
        if t < start {
            self.evaluate(start).expect("start of domain is valid")
        } else if t >= end {
            self.terminal_point()
        } else {
            self.evaluate(t).expect("t clamped into domain")
        }
    }

    /// Limit of the curve at the right end of its domain (`u -> 1` on the
    /// final span).
    pub fn terminal_point(&self) -> Point3<f64> {
        let basis = BasisMatrix::for_degree(self.degree).expect("degree validated");
        let weights = basis.weights(1.0);
        let n = self.control_points.len();
        let mut acc = Vector3::zeros();
        for (j, w) in weights.iter().enumerate() {
            acc += self.control_points[n - 1 - self.degree + j].coords * *w;
        }
        Point3::from(acc)
    }

    /// Basis weights applied to the trailing `degree + 1` control points at
    /// the terminal limit. Used for analytic gradients of terminal costs.
    pub fn terminal_weights(&self) -> Vec<f64> {
        BasisMatrix::for_degree(self.degree)
            .expect("degree validated")
            .weights(1.0)
    }

    /// The order-`k` derivative curve, `k` in `{1, 2, 3}`.
    pub fn derivative(&self, order: usize) -> Result<BSplineTrajectory> {
        if order == 0 || order > 3 {
            return Err(Error::InvalidParameter(format!(
                "derivative order must be 1..=3, got {order}"
            )));
        }
        if order > self.degree {
            return Err(Error::InvalidParameter(format!(
                "derivative order {} exceeds degree {}",
                order, self.degree
            )));
        }
        let mut current = self.clone();
        for _ in 0..order {
            let diffs: Vec<Point3<f64>> = current
                .control_points
                .windows(2)
                .map(|w| Point3::from((w[1].coords - w[0].coords) / current.dt))
                .collect();
            current = BSplineTrajectory {
                degree: current.degree - 1,
                dt: current.dt,
                t0: current.t0 + current.dt,
                mode: current.mode,
                control_points: diffs,
            };
        }
        Ok(current)
    }

    /// Drops the vertical component of every control point and marks the
    /// trajectory as ground mode.
    pub fn flatten_to_ground(&self) -> BSplineTrajectory {
        let flattened = self
            .control_points
            .iter()
            .map(|p| Point3::new(p.x, p.y, 0.0))
            .collect();
        BSplineTrajectory {
            degree: self.degree,
            dt: self.dt,
            t0: self.t0,
            mode: TrajectoryMode::Ground,
            control_points: flattened,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TrajectoryJson {
            degree: self.degree,
            dt: self.dt,
            mode: self.mode,
            control_points: self
                .control_points
                .iter()
                .map(|p| [p.x, p.y, p.z])
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<BSplineTrajectory> {
        let doc: TrajectoryJson = serde_json::from_str(text)?;
        BSplineTrajectory::new(
            doc.degree,
            doc.dt,
            doc.mode,
            doc.control_points
                .iter()
                .map(|p| Point3::new(p[0], p[1], p[2]))
                .collect(),
        )
    }
}

/// Fits a cubic trajectory through the waypoints with knot spacing `dt`.
///
/// Waypoint `k` is pinned to the curve at knot `t = (3 + k) * dt`; among all
/// interpolants the solver picks the one with minimum control-point bending
/// energy (squared second differences), which keeps the seed smooth for the
/// optimizer. Returns the trajectory and the maximum interpolation residual.
pub fn fit_to_waypoints(waypoints: &[Point3<f64>], dt: f64) -> Result<(BSplineTrajectory, f64)> {
    if waypoints.is_empty() {
        return Err(Error::InvalidParameter(
            "cannot fit a trajectory through zero waypoints".into(),
        ));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "knot spacing must be positive, got {dt}"
        )));
    }
    let degree = 3usize;
    let mode = if waypoints.iter().all(|p| p.z.abs() < 1e-9) {
        TrajectoryMode::Ground
    } else {
        TrajectoryMode::Aerial
    };
    if waypoints.len() == 1 {
        let cp = if mode == TrajectoryMode::Ground {
            Point3::new(waypoints[0].x, waypoints[0].y, 0.0)
        } else {
            waypoints[0]
        };
        let traj = BSplineTrajectory::new(degree, dt, mode, vec![cp; degree + 1])?;
        return Ok((traj, 0.0));
    }

    let n = waypoints.len();
    let n_cp = n + 2;
    let basis = BasisMatrix::for_degree(degree)?;
    let start_weights = basis.weights(0.0);

    // Interpolation rows: waypoint k sits at knot 3 + k, i.e. at u = 0 of
    // span 3 + k, touching control points k .. k+3. The final waypoint is the
    // terminal limit (u = 1 on the last span), which touches the same window.
    let mut a = DMatrix::<f64>::zeros(n, n_cp);
    for k in 0..n {
        for (j, w) in start_weights.iter().enumerate() {
            // The trailing cubic weight at u = 0 is exactly zero, so the last
            // row never reaches past the final control point.
            if k + j < n_cp {
                a[(k, k + j)] = *w;
            } else {
                debug_assert_eq!(*w, 0.0);
            }
        }
    }

    // Bending energy: squared second differences of the control polygon.
    let m = n_cp - 2;
    let mut r = DMatrix::<f64>::zeros(m, n_cp);
    for i in 0..m {
        r[(i, i)] = 1.0;
        r[(i, i + 1)] = -2.0;
        r[(i, i + 2)] = 1.0;
    }

    // KKT system for: minimize |R q|^2 subject to A q = w.
    let dim = n_cp + n;
    let mut kkt = DMatrix::<f64>::zeros(dim, dim);
    let rtr = r.transpose() * &r;
    for i in 0..n_cp {
        for j in 0..n_cp {
            kkt[(i, j)] = 2.0 * rtr[(i, j)];
        }
    }
    for i in 0..n {
        for j in 0..n_cp {
            kkt[(n_cp + i, j)] = a[(i, j)];
            kkt[(j, n_cp + i)] = a[(i, j)];
        }
    }
    let lu = kkt.lu();

    let mut coords = vec![vec![0.0; n_cp]; 3];
    for axis in 0..3 {
        let mut rhs = DVector::<f64>::zeros(dim);
        for k in 0..n {
            rhs[n_cp + k] = waypoints[k].coords[axis];
        }
        let sol = lu.solve(&rhs).ok_or_else(|| {
            Error::InvalidParameter("waypoint fit system is singular".into())
        })?;
        for i in 0..n_cp {
            coords[axis][i] = sol[i];
        }
    }

    let control_points: Vec<Point3<f64>> = (0..n_cp)
        .map(|i| {
            let z = if mode == TrajectoryMode::Ground {
                0.0
            } else {
                coords[2][i]
            };
            Point3::new(coords[0][i], coords[1][i], z)
        })
        .collect();
    let traj = BSplineTrajectory::new(degree, dt, mode, control_points)?;

    let mut residual: f64 = 0.0;
    for (k, wp) in waypoints.iter().enumerate() {
        let t = (degree as f64 + k as f64) * dt;
        let p = traj.evaluate_clamped(t);
        residual = residual.max((p - wp).norm());
    }
    Ok((traj, residual))
}
