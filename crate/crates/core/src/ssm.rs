//! Linear state-space kernels: zero-order-hold discretization, the sequential
//! scan recurrence, and the equivalent global convolution form.
//!
//! A continuous system `h'(t) = A h(t) + B x(t), y(t) = C h(t)` is discretized
//! with a step `delta` into `h_t = a_bar h_{t-1} + b_bar x_t, y_t = C h_t`.
//! For a fixed step the recurrence collapses into a causal convolution with
//! kernel taps `(C b_bar, C a_bar b_bar, C a_bar^2 b_bar, ...)`.

use nalgebra::{DMatrix, DVector, RowDVector};

use crate::error::{Error, Result};

/// Continuous-time single-input single-output state-space system.
#[derive(Debug, Clone)]
pub struct ContinuousSsm {
    /// N x N state matrix.
    pub a_matrix: DMatrix<f64>,
    /// N x 1 input matrix.
    pub b_matrix: DVector<f64>,
    /// 1 x N output matrix.
    pub c_matrix: RowDVector<f64>,
}

impl ContinuousSsm {
    /// Builds a system and checks shape consistency and finiteness.
    pub fn new(
        a_matrix: DMatrix<f64>,
        b_matrix: DVector<f64>,
        c_matrix: RowDVector<f64>,
    ) -> Result<Self> {
        let n = a_matrix.nrows();
        if n == 0 || a_matrix.ncols() != n {
            return Err(Error::InvalidParameter(format!(
                "state matrix must be square and non-empty, got {}x{}",
                a_matrix.nrows(),
                a_matrix.ncols()
            )));
        }
        if b_matrix.len() != n || c_matrix.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows and C has {} columns for state dim {}",
                b_matrix.len(),
                c_matrix.len(),
                n
            )));
        }
        if a_matrix.iter().any(|v| !v.is_finite())
            || b_matrix.iter().any(|v| !v.is_finite())
            || c_matrix.iter().any(|v| !v.is_finite())
        {
            return Err(Error::InvalidParameter(
                "state-space matrices must be finite".into(),
            ));
        }
        Ok(Self {
            a_matrix,
            b_matrix,
            c_matrix,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.a_matrix.nrows()
    }

    /// Zero-order-hold discretization with step `delta`.
    ///
    /// `a_bar = exp(delta A)` and `b_bar = phi1(delta A) * delta B`, where
    /// `phi1(M) = M^{-1}(exp(M) - I)` is evaluated through its power series so
    /// the result stays well-defined for singular `A` (at `A = 0` it reduces
    /// to `b_bar = delta B`).
    pub fn discretize(&self, delta: f64) -> Result<DiscreteSsm> {
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive and finite, got {delta}"
            )));
        }
        let m = &self.a_matrix * delta;
        let (a_bar, phi1) = expm_phi1(&m);
        let b_bar = phi1 * (&self.b_matrix * delta);
        Ok(DiscreteSsm {
            a_bar,
            b_bar,
            c_matrix: self.c_matrix.clone(),
            delta,
        })
    }

    /// Selective scan: the recurrence with a per-step time scale.
    ///
    /// Each step discretizes the continuous parameters with its own `delta`,
    /// then applies one recurrence update. There is no convolution form for
    /// this mode; the kernel requires a fixed step.
    pub fn scan_selective(
        &self,
        input: &[f64],
        deltas: &[f64],
        h0: &DVector<f64>,
    ) -> Result<Vec<f64>> {
        if deltas.len() != input.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} per-step deltas for {} inputs",
                deltas.len(),
                input.len()
            )));
        }
        if h0.len() != self.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "h0 has {} entries for state dim {}",
                h0.len(),
                self.state_dim()
            )));
        }
        let mut h = h0.clone();
        let mut output = Vec::with_capacity(input.len());
        for (&x, &delta) in input.iter().zip(deltas) {
            let sys = self.discretize(delta)?;
            h = &sys.a_bar * h + &sys.b_bar * x;
            output.push((&self.c_matrix * &h)[0]);
        }
        Ok(output)
    }
}

/// Discrete-time system ready for scanning or kernel construction.
#[derive(Debug, Clone)]
pub struct DiscreteSsm {
    pub a_bar: DMatrix<f64>,
    pub b_bar: DVector<f64>,
    pub c_matrix: RowDVector<f64>,
    pub delta: f64,
}

impl DiscreteSsm {
    pub fn state_dim(&self) -> usize {
        self.a_bar.nrows()
    }

    /// Sequential recurrence: `h_t = a_bar h_{t-1} + b_bar x_t`, `y_t = C h_t`.
    pub fn scan(&self, input: &[f64], h0: &DVector<f64>) -> Result<Vec<f64>> {
        if input.is_empty() {
            return Err(Error::InvalidParameter("input must be non-empty".into()));
        }
        if h0.len() != self.state_dim() {
            return Err(Error::DimensionMismatch(format!(
                "h0 has {} entries for state dim {}",
                h0.len(),
                self.state_dim()
            )));
        }
        let mut h = h0.clone();
        let mut output = Vec::with_capacity(input.len());
        for &x in input {
            h = &self.a_bar * h + &self.b_bar * x;
            output.push((&self.c_matrix * &h)[0]);
        }
        Ok(output)
    }

    /// Materializes the global convolution kernel of length `length`:
    /// `taps[k] = C a_bar^k b_bar`.
    pub fn conv_kernel(&self, length: usize) -> Result<ConvKernel> {
        if length == 0 {
            return Err(Error::InvalidParameter(
                "kernel length must be at least 1".into(),
            ));
        }
        let mut taps = Vec::with_capacity(length);
        let mut w = self.b_bar.clone();
        for k in 0..length {
            taps.push((&self.c_matrix * &w)[0]);
            if k + 1 < length {
                w = &self.a_bar * w;
            }
        }
        Ok(ConvKernel { taps })
    }
}

/// Impulse-response taps of a time-invariant discrete system.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvKernel {
    pub taps: Vec<f64>,
}

impl ConvKernel {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Causal convolution `y_t = sum_{k <= t} taps[k] x[t-k]`.
    ///
    /// The kernel must have the same length as the input so every output
    /// sample sees the full history.
    pub fn apply(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.taps.len() {
            return Err(Error::DimensionMismatch(format!(
                "kernel length {} vs input length {}",
                self.taps.len(),
                input.len()
            )));
        }
        let mut output = vec![0.0; input.len()];
        for (t, out) in output.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in 0..=t {
                acc += self.taps[k] * input[t - k];
            }
            *out = acc;
        }
        Ok(output)
    }
}

/// Jointly computes `exp(M)` and `phi1(M) = sum_k M^k / (k+1)!` by
/// scaling-and-squaring over a truncated Taylor expansion.
///
/// The squaring step uses `exp(2M) = exp(M)^2` together with
/// `phi1(2M) = (exp(M) + I) phi1(M) / 2`, so no inverse of `M` is ever
/// formed and singular inputs are handled exactly.
fn expm_phi1(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let norm = one_norm(m);
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);

    let identity = DMatrix::<f64>::identity(n, n);
    let mut exp = identity.clone();
    let mut phi = identity.clone();
    let mut term = identity.clone();
    // With the scaled norm <= 0.25, twenty terms push the truncation error
    // far below double-precision round-off.
    for k in 1..=20 {
        term = (&term * &scaled) / k as f64;
        exp += &term;
        phi += &term / (k + 1) as f64;
        if one_norm(&term) < 1e-300 {
            break;
        }
    }
    for _ in 0..squarings {
        phi = (&exp + &identity) * phi / 2.0;
        exp = &exp * &exp;
    }
    (exp, phi)
}

fn one_norm(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalar_system(a: f64, b: f64, c: f64) -> ContinuousSsm {
        ContinuousSsm::new(
            DMatrix::from_element(1, 1, a),
            DVector::from_element(1, b),
            RowDVector::from_element(1, c),
        )
        .unwrap()
    }

    /// Random system with all eigenvalue real parts strictly negative: shift a
    /// random matrix left by more than its 1-norm.
    pub(crate) fn random_stable_system(rng: &mut ChaCha8Rng, n: usize) -> ContinuousSsm {
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let shift = one_norm(&raw) + 0.2;
        let a = raw - DMatrix::identity(n, n) * shift;
        let b = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let c = RowDVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        ContinuousSsm::new(a, b, c).unwrap()
    }

    /// Series-expansion oracle for the matrix exponential: plain Taylor sum,
    /// valid for the small-norm matrices used in these tests.
    fn expm_series_oracle(m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = m.nrows();
        let mut sum = DMatrix::<f64>::identity(n, n);
        let mut term = DMatrix::<f64>::identity(n, n);
        for k in 1..60 {
            term = (&term * m) / k as f64;
            sum += &term;
        }
        sum
    }

    #[test]
    fn discretize_zero_a_gives_limit_form() {
        let sys = scalar_system(0.0, 1.0, 1.0);
        let d = sys.discretize(0.1).unwrap();
        assert!((d.a_bar[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((d.b_bar[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn discretize_scalar_matches_exponential() {
        let sys = scalar_system(-1.0, 1.0, 1.0);
        let d = sys.discretize(0.1).unwrap();
        assert!((d.a_bar[(0, 0)] - (-0.1f64).exp()).abs() < 1e-14);
        // phi1(-0.1) * 0.1 = (exp(-0.1) - 1) / -1
        let expected_b = ((-0.1f64).exp() - 1.0) / -1.0;
        assert!((d.b_bar[0] - expected_b).abs() < 1e-14);
    }

    #[test]
    fn discretize_identity_a_matches_diagonal_oracle() {
        let sys = ContinuousSsm::new(
            DMatrix::identity(2, 2),
            DVector::from_vec(vec![1.0, 1.0]),
            RowDVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let d = sys.discretize(0.5).unwrap();
        let e = 0.5f64.exp();
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { e } else { 0.0 };
                assert!((d.a_bar[(i, j)] - expected).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn discretize_matches_series_oracle_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(1..=6);
            let sys = random_stable_system(&mut rng, n);
            let delta = rng.gen_range(0.01..0.3);
            let d = sys.discretize(delta).unwrap();
            let oracle = expm_series_oracle(&(&sys.a_matrix * delta));
            let err = one_norm(&(&d.a_bar - &oracle));
            assert!(err < 1e-11, "expm error {err}");
        }
    }

    #[test]
    fn discretize_handles_singular_nilpotent_a() {
        // A^2 = 0, so exp(dA) = I + dA and phi1(dA) = I + dA/2 exactly.
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let sys = ContinuousSsm::new(
            a,
            DVector::from_vec(vec![0.0, 1.0]),
            RowDVector::from_vec(vec![1.0, 0.0]),
        )
        .unwrap();
        let d = sys.discretize(2.0).unwrap();
        assert!((d.a_bar[(0, 1)] - 2.0).abs() < 1e-13);
        // b_bar = (I + dA/2) dB = (2*1, 0)*... rows: [0 + 1*2, 2] -> [2, 2]
        assert!((d.b_bar[0] - 2.0).abs() < 1e-13);
        assert!((d.b_bar[1] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn discretize_rejects_bad_delta() {
        let sys = scalar_system(-1.0, 1.0, 1.0);
        assert!(sys.discretize(0.0).is_err());
        assert!(sys.discretize(-0.5).is_err());
        assert!(sys.discretize(f64::NAN).is_err());
    }

    #[test]
    fn new_rejects_non_finite_entries() {
        let r = ContinuousSsm::new(
            DMatrix::from_element(1, 1, f64::INFINITY),
            DVector::from_element(1, 1.0),
            RowDVector::from_element(1, 1.0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn scan_zero_input_is_zero() {
        let sys = scalar_system(-0.5, 1.0, 1.0).discretize(0.1).unwrap();
        let y = sys.scan(&[0.0; 8], &DVector::zeros(1)).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scan_single_step_is_c_b_bar() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_stable_system(&mut rng, 4).discretize(0.2).unwrap();
        let y = sys.scan(&[1.0], &DVector::zeros(4)).unwrap();
        let expected = (&sys.c_matrix * &sys.b_bar)[0];
        assert!((y[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn scan_impulse_response_equals_kernel_taps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sys = random_stable_system(&mut rng, 3).discretize(0.15).unwrap();
        let len = 16;
        let mut impulse = vec![0.0; len];
        impulse[0] = 1.0;
        // Brute-force recurrence unrolling as the oracle.
        let mut h = DVector::<f64>::zeros(3);
        let mut expected = Vec::new();
        for &x in &impulse {
            h = &sys.a_bar * h + &sys.b_bar * x;
            expected.push((&sys.c_matrix * &h)[0]);
        }
        let taps = sys.conv_kernel(len).unwrap().taps;
        for (t, e) in taps.iter().zip(&expected) {
            assert!((t - e).abs() < 1e-12);
        }
        let scan = sys.scan(&impulse, &DVector::zeros(3)).unwrap();
        for (s, e) in scan.iter().zip(&expected) {
            assert!((s - e).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_first_tap_and_geometric_powers() {
        let d = DiscreteSsm {
            a_bar: DMatrix::from_element(1, 1, 0.5),
            b_bar: DVector::from_element(1, 1.0),
            c_matrix: RowDVector::from_element(1, 1.0),
            delta: 1.0,
        };
        let k = d.conv_kernel(3).unwrap();
        assert_eq!(k.taps, vec![1.0, 0.5, 0.25]);
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        let mut taps = vec![0.0; 6];
        taps[0] = 1.0;
        let kernel = ConvKernel { taps };
        let x = vec![3.0, -1.0, 2.0, 0.5, 4.0, -2.0];
        assert_eq!(kernel.apply(&x).unwrap(), x);
    }

    #[test]
    fn conv_zero_input_gives_zero_output() {
        let kernel = ConvKernel {
            taps: vec![1.0, 0.3, 0.1],
        };
        let y = kernel.apply(&[0.0; 3]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_rejects_length_mismatch() {
        let kernel = ConvKernel {
            taps: vec![1.0, 0.5],
        };
        assert!(kernel.apply(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn scan_equals_convolution_for_time_invariant_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..25 {
            let n = rng.gen_range(1..=8);
            let len = rng.gen_range(1..=128);
            let sys = random_stable_system(&mut rng, n)
                .discretize(rng.gen_range(0.01..0.5))
                .unwrap();
            let input: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let scan = sys.scan(&input, &DVector::zeros(n)).unwrap();
            let conv = sys.conv_kernel(len).unwrap().apply(&input).unwrap();
            for (s, c) in scan.iter().zip(&conv) {
                assert!((s - c).abs() < 1e-9, "duality violated: {s} vs {c}");
            }
        }
    }

    #[test]
    fn scan_is_linear_in_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_stable_system(&mut rng, 4).discretize(0.1).unwrap();
        let len = 32;
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (alpha, beta) = (0.7, -1.3);
        let mixed: Vec<f64> = x.iter().zip(&z).map(|(a, b)| alpha * a + beta * b).collect();
        let h0 = DVector::zeros(4);
        let y_mixed = sys.scan(&mixed, &h0).unwrap();
        let y_x = sys.scan(&x, &h0).unwrap();
        let y_z = sys.scan(&z, &h0).unwrap();
        for i in 0..len {
            let expected = alpha * y_x[i] + beta * y_z[i];
            assert!((y_mixed[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn discretization_error_decays_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let sys = random_stable_system(&mut rng, 5);
        let deltas = [1e-2, 1e-3, 1e-4];
        let errors: Vec<f64> = deltas
            .iter()
            .map(|&d| {
                let disc = sys.discretize(d).unwrap();
                let approx = (&disc.a_bar - DMatrix::identity(5, 5)) / d;
                one_norm(&(approx - &sys.a_matrix))
            })
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log10();
            assert!(order >= 0.9, "observed order {order} below first order");
        }
    }

    #[test]
    fn selective_scan_matches_fixed_scan_for_constant_deltas() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let sys = random_stable_system(&mut rng, 3);
        let input: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h0 = DVector::zeros(3);
        let fixed = sys.discretize(0.2).unwrap().scan(&input, &h0).unwrap();
        let selective = sys
            .scan_selective(&input, &vec![0.2; input.len()], &h0)
            .unwrap();
        for (f, s) in fixed.iter().zip(&selective) {
            assert!((f - s).abs() < 1e-13);
        }
    }

    #[test]
    fn selective_scan_rejects_delta_length_mismatch() {
        let sys = scalar_system(-1.0, 1.0, 1.0);
        let r = sys.scan_selective(&[1.0, 2.0], &[0.1], &DVector::zeros(1));
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }
}
