//! Gaussian message kernels shared by the activity and data detectors.
//!
//! Both detectors run the same linear-mixing part of the factor graph
//! `z = P x`, `y = z + w`, with the per-edge messages collapsed into
//! per-variable quantities (first-order corrections only). The matrices
//! are `L x N` for chip-side quantities and `U x N` (or `K x N`) for
//! device-side ones; column `n` is antenna `n`.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Counters for numerical safeguards that fired during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NumericalEvents {
    /// A variance fell below the floor (or was not finite) and was clamped.
    pub variance_clamps: u64,
    /// A precision estimate hit its upper clamp or had a zero denominator.
    pub precision_clamps: u64,
    /// A categorical belief underflowed and was replaced by a uniform one.
    pub underflows: u64,
    /// Thresholding found no usable split.
    pub degenerate_splits: u64,
}

impl NumericalEvents {
    pub fn merge(&mut self, other: &NumericalEvents) {
        self.variance_clamps += other.variance_clamps;
        self.precision_clamps += other.precision_clamps;
        self.underflows += other.underflows;
        self.degenerate_splits += other.degenerate_splits;
    }
}

pub(crate) fn floor_variance(v: f64, floor: f64, events: &mut NumericalEvents) -> f64 {
    if v >= floor && v.is_finite() {
        v
    } else {
        events.variance_clamps += 1;
        if v.is_nan() || v < floor {
            floor
        } else {
            // +inf: keep it large but finite
            f64::MAX.sqrt()
        }
    }
}

/// Entrywise `|P_{l,u}|^2`.
pub fn abs2(p: &DMatrix<Complex64>) -> DMatrix<f64> {
    p.map(|c| c.norm_sqr())
}

/// Forward messages into the device variables:
///
/// ```text
/// fwd_var[u,n]  = ( sum_l |P_lu|^2 / (1/lambda_n + bwd_var[l,n]) )^-1
/// fwd_mean[u,n] = fwd_var[u,n] * sum_l conj(P_lu) (y[l,n] - bwd_mean[l,n])
///                                      / (1/lambda_n + bwd_var[l,n])
///                 + prior_mean[u,n]
/// ```
#[allow(clippy::too_many_arguments)]
pub fn forward(
    p: &DMatrix<Complex64>,
    p_abs2: &DMatrix<f64>,
    y: &DMatrix<Complex64>,
    bwd_mean: &DMatrix<Complex64>,
    bwd_var: &DMatrix<f64>,
    lambda: &[f64],
    prior_mean: &DMatrix<Complex64>,
    floor: f64,
    events: &mut NumericalEvents,
) -> (DMatrix<Complex64>, DMatrix<f64>) {
    let (chips, antennas) = y.shape();
    let w = DMatrix::from_fn(chips, antennas, |l, n| 1.0 / (1.0 / lambda[n] + bwd_var[(l, n)]));
    let r = DMatrix::from_fn(chips, antennas, |l, n| (y[(l, n)] - bwd_mean[(l, n)]) * w[(l, n)]);
    let precision = p_abs2.tr_mul(&w);
    let fwd_var = precision.map(|s| floor_variance(1.0 / s, floor, events));
    let corr = p.ad_mul(&r);
    let fwd_mean = DMatrix::from_fn(corr.nrows(), antennas, |u, n| {
        corr[(u, n)] * fwd_var[(u, n)] + prior_mean[(u, n)]
    });
    (fwd_mean, fwd_var)
}

/// Backward messages into the chip variables, with the Onsager-type
/// correction evaluated on the previous iteration's messages:
///
/// ```text
/// bwd_var[l,n]  = sum_u |P_lu|^2 var[u,n]
/// bwd_mean[l,n] = sum_u P_lu mean[u,n]
///                 - bwd_var[l,n] (y[l,n] - prev_mean[l,n]) / (1/lambda_n + prev_var[l,n])
/// ```
#[allow(clippy::too_many_arguments)]
pub fn backward(
    p: &DMatrix<Complex64>,
    p_abs2: &DMatrix<f64>,
    y: &DMatrix<Complex64>,
    mean: &DMatrix<Complex64>,
    var: &DMatrix<f64>,
    lambda: &[f64],
    prev_mean: &DMatrix<Complex64>,
    prev_var: &DMatrix<f64>,
    floor: f64,
    events: &mut NumericalEvents,
) -> (DMatrix<Complex64>, DMatrix<f64>) {
    let bwd_var = (p_abs2 * var).map(|v| floor_variance(v, floor, events));
    let pm = p * mean;
    let bwd_mean = DMatrix::from_fn(y.nrows(), y.ncols(), |l, n| {
        let corr = (y[(l, n)] - prev_mean[(l, n)]) / (1.0 / lambda[n] + prev_var[(l, n)]);
        pm[(l, n)] - corr * bwd_var[(l, n)]
    });
    (bwd_mean, bwd_var)
}

/// Belief of the noiseless chip variables:
/// `v = (lambda + 1/bwd_var)^-1`, `m = v (y lambda + bwd_mean / bwd_var)`.
pub fn z_belief(
    y: &DMatrix<Complex64>,
    bwd_mean: &DMatrix<Complex64>,
    bwd_var: &DMatrix<f64>,
    lambda: &[f64],
    floor: f64,
    events: &mut NumericalEvents,
) -> (DMatrix<Complex64>, DMatrix<f64>) {
    let (chips, antennas) = y.shape();
    let z_var = DMatrix::from_fn(chips, antennas, |l, n| {
        floor_variance(1.0 / (lambda[n] + 1.0 / bwd_var[(l, n)]), floor, events)
    });
    let z_mean = DMatrix::from_fn(chips, antennas, |l, n| {
        (y[(l, n)] * lambda[n] + bwd_mean[(l, n)] / bwd_var[(l, n)]) * z_var[(l, n)]
    });
    (z_mean, z_var)
}

/// Per-antenna `sum_l |m_z - y|^2 + v_z`.
pub fn residual_energy(
    y: &DMatrix<Complex64>,
    z_mean: &DMatrix<Complex64>,
    z_var: &DMatrix<f64>,
) -> Vec<f64> {
    (0..y.ncols())
        .map(|n| {
            (0..y.nrows())
                .map(|l| (z_mean[(l, n)] - y[(l, n)]).norm_sqr() + z_var[(l, n)])
                .sum()
        })
        .collect()
}

/// `lambda_n = count / energy_n`, clamped to `(0, lambda_max]`.
pub fn noise_precision(
    count: f64,
    energy: &[f64],
    lambda_max: f64,
    events: &mut NumericalEvents,
) -> Vec<f64> {
    energy
        .iter()
        .map(|&e| {
            let lam = count / e;
            if e > 0.0 && lam.is_finite() && lam <= lambda_max {
                lam
            } else {
                events.precision_clamps += 1;
                lambda_max
            }
        })
        .collect()
}
