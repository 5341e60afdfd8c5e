//! Comparison detectors: the two-step LMMSE scheme and the
//! oracle support.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::ActivityPattern;
use crate::error::{param, Error, Result};
use crate::noncoherent::DeviceDecision;
use crate::sbl::SupportEstimate;
use crate::waveform::DpskAlphabet;

/// Where the LMMSE regularization comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Regularization {
    /// The true noise variance (simulation only).
    #[default]
    KnownNoise,
    /// `1 / lambda_n` from the activity detector.
    SblLambda,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    pub regularization: Regularization,
    /// Prior variance of the effective symbols `x_bar`.
    pub prior_variance: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            regularization: Regularization::KnownNoise,
            prior_variance: 1.0,
        }
    }
}

/// `X_hat = (P_bar^H P_bar + (sigma_n^2 / sigma_h^2) I)^-1 P_bar^H Y`, one
/// column per antenna. `noise_variance` holds one entry per antenna or a
/// single shared entry. A zero variance falls back to the pseudo-inverse.
pub fn lmmse_xbar(
    y: &DMatrix<Complex64>,
    p_bar: &DMatrix<Complex64>,
    noise_variance: &[f64],
    prior_variance: f64,
) -> Result<DMatrix<Complex64>> {
    let (chips, antennas) = y.shape();
    if p_bar.nrows() != chips {
        return Err(Error::Dimension(format!(
            "reduced spreading matrix has {} chips, observations {chips}",
            p_bar.nrows()
        )));
    }
    if noise_variance.len() != 1 && noise_variance.len() != antennas {
        return Err(Error::Dimension(format!(
            "{} noise variances for {antennas} antennas",
            noise_variance.len()
        )));
    }
    if !(prior_variance > 0.0) || noise_variance.iter().any(|&s| !(s >= 0.0)) {
        return param("LMMSE variances must be nonnegative with a positive prior");
    }
    let k = p_bar.ncols();
    let gram = p_bar.ad_mul(p_bar);
    let mf = p_bar.ad_mul(y);
    let mut out = DMatrix::zeros(k, antennas);
    // Antennas sharing a regularization share one factorization.
    let mut cached: Option<(f64, DMatrix<Complex64>)> = None;
    for n in 0..antennas {
        let s2 = noise_variance[if noise_variance.len() == 1 { 0 } else { n }];
        let reg = s2 / prior_variance;
        let inverse = match &cached {
            Some((r, inv)) if *r == reg => inv,
            _ => {
                let inv = regularized_inverse(&gram, p_bar, reg)?;
                &cached.insert((reg, inv)).1
            }
        };
        out.set_column(n, &(inverse * mf.column(n)));
    }
    Ok(out)
}

/// `(G + reg I)^-1`, or `pinv(G)` when `reg == 0` (or `G + reg I` is not
/// numerically positive definite).
fn regularized_inverse(gram: &DMatrix<Complex64>, p_bar: &DMatrix<Complex64>, reg: f64) -> Result<DMatrix<Complex64>> {
    let k = gram.nrows();
    if reg > 0.0 {
        let g = gram + DMatrix::from_diagonal_element(k, k, Complex64::new(reg, 0.0));
        if let Some(ch) = g.cholesky() {
            return Ok(ch.inverse());
        }
    }
    let pinv = p_bar
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::Parameter(format!("pseudo-inverse failed: {e}")))?;
    // pinv(P) = pinv(G) P^H, so pinv(G) = pinv(P) pinv(P)^H.
    Ok(&pinv * pinv.adjoint())
}

/// Two-step conventional detector: LMMSE estimates of both slots, the
/// per-antenna ratios `x_t / x_{t-1}` averaged over antennas, then snapped
/// to the nearest point. Antennas with a zero denominator are skipped;
/// if none is left the decision is the first point with `fallback` set.
pub fn conventional_detect(
    y_prev: &DMatrix<Complex64>,
    y_curr: &DMatrix<Complex64>,
    p_bar: &DMatrix<Complex64>,
    alphabet: &DpskAlphabet,
    noise_variance: &[f64],
    config: &BaselineConfig,
) -> Result<Vec<DeviceDecision>> {
    if p_bar.ncols() == 0 {
        return Ok(Vec::new());
    }
    let prev = lmmse_xbar(y_prev, p_bar, noise_variance, config.prior_variance)?;
    let curr = lmmse_xbar(y_curr, p_bar, noise_variance, config.prior_variance)?;
    Ok((0..p_bar.ncols())
        .map(|k| {
            let mut sum = Complex64::new(0.0, 0.0);
            let mut used = 0usize;
            for n in 0..prev.ncols() {
                let d = prev[(k, n)];
                if d.norm_sqr() > 0.0 {
                    sum += curr[(k, n)] / d;
                    used += 1;
                }
            }
            let (index, fallback) = if used == 0 {
                (0, true)
            } else {
                (alphabet.nearest(sum / used as f64), false)
            };
            DeviceDecision {
                column: k,
                posterior: Vec::new(),
                index,
                symbol: alphabet.point(index),
                bits: alphabet.label_bits(index),
                fallback,
            }
        })
        .collect())
}

/// The true active set, as if the detector knew it.
pub fn oracle_support(truth: &ActivityPattern) -> SupportEstimate {
    SupportEstimate {
        active: truth.active().to_vec(),
        scores: Vec::new(),
        threshold: None,
        degenerate: false,
    }
}
