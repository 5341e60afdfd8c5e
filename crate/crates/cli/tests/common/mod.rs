//! Independent oracles and statistics used by the acceptance checks.

#![allow(dead_code)]

use nalgebra::DMatrix;
use noma_core::messages::NumericalEvents;
use noma_core::sbl::{precision_estimate, shape_estimate, SblConfig};
use num_complex::Complex64;

pub const Z90: f64 = 1.644_853_626_951_472_2;
pub const Z95_ONE_SIDED: f64 = 1.644_853_626_951_472_2;

/// Two-sided Wilson score interval for `k` successes in `n` trials.
pub fn wilson(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The bounds are exact at the edges; rounding would leave dust there.
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k as f64 == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, var.sqrt())
}

/// One-sided z statistic for `mean(a) > mean(b)` on independent samples.
pub fn welch_z(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let se = (sa * sa / a.len() as f64 + sb * sb / b.len() as f64).sqrt();
    if se == 0.0 {
        return if ma > mb { f64::INFINITY } else { 0.0 };
    }
    (ma - mb) / se
}

/// One-sided z statistic for `mean(a - b) > 0` on paired samples.
pub fn paired_z(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (m, s) = mean_sd(&d);
    if s == 0.0 {
        return if m > 0.0 { f64::INFINITY } else { 0.0 };
    }
    m / (s / (d.len() as f64).sqrt())
}

/// SNR at which a decreasing BER curve crosses `target`, interpolating
/// `log10(BER)` linearly between grid points.
pub fn crossing(snr: &[f64], ber: &[f64], target: f64) -> Option<f64> {
    let lt = target.log10();
    for i in 1..snr.len() {
        let (a, b) = (ber[i - 1], ber[i]);
        if a >= target && b <= target {
            if b <= 0.0 {
                return Some(snr[i]);
            }
            let (la, lb) = (a.log10(), b.log10());
            if la == lb {
                return Some(snr[i - 1]);
            }
            return Some(snr[i - 1] + (snr[i] - snr[i - 1]) * (la - lt) / (la - lb));
        }
    }
    None
}

/// Activity detection with exact per-edge messages between every chip
/// constraint and every device variable (no first-order collapse).
pub struct PerEdgeSbl {
    pub p: DMatrix<Complex64>,
    pub y: Vec<DMatrix<Complex64>>,
    /// Indexed `[slot][(u, n)][l]`.
    fwd_m: Vec<Vec<Vec<Complex64>>>,
    fwd_v: Vec<Vec<Vec<f64>>>,
    bwd_m: Vec<Vec<Vec<Complex64>>>,
    bwd_v: Vec<Vec<Vec<f64>>>,
    pub mean: Vec<DMatrix<Complex64>>,
    pub var: Vec<DMatrix<f64>>,
    pub gamma: Vec<f64>,
    pub epsilon: f64,
    pub lambda: Vec<f64>,
    cfg: SblConfig,
}

impl PerEdgeSbl {
    pub fn new(y_prev: &DMatrix<Complex64>, y_curr: &DMatrix<Complex64>, p: &DMatrix<Complex64>, cfg: &SblConfig) -> Self {
        let (l, u) = p.shape();
        let n = y_curr.ncols();
        // Edge variances chosen so that the chip-side sums start at 1.
        let v0 = 1.0 / (0..u).map(|k| p[(0, k)].norm_sqr()).sum::<f64>();
        let edges = |fill| vec![vec![vec![fill; l]; u * n]; 2];
        Self {
            p: p.clone(),
            y: vec![y_prev.clone(), y_curr.clone()],
            fwd_m: vec![vec![vec![Complex64::new(0.0, 0.0); l]; u * n]; 2],
            fwd_v: edges(1.0),
            bwd_m: vec![vec![vec![Complex64::new(0.0, 0.0); l]; u * n]; 2],
            bwd_v: edges(v0),
            mean: vec![DMatrix::zeros(u, n); 2],
            var: vec![DMatrix::from_element(u, n, 1.0); 2],
            gamma: vec![cfg.gamma_init; u],
            epsilon: 0.0,
            lambda: vec![cfg.lambda_init; n],
            cfg: cfg.clone(),
        }
    }

    fn chip_sums(&self, s: usize, l: usize, n: usize) -> (Complex64, f64) {
        let mut m = Complex64::new(0.0, 0.0);
        let mut v = 0.0;
        for u in 0..self.p.ncols() {
            let e = u * self.lambda.len() + n;
            m += self.p[(l, u)] * self.bwd_m[s][e][l];
            v += self.p[(l, u)].norm_sqr() * self.bwd_v[s][e][l];
        }
        (m, v)
    }

    pub fn iterate(&mut self) {
        let (chips, devices) = self.p.shape();
        let antennas = self.lambda.len();
        for s in 0..2 {
            // Chip-to-device messages and device beliefs.
            for n in 0..antennas {
                let sums: Vec<(Complex64, f64)> = (0..chips).map(|l| self.chip_sums(s, l, n)).collect();
                for u in 0..devices {
                    let e = u * antennas + n;
                    let mut prec = 0.0;
                    let mut weighted = Complex64::new(0.0, 0.0);
                    for l in 0..chips {
                        let pl = self.p[(l, u)];
                        let (mz, vz) = sums[l];
                        let m = (self.y[s][(l, n)] - mz + pl * self.bwd_m[s][e][l]) / pl;
                        let v = (1.0 / self.lambda[n] + vz - pl.norm_sqr() * self.bwd_v[s][e][l]) / pl.norm_sqr();
                        self.fwd_m[s][e][l] = m;
                        self.fwd_v[s][e][l] = v;
                        prec += 1.0 / v;
                        weighted += m / v;
                    }
                    let fv = 1.0 / prec;
                    let fm = weighted * fv;
                    let g = self.gamma[u];
                    self.mean[s][(u, n)] = fm / (1.0 + g * fv);
                    self.var[s][(u, n)] = 1.0 / (prec + g);
                }
            }
            // Device-to-chip messages: belief divided by the incoming edge.
            for u in 0..devices {
                for n in 0..antennas {
                    let e = u * antennas + n;
                    let (m, v) = (self.mean[s][(u, n)], self.var[s][(u, n)]);
                    for l in 0..chips {
                        let bv = 1.0 / (1.0 / v - 1.0 / self.fwd_v[s][e][l]);
                        self.bwd_v[s][e][l] = bv;
                        self.bwd_m[s][e][l] = (m / v - self.fwd_m[s][e][l] / self.fwd_v[s][e][l]) * bv;
                    }
                }
            }
        }
        let mut ev = NumericalEvents::default();
        for u in 0..devices {
            let energy: f64 = (0..2)
                .map(|s| (0..antennas).map(|n| self.mean[s][(u, n)].norm_sqr() + self.var[s][(u, n)]).sum::<f64>())
                .sum();
            self.gamma[u] = precision_estimate(self.epsilon, 0.0, 2.0 * antennas as f64, energy, self.cfg.gamma_max, &mut ev);
        }
        self.epsilon = shape_estimate(&self.gamma);
        let mut energy = vec![0.0; antennas];
        for s in 0..2 {
            for n in 0..antennas {
                for l in 0..chips {
                    let (mz_prior, vz_prior) = self.chip_sums(s, l, n);
                    let vz = 1.0 / (self.lambda[n] + 1.0 / vz_prior);
                    let mz = (self.y[s][(l, n)] * self.lambda[n] + mz_prior / vz_prior) * vz;
                    energy[n] += (mz - self.y[s][(l, n)]).norm_sqr() + vz;
                }
            }
        }
        for n in 0..antennas {
            self.lambda[n] = (2.0 * chips as f64 / energy[n]).min(self.cfg.lambda_max);
        }
    }
}

/// `||a - b|| / ||b||` over all entries.
pub fn rel_dev_c(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    (a - b).norm() / b.norm()
}

pub fn rel_dev_r(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Exact symbol posterior for one device (`K = 1`) under the model
/// `y_t = p psi x + w`, `y_{t-1} = p x + w` with a flat prior on `x` per
/// antenna and known noise variance, by quadrature of `x` on a grid.
pub fn grid_posterior(
    p: &DMatrix<Complex64>,
    y_prev: &DMatrix<Complex64>,
    y_curr: &DMatrix<Complex64>,
    symbols: &[Complex64],
    noise_variance: f64,
    half_width_sd: f64,
    points: usize,
) -> Vec<f64> {
    let pc = p.column(0);
    let energy: f64 = pc.iter().map(|c| c.norm_sqr()).sum();
    // Conditional posterior of x given psi has variance sigma^2 / (2 |p|^2).
    let sd = (noise_variance / (2.0 * energy)).sqrt();
    let step = 2.0 * half_width_sd * sd / (points - 1) as f64;
    let mut logpost: Vec<f64> = symbols
        .iter()
        .map(|&q| {
            let mut total = 0.0;
            for n in 0..y_curr.ncols() {
                let yp = y_prev.column(n);
                let yc = y_curr.column(n);
                let centre = (pc.dotc(&yp) + q.conj() * pc.dotc(&yc)) / (2.0 * energy);
                let mut terms = Vec::with_capacity(points * points);
                for i in 0..points {
                    for j in 0..points {
                        let x = centre
                            + Complex64::new(-half_width_sd * sd + i as f64 * step, -half_width_sd * sd + j as f64 * step);
                        let mut r = 0.0;
                        for l in 0..pc.len() {
                            r += (yc[l] - pc[l] * q * x).norm_sqr() + (yp[l] - pc[l] * x).norm_sqr();
                        }
                        terms.push(-r / noise_variance);
                    }
                }
                let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                total += max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln() + (step * step).ln();
            }
            total
        })
        .collect();
    let max = logpost.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in logpost.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logpost.iter().map(|v| v / sum).collect()
}

pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
