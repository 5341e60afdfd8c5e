//! Non-coherent multi-device data detection with the differential
//! constraint built into the factor graph.
//!
//! After activity detection the model reduces to
//! `Y^(tau) = P_bar X_bar^(tau) + W^(tau)` over the `K` detected devices. The two slots are tied by
//! `x_bar^(t)_{k,n} = psi_k x_bar^(t-1)_{k,n}` with a uniform prior on the
//! DPSK symbol `psi_k`. The symbol beliefs combine the per-antenna
//! evidence
//!
//! ```text
//! f_{k,n}(q) = CN( fwd_mean_t ; q * fwd_mean_{t-1}, fwd_var_t + |q|^2 fwd_var_{t-1} )
//! ```
//!
//! and the slot beliefs of `x_bar` are Gaussian mixtures over `q`, projected
//! back to a single Gaussian by moment matching before the next linear
//! mixing pass. Categorical quantities are handled in the log domain.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::diagnostics::IterationRecord;
use crate::error::{Error, Result};
use crate::messages::{self, floor_variance, NumericalEvents};
use crate::waveform::DpskAlphabet;

/// How the projected variance is formed from the mixture moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarianceMode {
    /// `sum_q rho_q (|m_q|^2 + v_q) - |m|^2`.
    #[default]
    Central,
    /// `sum_q rho_q (|m_q|^2 + v_q)` without removing the squared mean.
    Raw,
}

/// Which residuals feed the noise-precision update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LambdaMode {
    /// `2L` residuals per antenna from both slots.
    #[default]
    Pair,
    /// `L` residuals per antenna from slot `t` only.
    CurrentOnly,
    /// Never updated; stays at the initial value (known noise).
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub max_iterations: usize,
    /// Stop once the largest change of any symbol belief drops below this.
    pub tolerance: f64,
    pub lambda_max: f64,
    pub variance_floor: f64,
    pub lambda_init: f64,
    /// Start from these noise precisions instead of `lambda_init`.
    pub initial_lambda: Option<Vec<f64>>,
    pub variance_mode: VarianceMode,
    pub lambda_mode: LambdaMode,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            max_iterations: 10,
            tolerance: 1e-6,
            lambda_max: 1e12,
            variance_floor: 1e-12,
            lambda_init: 10.0,
            initial_lambda: None,
            variance_mode: VarianceMode::Central,
            lambda_mode: LambdaMode::Pair,
        }
    }
}

/// Dense `K x N x Q` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube<T> {
    data: Vec<T>,
    antennas: usize,
    symbols: usize,
}

impl<T: Clone> Cube<T> {
    pub fn new(devices: usize, antennas: usize, symbols: usize, fill: T) -> Self {
        Self {
            data: vec![fill; devices * antennas * symbols],
            antennas,
            symbols,
        }
    }

    fn offset(&self, k: usize, n: usize) -> usize {
        (k * self.antennas + n) * self.symbols
    }

    /// The `Q` entries at `(k, n)`.
    pub fn at(&self, k: usize, n: usize) -> &[T] {
        let o = self.offset(k, n);
        &self.data[o..o + self.symbols]
    }

    pub fn at_mut(&mut self, k: usize, n: usize) -> &mut [T] {
        let o = self.offset(k, n);
        &mut self.data[o..o + self.symbols]
    }
}

/// Messages of one slot of the reduced model; index 0 is `t-1`, 1 is `t`.
#[derive(Debug, Clone)]
pub struct DataSlot {
    pub y: DMatrix<Complex64>,
    pub fwd_mean: DMatrix<Complex64>,
    pub fwd_var: DMatrix<f64>,
    /// Moment-matched belief of `x_bar`, `K x N`.
    pub mean: DMatrix<Complex64>,
    pub var: DMatrix<f64>,
    pub bwd_mean: DMatrix<Complex64>,
    pub bwd_var: DMatrix<f64>,
    pub bwd_mean_prev: DMatrix<Complex64>,
    pub bwd_var_prev: DMatrix<f64>,
    pub z_mean: DMatrix<Complex64>,
    pub z_var: DMatrix<f64>,
    /// Per-symbol component means and variances of the mixture belief.
    pub comp_mean: Cube<Complex64>,
    pub comp_var: Cube<f64>,
}

impl DataSlot {
    fn new(y: DMatrix<Complex64>, devices: usize, symbols: usize) -> Self {
        let (chips, antennas) = y.shape();
        Self {
            fwd_mean: DMatrix::zeros(devices, antennas),
            fwd_var: DMatrix::from_element(devices, antennas, 1.0),
            mean: DMatrix::zeros(devices, antennas),
            var: DMatrix::from_element(devices, antennas, 1.0),
            bwd_mean: DMatrix::zeros(chips, antennas),
            bwd_var: DMatrix::from_element(chips, antennas, 1.0),
            bwd_mean_prev: DMatrix::zeros(chips, antennas),
            bwd_var_prev: DMatrix::from_element(chips, antennas, 1.0),
            z_mean: DMatrix::zeros(chips, antennas),
            z_var: DMatrix::from_element(chips, antennas, 1.0),
            comp_mean: Cube::new(devices, antennas, symbols, Complex64::new(0.0, 0.0)),
            comp_var: Cube::new(devices, antennas, symbols, 1.0),
            y,
        }
    }
}

pub const PREV: usize = 0;
pub const CURR: usize = 1;

/// Full iterative state of the data detector.
#[derive(Debug, Clone)]
pub struct DataState {
    pub p_bar: DMatrix<Complex64>,
    pub p_abs2: DMatrix<f64>,
    pub symbols: Vec<Complex64>,
    pub slots: [DataSlot; 2],
    pub lambda: Vec<f64>,
    /// `ln f_{k,n}(q)`.
    pub log_factor: Cube<f64>,
    /// Symbol beliefs, one row of `Q` per device.
    pub beta: Vec<Vec<f64>>,
    /// Extrinsic symbol messages towards antenna `n`.
    pub alpha: Cube<f64>,
    /// Mixture weights of the `x_bar` beliefs, shared by both slots.
    pub rho: Cube<f64>,
    pub iteration: usize,
    pub events: NumericalEvents,
    pub config: DataConfig,
}

/// `ln CN(x; mean, var)`.
pub fn log_cn(x: Complex64, mean: Complex64, var: f64) -> f64 {
    -(PI * var).ln() - (x - mean).norm_sqr() / var
}

/// Normalizes log-weights in place into probabilities. Returns `false`
/// (and writes a uniform vector) if nothing finite was left.
pub fn normalize_log(weights: &mut [f64]) -> bool {
    let max = weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let u = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
        return false;
    }
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    weights.iter_mut().for_each(|w| *w /= total);
    true
}

/// Moment-matched Gaussian of a mixture `sum_q w_q CN(m_q, v_q)`.
pub fn gaussian_project(
    weights: &[f64],
    means: &[Complex64],
    vars: &[f64],
    mode: VarianceMode,
) -> (Complex64, f64) {
    let mut mean = Complex64::new(0.0, 0.0);
    let mut second = 0.0;
    for ((&w, &m), &v) in weights.iter().zip(means).zip(vars) {
        mean += m * w;
        second += w * (m.norm_sqr() + v);
    }
    let var = match mode {
        VarianceMode::Central => second - mean.norm_sqr(),
        VarianceMode::Raw => second,
    };
    (mean, var)
}

impl DataState {
    /// Initial state: `lambda = 10` (or the warm start), projected means 0,
    /// backward messages `(0, 1)` in both slots, uniform beliefs.
    pub fn new(
        y_prev: &DMatrix<Complex64>,
        y_curr: &DMatrix<Complex64>,
        p_bar: &DMatrix<Complex64>,
        alphabet: &DpskAlphabet,
        config: &DataConfig,
    ) -> Result<Self> {
        if y_prev.shape() != y_curr.shape() {
            return Err(Error::Dimension(format!(
                "Y(t-1) is {:?} but Y(t) is {:?}",
                y_prev.shape(),
                y_curr.shape()
            )));
        }
        if p_bar.nrows() != y_curr.nrows() {
            return Err(Error::Dimension(format!(
                "reduced spreading matrix has {} chips, observations {}",
                p_bar.nrows(),
                y_curr.nrows()
            )));
        }
        let (k, n) = (p_bar.ncols(), y_curr.ncols());
        if k == 0 || n == 0 {
            return Err(Error::Dimension("need at least one device and one antenna".into()));
        }
        let lambda = match &config.initial_lambda {
            Some(l) if l.len() == n => l.clone(),
            Some(l) => {
                return Err(Error::Dimension(format!(
                    "{} initial noise precisions for {n} antennas",
                    l.len()
                )))
            }
            None => vec![config.lambda_init; n],
        };
        let q = alphabet.order();
        let uniform = 1.0 / q as f64;
        Ok(Self {
            p_bar: p_bar.clone(),
            p_abs2: messages::abs2(p_bar),
            symbols: alphabet.points().to_vec(),
            slots: [
                DataSlot::new(y_prev.clone(), k, q),
                DataSlot::new(y_curr.clone(), k, q),
            ],
            lambda,
            log_factor: Cube::new(k, n, q, 0.0),
            beta: vec![vec![uniform; q]; k],
            alpha: Cube::new(k, n, q, uniform),
            rho: Cube::new(k, n, q, uniform),
            iteration: 0,
            events: NumericalEvents::default(),
            config: config.clone(),
        })
    }

    pub fn devices(&self) -> usize {
        self.p_bar.ncols()
    }

    pub fn antennas(&self) -> usize {
        self.lambda.len()
    }

    pub fn chips(&self) -> usize {
        self.p_bar.nrows()
    }

    /// Forward messages into `x_bar` for both slots, with the projected
    /// means of the previous iteration as the correction reference.
    pub fn forward_xbar(&mut self) {
        let floor = self.config.variance_floor;
        for s in self.slots.iter_mut() {
            let (m, v) = messages::forward(
                &self.p_bar,
                &self.p_abs2,
                &s.y,
                &s.bwd_mean,
                &s.bwd_var,
                &self.lambda,
                &s.mean,
                floor,
                &mut self.events,
            );
            s.fwd_mean = m;
            s.fwd_var = v;
        }
    }

    /// Per-antenna evidence and symbol beliefs (uniform prior).
    pub fn symbol_belief_beta(&mut self) {
        let [prev, curr] = &self.slots;
        for k in 0..self.devices() {
            let mut total = vec![0.0; self.symbols.len()];
            for n in 0..self.antennas() {
                let (mt, vt) = (curr.fwd_mean[(k, n)], curr.fwd_var[(k, n)]);
                let (mp, vp) = (prev.fwd_mean[(k, n)], prev.fwd_var[(k, n)]);
                let row = self.log_factor.at_mut(k, n);
                for (i, q) in self.symbols.iter().enumerate() {
                    row[i] = log_cn(mt, q * mp, vt + q.norm_sqr() * vp);
                    total[i] += row[i];
                }
            }
            if !normalize_log(&mut total) {
                self.events.underflows += 1;
            }
            self.beta[k] = total;
        }
    }

    /// Extrinsic symbol messages: every antenna's evidence except `n`'s.
    pub fn extrinsic_alpha(&mut self) {
        for k in 0..self.devices() {
            let mut total = vec![0.0; self.symbols.len()];
            for n in 0..self.antennas() {
                for (t, f) in total.iter_mut().zip(self.log_factor.at(k, n)) {
                    *t += f;
                }
            }
            for n in 0..self.antennas() {
                let mut w: Vec<f64> = total
                    .iter()
                    .zip(self.log_factor.at(k, n))
                    .map(|(t, f)| t - f)
                    .collect();
                if !normalize_log(&mut w) {
                    self.events.underflows += 1;
                }
                self.alpha.at_mut(k, n).copy_from_slice(&w);
            }
        }
    }

    /// Mixture weights `rho_q ~ alpha_q |q|^2 f_{k,n}(q)`.
    pub fn mixture_rho(&mut self) {
        for k in 0..self.devices() {
            for n in 0..self.antennas() {
                let mut w: Vec<f64> = self
                    .alpha
                    .at(k, n)
                    .iter()
                    .zip(self.log_factor.at(k, n))
                    .zip(&self.symbols)
                    .map(|((a, f), q)| a.ln() + q.norm_sqr().ln() + f)
                    .collect();
                if !normalize_log(&mut w) {
                    self.events.underflows += 1;
                }
                self.rho.at_mut(k, n).copy_from_slice(&w);
            }
        }
    }

    /// Per-symbol moments of the `x_bar` beliefs in both slots.
    pub fn component_moments(&mut self) {
        let floor = self.config.variance_floor;
        let [prev, curr] = &mut self.slots;
        for k in 0..self.p_bar.ncols() {
            for n in 0..self.lambda.len() {
                let (mt, vt) = (curr.fwd_mean[(k, n)], curr.fwd_var[(k, n)]);
                let (mp, vp) = (prev.fwd_mean[(k, n)], prev.fwd_var[(k, n)]);
                for (i, q) in self.symbols.iter().enumerate() {
                    let q2 = q.norm_sqr();
                    let v_curr = floor_variance(1.0 / (1.0 / vt + 1.0 / (q2 * vp)), floor, &mut self.events);
                    let m_curr = (mt / vt + q * mp / (q2 * vp)) * v_curr;
                    let v_prev = floor_variance(1.0 / (q2 / vt + 1.0 / vp), floor, &mut self.events);
                    let m_prev = (q.conj() * mt / vt + mp / vp) * v_prev;
                    curr.comp_mean.at_mut(k, n)[i] = m_curr;
                    curr.comp_var.at_mut(k, n)[i] = v_curr;
                    prev.comp_mean.at_mut(k, n)[i] = m_prev;
                    prev.comp_var.at_mut(k, n)[i] = v_prev;
                }
            }
        }
    }

    /// Moment matching of both slot beliefs with the shared weights.
    pub fn project(&mut self) {
        let floor = self.config.variance_floor;
        let mode = self.config.variance_mode;
        for s in self.slots.iter_mut() {
            for k in 0..s.mean.nrows() {
                for n in 0..s.mean.ncols() {
                    let (m, v) = gaussian_project(
                        self.rho.at(k, n),
                        s.comp_mean.at(k, n),
                        s.comp_var.at(k, n),
                        mode,
                    );
                    s.mean[(k, n)] = m;
                    s.var[(k, n)] = floor_variance(v, floor, &mut self.events);
                }
            }
        }
    }

    pub fn backward_z_pair(&mut self) {
        let floor = self.config.variance_floor;
        for s in self.slots.iter_mut() {
            let (m, v) = messages::backward(
                &self.p_bar,
                &self.p_abs2,
                &s.y,
                &s.mean,
                &s.var,
                &self.lambda,
                &s.bwd_mean,
                &s.bwd_var,
                floor,
                &mut self.events,
            );
            s.bwd_mean_prev = std::mem::replace(&mut s.bwd_mean, m);
            s.bwd_var_prev = std::mem::replace(&mut s.bwd_var, v);
        }
    }

    pub fn belief_z(&mut self) {
        let floor = self.config.variance_floor;
        for s in self.slots.iter_mut() {
            let (m, v) = messages::z_belief(&s.y, &s.bwd_mean, &s.bwd_var, &self.lambda, floor, &mut self.events);
            s.z_mean = m;
            s.z_var = v;
        }
    }

    pub fn update_lambda_pair(&mut self) {
        let chips = self.chips() as f64;
        let curr = &self.slots[CURR];
        let mut energy = messages::residual_energy(&curr.y, &curr.z_mean, &curr.z_var);
        let count = match self.config.lambda_mode {
            LambdaMode::Pair => {
                let prev = &self.slots[PREV];
                for (e, r) in energy.iter_mut().zip(messages::residual_energy(&prev.y, &prev.z_mean, &prev.z_var)) {
                    *e += r;
                }
                2.0 * chips
            }
            LambdaMode::CurrentOnly => chips,
            LambdaMode::Fixed => return,
        };
        self.lambda = messages::noise_precision(count, &energy, self.config.lambda_max, &mut self.events);
    }

    /// One full iteration; returns the largest change of any `beta` entry.
    pub fn iterate(&mut self) -> f64 {
        let before = self.beta.clone();
        self.forward_xbar();
        self.symbol_belief_beta();
        self.extrinsic_alpha();
        self.mixture_rho();
        self.component_moments();
        self.project();
        self.backward_z_pair();
        self.belief_z();
        self.update_lambda_pair();
        self.iteration += 1;
        before
            .iter()
            .flatten()
            .zip(self.beta.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Rows of `beta` and `rho` are probability vectors (to 1e-9) and all
    /// variances respect the floor.
    pub fn invariants_hold(&self) -> bool {
        let simplex = |w: &[f64]| w.iter().all(|&x| x >= 0.0) && (w.iter().sum::<f64>() - 1.0).abs() <= 1e-9;
        let floor = self.config.variance_floor;
        self.beta.iter().all(|b| simplex(b))
            && (0..self.devices()).all(|k| {
                (0..self.antennas()).all(|n| simplex(self.rho.at(k, n)) && simplex(self.alpha.at(k, n)))
            })
            && self.slots.iter().all(|s| {
                [&s.fwd_var, &s.var, &s.bwd_var, &s.z_var]
                    .iter()
                    .all(|m| m.iter().all(|&v| v >= floor && v.is_finite()))
            })
    }
}

/// Hard decision for one device.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceDecision {
    /// Column of the reduced model (position in the support).
    pub column: usize,
    /// Symbol posterior; empty for detectors that do not produce one.
    pub posterior: Vec<f64>,
    pub index: usize,
    pub symbol: Complex64,
    pub bits: Vec<u8>,
    /// The decision did not come from the data (deterministic fallback).
    pub fallback: bool,
}

/// `argmax_q beta_k^q`, ties to the lowest constellation index.
pub fn hard_decide(beta: &[Vec<f64>], alphabet: &DpskAlphabet) -> Vec<DeviceDecision> {
    beta.iter()
        .enumerate()
        .map(|(k, b)| {
            let mut best = 0;
            for (i, &w) in b.iter().enumerate() {
                if w > b[best] {
                    best = i;
                }
            }
            DeviceDecision {
                column: k,
                posterior: b.clone(),
                index: best,
                symbol: alphabet.point(best),
                bits: alphabet.label_bits(best),
                fallback: false,
            }
        })
        .collect()
}

/// Result of a data-detection run.
#[derive(Debug, Clone)]
pub struct DataDetection {
    pub decisions: Vec<DeviceDecision>,
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    pub events: NumericalEvents,
    /// Final state (absent when there were no devices to detect).
    pub state: Option<DataState>,
}

/// Runs the data detector over the reduced model `P_bar` (one column per
/// detected device).
pub fn run_data_detection(
    y_prev: &DMatrix<Complex64>,
    y_curr: &DMatrix<Complex64>,
    p_bar: &DMatrix<Complex64>,
    alphabet: &DpskAlphabet,
    config: &DataConfig,
) -> Result<DataDetection> {
    if p_bar.ncols() == 0 {
        return Ok(DataDetection {
            decisions: Vec::new(),
            iterations: 0,
            records: Vec::new(),
            events: NumericalEvents::default(),
            state: None,
        });
    }
    let mut state = DataState::new(y_prev, y_curr, p_bar, alphabet, config)?;
    let mut records = Vec::with_capacity(config.max_iterations);
    for _ in 0..config.max_iterations {
        let change = state.iterate();
        debug_assert!(state.invariants_hold());
        records.push(IterationRecord {
            iteration: state.iteration,
            max_change: change,
            lambda_mean: state.lambda.iter().sum::<f64>() / state.lambda.len() as f64,
        });
        if change < config.tolerance {
            break;
        }
    }
    Ok(DataDetection {
        decisions: hard_decide(&state.beta, alphabet),
        iterations: state.iteration,
        records,
        events: state.events,
        state: Some(state),
    })
}
