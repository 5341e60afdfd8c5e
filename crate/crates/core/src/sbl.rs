//! Active-device detection by block sparse Bayesian learning.
//!
//! Each device row of `X` gets a Gaussian prior with a shared precision
//! `gamma_u` (Gamma hyperprior, `eta = 0`, shape learned from the spread of
//! the precisions). Inference combines belief propagation on the linear
//! mixing constraints with mean-field updates for the precisions and the
//! per-antenna noise precision `lambda_n`. Devices whose learned precision
//! stays small carry signal energy and are declared active.
//!
//! One iteration runs, in order:
//!
//! 1. forward messages into `x` ([`SblState::forward_x`])
//! 2. beliefs of `x` ([`SblState::belief_x`])
//! 3. backward messages into `z` ([`SblState::backward_z`])
//! 4. precisions `gamma` ([`SblState::update_gamma`])
//! 5. Gamma shape `epsilon` ([`SblState::update_epsilon`])
//! 6. beliefs of `z` and noise precisions ([`SblState::belief_z_and_lambda`])

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::diagnostics::IterationRecord;
use crate::error::{Error, Result};
use crate::messages::{self, floor_variance, NumericalEvents};

/// Which received slots feed the activity detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlotMode {
    /// Both `Y^(t-1)` and `Y^(t)`: precisions shared over `2N` columns,
    /// noise precision from `2L` residuals per antenna.
    #[default]
    Joint,
    /// Only `Y^(t)`.
    CurrentOnly,
}

/// Rule that turns learned precisions into an active set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Split at the widest gap of the sorted `ln gamma`, provided it is at
    /// least `min_log_gap` wide; otherwise compare against `fallback`.
    LargestGap { min_log_gap: f64, fallback: f64 },
    /// `gamma_u < value` means active.
    Fixed(f64),
    /// Two-means clustering of `ln gamma`.
    TwoCluster,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy::LargestGap {
            min_log_gap: std::f64::consts::LN_2,
            fallback: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SblConfig {
    pub max_iterations: usize,
    /// Stop once `max_u |delta gamma_u| / gamma_u` drops below this.
    pub tolerance: f64,
    pub gamma_max: f64,
    pub lambda_max: f64,
    pub variance_floor: f64,
    pub lambda_init: f64,
    pub gamma_init: f64,
    pub slots: SlotMode,
    /// Weight on the previous backward messages (0 disables damping).
    pub damping: f64,
    pub threshold: ThresholdPolicy,
}

impl Default for SblConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-4,
            gamma_max: 1e11,
            lambda_max: 1e12,
            variance_floor: 1e-12,
            lambda_init: 10.0,
            gamma_init: 1.0,
            slots: SlotMode::Joint,
            damping: 0.0,
            threshold: ThresholdPolicy::default(),
        }
    }
}

/// Messages and beliefs of one received slot.
#[derive(Debug, Clone)]
pub struct SlotState {
    pub y: DMatrix<Complex64>,
    /// Forward (extrinsic) mean and variance into `x`, `U x N`.
    pub fwd_mean: DMatrix<Complex64>,
    pub fwd_var: DMatrix<f64>,
    /// Belief of `x`, `U x N`.
    pub mean: DMatrix<Complex64>,
    pub var: DMatrix<f64>,
    /// Backward messages into `z`, `L x N`, with the previous iteration's
    /// copies used by the correction term.
    pub bwd_mean: DMatrix<Complex64>,
    pub bwd_var: DMatrix<f64>,
    pub bwd_mean_prev: DMatrix<Complex64>,
    pub bwd_var_prev: DMatrix<f64>,
    /// Belief of `z`, `L x N`.
    pub z_mean: DMatrix<Complex64>,
    pub z_var: DMatrix<f64>,
}

impl SlotState {
    fn new(y: DMatrix<Complex64>, devices: usize) -> Self {
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
            y,
        }
    }
}

/// Full iterative state of the activity detector.
#[derive(Debug, Clone)]
pub struct SblState {
    pub p: DMatrix<Complex64>,
    pub p_abs2: DMatrix<f64>,
    pub slots: Vec<SlotState>,
    pub gamma: Vec<f64>,
    pub epsilon: f64,
    pub eta: f64,
    pub lambda: Vec<f64>,
    pub iteration: usize,
    pub events: NumericalEvents,
    pub config: SblConfig,
}

impl SblState {
    /// Initial state: `lambda = 10`, `gamma = 1`, `m_x = 0`, backward
    /// messages `(0, 1)`.
    pub fn new(
        y_prev: &DMatrix<Complex64>,
        y_curr: &DMatrix<Complex64>,
        p: &DMatrix<Complex64>,
        config: &SblConfig,
    ) -> Result<Self> {
        if y_prev.shape() != y_curr.shape() {
            return Err(Error::Dimension(format!(
                "Y(t-1) is {:?} but Y(t) is {:?}",
                y_prev.shape(),
                y_curr.shape()
            )));
        }
        if p.nrows() != y_curr.nrows() {
            return Err(Error::Dimension(format!(
                "spreading matrix has {} chips, observations {}",
                p.nrows(),
                y_curr.nrows()
            )));
        }
        if p.ncols() == 0 || y_curr.ncols() == 0 {
            return Err(Error::Dimension("need at least one device and one antenna".into()));
        }
        let devices = p.ncols();
        let slots = match config.slots {
            SlotMode::Joint => vec![
                SlotState::new(y_prev.clone(), devices),
                SlotState::new(y_curr.clone(), devices),
            ],
            SlotMode::CurrentOnly => vec![SlotState::new(y_curr.clone(), devices)],
        };
        Ok(Self {
            p: p.clone(),
            p_abs2: messages::abs2(p),
            slots,
            gamma: vec![config.gamma_init; devices],
            epsilon: 0.0,
            eta: 0.0,
            lambda: vec![config.lambda_init; y_curr.ncols()],
            iteration: 0,
            events: NumericalEvents::default(),
            config: config.clone(),
        })
    }

    pub fn devices(&self) -> usize {
        self.p.ncols()
    }

    pub fn chips(&self) -> usize {
        self.p.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.lambda.len()
    }

    pub fn forward_x(&mut self) {
        let floor = self.config.variance_floor;
        for s in &mut self.slots {
            let (m, v) = messages::forward(
                &self.p,
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

    pub fn belief_x(&mut self) {
        let floor = self.config.variance_floor;
        for s in &mut self.slots {
            for n in 0..s.mean.ncols() {
                for u in 0..s.mean.nrows() {
                    let (m, v) = shrink(s.fwd_mean[(u, n)], s.fwd_var[(u, n)], self.gamma[u]);
                    s.mean[(u, n)] = m;
                    s.var[(u, n)] = floor_variance(v, floor, &mut self.events);
                }
            }
        }
    }

    pub fn backward_z(&mut self) {
        let floor = self.config.variance_floor;
        let d = self.config.damping;
        for s in &mut self.slots {
            let (mut m, mut v) = messages::backward(
                &self.p,
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
            if d > 0.0 {
                m = m * Complex64::new(1.0 - d, 0.0) + &s.bwd_mean * Complex64::new(d, 0.0);
                v = v * (1.0 - d) + &s.bwd_var * d;
            }
            s.bwd_mean_prev = std::mem::replace(&mut s.bwd_mean, m);
            s.bwd_var_prev = std::mem::replace(&mut s.bwd_var, v);
        }
    }

    /// Returns the largest relative change of any precision.
    pub fn update_gamma(&mut self) -> f64 {
        let antennas = self.antennas() * self.slots.len();
        let mut max_change: f64 = 0.0;
        for u in 0..self.devices() {
            let energy: f64 = self
                .slots
                .iter()
                .map(|s| {
                    (0..s.mean.ncols())
                        .map(|n| s.mean[(u, n)].norm_sqr() + s.var[(u, n)])
                        .sum::<f64>()
                })
                .sum();
            let g = precision_estimate(
                self.epsilon,
                self.eta,
                antennas as f64,
                energy,
                self.config.gamma_max,
                &mut self.events,
            );
            let old = self.gamma[u];
            max_change = max_change.max((g - old).abs() / old);
            self.gamma[u] = g;
        }
        max_change
    }

    pub fn update_epsilon(&mut self) {
        self.epsilon = shape_estimate(&self.gamma);
    }

    pub fn belief_z_and_lambda(&mut self) {
        let floor = self.config.variance_floor;
        let mut energy = vec![0.0; self.antennas()];
        for s in &mut self.slots {
            let (m, v) = messages::z_belief(
                &s.y,
                &s.bwd_mean,
                &s.bwd_var,
                &self.lambda,
                floor,
                &mut self.events,
            );
            s.z_mean = m;
            s.z_var = v;
            for (e, r) in energy.iter_mut().zip(messages::residual_energy(&s.y, &s.z_mean, &s.z_var)) {
                *e += r;
            }
        }
        let count = (self.chips() * self.slots.len()) as f64;
        self.lambda = messages::noise_precision(count, &energy, self.config.lambda_max, &mut self.events);
    }

    /// One full iteration; returns the relative precision change.
    pub fn iterate(&mut self) -> f64 {
        self.forward_x();
        self.belief_x();
        self.backward_z();
        let change = self.update_gamma();
        self.update_epsilon();
        self.belief_z_and_lambda();
        self.iteration += 1;
        change
    }

    /// `sum |y - m_z|^2` over every slot, chip and antenna.
    pub fn residual(&self) -> f64 {
        self.slots
            .iter()
            .map(|s| (&s.y - &s.z_mean).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum()
    }

    /// True when every stored variance respects the floor and every
    /// precision lies in its admissible range.
    pub fn invariants_hold(&self) -> bool {
        let floor = self.config.variance_floor;
        let vars_ok = self.slots.iter().all(|s| {
            [&s.fwd_var, &s.var, &s.bwd_var, &s.z_var]
                .iter()
                .all(|m| m.iter().all(|&v| v >= floor && v.is_finite()))
        });
        vars_ok
            && self.gamma.iter().all(|&g| g > 0.0 && g <= self.config.gamma_max)
            && self.lambda.iter().all(|&l| l > 0.0 && l <= self.config.lambda_max)
            && self.epsilon >= 0.0
    }
}

/// Belief of `x` from its forward message and the prior `CN(0, 1/gamma)`:
/// returns `(fwd_mean / (1 + gamma fwd_var), (1/fwd_var + gamma)^-1)`.
pub fn shrink(fwd_mean: Complex64, fwd_var: f64, gamma: f64) -> (Complex64, f64) {
    (fwd_mean / (1.0 + gamma * fwd_var), 1.0 / (1.0 / fwd_var + gamma))
}

/// `(epsilon + count) / (eta + energy)` clamped to `(0, gamma_max]`.
pub fn precision_estimate(
    epsilon: f64,
    eta: f64,
    count: f64,
    energy: f64,
    gamma_max: f64,
    events: &mut NumericalEvents,
) -> f64 {
    let denom = eta + energy;
    let g = (epsilon + count) / denom;
    if denom > 0.0 && g.is_finite() && g <= gamma_max && g > 0.0 {
        g
    } else {
        events.precision_clamps += 1;
        gamma_max
    }
}

/// `0.5 * sqrt(ln(mean gamma) - mean(ln gamma))`; zero for constant input.
pub fn shape_estimate(gamma: &[f64]) -> f64 {
    if gamma.is_empty() {
        return 0.0;
    }
    let n = gamma.len() as f64;
    let log_mean = (gamma.iter().sum::<f64>() / n).ln();
    let mean_log = gamma.iter().map(|g| g.ln()).sum::<f64>() / n;
    let radicand = log_mean - mean_log;
    if radicand > 0.0 {
        0.5 * radicand.sqrt()
    } else {
        0.0
    }
}

/// Estimated active set.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportEstimate {
    /// Sorted device indices declared active.
    pub active: Vec<usize>,
    /// Learned precision per device (empty for an oracle support).
    pub scores: Vec<f64>,
    /// Threshold that produced `active`, if one was used.
    pub threshold: Option<f64>,
    /// The scores offered no usable split.
    pub degenerate: bool,
}

impl SupportEstimate {
    pub fn len(&self) -> usize {
        self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }
}

/// `{u : gamma_u < G_th}` with `G_th` chosen by `policy`.
pub fn threshold_support(gamma: &[f64], policy: ThresholdPolicy) -> SupportEstimate {
    let below = |g_th: f64| -> Vec<usize> {
        gamma
            .iter()
            .enumerate()
            .filter_map(|(u, &g)| (g < g_th).then_some(u))
            .collect()
    };
    let degenerate = SupportEstimate {
        active: Vec::new(),
        scores: gamma.to_vec(),
        threshold: None,
        degenerate: true,
    };
    if gamma.is_empty() {
        return degenerate;
    }

    let mut logs: Vec<f64> = gamma.iter().map(|g| g.ln()).collect();
    logs.sort_by(f64::total_cmp);
    let spread = logs[logs.len() - 1] - logs[0];
    let all_equal = gamma.len() > 1 && spread < 1e-6;

    let (g_th, flagged) = match policy {
        ThresholdPolicy::Fixed(g) => (g, false),
        _ if all_equal => return degenerate,
        ThresholdPolicy::LargestGap {
            min_log_gap,
            fallback,
        } => {
            let best = logs
                .windows(2)
                .enumerate()
                .map(|(i, w)| (i, w[1] - w[0]))
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match best {
                Some((i, gap)) if gap >= min_log_gap => ((0.5 * (logs[i] + logs[i + 1])).exp(), false),
                _ => (fallback, true),
            }
        }
        ThresholdPolicy::TwoCluster => {
            // Split minimizing the within-cluster sum of squares.
            let n = logs.len();
            let total: f64 = logs.iter().sum();
            let mut left = 0.0;
            let mut best = (0usize, f64::INFINITY);
            for i in 0..n - 1 {
                left += logs[i];
                let (nl, nr) = ((i + 1) as f64, (n - i - 1) as f64);
                let right = total - left;
                // Minimizing SSE is maximizing between-cluster separation.
                let score = -(left * left / nl + right * right / nr);
                if score < best.1 {
                    best = (i, score);
                }
            }
            if n < 2 {
                return degenerate;
            }
            ((0.5 * (logs[best.0] + logs[best.0 + 1])).exp(), false)
        }
    };
    SupportEstimate {
        active: below(g_th),
        scores: gamma.to_vec(),
        threshold: Some(g_th),
        degenerate: flagged,
    }
}

/// Result of a full activity-detection run.
#[derive(Debug, Clone)]
pub struct ActiveDetection {
    pub support: SupportEstimate,
    pub iterations: usize,
    pub records: Vec<IterationRecord>,
    pub gamma_trace: Vec<Vec<f64>>,
    pub lambda_trace: Vec<Vec<f64>>,
    pub events: NumericalEvents,
    pub state: SblState,
}

/// Runs the activity detector on a received pair and thresholds the
/// learned precisions.
pub fn run_active_detection(
    y_prev: &DMatrix<Complex64>,
    y_curr: &DMatrix<Complex64>,
    p: &DMatrix<Complex64>,
    config: &SblConfig,
) -> Result<ActiveDetection> {
    let mut state = SblState::new(y_prev, y_curr, p, config)?;
    let mut records = Vec::with_capacity(config.max_iterations);
    let mut gamma_trace = Vec::with_capacity(config.max_iterations);
    let mut lambda_trace = Vec::with_capacity(config.max_iterations);
    for _ in 0..config.max_iterations {
        let change = state.iterate();
        debug_assert!(state.invariants_hold());
        records.push(IterationRecord {
            iteration: state.iteration,
            max_change: change,
            lambda_mean: state.lambda.iter().sum::<f64>() / state.lambda.len() as f64,
        });
        gamma_trace.push(state.gamma.clone());
        lambda_trace.push(state.lambda.clone());
        if change < config.tolerance {
            break;
        }
    }
    let mut support = threshold_support(&state.gamma, config.threshold);
    let mut events = state.events;
    if support.degenerate {
        events.degenerate_splits += 1;
    }
    support.scores = state.gamma.clone();
    Ok(ActiveDetection {
        support,
        iterations: state.iteration,
        records,
        gamma_trace,
        lambda_trace,
        events,
        state,
    })
}
