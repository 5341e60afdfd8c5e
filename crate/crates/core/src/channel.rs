//! Activity, Rayleigh channels and received-signal synthesis.
//!
//! SNR convention: spreading columns have unit energy, channel taps unit
//! variance and symbols unit modulus, so one active device delivers unit
//! energy per receive antenna per symbol. With per-chip noise variance
//! `sigma_w^2`, `SNR = 1 / sigma_w^2`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{param, Error, Result};
use crate::rng::complex_normal;
use crate::waveform::{SpreadingMatrix, SymbolFrame};

/// Which devices transmit during the current symbol pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivityPattern {
    indicators: Vec<bool>,
    active: Vec<usize>,
}

impl ActivityPattern {
    pub fn from_indicators(indicators: Vec<bool>) -> Self {
        let active = indicators
            .iter()
            .enumerate()
            .filter_map(|(u, &a)| a.then_some(u))
            .collect();
        Self { indicators, active }
    }

    pub fn from_active(devices: usize, active: &[usize]) -> Result<Self> {
        let mut ind = vec![false; devices];
        for &u in active {
            if u >= devices {
                return param(format!("active index {u} out of range for {devices} devices"));
            }
            ind[u] = true;
        }
        Ok(Self::from_indicators(ind))
    }

    pub fn devices(&self) -> usize {
        self.indicators.len()
    }

    /// Sorted active set.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn is_active(&self, u: usize) -> bool {
        self.indicators[u]
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }
}

/// Exactly `active` devices chosen uniformly without replacement.
pub fn draw_activity<R: Rng + ?Sized>(devices: usize, active: usize, rng: &mut R) -> Result<ActivityPattern> {
    if active > devices {
        return param(format!("{active} active devices requested out of {devices}"));
    }
    let mut chosen = rand::seq::index::sample(rng, devices, active).into_vec();
    chosen.sort_unstable();
    ActivityPattern::from_active(devices, &chosen)
}

/// `U x N` i.i.d. CN(0, 1) channel coefficients, held fixed over the pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub coefficients: DMatrix<Complex64>,
}

impl ChannelRealization {
    pub fn devices(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.coefficients.ncols()
    }
}

pub fn draw_channel<R: Rng + ?Sized>(devices: usize, antennas: usize, rng: &mut R) -> ChannelRealization {
    // Column-major fill keeps the draw order independent of nalgebra internals.
    let mut coefficients = DMatrix::zeros(devices, antennas);
    for n in 0..antennas {
        for u in 0..devices {
            coefficients[(u, n)] = complex_normal(rng, 1.0);
        }
    }
    ChannelRealization { coefficients }
}

pub fn snr_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Ground truth attached to a synthesized pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairTruth {
    pub activity: ActivityPattern,
    pub channel: ChannelRealization,
    /// `A_u * s_{u,t-1}` per device.
    pub sbar_prev: Vec<Complex64>,
    /// `A_u * s_{u,t}` per device.
    pub sbar_curr: Vec<Complex64>,
    /// `s_{u,t} / s_{u,t-1}` per device (defined for every device; only
    /// meaningful where active).
    pub data: Vec<Complex64>,
}

/// Two consecutive `L x N` observations plus ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedPair {
    pub y_prev: DMatrix<Complex64>,
    pub y_curr: DMatrix<Complex64>,
    pub noise_variance: f64,
    pub truth: PairTruth,
}

impl ReceivedPair {
    pub fn chips(&self) -> usize {
        self.y_curr.nrows()
    }

    pub fn antennas(&self) -> usize {
        self.y_curr.ncols()
    }

    /// Noiseless `X^(tau)` (U x N) for the previous (`false`) or current
    /// (`true`) slot.
    pub fn signal(&self, current: bool) -> DMatrix<Complex64> {
        let sbar = if current {
            &self.truth.sbar_curr
        } else {
            &self.truth.sbar_prev
        };
        let h = &self.truth.channel.coefficients;
        DMatrix::from_fn(h.nrows(), h.ncols(), |u, n| h[(u, n)] * sbar[u])
    }
}

/// `Y^(tau) = P X^(tau) + W^(tau)` for `tau = t-1, t`, where row `u` of
/// `X^(tau)` is `A_u h_u s_{u,tau}`.
///
/// `frames[u]` supplies device `u`'s stream; slot `t` (>= 1) selects the
/// pair `(s_{t-1}, s_t)`.
pub fn synthesize_pair<R: Rng + ?Sized>(
    spreading: &SpreadingMatrix,
    channel: &ChannelRealization,
    activity: &ActivityPattern,
    frames: &[SymbolFrame],
    t: usize,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ReceivedPair> {
    let u_count = spreading.devices();
    if channel.devices() != u_count || activity.devices() != u_count || frames.len() != u_count {
        return Err(Error::Dimension(format!(
            "spreading has {u_count} devices, channel {}, activity {}, frames {}",
            channel.devices(),
            activity.devices(),
            frames.len()
        )));
    }
    if t == 0 {
        return param("slot index t must be >= 1");
    }
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return param(format!("noise variance {noise_variance} must be finite and >= 0"));
    }
    if let Some(u) = frames.iter().position(|f| f.encoded.len() <= t) {
        return Err(Error::Dimension(format!(
            "frame of device {u} has no symbol at slot {t}"
        )));
    }

    let gate = |u: usize, s: Complex64| {
        if activity.is_active(u) {
            s
        } else {
            Complex64::new(0.0, 0.0)
        }
    };
    let sbar_prev: Vec<Complex64> = (0..u_count).map(|u| gate(u, frames[u].encoded[t - 1])).collect();
    let sbar_curr: Vec<Complex64> = (0..u_count).map(|u| gate(u, frames[u].encoded[t])).collect();
    let data: Vec<Complex64> = frames.iter().map(|f| f.data[t - 1]).collect();

    let h = &channel.coefficients;
    let antennas = channel.antennas();
    let x_prev = DMatrix::from_fn(u_count, antennas, |u, n| h[(u, n)] * sbar_prev[u]);
    let x_curr = DMatrix::from_fn(u_count, antennas, |u, n| h[(u, n)] * sbar_curr[u]);
    let p = spreading.matrix();
    let mut y_prev = p * x_prev;
    let mut y_curr = p * x_curr;
    if noise_variance > 0.0 {
        for y in [&mut y_prev, &mut y_curr] {
            for n in 0..antennas {
                for l in 0..spreading.chips() {
                    y[(l, n)] += complex_normal(rng, noise_variance);
                }
            }
        }
    }

    Ok(ReceivedPair {
        y_prev,
        y_curr,
        noise_variance,
        truth: PairTruth {
            activity: activity.clone(),
            channel: channel.clone(),
            sbar_prev,
            sbar_curr,
            data,
        },
    })
}
