//! Counter-based random substreams.
//!
//! Every trial gets its own ChaCha stream keyed by the master seed and a
//! 64-bit stream id, so results do not depend on which worker runs a trial
//! or in what order.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type TrialRng = ChaCha8Rng;

/// Independent generator for `(master_seed, stream)`.
pub fn substream(master_seed: u64, stream: u64) -> TrialRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Stream id for trial `trial` of grid point `point`.
pub fn trial_stream(point: u32, trial: u32) -> u64 {
    ((point as u64) << 32) | trial as u64
}

/// Circularly-symmetric complex Gaussian sample with the given variance.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}
