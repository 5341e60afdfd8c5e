//! Benchmark fixtures.

use noma_core::harness::{draw_pair, GridPoint, RunConfig};
use noma_core::{ReceivedPair, SpreadingMatrix};

/// Paper-scale instance: U = 100, K = 10, N = 100 at 10 dB.
pub fn paper_scale(spread_len: usize) -> (SpreadingMatrix, ReceivedPair) {
    let cfg = RunConfig::default();
    let point = GridPoint {
        index: 0,
        spread_len,
        antennas: 100,
        snr_db: 10.0,
    };
    draw_pair(&cfg, &point, 0).expect("default config is valid")
}
