//! Grant-free MIMO-NOMA uplink with differential modulation.
//!
//! Sporadically active single-antenna devices spread DPSK symbols with
//! Zadoff-Chu sequences; a multi-antenna access point sees two consecutive
//! received matrices and must
//!
//! * find the active devices ([`sbl`]), then
//! * detect their differential symbols without channel estimates
//!   ([`noncoherent`]).
//!
//! [`baselines`] holds the two-step LMMSE demodulator and the
//! known-support benchmark, and [`harness`] runs seeded Monte-Carlo
//! experiments over all of them.

pub mod baselines;
pub mod channel;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod messages;
pub mod noncoherent;
pub mod rng;
pub mod sbl;
pub mod waveform;

pub use channel::{
    draw_activity, draw_channel, snr_to_noise_variance, synthesize_pair, ActivityPattern,
    ChannelRealization, PairTruth, ReceivedPair,
};
pub use error::{Error, Result};
pub use messages::NumericalEvents;
pub use sbl::{run_active_detection, SblConfig, SlotMode, SupportEstimate, ThresholdPolicy};
pub use waveform::{zc_sequence, DpskAlphabet, SpreadingMatrix, SymbolFrame};
pub use harness::{run_trial, sweep, Detector, MetricsRecord, RunConfig};
pub use noncoherent::{run_data_detection, DataConfig};
