//! Path loss modelling for 60 GHz links inside a city bus.
//!
//! * [`models`]: log-distance model with Gaussian shadowing and the
//!   measured parameter registry.
//! * [`fit`]: least-squares parameter estimation and synthetic samples.
//! * [`pdp`]: power delay profile reduction to path loss.
//! * [`geometry`]: bus layout, seat groups and link distances.
//! * [`linkbudget`]: SNR, rate, coverage and multi-transmitter SINR.

pub mod error;
pub mod fit;
pub mod geometry;
pub mod linkbudget;
pub mod models;
pub mod pdp;

pub use error::{Error, Result};
pub use fit::{fit_by_partition, fit_log_distance, synth_samples, FitResult, Sample, SampleSet};
pub use geometry::{BusLayout, HeightMode, Point3, SeatSpec};
pub use linkbudget::{LinkBudgetConfig, SeatReport};
pub use models::{builtin, builtin_models, HeightClass, ModelSet, PathLossModel, Region};
pub use pdp::{LinkCalibration, MeasurementSet, PdpRecord};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream number `index` under `seed`.
///
/// Streams with the same seed and different indices are independent, so
/// Monte-Carlo work can be partitioned by index and still reproduce
/// bit-for-bit regardless of scheduling.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
