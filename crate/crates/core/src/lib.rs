//! Binary classification of a test sequence between two unknown sources on a
//! large alphabet, from training samples much smaller than the alphabet.
//!
//! * [`alphabet_model`]: distributions, the bi-uniform family and the model class.
//! * [`sampling`]: sparse histograms and seeded multinomial sampling.
//! * [`classifiers`]: the l2 statistic `F_n`, the coincidence statistic `T_n`
//!   and a genie likelihood-ratio test.
//! * [`exact_analysis`]: exact collision probabilities, bound evaluation and
//!   brute-force error enumeration.
//! * [`experiments`]: Monte Carlo error estimates, sweeps and exponent fits.
//! * [`cli_io`]: configuration parsing and output writers behind the binary.

pub mod alphabet_model;
pub mod classifiers;
pub mod cli_io;
pub mod error;
pub mod exact_analysis;
pub mod experiments;
mod numeric;
pub mod sampling;

pub use alphabet_model::{bi_uniform, uniform, BiUniformSpec, Distribution, ModelClassParams};
pub use classifiers::{classify_f, classify_t, oracle_lrt, Decision, JointCounts};
pub use error::{Error, Result};
pub use experiments::{ClassifierId, ErrorEstimate, ExponentFit, GridPoint, SweepConfig};
pub use sampling::{Histogram, SeedSpec, Stream};
