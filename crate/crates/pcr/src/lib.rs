//! Model-X conditional independence testing with the Pearson chi-squared
//! conditional randomization (PCR) test.
//!
//! Given data `(X_i, Y_i, Z_i)` and sampling access to the conditional law
//! `L(X|Z)`, the PCR test draws counterfeit copies of each `X_i`, ranks the
//! original sample's score among its counterfeits, bins the ranks into `L`
//! labels and applies a Pearson chi-squared uniformity test to the label
//! counts. Unlike the vanilla conditional randomization test (CRT), which
//! only looks at the tails of a whole-dataset rank, the PCR test sees
//! deviations from uniformity anywhere in the rank distribution.
//!
//! The crate provides:
//!
//! - [`pearson`]: the core PCR test (ranking, labelling, the `U` statistic,
//!   finite-sample and asymptotic thresholds and p-values),
//! - [`crt`]: the baseline conditional randomization test,
//! - [`parameter_free`]: Bonferroni combination of PCR runs over a grid of
//!   label counts,
//! - [`robust`]: the robust statistic `U(delta)` for approximately known
//!   conditional laws, backed by a separable box-simplex QP solver,
//! - [`oracle`]: numerical evaluation of the test's power theory
//!   (conditional ordinal dominance curves, label probabilities, power
//!   bounds, noncentral chi-squared power predictions),
//! - [`simlab`]: synthetic model generators and a replicated experiment
//!   runner with deterministic, schedule-independent seeding,
//! - [`pipeline`]: a tabular workflow (CSV ingestion, kernel conditional
//!   Gaussian fit, OLS residual scores, grouped PCR),
//! - [`rng`] and [`special`]: the splittable random number generator and
//!   the special functions everything else is built on.
//!
//! A longer guide with worked examples lives in the `book/` directory of the
//! repository.

pub mod crt;
pub mod data;
pub mod oracle;
pub mod parameter_free;
pub mod pearson;
pub mod pipeline;
pub mod robust;
pub mod rng;
pub mod simlab;
pub mod special;

mod error;

pub use data::{ConditionalSampler, Dataset, DatasetScore, ScoreFunction, SumScore};
pub use error::PcrError;
pub use pearson::{run_pcr, LabelCounts, PcrConfig, PcrResult, ThresholdKind};
pub use rng::RngStream;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, PcrError>;
