//! Growth dynamics of online discussions.
//!
//! A discussion thread is read as the step response of a process: the initial
//! post is the input step and the cumulative count of replies is the output.
//! The crate identifies first-order-plus-dead-time (FOPDT) and logistic models
//! from such responses, predicts discussion size, fits power laws to
//! discussion-size populations, and simulates synthetic threads.
//!
//! Module map:
//!
//! - [`ingest`]: post archives (CSV / JSON lines) to threads and step-response series.
//! - [`response`]: closed-form FOPDT and logistic responses, transfer-function text.
//! - [`identify`]: two-point, area, least-squares and logistic identification.
//! - [`zipf`]: size histograms, log-log power-law fits, gain priors.
//! - [`simulate`]: seeded nonhomogeneous Poisson thread generator.

pub mod ingest;
pub mod optimize;
pub mod response;
pub mod identify;
pub mod simulate;
pub mod units;
pub mod zipf;

pub use identify::{FitError, FitMethod, FitReport, FittedModel, GainSource};
pub use ingest::{DiscussionThread, IngestError, PostRecord, StepResponseSeries};
pub use response::{FopdtModel, LogisticModel, ModelError, ResponseModel, TransferFunctionDisplay};
pub use units::TimeUnit;
