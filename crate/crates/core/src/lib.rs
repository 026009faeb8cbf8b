//! Pointwise δ-ε competence estimation for classifiers.
//!
//! The central type is [`estimator::AliceEstimator`], which combines an
//! in-distribution probability ([`ood`]), a calibrated transfer classifier
//! ([`transfer`]) and an error function ([`error_fn`]) into a score that
//! lower-bounds the probability that a classifier's error at a point is below
//! a tolerance δ. [`eval`] ranks those scores against ground-truth competence,
//! [`models`] provides small base classifiers, and [`data`] the datasets and
//! interchange formats.

pub mod data;
pub mod error;
pub mod error_fn;
pub mod estimator;
pub mod eval;
pub mod interchange;
pub mod linalg;
pub mod models;
pub mod ood;
pub mod optim;
pub mod persist;
pub mod transfer;
pub mod types;

pub use error::{AliceError, Result};
pub use error_fn::{delta_grid, is_delta_epsilon_competent, ErrorFunction, ErrorKind};
pub use estimator::{softmax_confidence, Ablations, AliceEstimator, TrustScoreEstimator};
pub use ood::{fit_gaussians, GaussianConfig, GaussianSet};
pub use transfer::{fit_logistic, TransferClassifier};
pub use types::{ClassId, LabelSpace, LabeledDataset, ProbabilityVector};
