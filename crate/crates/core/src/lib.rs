//! Multi-label learning with privacy-label units (PLUs).
//!
//! Sensitive labels are hidden at annotation time by pairing each of them
//! with a non-sensitive partner and recording only whether either label of
//! the pair is positive. This crate provides:
//!
//! * [`data`] and [`io`]: datasets, seeded splits, text formats;
//! * [`conceal`]: PLU schemes, concealment and a leak audit;
//! * [`model`]: a linear sigmoid classifier;
//! * [`losses`]: BCE, the assume-negative / assume-positive unit losses and
//!   the minimum-risk unit loss (PLUL), with analytic gradients;
//! * [`trainer`]: minibatch SGD with weight decay and step decay;
//! * [`metrics`]: ranking metrics and accuracy on concealed labels;
//! * [`convert`]: ARFF and LIBSVM importers.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod conceal;
pub mod convert;
pub mod data;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod trainer;

pub use conceal::{
    audit_no_leak, build_scheme, conceal, plu_truth, sample_privacy_indices, AuditReport,
    ConcealedDataset, PairingMode, PluScheme, PluUnit,
};
pub use data::{label_cardinality, split_dataset, MultiLabelDataset, SplitSpec, SyntheticSpec};
pub use error::{Error, Result};
pub use io::Format;
pub use losses::{LossMode, LossResult, Scenario, ScenarioCounts, ScenarioPreference};
pub use metrics::MetricsReport;
pub use model::{Checkpoint, LinearModel};
pub use scalar::{sigmoid, Scalar};
pub use trainer::{model_select, train, Candidate, TrainConfig, TrainHistory};

pub type Dataset = MultiLabelDataset<f64>;
pub type Dataset32 = MultiLabelDataset<f32>;
pub type Concealed = ConcealedDataset<f64>;
pub type Concealed32 = ConcealedDataset<f32>;
pub type Model = LinearModel<f64>;
pub type Model32 = LinearModel<f32>;
