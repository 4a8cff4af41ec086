//! Federated linear and logistic regression over horizontally partitioned
//! data.
//!
//! Data partners reduce their rows to weighted cross-product matrices and a
//! handful of scalar sums; a coordinator adds them up and iterates a weighted
//! least-squares solve until the coefficients settle. The numerical core is
//! generic over [`Scalar`] (`f32` or `f64`); the aliases below fix it to `f64`.

pub mod config;
pub mod coordinator;
pub mod dataset;
pub mod dist;
pub mod error;
pub mod fit_stats;
pub mod local;
pub mod matrix;
pub mod model;
pub mod oracle;
pub mod output;
pub mod partition;
pub mod protocol;
pub mod report;
pub mod scalar;
pub mod solver;
pub mod sscp;
pub mod summaries;
pub mod wire;
pub mod worker;

pub use config::{ModelSpec, WorkerConfig};
pub use error::{DraError, Result};
pub use model::Family;
pub use scalar::Scalar;

pub type Matrix = matrix::Matrix<f64>;
pub type Sscp = sscp::SscpMatrix<f64>;
pub type Dataset = dataset::AnalyticDataset<f64>;
pub type Design = model::Design<f64>;
pub type BinSummary = summaries::BinSummary<f64>;
pub type SiteStats = fit_stats::SiteStatContribution<f64>;
pub type IterationState = solver::IterationState<f64>;
pub type CovarianceBundle = solver::CovarianceBundle<f64>;

pub type Matrix32 = matrix::Matrix<f32>;
pub type Sscp32 = sscp::SscpMatrix<f32>;
