//! Multi-label training with a mixed squared-error objective whose per-class
//! terms are reweighted toward a target class distribution.
//!
//! Modules, bottom-up:
//! * [`distribution`]: source/target class masses and adaptation weights;
//! * [`loss`]: the weighted loss, its exact and sampled gradients, hinge loss;
//! * [`net`]: a small MLP with manual backprop and RMSProp;
//! * [`metrics`]: classification, average, and balanced error;
//! * [`synthdata`]: latent-factor synthetic datasets and their file formats;
//! * [`trainer`]: joint and per-attribute training with model selection;
//! * [`experiment`]: seeded multi-arm comparisons.

pub mod distribution;
pub mod error;
pub mod experiment;
pub mod labels;
pub mod loss;
pub mod metrics;
pub mod net;
pub mod synthdata;
pub mod trainer;

pub use distribution::{AdaptationWeights, ClassDistribution, TargetEntry};
pub use error::{Error, Result};
pub use loss::LossBatch;
pub use metrics::{DegeneratePolicy, MetricsReport};
pub use net::{Activation, MlpModel, OptimizerConfig, OptimizerState};
pub use synthdata::{AttributeDataset, GeneratorConfig};
pub use trainer::{Objective, Predictor, SelectionMetric, TargetSpec, TrainConfig, TrainHistory};
