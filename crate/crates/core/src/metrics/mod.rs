//! Predictions, the yaw fluctuation score, the sweep protocol and the
//! frame-rate benchmark.

pub mod bench;
pub mod fluctuation;
pub mod prediction;
pub mod sweep;

pub use bench::{bench, default_capture, BenchConfig, BenchMode, BenchReport, BenchRun};
pub use fluctuation::{fluctuation_score, population_std, top_classes};
pub use prediction::{softmax, topk, PredictionSet, TopEntry};
pub use sweep::{model_matches, select_models, yaw_sweep, FluctuationReport, SweepConfig, ViewSpec};
