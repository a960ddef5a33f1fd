//! Probabilistic intraday PV power forecasting engine.
//!
//! The crate trains an autoregressive LSTM encoder-decoder with a positive
//! (zero-truncated) Gaussian mixture output on 72h windows of per-system
//! power series, using deterministic physical-model forecasts as covariates.
//! A synthetic fleet generator stands in for real SCADA + NWP feeds, a
//! leakage-safe day-grouped splitter builds train/val/test partitions, and
//! the metrics module scores point and probabilistic forecasts (nMAE, nRMSE,
//! skill vs. the physical baseline, CRPS) with night steps masked out.

pub mod data;
pub mod distributions;
pub mod forecaster;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod synth;

pub use data::{PVSystemDescriptor, RawSeries, SampleWindow, SplitAssignment};
pub use distributions::{DistributionParams, Family, ProjectionHead};
pub use forecaster::{ForecastResult, ModelArtifact, ModelConfig};
pub use metrics::MetricsReport;
pub use net::NetworkWeights;
pub use synth::{FleetSpec, WeatherParams};
