//! Analysis and simulation of a content-caching satellite-terrestrial network
//! where hybrid users share terrestrial spectrum with licensed primary users
//! and may fetch content over an overlaid D2D link.

pub mod analysis;
pub mod cache;
pub mod content;
pub mod ctmc;
pub mod experiment;
pub mod link;
pub mod metrics;
pub mod params;
pub mod report;
pub mod sim;
pub mod solver;

pub use analysis::{Analysis, AnalysisError, Analyzer};
pub use cache::{AvailabilityProfile, FixedCacheChain, LocalCacheChain};
pub use content::{ContentCatalog, SizeDistribution};
pub use ctmc::{ChannelConfig, ChannelState, Family, ModeWeights, RaModel};
pub use metrics::{MetricsReport, METRIC_COLUMNS};
pub use params::{load_config, ConfigError, SystemParams};
pub use sim::{PolicyKind, SimStats};
pub use solver::{RateMatrix, SolverError, SolverOptions, StationaryDistribution};
