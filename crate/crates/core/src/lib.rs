//! Surplus allocation and settlement for renewable energy communities.
//!
//! Each interval, prosumers' surplus (generation above own consumption) is
//! shared with members that still have demand, either feeder by feeder first
//! ([`Strategy::FeederAware`]) or community-wide ([`Strategy::FeederAgnostic`]),
//! under equal, proportional or rank-based rules that are fixed for the year
//! or recomputed every interval. Settlement prices the result against a
//! no-community baseline.
//!
//! ```
//! use ecshare_core::{generate_synthetic, Combination, Execution, Scenario, SyntheticSpec};
//!
//! let (profiles, config) = generate_synthetic(&SyntheticSpec::reference(42, 1)).unwrap();
//! let scenario = Scenario::new(&config, &profiles).unwrap();
//! let summary = scenario.simulate(config.combination(), Execution::default()).unwrap();
//! assert!(summary.shared() <= summary.max_shareable + 1e-9);
//! ```

pub mod allocation;
pub mod coefficients;
pub mod engine;
pub mod ingestion;
pub mod model;
pub mod reporting;
pub mod settlement;
pub mod sum;

pub use engine::{Execution, Scenario, SimulationSummary};
pub use ingestion::{generate_synthetic, load_timeseries, SyntheticSpec};
pub use model::{
    AllocationOutcome, Combination, Community, CommunityConfig, FeederId, Method, NetPosition, Participant,
    ParticipantId, Role, Scheme, Strategy, Tariff,
};
