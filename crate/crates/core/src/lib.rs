//! Monte Carlo link-level simulator for cell-free (CF) and user-centric (UC)
//! massive MIMO at millimeter-wave frequencies.
//!
//! The crate is organized along the signal chain of a single TDD frame:
//!
//! - [`scenario`]: random deployment, the shared scatterer field and ellipse gating
//! - [`channel`]: clustered multiuser channel synthesis with UMi path loss
//! - [`training`]: uplink pilots and least-squares effective-channel estimation
//! - [`beamform`]: 0-1 MS combiner, UC association, ZF and hybrid precoding
//! - [`link`]: downlink/uplink effective links and achievable rates
//! - [`harness`]: trials, power sweeps, aggregation and result files
//!
//! The interchangeable pieces (serving scheme, CSI source, beamforming
//! architecture) live behind traits in [`strategy`] and are looked up by name
//! from a [`strategy::StrategyRegistry`].

pub mod beamform;
pub mod channel;
pub mod config;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod link;
pub mod output;
pub mod scenario;
pub mod seed;
pub mod strategy;
pub mod training;

pub use config::{PathlossProfile, Preset, SimConfig};
pub use error::{Result, SimError};
pub use harness::{run_trial, sweep, SweepResult, SweepRow, TrialOutcome};
pub use strategy::StrategyRegistry;
