//! Simulator and closed-form analytics for paging-triggered contention-based
//! random access in energy-harvesting Ambient-IoT networks.
//!
//! A reader pages a population of batteryless devices. Each device runs off a
//! capacitor charged by a weak harvesting current; it may only join the random
//! access procedure when its voltage clears a threshold. Devices that do join
//! pick one of `Y·R` access occasions uniformly at random, and an occasion
//! chosen by exactly one device yields a successful report.
//!
//! ```
//! use aiot_cbra::analytics::{collision_probability, expected_successes};
//!
//! // Ten contenders on eight occasions.
//! let p = collision_probability(10, 8);
//! assert!((p - 0.6994).abs() < 1e-4);
//! assert!((expected_successes(10, 8) - 3.006).abs() < 1e-3);
//! ```
//!
//! The [`engine`] module runs the full time-stepped model; [`sweep`] drives
//! it over grids of `(policy, N, R)` and writes the result tables.

pub mod analytics;
pub mod config;
pub mod device;
pub mod energy;
pub mod engine;
pub mod error;
pub mod policy;
pub mod protocol;
pub mod rng;
pub mod stats;
pub mod sweep;

pub use analytics::{
    collision_probability, expected_successes, expected_successes_approx, make_transition_matrix,
    mean_paging_rounds, measure_empirical_rates,
};
pub use device::{advance_idle, is_eligible, perform_ra_attempt, DeviceRecord, OperationalState, RaPhase};
pub use energy::{equivalent_resistance, voltage_after, CapacitorState, HarvestProfile, PowerProfile};
pub use engine::{run_experiment, run_replica, MetricsReport, SimConfig};
pub use error::{Error, Result};
pub use policy::{access_probability, PolicyKind};
pub use protocol::AccessOccasionGrid;
pub use stats::Estimate;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/contention.md")]
    mod contention {}
    #[doc = include_str!("../../../book/src/policies.md")]
    mod policies {}
    #[doc = include_str!("../../../book/src/engine.md")]
    mod engine {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/figures.md")]
    mod figures {}
    #[doc = include_str!("../../../book/src/findings.md")]
    mod findings {}
}
