//! Access-probability policies and the reader-side state they use.
//!
//! Every paging message carries an access probability `q`; an eligible device
//! attempts random access with probability `q`. The policies differ only in how
//! the reader picks `q`:
//!
//! | policy         | `q`                        |
//! |----------------|----------------------------|
//! | naive          | `1`                        |
//! | static ALOHA   | `min(1, Y·R / N)`          |
//! | EH-aware       | `min(1, Y·R / K̂)`         |
//! | ideal          | `1`, then a genie schedule |
//!
//! `K̂` is the number of paged devices whose predicted voltage clears `v_min`.
//! The reader predicts each device's voltage by running the capacitor model
//! forward, in the sleep state, from the device's last successful report.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::OperationalState;
use crate::energy::{voltage_after_profile, CapacitorState, HarvestProfile, PowerProfile};
use crate::error::{Error, Result};
use crate::protocol::AccessOccasionGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Naive,
    StaticAloha,
    EhAware,
    Ideal,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [
        PolicyKind::Naive,
        PolicyKind::StaticAloha,
        PolicyKind::EhAware,
        PolicyKind::Ideal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::Naive => "naive",
            PolicyKind::StaticAloha => "static_aloha",
            PolicyKind::EhAware => "eh_aware",
            PolicyKind::Ideal => "ideal",
        }
    }

    /// Whether contention is replaced by the genie scheduler.
    pub fn is_ideal(self) -> bool {
        self == PolicyKind::Ideal
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|p| p.as_str() == s || p.as_str().replace('_', "-") == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown policy `{s}` (expected naive, static_aloha, eh_aware or ideal)"
                ))
            })
    }
}

/// What the reader assumes about a device it has never heard from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderPrior {
    /// Counted available: predicted voltage is `v_min`.
    #[default]
    Optimistic,
    /// Counted unavailable: predicted voltage is 0 V.
    Pessimistic,
}

/// Reader-side memory of one device, updated only from successful reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReaderEntry {
    pub capacitance: f64,
    pub last_reported_voltage: Option<f64>,
    pub last_report_time: Option<f64>,
    pub last_attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReaderState {
    pub entries: Vec<ReaderEntry>,
    pub prior: ReaderPrior,
    /// Time of the latest paging round (s).
    pub clock: f64,
}

impl ReaderState {
    /// A reader that knows each device's capacitance but has no reports yet.
    pub fn new(capacitances: impl IntoIterator<Item = f64>, prior: ReaderPrior) -> Self {
        Self {
            entries: capacitances
                .into_iter()
                .map(|capacitance| ReaderEntry {
                    capacitance,
                    last_reported_voltage: None,
                    last_report_time: None,
                    last_attempt_count: 0,
                })
                .collect(),
            prior,
            clock: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Predicted capacitor voltage of `device_id` at time `now`.
pub fn predict_voltage(
    reader: &ReaderState,
    device_id: u32,
    profile: &PowerProfile,
    harvest: &HarvestProfile,
    now: f64,
) -> f64 {
    let entry = &reader.entries[device_id as usize];
    match (entry.last_reported_voltage, entry.last_report_time) {
        (Some(voltage), Some(t)) => {
            debug_assert!(now >= t, "prediction time {now} precedes report {t}");
            let cap = CapacitorState {
                voltage,
                capacitance: entry.capacitance,
            };
            voltage_after_profile(
                &cap,
                profile,
                OperationalState::Idle,
                harvest,
                t,
                (now - t).max(0.0),
            )
        }
        _ => match reader.prior {
            ReaderPrior::Optimistic => profile.v_min,
            ReaderPrior::Pessimistic => 0.0,
        },
    }
}

/// Number of predictions at or above `v_min`.
pub fn count_available(predicted: &[f64], v_min: f64) -> u32 {
    predicted.iter().filter(|&&v| v >= v_min).count() as u32
}

/// `K̂`: paged devices whose predicted voltage clears `v_min` at `now`.
pub fn estimate_available(
    reader: &ReaderState,
    paged_group: &[u32],
    profile: &PowerProfile,
    harvest: &HarvestProfile,
    now: f64,
) -> u32 {
    paged_group
        .iter()
        .filter(|&&id| predict_voltage(reader, id, profile, harvest, now) >= profile.v_min)
        .count() as u32
}

/// Access probability broadcast in the paging message.
///
/// A zero estimate under the EH-aware policy maps to `q = 1`.
pub fn access_probability(
    kind: PolicyKind,
    grid: &AccessOccasionGrid,
    n_total: u32,
    k_hat: u32,
) -> f64 {
    let aos = f64::from(grid.total());
    match kind {
        PolicyKind::Naive | PolicyKind::Ideal => 1.0,
        PolicyKind::StaticAloha => (aos / f64::from(n_total.max(1))).min(1.0),
        PolicyKind::EhAware => {
            if k_hat == 0 {
                1.0
            } else {
                (aos / f64::from(k_hat)).min(1.0)
            }
        }
    }
}

/// Keeps each eligible device independently with probability `q`.
pub fn attempt_filter<R: Rng + ?Sized>(eligible: &[u32], q: f64, rng: &mut R) -> Vec<u32> {
    assert!((0.0..=1.0).contains(&q), "q must lie in [0, 1], got {q}");
    if q >= 1.0 {
        return eligible.to_vec();
    }
    if q <= 0.0 {
        return Vec::new();
    }
    eligible.iter().copied().filter(|_| rng.gen_bool(q)).collect()
}

/// Stores a successful report.
pub fn record_report(
    reader: &mut ReaderState,
    device_id: u32,
    reported_voltage: f64,
    attempt_count: u32,
    now: f64,
) {
    let entry = &mut reader.entries[device_id as usize];
    entry.last_reported_voltage = Some(reported_voltage);
    entry.last_report_time = Some(now);
    entry.last_attempt_count = attempt_count;
    reader.clock = reader.clock.max(now);
}
