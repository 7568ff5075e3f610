//! Closed-form contention results and the per-device two-state Markov model.
//!
//! With `K′` contenders drawing uniformly over `R` access occasions, a given
//! contender collides with probability
//!
//! ```text
//! P_col = 1 − (1 − 1/R)^(K′−1)
//! ```
//!
//! and the expected number of singleton AOs is
//!
//! ```text
//! E[N_s] = K′·(1 − 1/R)^(K′−1) ≈ K′·e^(−K′/R)
//! ```
//!
//! These are used both as oracles for the simulator and as the analytic curves
//! the CLI exports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::RoundOutcome;

/// Per-attempt collision probability with `k_prime` contenders over `r_total` AOs.
pub fn collision_probability(k_prime: u32, r_total: u32) -> f64 {
    assert!(r_total >= 1, "r_total must be >= 1");
    if k_prime <= 1 {
        return 0.0;
    }
    let miss = 1.0 - 1.0 / f64::from(r_total);
    1.0 - miss.powi(k_prime as i32 - 1)
}

/// Expected successful contenders per round, exact form.
pub fn expected_successes(k_prime: u32, r_total: u32) -> f64 {
    expected_successes_real(f64::from(k_prime), r_total)
}

/// [`expected_successes`] for a real-valued contender count.
pub fn expected_successes_real(k_prime: f64, r_total: u32) -> f64 {
    assert!(r_total >= 1, "r_total must be >= 1");
    if k_prime <= 0.0 {
        return 0.0;
    }
    let miss = 1.0 - 1.0 / f64::from(r_total);
    if miss == 0.0 {
        // A single AO: only a lone contender succeeds.
        return if k_prime == 1.0 { 1.0 } else { 0.0 };
    }
    k_prime * miss.powf(k_prime - 1.0)
}

/// Exponential approximation `K′·e^(−K′/R)`.
pub fn expected_successes_approx(k_prime: u32, r_total: u32) -> f64 {
    let k = f64::from(k_prime);
    k * (-k / f64::from(r_total)).exp()
}

/// Expected successes when each of `k_avail` available devices attempts
/// independently with probability `q`.
///
/// Marginalizing the binomial contender count gives `K·q·(1 − q/R)^(K−1)`,
/// which peaks exactly at `q = R/K`.
pub fn expected_successes_thinned(k_avail: u32, q: f64, r_total: u32) -> f64 {
    if k_avail == 0 {
        return 0.0;
    }
    let k = f64::from(k_avail);
    k * q * (1.0 - q / f64::from(r_total)).powi(k_avail as i32 - 1)
}

/// Mean paging rounds until a given device reports, `N / E[N_s]`.
pub fn mean_paging_rounds(n: u32, e_ns: f64) -> Result<f64> {
    if !(e_ns > 0.0) {
        return Err(Error::invalid(
            "e_ns",
            format!("expected successes must be > 0, got {e_ns}"),
        ));
    }
    Ok(f64::from(n) / e_ns)
}

/// [`mean_paging_rounds`] with `+∞` as the no-progress sentinel.
pub fn mean_paging_rounds_or_inf(n: u32, e_ns: f64) -> f64 {
    mean_paging_rounds(n, e_ns).unwrap_or(f64::INFINITY)
}

/// Idle/RA transition matrix of one device. RA always returns to idle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub p11: f64,
    pub p12: f64,
    pub p21: f64,
    pub p22: f64,
}

impl TransitionMatrix {
    pub fn rows(&self) -> [[f64; 2]; 2] {
        [[self.p11, self.p12], [self.p21, self.p22]]
    }

    /// Long-run fraction of rounds spent idle and in RA.
    pub fn stationary(&self) -> (f64, f64) {
        // π₂ = π₁·p12 and π₁ + π₂ = 1.
        let ra = self.p12 / (1.0 + self.p12);
        (1.0 - ra, ra)
    }
}

/// `[[1 − p12, p12], [1, 0]]`, where `p12 = p_e·q` is the per-round attempt
/// probability of an idle device.
pub fn make_transition_matrix(p12: f64) -> Result<TransitionMatrix> {
    if !(0.0..=1.0).contains(&p12) {
        return Err(Error::invalid("p12", format!("must lie in [0, 1], got {p12}")));
    }
    Ok(TransitionMatrix {
        p11: 1.0 - p12,
        p12,
        p21: 1.0,
        p22: 0.0,
    })
}

/// Closed-form indicators at one `(K′, R)` point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalyticPoint {
    pub k_prime: u32,
    pub r_total: u32,
    pub p_col: f64,
    pub e_ns: f64,
    pub e_ns_approx: f64,
    /// `N / E[N_s]` with `N = k_prime`.
    pub mean_rounds: f64,
}

pub fn analytic_point(k_prime: u32, r_total: u32) -> AnalyticPoint {
    let e_ns = expected_successes(k_prime, r_total);
    AnalyticPoint {
        k_prime,
        r_total,
        p_col: collision_probability(k_prime.max(1), r_total),
        e_ns,
        e_ns_approx: expected_successes_approx(k_prime, r_total),
        mean_rounds: mean_paging_rounds_or_inf(k_prime, e_ns),
    }
}

/// One paging round as seen by the rate estimator: the outcome plus which
/// devices were eligible at the paging instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub outcome: RoundOutcome,
    pub eligible: Vec<bool>,
}

/// Per-device empirical rates measured over a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalRates {
    pub rounds: u64,
    pub eligible_rounds: Vec<u64>,
    pub attempt_rounds: Vec<u64>,
    pub p_e_hat: Vec<f64>,
    pub p12_hat: Vec<f64>,
}

impl EmpiricalRates {
    /// Population-pooled `(p_e_hat, p12_hat)`.
    pub fn pooled(&self) -> (f64, f64) {
        let device_rounds = self.rounds as f64 * self.p_e_hat.len() as f64;
        let e: u64 = self.eligible_rounds.iter().sum();
        let a: u64 = self.attempt_rounds.iter().sum();
        (e as f64 / device_rounds, a as f64 / device_rounds)
    }
}

/// Estimates, for every device, the fraction of paging rounds in which it was
/// eligible (`p_e`) and in which it attempted (`p12`). Each round starts idle,
/// so every round counts as an idle-state round.
pub fn measure_empirical_rates(trace: &[TraceEntry]) -> Result<EmpiricalRates> {
    let first = trace
        .first()
        .ok_or_else(|| Error::invalid("trace", "must contain at least one round"))?;
    let n = first.eligible.len();
    let mut eligible_rounds = vec![0u64; n];
    let mut attempt_rounds = vec![0u64; n];
    for (i, entry) in trace.iter().enumerate() {
        if entry.eligible.len() != n {
            return Err(Error::invalid(
                "trace",
                format!("round {i} has {} devices, expected {n}", entry.eligible.len()),
            ));
        }
        for (dev, &e) in entry.eligible.iter().enumerate() {
            eligible_rounds[dev] += u64::from(e);
        }
        for &dev in &entry.outcome.attempted {
            let slot = attempt_rounds.get_mut(dev as usize).ok_or_else(|| {
                Error::invalid("trace", format!("round {i}: device {dev} out of range"))
            })?;
            *slot += 1;
        }
    }
    let rounds = trace.len() as u64;
    let ratio = |c: &u64| *c as f64 / rounds as f64;
    Ok(EmpiricalRates {
        rounds,
        p_e_hat: eligible_rounds.iter().map(ratio).collect(),
        p12_hat: attempt_rounds.iter().map(ratio).collect(),
        eligible_rounds,
        attempt_rounds,
    })
}
