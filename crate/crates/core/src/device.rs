//! Per-device state and energy accounting.
//!
//! A device is either idle (monitoring for paging) or in random access. The
//! third physical mode, "off", is not a state here: a device whose voltage is
//! below `v_min` at the paging instant is simply not eligible.

use serde::{Deserialize, Serialize};

use crate::energy::{voltage_after_profile, CapacitorState, HarvestProfile, PowerProfile};
use crate::error::{Error, Result};

/// Sub-phases of one random-access attempt, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RaPhase {
    SenseI2c,
    SenseMeas,
    Tx,
}

impl RaPhase {
    pub const SEQUENCE: [RaPhase; 3] = [RaPhase::SenseI2c, RaPhase::SenseMeas, RaPhase::Tx];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperationalState {
    Idle,
    Ra(RaPhase),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRecord {
    pub id: u32,
    pub cap: CapacitorState,
    pub op_state: OperationalState,
    pub last_report_time: Option<f64>,
    pub last_reported_voltage: Option<f64>,
    /// MSG1 transmissions since the last successful report.
    pub attempt_count: u32,
}

impl DeviceRecord {
    pub fn new(id: u32, cap: CapacitorState) -> Self {
        Self {
            id,
            cap,
            op_state: OperationalState::Idle,
            last_report_time: None,
            last_reported_voltage: None,
            attempt_count: 0,
        }
    }

    pub fn voltage(&self) -> f64 {
        self.cap.voltage
    }

    /// Bookkeeping after a successful report at time `now`.
    pub fn mark_reported(&mut self, now: f64) {
        self.last_report_time = Some(now);
        self.last_reported_voltage = Some(self.cap.voltage);
        self.attempt_count = 0;
    }
}

/// `V ≥ v_min`, boundary inclusive.
pub fn is_eligible(dev: &DeviceRecord, v_min: f64) -> bool {
    dev.cap.voltage >= v_min
}

/// Advances an idle device by `dt` seconds starting at absolute time `t0`.
pub fn advance_idle(
    dev: &DeviceRecord,
    harvest: &HarvestProfile,
    profile: &PowerProfile,
    t0: f64,
    dt: f64,
) -> DeviceRecord {
    let mut next = dev.clone();
    advance_idle_in_place(&mut next, harvest, profile, t0, dt);
    next
}

pub(crate) fn advance_idle_in_place(
    dev: &mut DeviceRecord,
    harvest: &HarvestProfile,
    profile: &PowerProfile,
    t0: f64,
    dt: f64,
) {
    debug_assert_eq!(dev.op_state, OperationalState::Idle);
    dev.cap.voltage =
        voltage_after_profile(&dev.cap, profile, OperationalState::Idle, harvest, t0, dt);
}

/// Runs one sense-and-transmit sequence starting at `now`.
///
/// Eligibility is checked once, on entry. The attempt always completes, even if
/// the voltage dips below `v_min` during it.
pub fn perform_ra_attempt(
    dev: &DeviceRecord,
    harvest: &HarvestProfile,
    profile: &PowerProfile,
    now: f64,
) -> Result<DeviceRecord> {
    let mut next = dev.clone();
    perform_ra_attempt_in_place(&mut next, harvest, profile, now)?;
    Ok(next)
}

pub(crate) fn perform_ra_attempt_in_place(
    dev: &mut DeviceRecord,
    harvest: &HarvestProfile,
    profile: &PowerProfile,
    now: f64,
) -> Result<()> {
    if !is_eligible(dev, profile.v_min) {
        return Err(Error::Ineligible {
            id: dev.id,
            voltage: dev.cap.voltage,
            v_min: profile.v_min,
        });
    }
    let mut t = now;
    for phase in RaPhase::SEQUENCE {
        let state = OperationalState::Ra(phase);
        dev.op_state = state;
        let dt = profile.phase_duration(phase);
        dev.cap.voltage = voltage_after_profile(&dev.cap, profile, state, harvest, t, dt);
        t += dt;
    }
    dev.attempt_count += 1;
    dev.op_state = OperationalState::Idle;
    Ok(())
}
