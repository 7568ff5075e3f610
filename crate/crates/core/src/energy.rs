//! Capacitor energy store.
//!
//! Every load the device presents (MCU, sensor, radio, leakage) is lumped into
//! one equivalent resistance per operational state,
//!
//! ```text
//! R_eq = V_supply / I_c
//! ```
//!
//! and the capacitor relaxes exponentially toward `I_h · R_eq` while a constant
//! harvest current `I_h` flows in:
//!
//! ```text
//! V(dt) = I_h·R_eq·(1 − e^(−dt/(R_eq·C))) + V0·e^(−dt/(R_eq·C))
//! ```
//!
//! The result is clamped to `[0, v_max]`. Because every trajectory is monotone,
//! clamping the end point gives the same value as clamping continuously.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::device::{OperationalState, RaPhase};
use crate::error::{Error, Result};

/// Voltage and capacitance of one device's storage capacitor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacitorState {
    /// Volts, always within `[0, v_max]`.
    pub voltage: f64,
    /// Farads. Fixed for the lifetime of a run.
    pub capacitance: f64,
}

impl CapacitorState {
    pub fn new(voltage: f64, capacitance: f64) -> Result<Self> {
        if !(capacitance.is_finite() && capacitance > 0.0) {
            return Err(Error::invalid("capacitance", format!("must be > 0, got {capacitance}")));
        }
        if !(voltage.is_finite() && voltage >= 0.0) {
            return Err(Error::invalid("voltage", format!("must be >= 0, got {voltage}")));
        }
        Ok(Self {
            voltage,
            capacitance,
        })
    }

    /// Stored energy in joules, `½·C·V²`.
    pub fn stored_energy(&self) -> f64 {
        stored_energy(self)
    }
}

/// Per-state load currents, supply voltage and thresholds of the device hardware.
///
/// Defaults are the reference hardware: an STM32L496 MCU driving an SHT30 sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerProfile {
    /// V_supply (V).
    pub supply_voltage: f64,
    /// Eligibility threshold (V).
    pub v_min: f64,
    /// Upper clamp of the capacitor voltage (V).
    pub v_max: f64,
    /// Capacitor leakage I_ℓ (A), added to every state's load.
    pub leakage_current: f64,
    /// Sleep draw including the wake-up receiver (A).
    pub sleep_current: f64,
    /// MCU active draw while sensing (A).
    pub mcu_active_current: f64,
    /// Radio draw while transmitting MSG1 (A).
    pub tx_current: f64,
    /// Sensor I²C transaction time (s).
    pub sensor_i2c_time: f64,
    /// Sensor measurement time (s).
    pub sensor_meas_time: f64,
    /// MSG1 transmit duration (s).
    pub tx_time: f64,
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self {
            supply_voltage: 3.3,
            v_min: 1.8,
            v_max: 3.3,
            leakage_current: 0.03e-3,
            sleep_current: 0.02e-3,
            mcu_active_current: 0.091e-3,
            tx_current: 20.65e-3,
            sensor_i2c_time: 0.000325,
            sensor_meas_time: 0.0055,
            tx_time: 0.005,
        }
    }
}

impl PowerProfile {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("supply_voltage", self.supply_voltage),
            ("leakage_current", self.leakage_current),
            ("sleep_current", self.sleep_current),
            ("mcu_active_current", self.mcu_active_current),
            ("tx_current", self.tx_current),
            ("sensor_i2c_time", self.sensor_i2c_time),
            ("sensor_meas_time", self.sensor_meas_time),
            ("tx_time", self.tx_time),
            ("v_max", self.v_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("must be > 0, got {value}")));
            }
        }
        if !(self.v_min > 0.0 && self.v_min < self.supply_voltage) {
            return Err(Error::invalid(
                "v_min",
                format!("must lie in (0, supply_voltage), got {}", self.v_min),
            ));
        }
        if self.v_max < self.v_min {
            return Err(Error::invalid(
                "v_max",
                format!("must be >= v_min, got {}", self.v_max),
            ));
        }
        Ok(())
    }

    /// Total load current I_c of a state, leakage included.
    pub fn load_current(&self, state: OperationalState) -> f64 {
        let active = match state {
            OperationalState::Idle => self.sleep_current,
            OperationalState::Ra(RaPhase::SenseI2c) | OperationalState::Ra(RaPhase::SenseMeas) => {
                self.mcu_active_current
            }
            OperationalState::Ra(RaPhase::Tx) => self.tx_current,
        };
        active + self.leakage_current
    }

    /// Duration of one RA sub-phase.
    pub fn phase_duration(&self, phase: RaPhase) -> f64 {
        match phase {
            RaPhase::SenseI2c => self.sensor_i2c_time,
            RaPhase::SenseMeas => self.sensor_meas_time,
            RaPhase::Tx => self.tx_time,
        }
    }
}

/// Equivalent load resistance `V_supply / I_c` of a state, in ohms.
pub fn equivalent_resistance(profile: &PowerProfile, state: OperationalState) -> Result<f64> {
    resistance_for_load(profile.supply_voltage, profile.load_current(state))
}

pub(crate) fn resistance_for_load(supply_voltage: f64, load_current: f64) -> Result<f64> {
    if !(load_current > 0.0) {
        return Err(Error::NonPositiveLoad(load_current));
    }
    Ok(supply_voltage / load_current)
}

/// Capacitor voltage after spending `dt` seconds in `state` with a constant
/// harvest current.
///
/// # Panics
///
/// If `dt` or `harvest_current` is negative or not finite, or the profile has a
/// non-positive load in `state` (a validated [`PowerProfile`] never does).
pub fn voltage_after(
    cap: &CapacitorState,
    profile: &PowerProfile,
    state: OperationalState,
    harvest_current: f64,
    dt: f64,
) -> f64 {
    assert!(dt >= 0.0 && dt.is_finite(), "dt must be finite and >= 0, got {dt}");
    assert!(
        harvest_current >= 0.0 && harvest_current.is_finite(),
        "harvest current must be finite and >= 0, got {harvest_current}"
    );
    let r_eq = equivalent_resistance(profile, state).expect("validated power profile");
    relax(cap.voltage, cap.capacitance, r_eq, harvest_current, dt, profile.v_max)
}

#[inline]
fn relax(v0: f64, capacitance: f64, r_eq: f64, harvest_current: f64, dt: f64, v_max: f64) -> f64 {
    if dt == 0.0 {
        return v0;
    }
    let x = dt / (r_eq * capacitance);
    let decay = (-x).exp();
    // -expm1(-x) keeps 1 - e^(-x) accurate for short intervals.
    let charged = harvest_current * r_eq * -(-x).exp_m1();
    (charged + v0 * decay).clamp(0.0, v_max)
}

/// Voltage after `dt` seconds in `state` starting at absolute time `t0`, with
/// the harvest current taken from a profile.
///
/// Trace profiles are integrated exactly, piece by piece, between their sample
/// times.
pub fn voltage_after_profile(
    cap: &CapacitorState,
    profile: &PowerProfile,
    state: OperationalState,
    harvest: &HarvestProfile,
    t0: f64,
    dt: f64,
) -> f64 {
    match harvest {
        HarvestProfile::Constant { current } => voltage_after(cap, profile, state, *current, dt),
        HarvestProfile::Trace(trace) => {
            let mut cur = *cap;
            for (seg_dt, current) in trace.segments(t0, t0 + dt) {
                cur.voltage = voltage_after(&cur, profile, state, current, seg_dt);
            }
            cur.voltage
        }
    }
}

/// Stored energy `½·C·V²` in joules.
pub fn stored_energy(cap: &CapacitorState) -> f64 {
    0.5 * cap.capacitance * cap.voltage * cap.voltage
}

/// Source of the harvest current I_h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HarvestProfile {
    /// The same current at every instant.
    Constant { current: f64 },
    /// Step-hold samples.
    Trace(HarvestTrace),
}

impl Default for HarvestProfile {
    fn default() -> Self {
        HarvestProfile::Constant { current: 0.1e-3 }
    }
}

impl HarvestProfile {
    pub fn constant(current: f64) -> Result<Self> {
        if !(current.is_finite() && current >= 0.0) {
            return Err(Error::invalid(
                "harvest.current",
                format!("must be finite and >= 0, got {current}"),
            ));
        }
        Ok(HarvestProfile::Constant { current })
    }

    pub fn trace(samples: Vec<(f64, f64)>) -> Result<Self> {
        HarvestTrace::new(samples).map(HarvestProfile::Trace)
    }

    /// Current in effect at time `t`.
    pub fn current_at(&self, t: f64) -> f64 {
        harvest_current_at(self, t)
    }
}

/// Harvest current in effect at time `t` (step-hold for traces).
pub fn harvest_current_at(profile: &HarvestProfile, t: f64) -> f64 {
    match profile {
        HarvestProfile::Constant { current } => *current,
        HarvestProfile::Trace(trace) => trace.current_at(t),
    }
}

/// Time-ordered harvest samples, read with step-hold: a sample's current holds
/// from its timestamp until the next sample. Before the first sample the first
/// current applies; after the last, the last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct HarvestTrace {
    times: Vec<f64>,
    currents: Vec<f64>,
}

impl HarvestTrace {
    pub fn new(samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Trace("trace has no samples".into()));
        }
        let mut times = Vec::with_capacity(samples.len());
        let mut currents = Vec::with_capacity(samples.len());
        for (i, (t, c)) in samples.into_iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Trace(format!("sample {i}: time {t} is not finite")));
            }
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::Trace(format!("sample {i}: current {c} must be >= 0")));
            }
            if let Some(&prev) = times.last() {
                if t <= prev {
                    return Err(Error::Trace(format!(
                        "sample {i}: time {t} is not after previous time {prev}"
                    )));
                }
            }
            times.push(t);
            currents.push(c);
        }
        Ok(Self { times, currents })
    }

    /// Reads a two-column CSV with a `time_s,current_A` header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let names: Vec<&str> = headers.iter().collect();
        if names != ["time_s", "current_A"] {
            return Err(Error::Trace(format!(
                "expected header `time_s,current_A`, found `{}`",
                names.join(",")
            )));
        }
        let mut samples = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let record = record?;
            let line = i + 2;
            let parse = |idx: usize| -> Result<f64> {
                let field = record.get(idx).unwrap_or("");
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Trace(format!("line {line}: `{field}`: {e}")))
            };
            samples.push((parse(0)?, parse(1)?));
        }
        Self::new(samples)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Trace(format!("{}: {e}", path.display())))?;
        Self::from_csv_reader(file)
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.times.iter().copied().zip(self.currents.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn index_at(&self, t: f64) -> usize {
        // Last sample with time <= t, or the first sample when t precedes it.
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn current_at(&self, t: f64) -> f64 {
        self.currents[self.index_at(t)]
    }

    /// Splits `[t0, t1]` at sample boundaries into `(duration, current)` pieces.
    pub fn segments(&self, t0: f64, t1: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mut idx = self.index_at(t0);
        let mut start = t0;
        std::iter::from_fn(move || {
            if start >= t1 {
                return None;
            }
            let end = match self.times.get(idx + 1) {
                Some(&next) if next < t1 => next,
                _ => t1,
            };
            let piece = (end - start, self.currents[idx]);
            start = end;
            idx += 1;
            Some(piece)
        })
    }
}

impl TryFrom<Vec<(f64, f64)>> for HarvestTrace {
    type Error = Error;

    fn try_from(samples: Vec<(f64, f64)>) -> Result<Self> {
        Self::new(samples)
    }
}

impl From<HarvestTrace> for Vec<(f64, f64)> {
    fn from(trace: HarvestTrace) -> Self {
        trace.samples().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SLEEP: OperationalState = OperationalState::Idle;
    const TX: OperationalState = OperationalState::Ra(RaPhase::Tx);

    /// Forward-Euler integration of dV/dt = (I_h − V/R_eq)/C with per-step clamp.
    fn euler(v0: f64, c: f64, r_eq: f64, i_h: f64, dt: f64, v_max: f64) -> f64 {
        let h = 1e-3_f64.min(dt.max(1e-12));
        let steps = (dt / h).ceil() as usize;
        let h = if steps == 0 { 0.0 } else { dt / steps as f64 };
        let mut v = v0;
        for _ in 0..steps {
            v += h * (i_h - v / r_eq) / c;
            v = v.clamp(0.0, v_max);
        }
        v
    }

    #[test]
    fn equivalent_resistance_uses_leakage_inclusive_load() {
        let p = PowerProfile::default();
        let sleep = equivalent_resistance(&p, SLEEP).unwrap();
        assert!((sleep - 66_000.0).abs() < 1e-6, "{sleep}");
        let tx = equivalent_resistance(&p, TX).unwrap();
        assert!((tx - 3.3 / 20.68e-3).abs() < 1e-9);
        assert!((tx - 159.57).abs() < 0.01);
    }

    #[test]
    fn zero_load_is_rejected() {
        assert!(matches!(resistance_for_load(3.3, 0.0), Err(Error::NonPositiveLoad(_))));
        assert!(matches!(resistance_for_load(3.3, -1e-3), Err(Error::NonPositiveLoad(_))));
        let p = PowerProfile {
            sleep_current: 0.0,
            leakage_current: 0.0,
            ..PowerProfile::default()
        };
        assert!(equivalent_resistance(&p, SLEEP).is_err());
        assert!(p.validate().is_err());
    }

    #[test]
    fn zero_interval_is_identity() {
        let p = PowerProfile::default();
        let cap = CapacitorState::new(2.345, 3.0).unwrap();
        for state in [SLEEP, TX, OperationalState::Ra(RaPhase::SenseMeas)] {
            assert_eq!(voltage_after(&cap, &p, state, 1e-3, 0.0), 2.345);
        }
    }

    #[test]
    fn long_interval_reaches_asymptote_or_clamp() {
        let p = PowerProfile::default();
        let cap = CapacitorState::new(0.5, 1.0).unwrap();
        // I_h·R_eq = 6.6 V, above the 3.3 V clamp.
        assert_eq!(voltage_after(&cap, &p, SLEEP, 0.1e-3, 1e9), 3.3);
        // I_h·R_eq = 1.32 V, below the clamp.
        let v = voltage_after(&cap, &p, SLEEP, 0.02e-3, 1e9);
        assert!((v - 1.32).abs() < 1e-12, "{v}");
        let unclamped = PowerProfile {
            v_max: 100.0,
            ..p
        };
        let v = voltage_after(&cap, &unclamped, SLEEP, 0.1e-3, 1e9);
        assert!((v - 6.6).abs() < 1e-12, "{v}");
    }

    #[test]
    fn charging_example_matches_euler() {
        let p = PowerProfile::default();
        let cap = CapacitorState::new(2.0, 1.0).unwrap();
        let v = voltage_after(&cap, &p, SLEEP, 0.1e-3, 5.0);
        let oracle = euler(2.0, 1.0, 66_000.0, 0.1e-3, 5.0, 3.3);
        assert!((v - oracle).abs() < 1e-4);
        // Frozen from the Euler oracle: 2.000348...
        assert!((v - 2.00035).abs() < 1e-5, "{v}");
    }

    #[test]
    fn stored_energy_examples() {
        assert_eq!(stored_energy(&CapacitorState::new(3.0, 2.0).unwrap()), 9.0);
        assert_eq!(stored_energy(&CapacitorState::new(0.0, 1.0).unwrap()), 0.0);
        let e = stored_energy(&CapacitorState::new(1.8, 10.0).unwrap());
        assert!((e - 16.2).abs() < 1e-12);
    }

    #[test]
    fn capacitor_rejects_bad_values() {
        assert!(CapacitorState::new(1.0, 0.0).is_err());
        assert!(CapacitorState::new(-0.1, 1.0).is_err());
        assert!(CapacitorState::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn harvest_lookup_is_step_hold() {
        let c = HarvestProfile::constant(0.1e-3).unwrap();
        assert_eq!(harvest_current_at(&c, 12_345.0), 0.1e-3);

        let tr = HarvestProfile::trace(vec![(0.0, 0.1e-3), (100.0, 0.2e-3)]).unwrap();
        assert_eq!(harvest_current_at(&tr, 50.0), 0.1e-3);
        assert_eq!(harvest_current_at(&tr, 100.0), 0.2e-3);
        assert_eq!(harvest_current_at(&tr, 1e6), 0.2e-3);
        assert_eq!(harvest_current_at(&tr, 0.0), 0.1e-3);
    }

    #[test]
    fn trace_validation() {
        assert!(HarvestTrace::new(vec![]).is_err());
        assert!(HarvestTrace::new(vec![(0.0, 1e-4), (0.0, 2e-4)]).is_err());
        assert!(HarvestTrace::new(vec![(1.0, 1e-4), (0.5, 2e-4)]).is_err());
        assert!(HarvestTrace::new(vec![(0.0, -1e-4)]).is_err());
        assert!(HarvestProfile::constant(-1.0).is_err());
    }

    #[test]
    fn trace_csv_requires_header() {
        let ok = "time_s,current_A\n0,0.0001\n100,0.0002\n";
        let trace = HarvestTrace::from_csv_reader(ok.as_bytes()).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace.current_at(150.0), 0.0002);

        let missing = "0,0.0001\n100,0.0002\n";
        assert!(HarvestTrace::from_csv_reader(missing.as_bytes()).is_err());
        let garbage = "time_s,current_A\n0,abc\n";
        let err = HarvestTrace::from_csv_reader(garbage.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn trace_segments_cover_interval() {
        let trace = HarvestTrace::new(vec![(0.0, 1.0), (10.0, 2.0), (20.0, 3.0)]).unwrap();
        let segs: Vec<_> = trace.segments(5.0, 25.0).collect();
        assert_eq!(segs, vec![(5.0, 1.0), (10.0, 2.0), (5.0, 3.0)]);
        let segs: Vec<_> = trace.segments(12.0, 14.0).collect();
        assert_eq!(segs, vec![(2.0, 2.0)]);
        assert_eq!(trace.segments(3.0, 3.0).count(), 0);
    }

    #[test]
    fn trace_integration_matches_piecewise_constant() {
        let p = PowerProfile::default();
        let harvest = HarvestProfile::trace(vec![(0.0, 0.1e-3), (40.0, 0.0)]).unwrap();
        let cap = CapacitorState::new(2.0, 1.0).unwrap();
        let v = voltage_after_profile(&cap, &p, SLEEP, &harvest, 30.0, 20.0);
        let mid = voltage_after(&cap, &p, SLEEP, 0.1e-3, 10.0);
        let expected = voltage_after(&CapacitorState { voltage: mid, ..cap }, &p, SLEEP, 0.0, 10.0);
        assert_eq!(v, expected);
    }

    fn any_state() -> impl Strategy<Value = OperationalState> {
        prop_oneof![
            Just(OperationalState::Idle),
            Just(OperationalState::Ra(RaPhase::SenseI2c)),
            Just(OperationalState::Ra(RaPhase::SenseMeas)),
            Just(OperationalState::Ra(RaPhase::Tx)),
        ]
    }

    proptest! {
        #[test]
        fn semigroup(v0 in 0.0..3.3f64, c in 1.0..10.0f64, i_h in 0.0..1e-3f64,
                     dt1 in 0.0..1e4f64, dt2 in 0.0..1e4f64, state in any_state()) {
            let p = PowerProfile::default();
            let cap = CapacitorState { voltage: v0, capacitance: c };
            let once = voltage_after(&cap, &p, state, i_h, dt1 + dt2);
            let mid = voltage_after(&cap, &p, state, i_h, dt1);
            let twice = voltage_after(&CapacitorState { voltage: mid, ..cap }, &p, state, i_h, dt2);
            prop_assert!((once - twice).abs() <= 1e-12 * once.abs().max(1e-300) || once == twice,
                "{once} vs {twice}");
        }

        #[test]
        fn discharge_strictly_decreases(v0 in 1e-3..3.3f64, c in 1.0..10.0f64,
                                        dt in 1e-3..1e3f64, state in any_state()) {
            let p = PowerProfile::default();
            let cap = CapacitorState { voltage: v0, capacitance: c };
            prop_assert!(voltage_after(&cap, &p, state, 0.0, dt) < v0);
        }

        #[test]
        fn monotone_convergence(v0 in 0.0..3.3f64, i_h in 0.0..2e-4f64,
                                dts in proptest::collection::vec(0.0..1e5f64, 2..8)) {
            let p = PowerProfile::default();
            let cap = CapacitorState { voltage: v0, capacitance: 1.0 };
            let target = (i_h * 66_000.0).min(p.v_max);
            let mut sorted = dts.clone();
            sorted.sort_by(f64::total_cmp);
            let mut prev_gap = (v0 - target).abs();
            for dt in sorted {
                let v = voltage_after(&cap, &p, SLEEP, i_h, dt);
                // Never crosses the target.
                prop_assert!((v - target) * (v0 - target) >= -1e-15);
                let gap = (v - target).abs();
                prop_assert!(gap <= prev_gap + 1e-15);
                prev_gap = gap;
            }
        }

        #[test]
        fn euler_agreement(v0 in 0.0..3.3f64, c in 1.0..10.0f64, i_h in 0.0..1e-3f64,
                           dt in 0.0..10.0f64, state in any_state()) {
            let p = PowerProfile::default();
            let cap = CapacitorState { voltage: v0, capacitance: c };
            let r_eq = equivalent_resistance(&p, state).unwrap();
            let v = voltage_after(&cap, &p, state, i_h, dt);
            prop_assert!((v - euler(v0, c, r_eq, i_h, dt, p.v_max)).abs() < 1e-4);
        }
    }
}
