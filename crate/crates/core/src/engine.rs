//! Discrete-time simulation loop and Monte Carlo replication.
//!
//! Time advances in fixed steps. At the end of each step the reader pages the
//! whole population with probability `p_r2d`. A paging round runs, in order:
//!
//! 1. idle harvesting up to the paging instant,
//! 2. the eligibility test `V ≥ v_min`,
//! 3. the policy's access probability and the per-device coin flip,
//! 4. contention (or the genie schedule for the ideal policy),
//! 5. the RA energy cost for every device that transmitted,
//! 6. MSG2 delivery and the reader's report bookkeeping.
//!
//! The round itself is instantaneous relative to a step. Idle harvesting
//! between rounds is applied lazily: the capacitor model composes exactly over
//! consecutive intervals, so devices are only brought up to date when a round
//! needs them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{expected_successes_real, TraceEntry};
use crate::device::{advance_idle_in_place, is_eligible, perform_ra_attempt_in_place, DeviceRecord};
use crate::energy::{CapacitorState, HarvestProfile, PowerProfile};
use crate::error::{Error, Result};
use crate::policy::{
    access_probability, attempt_filter, estimate_available, record_report, PolicyKind,
    ReaderPrior, ReaderState,
};
use crate::protocol::{resolve_msg2, run_contention_round, run_ideal_round, AccessOccasionGrid, RoundOutcome};
use crate::rng::Streams;
use crate::stats::Estimate;

/// Which AO count divides the MSG2 count in the headline efficiency metric.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DivisorMode {
    /// All `Y·R` configured AOs.
    ConfiguredAos,
    /// Only AOs that carried at least one MSG1.
    #[default]
    UsedAos,
}

/// Initial capacitor voltage of every device.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialVoltage {
    /// Independent uniform draws in `[0, v_max]`.
    #[default]
    Uniform,
    Fixed(f64),
}

/// Energy treatment of contenders the ideal scheduler leaves out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowEnergy {
    /// They do not transmit and spend nothing.
    #[default]
    Free,
    /// They pay for a full RA attempt anyway.
    Charge,
}

/// Full description of one simulated configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_devices: u32,
    pub grid: AccessOccasionGrid,
    pub policy: PolicyKind,
    /// Paging probability per step.
    pub p_r2d: f64,
    pub step_seconds: f64,
    pub n_steps: u64,
    pub n_runs: u32,
    pub seed: u64,
    pub power: PowerProfile,
    pub harvest: HarvestProfile,
    /// Per-device capacitance is drawn uniformly from `[low, high]` farads.
    pub capacitance_range: [f64; 2],
    pub divisor_mode: DivisorMode,
    /// Leading fraction of steps excluded from metrics.
    pub warmup_fraction: f64,
    pub initial_voltage: InitialVoltage,
    pub reader_prior: ReaderPrior,
    pub ideal_overflow: OverflowEnergy,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_devices: 50,
            grid: AccessOccasionGrid::default(),
            policy: PolicyKind::EhAware,
            p_r2d: 0.01,
            step_seconds: 5.0,
            n_steps: 20_000,
            n_runs: 25,
            seed: 1,
            power: PowerProfile::default(),
            harvest: HarvestProfile::default(),
            capacitance_range: [1.0, 10.0],
            divisor_mode: DivisorMode::default(),
            warmup_fraction: 0.1,
            initial_voltage: InitialVoltage::default(),
            reader_prior: ReaderPrior::default(),
            ideal_overflow: OverflowEnergy::default(),
        }
    }
}

impl SimConfig {
    /// Checks everything except the run-length counts.
    pub fn validate_model(&self) -> Result<()> {
        if self.n_devices == 0 {
            return Err(Error::invalid("n_devices", "must be >= 1"));
        }
        self.grid.validate()?;
        self.power.validate()?;
        if !(0.0..=1.0).contains(&self.p_r2d) {
            return Err(Error::invalid("p_r2d", format!("must lie in [0, 1], got {}", self.p_r2d)));
        }
        if !(self.step_seconds.is_finite() && self.step_seconds > 0.0) {
            return Err(Error::invalid("step_seconds", "must be > 0"));
        }
        let [lo, hi] = self.capacitance_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(Error::invalid(
                "capacitance_range",
                format!("need 0 < low <= high, got [{lo}, {hi}]"),
            ));
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid("warmup_fraction", "must lie in [0, 1)"));
        }
        if let InitialVoltage::Fixed(v) = self.initial_voltage {
            if !(0.0..=self.power.v_max).contains(&v) {
                return Err(Error::invalid(
                    "initial_voltage",
                    format!("must lie in [0, v_max], got {v}"),
                ));
            }
        }
        if let HarvestProfile::Constant { current } = self.harvest {
            if !(current.is_finite() && current >= 0.0) {
                return Err(Error::invalid("harvest.current", "must be >= 0"));
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_model()?;
        if self.n_steps == 0 {
            return Err(Error::invalid("n_steps", "must be >= 1"));
        }
        if self.n_runs == 0 {
            return Err(Error::invalid("n_runs", "must be >= 1"));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> u64 {
        (self.warmup_fraction * self.n_steps as f64).floor() as u64
    }
}

/// Per-replica metric accumulators over the measurement window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplicaFragment {
    pub replica: u32,
    pub steps: u64,
    /// Paging rounds inside the measurement window.
    pub rounds: u64,
    pub rounds_with_attempts: u64,
    pub rounds_with_used_aos: u64,
    /// Σ successes/used_aos over rounds with at least one used AO.
    pub msg2_used_sum: f64,
    /// Σ successes/(Y·R) over rounds with at least one attempt.
    pub msg2_configured_sum: f64,
    pub attempts: u64,
    pub successes: u64,
    pub collided: u64,
    pub not_attempted: u64,
    pub eligible: u64,
    pub k_hat_sum: u64,
    pub q_sum: f64,
    /// Device-rounds polled (every device is paged every round).
    pub device_rounds: u64,
}

impl ReplicaFragment {
    fn record(&mut self, outcome: &RoundOutcome, eligible: usize, k_hat: u32, n_devices: u32) {
        self.rounds += 1;
        let attempts = outcome.attempts() as u64;
        let successes = outcome.successes.len() as u64;
        let collided = outcome.collided.len() as u64;
        self.attempts += attempts;
        self.successes += successes;
        self.collided += collided;
        self.not_attempted += outcome.not_attempted.len() as u64;
        self.eligible += eligible as u64;
        self.k_hat_sum += u64::from(k_hat);
        self.q_sum += outcome.q_used;
        self.device_rounds += u64::from(n_devices);
        if attempts > 0 {
            self.rounds_with_attempts += 1;
            self.msg2_configured_sum += successes as f64 / f64::from(outcome.total_aos);
        }
        if outcome.used_aos > 0 {
            self.rounds_with_used_aos += 1;
            self.msg2_used_sum += successes as f64 / f64::from(outcome.used_aos);
        }
    }

    fn per_round(sum: f64, count: u64) -> f64 {
        if count == 0 {
            f64::NAN
        } else {
            sum / count as f64
        }
    }

    /// Collided attempts per attempt.
    pub fn collision_prob(&self) -> f64 {
        if self.attempts == 0 {
            f64::NAN
        } else {
            self.collided as f64 / self.attempts as f64
        }
    }

    pub fn msg2_per_used_ao(&self) -> f64 {
        Self::per_round(self.msg2_used_sum, self.rounds_with_used_aos)
    }

    pub fn msg2_per_configured_ao(&self) -> f64 {
        Self::per_round(self.msg2_configured_sum, self.rounds_with_attempts)
    }

    /// Polled device-rounds per successful report.
    pub fn mean_paging_rounds(&self) -> f64 {
        if self.successes == 0 {
            f64::INFINITY
        } else {
            self.device_rounds as f64 / self.successes as f64
        }
    }

    pub fn mean_attempters(&self) -> f64 {
        Self::per_round(self.attempts as f64, self.rounds)
    }

    pub fn mean_eligible(&self) -> f64 {
        Self::per_round(self.eligible as f64, self.rounds)
    }

    pub fn mean_successes(&self) -> f64 {
        Self::per_round(self.successes as f64, self.rounds)
    }
}

/// Simulation state of one replica.
pub struct World<'a> {
    cfg: &'a SimConfig,
    devices: Vec<DeviceRecord>,
    reader: ReaderState,
    streams: Streams,
    step: u64,
    synced_time: f64,
    round_index: u64,
    warmup_steps: u64,
    fragment: ReplicaFragment,
    trace: Option<Vec<TraceEntry>>,
    last_outcome: Option<RoundOutcome>,
    scratch_ids: Vec<u32>,
}

impl<'a> World<'a> {
    /// Draws initial conditions for replica `replica`.
    pub fn new(cfg: &'a SimConfig, replica: u32) -> Result<Self> {
        cfg.validate_model()?;
        let mut streams = Streams::new(cfg.seed, u64::from(replica));
        let [c_lo, c_hi] = cfg.capacitance_range;
        let mut devices = Vec::with_capacity(cfg.n_devices as usize);
        for id in 0..cfg.n_devices {
            let capacitance = if c_lo == c_hi {
                c_lo
            } else {
                streams.capacitance.gen_range(c_lo..=c_hi)
            };
            let voltage = match cfg.initial_voltage {
                InitialVoltage::Uniform => streams.initial_voltage.gen_range(0.0..=cfg.power.v_max),
                InitialVoltage::Fixed(v) => v,
            };
            devices.push(DeviceRecord::new(id, CapacitorState::new(voltage, capacitance)?));
        }
        let reader = ReaderState::new(devices.iter().map(|d| d.cap.capacitance), cfg.reader_prior);
        Ok(Self {
            cfg,
            devices,
            reader,
            streams,
            step: 0,
            synced_time: 0.0,
            round_index: 0,
            warmup_steps: cfg.warmup_steps(),
            fragment: ReplicaFragment {
                replica,
                ..ReplicaFragment::default()
            },
            trace: None,
            last_outcome: None,
            scratch_ids: Vec::new(),
        })
    }

    /// Keeps every paging round (outcome plus eligibility snapshot).
    pub fn enable_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn take_trace(&mut self) -> Vec<TraceEntry> {
        self.trace.take().unwrap_or_default()
    }

    pub fn now(&self) -> f64 {
        self.step as f64 * self.cfg.step_seconds
    }

    pub fn steps_done(&self) -> u64 {
        self.step
    }

    pub fn paging_rounds(&self) -> u64 {
        self.round_index
    }

    pub fn reader(&self) -> &ReaderState {
        &self.reader
    }

    pub fn fragment(&self) -> &ReplicaFragment {
        &self.fragment
    }

    /// Devices, brought up to the current time.
    pub fn devices(&mut self) -> &[DeviceRecord] {
        self.sync_devices();
        &self.devices
    }

    fn sync_devices(&mut self) {
        let now = self.now();
        let dt = now - self.synced_time;
        if dt > 0.0 {
            for dev in &mut self.devices {
                advance_idle_in_place(dev, &self.cfg.harvest, &self.cfg.power, self.synced_time, dt);
            }
        }
        self.synced_time = now;
    }

    /// Advances one step; returns the paging round if one happened.
    pub fn step(&mut self) -> Result<Option<&RoundOutcome>> {
        self.step += 1;
        self.fragment.steps = self.step;
        if self.streams.polling.gen_bool(self.cfg.p_r2d) {
            self.paging_round()?;
            return Ok(self.last_outcome.as_ref());
        }
        Ok(None)
    }

    fn paging_round(&mut self) -> Result<()> {
        self.sync_devices();
        let cfg = self.cfg;
        let now = self.now();
        self.round_index += 1;

        let v_min = cfg.power.v_min;
        self.scratch_ids.clear();
        self.scratch_ids.extend(
            self.devices
                .iter()
                .filter(|d| is_eligible(d, v_min))
                .map(|d| d.id),
        );
        let eligible_count = self.scratch_ids.len();

        let k_hat = if cfg.policy == PolicyKind::EhAware {
            let group: Vec<u32> = (0..cfg.n_devices).collect();
            estimate_available(&self.reader, &group, &cfg.power, &cfg.harvest, now)
        } else {
            0
        };
        let q = access_probability(cfg.policy, &cfg.grid, cfg.n_devices, k_hat);
        let attempters = attempt_filter(&self.scratch_ids, q, &mut self.streams.access_coin);

        let mut outcome = if cfg.policy.is_ideal() {
            run_ideal_round(
                &attempters,
                &cfg.grid,
                &mut self.streams.ideal_selection,
                &mut self.streams.random_id,
            )
        } else {
            run_contention_round(
                &attempters,
                &cfg.grid,
                &mut self.streams.ao_draw,
                &mut self.streams.random_id,
            )
        };
        outcome.round_index = self.round_index;
        outcome.transaction_id = self.round_index;
        outcome.time = now;
        outcome.q_used = q;

        let charged = outcome.attempted.iter().chain(
            outcome
                .not_attempted
                .iter()
                .filter(|_| cfg.ideal_overflow == OverflowEnergy::Charge),
        );
        for &id in charged {
            perform_ra_attempt_in_place(&mut self.devices[id as usize], &cfg.harvest, &cfg.power, now)?;
        }

        for msg2 in resolve_msg2(&outcome) {
            let dev = &mut self.devices[msg2.device_id as usize];
            record_report(&mut self.reader, dev.id, dev.cap.voltage, dev.attempt_count, now);
            dev.mark_reported(now);
        }
        self.reader.clock = now;

        if self.step > self.warmup_steps {
            self.fragment.record(&outcome, eligible_count, k_hat, cfg.n_devices);
        }
        if let Some(trace) = self.trace.as_mut() {
            let mut eligible = vec![false; cfg.n_devices as usize];
            for &id in &self.scratch_ids {
                eligible[id as usize] = true;
            }
            trace.push(TraceEntry {
                outcome: outcome.clone(),
                eligible,
            });
        }
        self.last_outcome = Some(outcome);
        Ok(())
    }

    /// Runs the remaining steps and returns the metrics fragment.
    pub fn run_to_end(&mut self) -> Result<ReplicaFragment> {
        while self.step < self.cfg.n_steps {
            self.step()?;
        }
        self.sync_devices();
        Ok(self.fragment.clone())
    }
}

/// Runs replica `replica_index` of `cfg` to completion.
pub fn run_replica(cfg: &SimConfig, replica_index: u32) -> Result<ReplicaFragment> {
    if replica_index >= cfg.n_runs.max(1) {
        return Err(Error::invalid(
            "replica_index",
            format!("{replica_index} >= n_runs {}", cfg.n_runs),
        ));
    }
    World::new(cfg, replica_index)?.run_to_end()
}

/// Like [`run_replica`], also returning every paging round.
pub fn run_replica_traced(
    cfg: &SimConfig,
    replica_index: u32,
) -> Result<(ReplicaFragment, Vec<TraceEntry>)> {
    let mut world = World::new(cfg, replica_index)?;
    world.enable_trace();
    let fragment = world.run_to_end()?;
    Ok((fragment, world.take_trace()))
}

/// Writes a round trace as JSON lines, one [`TraceEntry`] per line.
pub fn write_trace_jsonl<W: std::io::Write>(mut sink: W, trace: &[TraceEntry]) -> Result<()> {
    for entry in trace {
        serde_json::to_writer(&mut sink, entry)?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(())
}

/// Aggregated indicators of one `(policy, N, R)` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: PolicyKind,
    pub n_devices: u32,
    pub r: u32,
    pub y: u32,
    pub divisor_mode: DivisorMode,
    pub collision_prob: Estimate,
    pub msg2_per_used_ao: Estimate,
    pub msg2_per_configured_ao: Estimate,
    /// Polled rounds per successful report, measured.
    pub mean_paging_rounds_per_report: Estimate,
    /// `N / E[N_s]` from the closed form at the measured mean contender count.
    pub mean_paging_rounds_analytic: Estimate,
    pub mean_attempters: Estimate,
    pub mean_eligible: Estimate,
    pub rounds_executed: u64,
    pub attempts_total: u64,
    pub successes_total: u64,
    pub replicas: u32,
}

impl MetricsReport {
    /// Headline efficiency according to `divisor_mode`.
    pub fn msg2_efficiency(&self) -> Estimate {
        match self.divisor_mode {
            DivisorMode::UsedAos => self.msg2_per_used_ao,
            DivisorMode::ConfiguredAos => self.msg2_per_configured_ao,
        }
    }
}

/// Reduces replica fragments, in replica order, into a report.
pub fn aggregate(cfg: &SimConfig, fragments: &[ReplicaFragment]) -> MetricsReport {
    let collect = |f: fn(&ReplicaFragment) -> f64| -> Vec<f64> { fragments.iter().map(f).collect() };
    let n = cfg.n_devices;
    let total = cfg.grid.total();
    let ideal = cfg.policy.is_ideal();
    let analytic: Vec<f64> = fragments
        .iter()
        .map(|f| {
            let k = f.mean_attempters();
            if !k.is_finite() {
                return f64::NAN;
            }
            let e_ns = if ideal {
                k.min(f64::from(total))
            } else {
                expected_successes_real(k, total)
            };
            if e_ns > 0.0 {
                f64::from(n) / e_ns
            } else {
                f64::INFINITY
            }
        })
        .collect();
    MetricsReport {
        policy: cfg.policy,
        n_devices: n,
        r: cfg.grid.r,
        y: cfg.grid.y,
        divisor_mode: cfg.divisor_mode,
        collision_prob: if fragments.iter().all(|f| f.attempts == 0) {
            Estimate::NAN
        } else {
            Estimate::ratio(&collect(|f| f.collided as f64), &collect(|f| f.attempts as f64))
                .clamp_interval(0.0, 1.0)
        },
        msg2_per_used_ao: Estimate::from_samples(&collect(ReplicaFragment::msg2_per_used_ao))
            .clamp_interval(0.0, 1.0),
        msg2_per_configured_ao: Estimate::from_samples(&collect(
            ReplicaFragment::msg2_per_configured_ao,
        ))
        .clamp_interval(0.0, 1.0),
        mean_paging_rounds_per_report: Estimate::ratio(
            &collect(|f| f.device_rounds as f64),
            &collect(|f| f.successes as f64),
        ),
        mean_paging_rounds_analytic: Estimate::from_samples(&analytic),
        mean_attempters: Estimate::from_samples(&collect(ReplicaFragment::mean_attempters)),
        mean_eligible: Estimate::from_samples(&collect(ReplicaFragment::mean_eligible)),
        rounds_executed: fragments.iter().map(|f| f.rounds).sum(),
        attempts_total: fragments.iter().map(|f| f.attempts).sum(),
        successes_total: fragments.iter().map(|f| f.successes).sum(),
        replicas: fragments.len() as u32,
    }
}

/// How replicas are scheduled. Results do not depend on the choice.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Serial,
    #[default]
    Parallel,
}

pub fn run_experiment(cfg: &SimConfig) -> Result<MetricsReport> {
    run_experiment_with(cfg, Execution::Parallel)
}

pub fn run_experiment_with(cfg: &SimConfig, execution: Execution) -> Result<MetricsReport> {
    cfg.validate()?;
    let fragments: Vec<ReplicaFragment> = match execution {
        Execution::Serial => (0..cfg.n_runs)
            .map(|i| run_replica(cfg, i))
            .collect::<Result<_>>()?,
        Execution::Parallel => (0..cfg.n_runs)
            .into_par_iter()
            .map(|i| run_replica(cfg, i))
            .collect::<Result<_>>()?,
    };
    Ok(aggregate(cfg, &fragments))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::collision_probability;

    fn small(policy: PolicyKind) -> SimConfig {
        SimConfig {
            n_devices: 20,
            policy,
            n_steps: 4_000,
            n_runs: 3,
            ..SimConfig::default()
        }
    }

    fn always_eligible(n: u32, r: u32, policy: PolicyKind) -> SimConfig {
        SimConfig {
            n_devices: n,
            grid: AccessOccasionGrid::new(r, 1).unwrap(),
            policy,
            p_r2d: 1.0,
            harvest: HarvestProfile::constant(1.0).unwrap(),
            initial_voltage: InitialVoltage::Fixed(3.3),
            warmup_fraction: 0.0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn no_paging_means_pure_idle_dynamics() {
        let cfg = SimConfig {
            p_r2d: 0.0,
            n_steps: 1_000,
            ..small(PolicyKind::Naive)
        };
        let mut world = World::new(&cfg, 0).unwrap();
        let start: Vec<DeviceRecord> = world.devices().to_vec();
        let frag = world.run_to_end().unwrap();
        assert_eq!(frag.rounds, 0);
        assert_eq!(world.paging_rounds(), 0);
        let end = world.devices().to_vec();
        for (a, b) in start.iter().zip(&end) {
            let expected = crate::device::advance_idle(a, &cfg.harvest, &cfg.power, 0.0, 5_000.0);
            assert!((expected.voltage() - b.voltage()).abs() < 1e-12);
        }
    }

    #[test]
    fn certain_paging_runs_every_step() {
        let cfg = SimConfig {
            p_r2d: 1.0,
            n_steps: 250,
            warmup_fraction: 0.0,
            ..small(PolicyKind::Naive)
        };
        let mut world = World::new(&cfg, 0).unwrap();
        let frag = world.run_to_end().unwrap();
        assert_eq!(world.paging_rounds(), 250);
        assert_eq!(frag.rounds, 250);
    }

    #[test]
    fn polling_count_is_binomial() {
        let cfg = SimConfig {
            n_devices: 1,
            n_steps: 200_000,
            ..SimConfig::default()
        };
        let mut world = World::new(&cfg, 0).unwrap();
        world.run_to_end().unwrap();
        let sigma = (200_000.0f64 * 0.01 * 0.99).sqrt();
        let rounds = world.paging_rounds() as f64;
        assert!((rounds - 2000.0).abs() <= 3.0 * sigma, "{rounds}");
    }

    #[test]
    fn replicas_are_reproducible_and_distinct() {
        let cfg = small(PolicyKind::EhAware);
        assert_eq!(run_replica(&cfg, 1).unwrap(), run_replica(&cfg, 1).unwrap());
        assert_ne!(run_replica(&cfg, 0).unwrap(), run_replica(&cfg, 1).unwrap());
    }

    #[test]
    fn zero_steps_gives_empty_fragment() {
        let cfg = SimConfig {
            n_steps: 0,
            ..small(PolicyKind::Naive)
        };
        let frag = run_replica(&cfg, 0).unwrap();
        assert_eq!(frag.rounds, 0);
        assert_eq!(frag.attempts, 0);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn replica_index_is_checked() {
        let cfg = small(PolicyKind::Naive);
        assert!(run_replica(&cfg, 3).is_err());
    }

    #[test]
    fn invalid_configs_fail_before_stepping() {
        let bad = SimConfig {
            p_r2d: 1.5,
            ..SimConfig::default()
        };
        assert!(run_experiment(&bad).is_err());
        let bad = SimConfig {
            capacitance_range: [5.0, 1.0],
            ..SimConfig::default()
        };
        assert!(World::new(&bad, 0).is_err());
    }

    #[test]
    fn single_run_has_degenerate_interval() {
        let cfg = SimConfig {
            n_runs: 1,
            ..small(PolicyKind::Naive)
        };
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.collision_prob.width(), 0.0);
        assert_eq!(report.replicas, 1);
    }

    #[test]
    fn identical_fragments_aggregate_to_themselves() {
        let cfg = small(PolicyKind::Naive);
        let frag = run_replica(&cfg, 0).unwrap();
        let report = aggregate(&cfg, &[frag.clone(), frag.clone(), frag.clone()]);
        assert_eq!(report.collision_prob.mean, frag.collision_prob());
        assert_eq!(report.collision_prob.width(), 0.0);
        assert!((report.mean_paging_rounds_per_report.mean - frag.mean_paging_rounds()).abs() < 1e-12);
    }

    #[test]
    fn serial_and_parallel_agree() {
        let cfg = small(PolicyKind::EhAware);
        assert_eq!(
            run_experiment_with(&cfg, Execution::Serial).unwrap(),
            run_experiment_with(&cfg, Execution::Parallel).unwrap()
        );
    }

    #[test]
    fn naive_saturates_when_crowded() {
        let cfg = SimConfig {
            n_steps: 2_000,
            n_runs: 2,
            ..always_eligible(100, 8, PolicyKind::Naive)
        };
        let report = run_experiment(&cfg).unwrap();
        assert!(report.collision_prob.mean > 0.95, "{:?}", report.collision_prob);
    }

    #[test]
    fn naive_matches_collision_formula() {
        let cfg = SimConfig {
            n_steps: 10_000,
            n_runs: 1,
            ..always_eligible(10, 8, PolicyKind::Naive)
        };
        let report = run_experiment(&cfg).unwrap();
        let expected = collision_probability(10, 8);
        let rel = (report.collision_prob.mean - expected).abs() / expected;
        assert!(rel < 0.01, "{} vs {expected}", report.collision_prob.mean);
    }

    #[test]
    fn energy_causality_and_attempt_conservation() {
        for policy in PolicyKind::ALL {
            let cfg = SimConfig {
                harvest: HarvestProfile::constant(0.03e-3).unwrap(),
                p_r2d: 0.05,
                ..small(policy)
            };
            let (frag, trace) = run_replica_traced(&cfg, 0).unwrap();
            assert!(!trace.is_empty());
            for entry in &trace {
                let o = &entry.outcome;
                for &id in &o.attempted {
                    assert!(entry.eligible[id as usize], "{policy}: device {id} attempted while ineligible");
                }
                assert_eq!(o.successes.len() + o.collided.len(), o.attempts());
                if policy.is_ideal() {
                    assert!(o.collided.is_empty());
                    assert_eq!(o.successes.len(), o.attempts());
                    assert!(o.attempts() <= 8);
                    if !o.not_attempted.is_empty() {
                        assert_eq!(o.attempts(), 8);
                    }
                } else {
                    assert!(o.not_attempted.is_empty());
                }
            }
            assert_eq!(frag.successes + frag.collided, frag.attempts);
        }
    }

    #[test]
    fn eh_aware_and_static_diverge_only_through_the_estimate() {
        // With the pessimistic prior K̂ counts reported devices only, so the
        // EH-aware policy offers more load than the static rule.
        let base = SimConfig {
            reader_prior: ReaderPrior::Pessimistic,
            n_devices: 60,
            ..small(PolicyKind::EhAware)
        };
        let eh = run_experiment(&base).unwrap();
        let st = run_experiment(&SimConfig {
            policy: PolicyKind::StaticAloha,
            ..base.clone()
        })
        .unwrap();
        assert!(eh.mean_attempters.mean >= st.mean_attempters.mean);
    }

    #[test]
    fn eh_aware_load_regulation() {
        // Plenty of eligible devices: attempters per round stay within ±50% of Y·R.
        for (n, r) in [(40u32, 8u32), (100, 16), (100, 32)] {
            let cfg = SimConfig {
                p_r2d: 0.2,
                n_steps: 5_000,
                n_runs: 2,
                ..always_eligible(n, r, PolicyKind::EhAware)
            };
            let report = run_experiment(&cfg).unwrap();
            assert!(report.mean_eligible.mean >= f64::from(r));
            let k = report.mean_attempters.mean;
            assert!(k >= 0.5 * f64::from(r) && k <= 1.5 * f64::from(r), "N={n} R={r}: {k}");
        }
    }

    #[test]
    fn reader_tracks_devices_that_report_every_round() {
        // Ideal scheduling with R ≥ N: everyone reports every round.
        let cfg = SimConfig {
            n_devices: 8,
            grid: AccessOccasionGrid::new(16, 1).unwrap(),
            policy: PolicyKind::Ideal,
            p_r2d: 0.1,
            n_steps: 3_000,
            n_runs: 1,
            harvest: HarvestProfile::constant(0.1e-3).unwrap(),
            initial_voltage: InitialVoltage::Fixed(2.0),
            ..SimConfig::default()
        };
        let mut world = World::new(&cfg, 0).unwrap();
        for _ in 0..cfg.n_steps {
            world.step().unwrap();
            let now = world.now();
            if world.paging_rounds() > 0 && world.reader().entries[0].last_report_time == Some(now) {
                let truth: Vec<f64> = world.devices().iter().map(|d| d.voltage()).collect();
                let reader = world.reader().clone();
                for (id, v) in truth.iter().enumerate() {
                    let predicted = crate::policy::predict_voltage(&reader, id as u32, &cfg.power, &cfg.harvest, now);
                    assert!((predicted - v).abs() < 1e-9);
                }
            }
        }
    }
}
