use aiot_cbra::config::{emit, emit_file, emit_sweep, parse_config, parse_config_str, ConfigFile};
use aiot_cbra::energy::{HarvestProfile, PowerProfile};
use aiot_cbra::engine::{DivisorMode, InitialVoltage, OverflowEnergy, SimConfig};
use aiot_cbra::policy::{PolicyKind, ReaderPrior};
use aiot_cbra::protocol::AccessOccasionGrid;
use aiot_cbra::sweep::SweepSpec;
use proptest::prelude::*;

fn policy() -> impl Strategy<Value = PolicyKind> {
    prop::sample::select(PolicyKind::ALL.to_vec())
}

fn harvest() -> impl Strategy<Value = HarvestProfile> {
    prop_oneof![
        (0.0f64..1e-2).prop_map(|c| HarvestProfile::constant(c).unwrap()),
        prop::collection::vec((0.0f64..1e6, 0.0f64..1e-2), 1..8).prop_map(|mut s| {
            s.sort_by(|a, b| a.0.total_cmp(&b.0));
            s.dedup_by(|a, b| a.0 == b.0);
            HarvestProfile::trace(s).unwrap()
        }),
    ]
}

prop_compose! {
    fn power()(v_min in 0.5f64..3.0, headroom in 0.0f64..2.0, leak in 0.0f64..1e-4,
               sleep in 1e-6f64..1e-4, tx in 1e-3f64..5e-2, tx_time in 1e-4f64..1e-2) -> PowerProfile {
        PowerProfile {
            v_min,
            v_max: v_min + headroom,
            leakage_current: leak,
            sleep_current: sleep,
            tx_current: tx,
            tx_time,
            ..PowerProfile::default()
        }
    }
}

prop_compose! {
    fn sim_config()(
        n_devices in 1u32..500,
        r in 1u32..64,
        y in 1u32..4,
        policy in policy(),
        p_r2d in 0.0f64..=1.0,
        step_seconds in 0.01f64..100.0,
        n_steps in 1u64..1_000_000,
        n_runs in 1u32..500,
        seed in any::<u64>(),
        power in power(),
        harvest in harvest(),
        c_lo in 0.1f64..10.0,
        c_span in 0.0f64..10.0,
        used in any::<bool>(),
        warmup in 0.0f64..0.9,
        fixed in prop::option::of(0.0f64..=1.0),
        pessimistic in any::<bool>(),
        charge in any::<bool>(),
    ) -> SimConfig {
        SimConfig {
            n_devices,
            grid: AccessOccasionGrid { r, y },
            policy,
            p_r2d,
            step_seconds,
            n_steps,
            n_runs,
            seed,
            initial_voltage: match fixed {
                Some(f) => InitialVoltage::Fixed(f * power.v_max),
                None => InitialVoltage::Uniform,
            },
            power,
            harvest,
            capacitance_range: [c_lo, c_lo + c_span],
            divisor_mode: if used { DivisorMode::UsedAos } else { DivisorMode::ConfiguredAos },
            warmup_fraction: warmup,
            reader_prior: if pessimistic { ReaderPrior::Pessimistic } else { ReaderPrior::Optimistic },
            ideal_overflow: if charge { OverflowEnergy::Charge } else { OverflowEnergy::Free },
        }
    }
}

proptest! {
    #[test]
    fn single_config_round_trips(cfg in sim_config()) {
        cfg.validate().unwrap();
        let text = emit(&cfg);
        prop_assert_eq!(parse_config_str(&text, None).unwrap(), ConfigFile::Single(cfg));
    }

    #[test]
    fn sweep_round_trips(
        base in sim_config(),
        n_values in prop::collection::vec(1u32..200, 1..6),
        r_values in prop::collection::vec(1u32..64, 1..4),
        policies in prop::collection::vec(policy(), 1..4),
    ) {
        let spec = SweepSpec { n_values, r_values, policies, base };
        let text = emit_sweep(&spec);
        prop_assert_eq!(parse_config_str(&text, None).unwrap(), ConfigFile::Sweep(spec));
    }
}

#[test]
fn emitted_defaults_are_readable_toml() {
    let text = emit(&SimConfig::default());
    assert!(text.contains("policy = \"eh_aware\""), "{text}");
    assert!(text.contains("[harvest]"));
    assert!(text.contains("kind = \"constant\""));
}

#[test]
fn round_trip_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.toml");
    let spec = SweepSpec::reference(SimConfig::default());
    let file = ConfigFile::Sweep(spec);
    std::fs::write(&path, emit_file(&file)).unwrap();
    assert_eq!(parse_config(&path).unwrap(), file);
}

#[test]
fn error_messages_carry_path_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "n_devices = 10\n[grid]\nr = 0\n").unwrap();
    let err = parse_config(&path).unwrap_err();
    assert!(err.is_config_error());
    let msg = err.to_string();
    assert!(msg.contains("bad.toml:3:"), "{msg}");

    std::fs::write(&path, "n_devices = \"ten\"\n").unwrap();
    let msg = parse_config(&path).unwrap_err().to_string();
    assert!(msg.contains("bad.toml:1:"), "{msg}");

    std::fs::write(&path, "[sweep]\nn_values = [10, 0]\n").unwrap();
    let msg = parse_config(&path).unwrap_err().to_string();
    assert!(msg.contains("N=0"), "{msg}");
}
