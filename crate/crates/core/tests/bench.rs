use proptest::prelude::*;
use rfir_core::attention::AttnConfig;
use rfir_core::bench::{
    analytic_macs, analytic_params, attention_core_macs, count_costs, enumerated_params, fit_loglog, measured_macs,
    runtime_bench, scaling_experiment, time_it, AttentionKind,
};

const KINDS: [AttentionKind; 4] = AttentionKind::ALL;

fn stage3() -> AttnConfig {
    AttnConfig::new(192, 4, (12, 12), (32, 32))
}

fn stage4() -> AttnConfig {
    AttnConfig::new(384, 8, (12, 12), (16, 16))
}

fn fusion() -> AttnConfig {
    stage4().with_text_len(20)
}

/// Vanilla self-attention written the usual way: `3ND^2` for Q/K/V,
/// `2N^2 D` for the two attention products, `ND^2` for the output projection.
fn mhsa_oracle(n: u64, d: u64) -> u64 {
    3 * n * d * d + 2 * n * n * d + n * d * d
}

#[test]
fn mhsa_flops_reproduce_reference_rows() {
    assert_eq!(analytic_macs(AttentionKind::Mhsa, &stage3()), mhsa_oracle(1024, 192));
    assert_eq!(analytic_macs(AttentionKind::Mhsa, &stage4()), mhsa_oracle(256, 384));
    assert_eq!(analytic_macs(AttentionKind::Mhsa, &stage3()), 553_648_128);
    assert_eq!(analytic_macs(AttentionKind::Mhsa, &stage4()), 201_326_592);
}

#[test]
fn param_counts_follow_closed_forms() {
    for (cfg, d) in [(stage3(), 192u64), (stage4(), 384)] {
        assert_eq!(analytic_params(AttentionKind::Mhsa, &cfg).weights, 4 * d * d + 4 * d);
        assert_eq!(analytic_params(AttentionKind::Mhasa, &cfg).weights, 4 * d * d + 14 * d);
    }
    let p = analytic_params(AttentionKind::Mhaca, &fusion());
    assert_eq!(p.weights, 3 * 384 * 384 + 3 * 384);
    assert_eq!(p.pos_encoding, 16 * 16 * 384 + 20 * 384);
}

#[test]
fn analytic_counts_match_the_instrumented_graph() {
    let cfgs = [
        AttnConfig::new(8, 2, (2, 2), (4, 4)).with_text_len(3),
        AttnConfig::new(12, 3, (3, 2), (6, 4)).with_text_len(5),
        AttnConfig::new(6, 1, (8, 8), (4, 4)).with_text_len(2),
    ];
    for cfg in cfgs {
        for kind in KINDS {
            assert_eq!(
                measured_macs(kind, &cfg).unwrap(),
                analytic_macs(kind, &cfg),
                "{kind} {cfg:?}"
            );
            assert_eq!(
                enumerated_params(kind, &cfg).unwrap(),
                analytic_params(kind, &cfg),
                "{kind} {cfg:?}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn analytic_counts_match_enumeration(heads in 1usize..4, per_head in 1usize..5, h in 1usize..7, w in 1usize..7, ah in 1usize..5, aw in 1usize..5, l in 1usize..6) {
        let cfg = AttnConfig::new(heads * per_head, heads, (ah, aw), (h, w)).with_text_len(l);
        for kind in KINDS {
            prop_assert_eq!(measured_macs(kind, &cfg).unwrap(), analytic_macs(kind, &cfg));
            prop_assert_eq!(enumerated_params(kind, &cfg).unwrap(), analytic_params(kind, &cfg));
        }
    }
}

#[test]
fn orderings_hold_at_reference_configs() {
    assert!(analytic_macs(AttentionKind::Mhasa, &stage3()) < analytic_macs(AttentionKind::Mhsa, &stage3()));
    assert!(analytic_macs(AttentionKind::Mhaca, &fusion()) < analytic_macs(AttentionKind::CrossAttention, &fusion()));
}

#[test]
fn scaling_slopes() {
    let base = AttnConfig::new(48, 1, (12, 12), (16, 16));
    let sides = [16, 32, 64, 128];
    let agent = scaling_experiment(AttentionKind::Mhasa, &base, &sides).unwrap();
    assert!((agent.slope - 1.0).abs() < 1e-9 && agent.r2 > 0.999_999);
    let full = scaling_experiment(AttentionKind::Mhsa, &base, &sides).unwrap();
    assert!((full.slope - 2.0).abs() < 1e-9);

    let at = |s: usize| {
        attention_core_macs(
            AttentionKind::Mhasa,
            &AttnConfig {
                height: s,
                width: 2 * s,
                ..base
            },
        )
    };
    assert_eq!(at(32), 2 * at(16) * 2);
    let n1 = AttnConfig {
        height: 32,
        width: 32,
        ..base
    };
    let n2 = AttnConfig {
        height: 32,
        width: 64,
        ..base
    };
    assert_eq!(
        attention_core_macs(AttentionKind::Mhasa, &n2),
        2 * attention_core_macs(AttentionKind::Mhasa, &n1)
    );

    assert!(scaling_experiment(AttentionKind::Mhasa, &base, &[16, 32, 64]).is_err());
    assert!(scaling_experiment(AttentionKind::Mhasa, &base, &[16, 17, 18, 19]).is_err());
}

#[test]
fn loglog_fit_recovers_power_laws() {
    let pts: Vec<(f64, f64)> = [1.0, 2.0, 5.0, 11.0]
        .iter()
        .map(|&x: &f64| (x, 3.0 * x.powf(1.5)))
        .collect();
    let f = fit_loglog(&pts).unwrap();
    assert!((f.slope - 1.5).abs() < 1e-12 && (f.intercept - 3f64.ln()).abs() < 1e-12);
    assert!(fit_loglog(&[(1.0, 1.0)]).is_err());
    assert!(fit_loglog(&[(2.0, 1.0), (2.0, 3.0)]).is_err());
    assert!(fit_loglog(&[(1.0, 0.0), (2.0, 3.0)]).is_err());
}

#[test]
fn cost_report_echoes_config_and_rejects_bad_input() {
    let r = count_costs(AttentionKind::Mhaca, &fusion()).unwrap();
    assert_eq!(r.config, fusion());
    assert_eq!(r.agent_tokens, 144);
    let json = serde_json::to_value(&r).unwrap();
    assert_eq!(json["config"]["channels"], 384);
    assert_eq!(json["module"], "Mhaca");

    assert!(count_costs(AttentionKind::Mhaca, &stage4()).is_err());
    assert!(count_costs(AttentionKind::Mhsa, &AttnConfig::new(10, 3, (2, 2), (4, 4))).is_err());
    assert!("nope".parse::<AttentionKind>().is_err());
    assert_eq!("cross".parse::<AttentionKind>().unwrap(), AttentionKind::CrossAttention);
}

#[test]
fn runtime_stats_are_ordered_and_reproducible() {
    assert!(time_it(2, 5, || Ok(())).is_err());
    let cfg = AttnConfig::new(32, 2, (4, 4), (16, 16));
    let a = runtime_bench(AttentionKind::Mhasa, &cfg, 3, 20).unwrap();
    let b = runtime_bench(AttentionKind::Mhasa, &cfg, 3, 20).unwrap();
    assert!(a.q1_ms <= a.median_ms && a.median_ms <= a.q3_ms && a.repeats == 20);
    let ratio = a.median_ms / b.median_ms;
    assert!(
        (0.75..=1.25).contains(&ratio),
        "medians {} vs {}",
        a.median_ms,
        b.median_ms
    );
}
