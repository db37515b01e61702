use efsgd::compressors::{compress, empirical_delta, CompressorSpec};
use efsgd::config::RunConfig;
use efsgd::harness::run_experiment;
use efsgd::optim::{ef_sgd_step, ScheduleSpec};
use efsgd::{BlockPartition, Compressor, ParamVector};
use proptest::prelude::*;

fn vec_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![Just(0.0), -1e3f64..1e3, -1e-6f64..1e-6], 1..60)
}

fn spec_strategy(d: usize) -> impl Strategy<Value = CompressorSpec> {
    prop_oneof![
        Just(CompressorSpec::Identity),
        Just(CompressorSpec::ScaledSign),
        (1..=d).prop_map(move |bs| CompressorSpec::BlockwiseScaledSign {
            partition: BlockPartition::uniform(d, bs).unwrap()
        }),
        (1..=d).prop_map(|k| CompressorSpec::TopK { k }),
    ]
}

proptest! {
    #[test]
    fn deterministic_compressors_contract(
        (v, spec) in vec_strategy().prop_flat_map(|v| { let d = v.len(); (Just(v), spec_strategy(d)) })
    ) {
        let v = ParamVector::from_vec(v);
        prop_assume!(v.l2_squared() > 0.0);
        let d = v.len();
        let delta = empirical_delta(&spec, &v).unwrap();
        prop_assert!(delta >= spec.delta_lower_bound(d) - 1e-12);
        // positive homogeneity
        let scaled = compress(&spec, &v.scale(4.0)).unwrap();
        let base = compress(&spec, &v).unwrap().scale(4.0);
        for (a, b) in scaled.iter().zip(base.iter()) {
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn ef_sgd_residual_tracks_shift(
        g in prop::collection::vec(-10.0f64..10.0, 8),
        e in prop::collection::vec(-1.0f64..1.0, 8),
        eta in 1e-3f64..1.0,
    ) {
        let (x, e, g) = (ParamVector::zeros(8), ParamVector::from_vec(e), ParamVector::from_vec(g));
        let mut comp = Compressor::new(CompressorSpec::ScaledSign, 0);
        let (x1, e1) = ef_sgd_step(&x, &e, &g, eta, &mut comp).unwrap();
        // x − x' = C(p) = p − e' with p = ηg + e
        for j in 0..8 {
            let p = eta * g[j] + e[j];
            prop_assert!(((x[j] - x1[j]) - (p - e1[j])).abs() <= 1e-12 * p.abs().max(1.0));
        }
    }

    #[test]
    fn schedule_ratio_is_consistent(t in 0usize..500, gamma in 0.01f64..10.0) {
        let s = ScheduleSpec::Decreasing { gamma, horizon: 500, workers: 4, delta: 0.1 };
        let r = s.ratio(t);
        let expect = s.stepsize(t as i64 - 1) / s.stepsize(t as i64);
        prop_assert!((r - expect).abs() <= 1e-12 * expect.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn runs_are_deterministic(seed in any::<u64>(), mu in prop_oneof![Just(0.0), Just(0.9)], workers in 1usize..5) {
        let c: RunConfig = serde_json::from_value(serde_json::json!({
            "workers": workers, "iterations": 60, "seed": seed, "momentum": mu,
            "compressor": {"kind": "blockwise_scaled_sign", "blocks": {"uniform": 3}},
            "schedule": {"kind": "increasing", "gamma": 2.0},
            "problem": {"kind": "quadratic", "dim": 9, "condition": 4.0, "noise": 1.0}
        })).unwrap();
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        prop_assert_eq!(&a.metrics, &b.metrics);
        prop_assert_eq!(a.final_x, b.final_x);
        prop_assert!(a.report.passed);
    }
}
