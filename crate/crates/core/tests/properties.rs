use noisy_threshold::checkbit::{check_bit, Belief};
use noisy_threshold::harness::{
    emit_report, parse_report, run_experiment, Algorithm, ExperimentSpec, ReportFormat,
    WeightPolicy,
};
use noisy_threshold::heap::{construct_max_heap, noisy_extract_max};
use noisy_threshold::lowerbound::{run_nonadaptive_phase, LowerBoundParams, Regime};
use noisy_threshold::oracle::{NoisyBitOracle, ProblemConfig};
use noisy_threshold::rng::substream;
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig {
        cases: n,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn ledger_conserves_queries(
        hidden in prop::collection::vec(any::<bool>(), 1..40),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 0..200),
        seed in any::<u64>(),
    ) {
        let n = hidden.len();
        let c = ProblemConfig::new(n as u64, 1, 0.2, 0.1).unwrap().with_seed(seed);
        let mut o = NoisyBitOracle::new(&c, hidden).unwrap();
        let mut counts = vec![0u64; n];
        for ix in &picks {
            let i = ix.index(n);
            o.query(i).unwrap();
            counts[i] += 1;
        }
        prop_assert_eq!(o.ledger().per_bit(), counts.as_slice());
        prop_assert_eq!(o.total_queries(), picks.len() as u64);
        prop_assert_eq!(o.ledger().per_bit().iter().sum::<u64>(), o.total_queries());
    }

    #[test]
    fn belief_matches_iterated_bayes(
        p in 0.01f64..0.49,
        readings in prop::collection::vec(any::<bool>(), 0..60),
    ) {
        let mut b = Belief::new(p);
        let mut alpha = 0.5f64;
        let mut representable = true;
        for &r in &readings {
            b.observe(r);
            alpha = if r {
                (1.0 - p) * alpha / ((1.0 - p) * alpha + p * (1.0 - alpha))
            } else {
                p * alpha / (p * alpha + (1.0 - p) * (1.0 - alpha))
            };
            representable &= alpha > 1e-6 && alpha < 1.0 - 1e-6;
        }
        let ones = readings.iter().filter(|&&r| r).count() as f64;
        let llr = (2.0 * ones - readings.len() as f64) * ((1.0 - p) / p).ln();
        prop_assert!((b.log_odds() - llr).abs() <= 1e-12 * llr.abs().max(1.0));
        // the iterated form loses precision in 1 - alpha near the
        // boundaries, so compare on paths that stay away from them
        if representable {
            prop_assert!((b.alpha() - alpha).abs() <= 1e-12f64.max(1e-9 * alpha));
        }
    }

    #[test]
    fn check_bit_ledger_matches(
        hidden in prop::collection::vec(any::<bool>(), 1..8),
        p in 0.05f64..0.45,
        delta in 0.001f64..0.3,
        seed in any::<u64>(),
    ) {
        let n = hidden.len();
        let c = ProblemConfig::new(n as u64, 1, p, delta).unwrap().with_seed(seed);
        let mut o = NoisyBitOracle::new(&c, hidden).unwrap();
        let mut used = 0;
        for i in 0..n {
            let out = check_bit(&mut o, i, delta).unwrap();
            prop_assert_eq!(o.ledger().per_bit()[i], out.queries_used);
            used += out.queries_used;
        }
        prop_assert_eq!(o.total_queries(), used);
    }

    #[test]
    fn heap_shape_holds_through_extractions(
        hidden in prop::collection::vec(any::<bool>(), 1..24),
        extra in 0usize..4,
        seed in any::<u64>(),
    ) {
        let n = hidden.len();
        let c = ProblemConfig::new(n as u64, 1, 0.25, 0.2).unwrap().with_seed(seed);
        let mut o = NoisyBitOracle::new(&c, hidden).unwrap();
        let indices: Vec<usize> = (0..n).collect();
        let mut heap = construct_max_heap(&mut o, &indices, 0.2).unwrap();
        prop_assert_eq!(heap.len(), n);
        prop_assert!(heap.check_shape().is_ok());
        let rounds = (1 + extra).min(n);
        let mut seen = Vec::new();
        for r in 0..rounds {
            let e = noisy_extract_max(&mut heap, &mut o, 0.05).unwrap();
            prop_assert!(!seen.contains(&e.index));
            seen.push(e.index);
            prop_assert_eq!(heap.len(), n - r - 1);
            prop_assert!(heap.check_shape().is_ok());
        }
    }

    #[test]
    fn histograms_conserve_balls(
        n in 10u64..200,
        k in 2u64..10,
        alpha in 1usize..8,
        seed in any::<u64>(),
        heavier in any::<bool>(),
    ) {
        let params = LowerBoundParams::explicit(n, k, 0.2, 0.1, Regime::ThetaLogK, alpha, 0.3).unwrap();
        let w = if heavier { k } else { k - 1 };
        let mut rng = substream(seed, &[]);
        let h = run_nonadaptive_phase(&params, w, &mut rng).unwrap();
        prop_assert_eq!(h.heavy.len(), alpha + 1);
        prop_assert_eq!(h.weight(), w);
        prop_assert_eq!(h.light_total(), n - w);
    }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn report_determinism_and_round_trip(
        n in 4u64..30,
        k_frac in 0.0f64..1.0,
        p in 0.05f64..0.45,
        delta in 0.01f64..0.4,
        seed in any::<u64>(),
        policy in prop::sample::select(vec![
            WeightPolicy::Zeros,
            WeightPolicy::ExactlyKMinus1,
            WeightPolicy::ExactlyK,
            WeightPolicy::RandomWeight,
        ]),
    ) {
        let k = 1 + ((n - 1) as f64 * k_frac) as u64;
        let spec = ExperimentSpec::new(
            ExperimentSpec::grid(&[n], &[k], &[p], &[delta]),
            2,
            Algorithm::NoisyThreshold,
            policy,
        )
        .with_seed(seed);
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&spec).unwrap();
        let bytes = emit_report(&a, ReportFormat::Json).unwrap();
        prop_assert_eq!(&bytes, &emit_report(&b, ReportFormat::Json).unwrap());
        prop_assert_eq!(parse_report(&bytes).unwrap(), a);
    }
}
