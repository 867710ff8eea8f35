use levygreen::estimators::{mc_vector, Estimate, Kernel, McConfig};
use levygreen::geometry::{point, Domain};
use levygreen::harness::{halving_ladder, spread_points, CalkaCase, RatioReport, RatioRow, Verdict};
use proptest::prelude::*;
use rand::Rng;
use serde_json::Value;

fn verdict(i: u8) -> Verdict {
    [Verdict::Bounded, Verdict::Inconclusive, Verdict::Violated][i as usize % 3]
}

fn row(num: f64, num_se: f64, den: f64) -> RatioRow {
    let n = Estimate::new(num, num_se, 100, 1, "test");
    let d = Estimate::new(den, 0.0, 0, 0, "exact");
    RatioRow::new(point(&[0.0]), None, 1, &n, &d)
}

proptest! {
    #[test]
    fn verdict_combination_is_a_max(a in 0u8..3, b in 0u8..3, c in 0u8..3) {
        let (a, b, c) = (verdict(a), verdict(b), verdict(c));
        prop_assert_eq!(a.and(b), b.and(a));
        prop_assert_eq!(a.and(b).and(c), a.and(b.and(c)));
        prop_assert_eq!(a.and(a), a);
        prop_assert!(a.and(b).exit_code() >= a.exit_code().min(b.exit_code()));
    }

    #[test]
    fn report_summary_is_consistent(
        rows in prop::collection::vec((0.05f64..5.0, 0.0f64..0.3, 0.1f64..3.0), 1..12),
        seed in 0u64..1000,
    ) {
        let rows: Vec<RatioRow> = rows.iter().map(|&(n, s, d)| row(n, s * n, d)).collect();
        let report = RatioReport::assemble("prop", rows.clone(), None, Value::Null, seed);
        prop_assert!(report.min_ratio <= report.max_ratio);
        prop_assert!(report.band >= 1.0);
        prop_assert!(report.min_band.0 <= report.min_band.1);
        prop_assert!(report.max_band.0 <= report.max_band.1);
        let any_nonpositive = rows.iter().any(|r| r.ci.1 <= 0.0);
        let any_touching = rows.iter().any(|r| r.ci.0 <= 0.0);
        let expected = if any_nonpositive {
            Verdict::Violated
        } else if any_touching {
            Verdict::Inconclusive
        } else {
            Verdict::Bounded
        };
        prop_assert_eq!(report.verdict, expected);
    }

    #[test]
    fn negative_ratio_is_violated(v in -5.0f64..-0.1) {
        let report = RatioReport::assemble("prop", vec![row(v, 0.01, 1.0), row(1.0, 0.01, 1.0)], None, Value::Null, 3);
        prop_assert_eq!(report.verdict, Verdict::Violated);
    }

    #[test]
    fn kernel_has_unit_mass(h in 0.01f64..2.0) {
        let k = Kernel::new(1, h);
        let n = 2000;
        let mass: f64 = (0..n)
            .map(|i| {
                let u = -h + (i as f64 + 0.5) * 2.0 * h / n as f64;
                k.eval(point(&[u])) * 2.0 * h / n as f64
            })
            .sum();
        prop_assert!((mass - 1.0).abs() < 1e-5);
        prop_assert_eq!(k.eval(point(&[1.01 * h])), 0.0);
    }

    #[test]
    fn spread_points_stay_inside(count in 1usize..40, margin in 0.0f64..0.3, offset in 0usize..500) {
        let domain = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
        for p in spread_points(&domain, count, margin, offset) {
            prop_assert!(domain.contains(p));
            prop_assert!(domain.dist_to_boundary(p) >= margin - 1e-12);
        }
    }

    #[test]
    fn ladder_halves(start in 1e-3f64..1.0, steps in 1usize..10) {
        let l = halving_ladder(start, steps);
        prop_assert_eq!(l.len(), steps);
        prop_assert_eq!(l[0], start);
        for w in l.windows(2) {
            prop_assert!((w[1] - 0.5 * w[0]).abs() < 1e-15);
        }
    }

    #[test]
    fn calka_classification(a in 0.05f64..0.9, b in 0.05f64..0.9, rho in -0.99f64..-0.01) {
        let case = CalkaCase::classify(a, b, rho);
        let s = a + b + rho;
        match case {
            CalkaCase::Negative => prop_assert!(s < 0.0 && case.exponent(a, b, rho) < 0.0),
            CalkaCase::Positive => prop_assert!(s > 0.0 && case.exponent(a, b, rho) == 0.0),
            _ => prop_assert!(case.has_log()),
        }
    }

    #[test]
    fn agreement_is_symmetric(a in -1.0f64..1.0, b in -1.0f64..1.0, sa in 0.0f64..0.5, sb in 0.0f64..0.5) {
        let (x, y) = (Estimate::new(a, sa, 10, 1, "t"), Estimate::new(b, sb, 10, 2, "t"));
        prop_assert_eq!(x.agrees_with(&y, 3.0), y.agrees_with(&x, 3.0));
    }

    #[test]
    fn monte_carlo_is_a_function_of_seed(seed in 0u64..10_000, n in 1usize..3000) {
        let cfg = McConfig::new(n, seed);
        let f = |rng: &mut rand_chacha::ChaCha8Rng, out: &mut [f64]| {
            out[0] = rng.random::<f64>();
            Ok(())
        };
        let (a, b) = (mc_vector(&cfg, 1, f).unwrap(), mc_vector(&cfg, 1, f).unwrap());
        prop_assert_eq!(a[0].mean.to_bits(), b[0].mean.to_bits());
        prop_assert_eq!(a[0].n as usize, n);
    }
}
