//! Empirical checks of the comparability statements on small grids.

use levygreen::estimators::{
    default_horizon, default_path_config, exit_time_mc_multi, green_mc, green_wos_stable, killed_density_mc, McConfig,
    WosConfig,
};
use levygreen::geometry::{point, Domain};
use levygreen::harness::{compare_moments, r_tilde, CompareOptions, Verdict};
use levygreen::levy_models::LevyModel;
use levygreen::stable_core::{ball_green, ball_mean_exit, BallGreen};

#[test]
fn stable_green_is_symmetric_within_joint_error() {
    let domain = Domain::ball(&[0.0, 0.0], 1.0).unwrap();
    let (x, y) = (point(&[0.3, -0.2]), point(&[-0.4, 0.1]));
    let cfg = McConfig::new(40_000, 11);
    let wos = WosConfig::default();
    let gxy = green_wos_stable(&domain, 1.5, x, &[y], &cfg, &wos).unwrap().remove(0);
    let gyx = green_wos_stable(&domain, 1.5, y, &[x], &McConfig::new(40_000, 12), &wos).unwrap().remove(0);
    assert!(gxy.agrees_with(&gyx, 3.0), "{} ± {} vs {} ± {}", gxy.value, gxy.se, gyx.value, gyx.se);
}

#[test]
fn relativistic_green_is_symmetric_within_joint_error() {
    let domain = Domain::interval(-1.0, 1.0).unwrap();
    let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
    let path = default_path_config(&domain, 1.2);
    let horizon = default_horizon(&domain, 1.2);
    let (x, y) = (point(&[0.4]), point(&[-0.3]));
    let gxy = green_mc(&domain, &model, x, &[y], 0.05, &McConfig::new(8_000, 21), path, horizon).unwrap().remove(0);
    let gyx = green_mc(&domain, &model, y, &[x], 0.05, &McConfig::new(8_000, 22), path, horizon).unwrap().remove(0);
    assert!(gxy.agrees_with(&gyx, 3.0), "{} ± {} vs {} ± {}", gxy.value, gxy.se, gyx.value, gyx.se);
}

#[test]
fn ball_green_dominates_product_of_moments() {
    let (alpha, d) = (1.5, 2);
    let pts: Vec<_> = (0..6)
        .flat_map(|i| (0..6).map(move |j| point(&[-0.95 + 0.38 * i as f64, -0.95 + 0.38 * j as f64])))
        .filter(|p| p[0].hypot(p[1]) < 0.99)
        .collect();
    let mut worst = f64::INFINITY;
    for &x in &pts {
        for &y in &pts {
            if x == y {
                continue;
            }
            let g = ball_green(x, y, 1.0, alpha, d).unwrap();
            let m = ball_mean_exit(x, 1.0, alpha, d).unwrap() * ball_mean_exit(y, 1.0, alpha, d).unwrap();
            worst = worst.min(g / m);
        }
    }
    assert!(worst > 0.1, "min G/(E τ E τ) = {worst}");
}

#[test]
fn exit_moments_finite_and_zero_outside() {
    let domain = Domain::interval(-1.0, 1.0).unwrap();
    let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
    let path = default_path_config(&domain, 1.2);
    let horizon = default_horizon(&domain, 1.2);
    let inside = [point(&[0.0]), point(&[0.5]), point(&[-0.9])];
    let small = exit_time_mc_multi(&domain, &model, &inside, &McConfig::new(4_000, 31), path, horizon).unwrap();
    let large = exit_time_mc_multi(&domain, &model, &inside, &McConfig::new(8_000, 32), path, horizon).unwrap();
    for (a, b) in small.iter().zip(&large) {
        assert!(a.value.is_finite() && a.value > 0.0 && !a.is_flagged());
        assert!(a.agrees_with(b, 4.0), "{} vs {}", a.value, b.value);
    }
    assert!(exit_time_mc_multi(&domain, &model, &[point(&[1.5])], &McConfig::new(100, 1), path, horizon).is_err());
}

#[test]
fn relativistic_moments_comparable_to_stable() {
    let domain = Domain::interval(-1.0, 1.0).unwrap();
    let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
    let xs: Vec<_> = [-0.8, -0.4, 0.0, 0.3, 0.7].iter().map(|&v| point(&[v])).collect();
    let mut opts = CompareOptions::new(4_000, 41);
    opts.doubling = false;
    let report = compare_moments(&domain, &model, &xs, &opts).unwrap();
    assert_eq!(report.verdict, Verdict::Bounded, "{:?}", report.notes);
    assert!(report.min_ratio > 1.0 && report.max_ratio < 3.0, "{} {}", report.min_ratio, report.max_ratio);
}

#[test]
fn moment_verdict_is_seed_invariant() {
    let domain = Domain::interval(-1.0, 1.0).unwrap();
    let model = LevyModel::relativistic(1, 1.2, 1.0).unwrap();
    let xs = [point(&[-0.5]), point(&[0.0]), point(&[0.6])];
    for seed in 0..10 {
        let mut opts = CompareOptions::new(1_000, 100 + seed);
        opts.doubling = false;
        let report = compare_moments(&domain, &model, &xs, &opts).unwrap();
        assert_eq!(report.verdict, Verdict::Bounded, "seed {seed}: {:?}", report.notes);
    }
}

#[test]
fn killed_density_bounded_below_by_moments() {
    let domain = Domain::interval(-1.0, 1.0).unwrap();
    let model = LevyModel::stable(1, 1.5).unwrap();
    let x = point(&[0.1]);
    let ys: Vec<_> = [-0.6, -0.2, 0.4, 0.7].iter().map(|&v| point(&[v])).collect();
    let path = default_path_config(&domain, 1.5);
    let p = killed_density_mc(&domain, &model, 1.0, x, &ys, 0.05, &McConfig::new(20_000, 51), path).unwrap();
    let ex = ball_mean_exit(x, 1.0, 1.5, 1).unwrap();
    for (e, &y) in p.iter().zip(&ys) {
        let ey = ball_mean_exit(y, 1.0, 1.5, 1).unwrap();
        let lower = (e.value - 3.0 * e.se) / (ex * ey);
        assert!(lower > 0.0, "y = {}: {} ± {}", y[0], e.value, e.se);
    }
}

#[test]
fn interval_r_tilde_normalised_is_bounded() {
    let domain = Domain::interval(-1.0, 1.0).unwrap();
    let model = LevyModel::relativistic(1, 1.5, 1.0).unwrap();
    let green = BallGreen::new(&domain, 1.5).unwrap();
    let rho = model.envelope().rho;
    let pts = [-0.6, 0.0, 0.5];
    let mut values = Vec::new();
    for &a in &pts {
        for &b in &pts {
            if a == b {
                continue;
            }
            let r = r_tilde(&domain, &green, &model, point(&[a]), point(&[b]), 1e-4).unwrap();
            let scaled = r.abs() * (a - b).abs().powf(1.0 - rho.min(1.0))
                / ((1.0 - a.abs()) * (1.0 - b.abs())).powf(0.75);
            values.push(scaled);
        }
    }
    let max = values.iter().cloned().fold(0.0, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    println!("normalised R range [{min:.3e}, {max:.3e}]");
    assert!(max.is_finite() && max / min < 5.0);
}
