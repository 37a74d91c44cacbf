use gradvar::rng;
use gradvar::stats::{self, BootstrapStatistic, PairedSeries};
use proptest::prelude::*;

fn ps(xs: &[f64], ys: &[f64]) -> PairedSeries {
    PairedSeries::new(xs.to_vec(), ys.to_vec()).unwrap()
}

#[test]
fn pearson_hand_value() {
    // means 2 and 7/3; Sxy = 3, Sxx = 2, Syy = 14/3
    let want = 3.0 / (2.0f64 * 14.0 / 3.0).sqrt();
    let r = stats::pearson(&ps(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0])).unwrap();
    assert!((r - want).abs() < 1e-12);
    assert!((r - 0.9820).abs() < 1e-3);
}

#[test]
fn spearman_with_tied_ranks() {
    let xs = [1.0, 2.0, 2.0, 3.0];
    let ys = [10.0, 20.0, 30.0, 40.0];
    // rank table: x -> (1, 2.5, 2.5, 4), y -> (1, 2, 3, 4)
    let (rx, ry) = ([1.0, 2.5, 2.5, 4.0], [1.0, 2.0, 3.0, 4.0]);
    assert_eq!(stats::average_ranks(&xs), rx);
    assert_eq!(stats::average_ranks(&ys), ry);
    // centred ranks (-1.5, 0, 0, 1.5) and (-1.5, -0.5, 0.5, 1.5)
    let want = 4.5 / (4.5f64 * 5.0).sqrt();
    let rho = stats::spearman(&ps(&xs, &ys)).unwrap();
    assert!((rho - want).abs() < 1e-12);
    assert!((rho - stats::pearson(&ps(&rx, &ry)).unwrap()).abs() < 1e-15);
}

#[test]
fn welch_hand_values() {
    let r = stats::welch_t(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
    assert!((r.t + 1.224_744_871).abs() < 1e-6);
    assert!((r.dof - 4.0).abs() < 1e-12);
    assert!((r.p - 0.288).abs() < 1e-3);
    // closed form for dof = 4: two-sided tail = 1 - t (t^2 + 6) / (t^2 + 4)^{3/2}
    let t = r.t.abs();
    let closed = 1.0 - t * (t * t + 6.0) / (t * t + 4.0).powf(1.5);
    assert!((r.p - closed).abs() < 1e-10);
}

#[test]
fn t_tail_is_monotone_in_t() {
    for dof in [1.0, 2.5, 4.0, 30.0, 400.0] {
        let mut prev = 1.0;
        for i in 0..60 {
            let p = stats::student_t_two_sided(i as f64 * 0.25, dof);
            assert!((0.0..=1.0).contains(&p));
            assert!(p <= prev);
            prev = p;
        }
    }
}

#[test]
fn large_dof_approaches_the_normal_tail() {
    // 2 * (1 - Phi(1.96)) = 0.0499958
    let p = stats::student_t_two_sided(1.959_963_984_540_054, 1e7);
    assert!((p - 0.05).abs() < 1e-6, "{p}");
}

#[test]
fn bootstrap_interval_covers_the_mean_at_nominal_rate() {
    let mut covered = 0;
    let reps = 1000;
    for rep in 0..reps {
        let mut r = rng::stream(rng::derive_seed(2024, rep));
        let sample: Vec<f64> = (0..100).map(|_| rng::normal(&mut r)).collect();
        let (lo, hi) = stats::bootstrap_ci(&sample, BootstrapStatistic::Mean, 1000, 0.95, rep).unwrap();
        if lo <= 0.0 && 0.0 <= hi {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    assert!((0.93..=0.97).contains(&rate), "coverage {rate}");
}

proptest! {
    #[test]
    fn spearman_is_invariant_under_monotone_maps(xs in proptest::collection::vec(-50.0f64..50.0, 3..30), ys in proptest::collection::vec(-50.0f64..50.0, 30)) {
        let ys = &ys[..xs.len()];
        let base = ps(&xs, ys);
        if let Ok(rho) = stats::spearman(&base) {
            let xt: Vec<f64> = xs.iter().map(|x| x.powi(3) + 2.0 * x).collect();
            let yt: Vec<f64> = ys.iter().map(|y| (y / 10.0).exp()).collect();
            prop_assert_eq!(stats::spearman(&ps(&xt, &yt)).unwrap(), rho);
        }
    }

    #[test]
    fn pearson_is_invariant_under_positive_affine_maps(xs in proptest::collection::vec(-50.0f64..50.0, 3..30), ys in proptest::collection::vec(-50.0f64..50.0, 30), a in 0.1f64..10.0, b in -5.0f64..5.0) {
        let ys = &ys[..xs.len()];
        if let Ok(r) = stats::pearson(&ps(&xs, ys)) {
            let xt: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            prop_assert!((stats::pearson(&ps(&xt, ys)).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn welch_is_antisymmetric(a in proptest::collection::vec(-5.0f64..5.0, 2..20), b in proptest::collection::vec(-5.0f64..5.0, 2..20)) {
        if let (Ok(ab), Ok(ba)) = (stats::welch_t(&a, &b), stats::welch_t(&b, &a)) {
            prop_assert_eq!(ab.t, -ba.t);
            prop_assert_eq!(ab.p, ba.p);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }
}
