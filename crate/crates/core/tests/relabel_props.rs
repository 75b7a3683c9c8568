//! Properties of the effective dataset, the CDS rule and the reweighting
//! objectives.

use proptest::prelude::*;

use udslab::bounds;
use udslab::data::{Dataset, Transition};
use udslab::mdp::OccupancyMeasure;
use udslab::relabel::{
    self, cds_weights, percentile, reweight_gradient, reweight_objective, StrategyContext, StrategyKind,
    StrategySpec, WeightMode,
};

const NS: usize = 4;
const NA: usize = 3;

fn dataset(raw: &[(usize, usize, usize, f64)], labeled: bool) -> Dataset {
    let transitions = raw
        .iter()
        .map(|&(s, a, n, r)| {
            if labeled {
                Transition::labeled(s % NS, a % NA, n % NS, r)
            } else {
                Transition::unlabeled(s % NS, a % NA, n % NS)
            }
        })
        .collect();
    Dataset::new(NS, NA, transitions, "prop").unwrap()
}

fn raw_transitions(max: usize) -> impl Strategy<Value = Vec<(usize, usize, usize, f64)>> {
    prop::collection::vec((0..NS, 0..NA, 0..NS, 0.0..=1.0f64), 1..max)
}

proptest! {
    #[test]
    fn zero_reward_sharing_tables(l in raw_transitions(30), u in raw_transitions(60)) {
        let (l, u) = (dataset(&l, true), dataset(&u, false));
        let eff = relabel::apply_uds(&l, &u).unwrap();
        for i in 0..NS * NA {
            let (nl, nu) = (l.counts_sa()[i] as f64, u.counts_sa()[i] as f64);
            // labeled mean reward computed directly
            let mut sum = 0.0;
            for t in l.transitions().iter().filter(|t| t.state * NA + t.action == i) {
                sum += t.reward.unwrap();
            }
            if nl + nu > 0.0 {
                let f = nl / (nl + nu);
                prop_assert!((eff.f_table()[i] - f).abs() < 1e-12);
                let r_l = if nl > 0.0 { sum / nl } else { 0.0 };
                prop_assert!((eff.r_eff_table()[i] - f * r_l).abs() < 1e-12);
            }
        }
        for s in 0..NS {
            let z: f64 = (0..NA).map(|a| (l.count(s, a) + u.count(s, a)) as f64).sum();
            for a in 0..NA {
                let expected = if z > 0.0 { (l.count(s, a) + u.count(s, a)) as f64 / z } else { 1.0 / NA as f64 };
                prop_assert!((eff.behavior().prob(s, a) - expected).abs() < 1e-12);
            }
        }
        let truth: Vec<f64> = (0..NS * NA).map(|i| (i as f64 * 0.37).fract()).collect();
        prop_assert!(bounds::reward_error(&eff, &truth).unwrap().iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn oracle_sharing_has_no_reward_error(l in raw_transitions(20), u in raw_transitions(40), seed in 0u64..50) {
        let mdp = udslab::mdp::families::random_dense(NS, NA, 0.9, seed);
        let l: Vec<_> = l.into_iter().map(|(s, a, n, _)| (s, a, n, mdp.reward(s % NS, a % NA))).collect();
        let (l, u) = (dataset(&l, true), dataset(&u, false));
        let eff = relabel::apply_sharing_all(&l, &u, &mdp).unwrap();
        for e in bounds::reward_error(&eff, mdp.reward_table()).unwrap() {
            prop_assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn reweight_gradient_matches_finite_differences(
        d in prop::collection::vec(0.05..1.0f64, 2..8),
        l in prop::collection::vec(0.05..1.0f64, 8),
        p in prop::collection::vec(0.1..1.0f64, 8),
        c1 in 0.1..5.0f64,
        c2 in 0.0..5.0f64,
    ) {
        let n = d.len();
        let (l, p) = (&l[..n], &p[..n]);
        let g = reweight_gradient(p, &d, l, c1, c2);
        for i in 0..n {
            let h = 1e-6 * p[i];
            let mut up = p.to_vec();
            let mut down = p.to_vec();
            up[i] += h;
            down[i] -= h;
            let fd = (reweight_objective(&up, &d, l, c1, c2) - reweight_objective(&down, &d, l, c1, c2)) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1.0), "{} vs {}", fd, g[i]);
        }
    }

    #[test]
    fn optimal_reweight_beats_feasible_points(
        d in prop::collection::vec(0.01..1.0f64, 2..10),
        l in prop::collection::vec(0.01..1.0f64, 10),
        trials in prop::collection::vec(prop::collection::vec(0.01..1.0f64, 10), 5),
        c1 in 0.1..10.0f64,
        c2 in 0.0..10.0f64,
    ) {
        let n = d.len();
        let norm = |v: &[f64]| { let z: f64 = v.iter().sum(); v.iter().map(|x| x / z).collect::<Vec<_>>() };
        let (d, l) = (norm(&d), norm(&l[..n]));
        let occ = |v: &[f64]| OccupancyMeasure::from_density(n, 1, v.to_vec()).unwrap();
        let sol = relabel::optimal_reweight(&occ(&d), &occ(&l), c1, c2).unwrap();
        prop_assert!(sol.kkt_residual < 1e-9);
        prop_assert!((sol.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for t in &trials {
            let q = norm(&t[..n]);
            prop_assert!(sol.objective <= reweight_objective(&q, &d, &l, c1, c2) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn closed_form_minimizes_unit_reward_bias(
        d in prop::collection::vec(0.01..1.0f64, 2..10),
        l in prop::collection::vec(0.01..1.0f64, 10),
        trials in prop::collection::vec(prop::collection::vec(0.01..1.0f64, 10), 5),
    ) {
        let n = d.len();
        let norm = |v: &[f64]| { let z: f64 = v.iter().sum(); v.iter().map(|x| x / z).collect::<Vec<_>>() };
        let (d, l) = (norm(&d), norm(&l[..n]));
        let occ = |v: &[f64]| OccupancyMeasure::from_density(n, 1, v.to_vec()).unwrap();
        let p = relabel::closed_form_bias_minimizer(&occ(&d), &occ(&l)).unwrap();
        let ones = vec![1.0; n];
        let f = |x: &[f64]| bounds::reward_bias_objective(x, &d, &l, 50.0, &ones, 0.9).unwrap();
        for t in &trials {
            prop_assert!(f(&p) <= f(&norm(&t[..n])) + 1e-12);
        }
    }
}

/// Unlabeled junk at pairs with low conservative Q is dropped by the hard
/// CDS filter, exactly as the percentile rule says.
#[test]
fn cds_filter_drops_off_distribution_junk() {
    // labeled data at (0, 0) and (1, 1); junk at (2, 2) and (3, 1)
    let mut l = Vec::new();
    for k in 0..10 {
        l.push(Transition::labeled(0, 0, 1, 1.0));
        l.push(Transition::labeled(1, 1, (k % 2) * 2, 0.5));
    }
    let labeled = Dataset::new(NS, NA, l, "labeled").unwrap();
    let mut u = Vec::new();
    for _ in 0..5 {
        u.push(Transition::unlabeled(0, 0, 1));
        u.push(Transition::unlabeled(2, 2, 3));
        u.push(Transition::unlabeled(3, 1, 3));
        u.push(Transition::unlabeled(1, 1, 0));
    }
    let unlabeled = Dataset::new(NS, NA, u, "unlabeled").unwrap();
    let mut q = vec![0.0; NS * NA];
    q[0] = 5.0; // (0, 0)
    q[NA + 1] = 2.0; // (1, 1)
    q[2 * NA + 2] = -1.0; // (2, 2)
    q[3 * NA + 1] = 0.5; // (3, 1)

    let mut spec = StrategySpec::new(StrategyKind::CdsUds);
    spec.cds_mode = WeightMode::Hard;
    spec.k_percentile = 30.0;
    // reference Q-values: ten 5.0 and ten 2.0
    let threshold = percentile(&[vec![5.0; 10], vec![2.0; 10]].concat(), 30.0).unwrap();
    assert_eq!(threshold, 2.0);
    let w = cds_weights(&unlabeled, &labeled, &q, &spec, WeightMode::Hard).unwrap();
    for (t, &wt) in unlabeled.transitions().iter().zip(&w.weights) {
        let keep = q[t.state * NA + t.action] >= threshold;
        assert_eq!(wt, if keep { 1.0 } else { 0.0 });
    }
    let ctx = StrategyContext { conservative_q: Some(&q), ..Default::default() };
    let eff = relabel::apply_strategy(&spec, &labeled, &unlabeled, &ctx).unwrap();
    let counts = eff.counts_eff();
    assert_eq!(counts[2 * NA + 2], 0);
    assert_eq!(counts[3 * NA + 1], 0);
    assert_eq!(counts[0], 15);
    assert_eq!(counts[NA + 1], 15);
}

#[test]
fn soft_cds_weights_are_monotone_in_q() {
    let labeled = dataset(&[(0, 0, 1, 1.0), (1, 1, 2, 0.0), (2, 2, 3, 0.5)], true);
    let unlabeled = dataset(&[(0, 0, 1, 0.0), (1, 1, 2, 0.0), (2, 2, 3, 0.0), (3, 0, 0, 0.0)], false);
    let q: Vec<f64> = (0..NS * NA).map(|i| i as f64).collect();
    let w = cds_weights(&unlabeled, &labeled, &q, &StrategySpec::new(StrategyKind::CdsSoft), WeightMode::Soft).unwrap();
    assert!(w.weights.windows(2).all(|x| x[0] < x[1]));
    assert!(w.weights.iter().all(|&x| x > 0.0 && x < 1.0));
}
