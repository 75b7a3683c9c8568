//! Structural checks of the conservative solver against independent
//! computations.

use approx::assert_relative_eq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use udslab::bounds;
use udslab::data::{behavior_policy, sample_dataset, QualitySpec};
use udslab::mdp::{self, families, TabularPolicy};
use udslab::relabel;
use udslab::solver::{self, ConservativeConfig, Divergence};

fn behavior(ns: usize, na: usize, rng: &mut ChaCha8Rng) -> TabularPolicy {
    let mut probs = Vec::new();
    for _ in 0..ns {
        let mut row: Vec<f64> = (0..na).map(|_| rng.gen_range(0.05..1.0)).collect();
        // knock out one action in some states
        if rng.gen_bool(0.3) {
            row[rng.gen_range(0..na)] = 0.0;
        }
        let z: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / z));
    }
    TabularPolicy::new(ns, na, probs).unwrap()
}

/// Random policy supported inside `beta`'s support.
fn supported_policy(beta: &TabularPolicy, rng: &mut ChaCha8Rng) -> TabularPolicy {
    let (ns, na) = (beta.num_states(), beta.num_actions());
    let mut probs = Vec::new();
    for s in 0..ns {
        let row: Vec<f64> = (0..na)
            .map(|a| if beta.prob(s, a) > 0.0 { rng.gen::<f64>().powi(3) + 1e-9 } else { 0.0 })
            .collect();
        let z: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / z));
    }
    TabularPolicy::new(ns, na, probs).unwrap()
}

#[test]
fn solution_beats_random_supported_policies() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..6 {
        let mdp = families::random_dense(5, 3, 0.9, seed);
        let beta = behavior(5, 3, &mut rng);
        for div in [Divergence::Cql, Divergence::Kl] {
            for alpha in [0.05, 0.5, 3.0] {
                let cfg = ConservativeConfig { divergence: div, ..ConservativeConfig::with_alpha(alpha) };
                let res = solver::solve_on(&mdp, &beta, &cfg).unwrap();
                assert!(res.converged);
                for _ in 0..200 {
                    let pi = supported_policy(&beta, &mut rng);
                    let obj = solver::regularized_objective(&mdp, &beta, &pi, alpha, div).unwrap();
                    assert!(res.objective >= obj - 1e-9, "{div:?} alpha {alpha}: {} < {obj}", res.objective);
                }
            }
        }
    }
}

#[test]
fn conservative_q_averages_to_the_objective() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for seed in 0..5 {
        let mdp = families::random_dense(6, 3, 0.95, seed);
        let beta = behavior(6, 3, &mut rng);
        for div in [Divergence::Cql, Divergence::Kl] {
            let cfg = ConservativeConfig { divergence: div, ..ConservativeConfig::with_alpha(0.2) };
            let res = solver::solve_on(&mdp, &beta, &cfg).unwrap();
            let na = 3;
            let mut avg = 0.0;
            for s in 0..6 {
                let v: f64 = (0..na).map(|a| res.policy.prob(s, a) * res.conservative_q[s * na + a]).sum();
                avg += mdp.initial_dist()[s] * v;
            }
            assert_relative_eq!(avg, res.objective, max_relative = 1e-9);
            // the objective splits into return minus the scaled penalty
            let split = res.empirical_return - 0.2 / (1.0 - 0.95) * res.divergence_value;
            assert_relative_eq!(split, res.objective, max_relative = 1e-9);
        }
    }
}

#[test]
fn conservative_q_is_pessimistic_where_policy_exceeds_behavior() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for seed in 0..5 {
        let mdp = families::random_dense(5, 4, 0.9, seed + 40);
        let beta = behavior(5, 4, &mut rng);
        let res = solver::solve_on(&mdp, &beta, &ConservativeConfig::with_alpha(0.3)).unwrap();
        for (i, (&p, &b)) in res.policy.probs().iter().zip(beta.probs()).enumerate() {
            if b > 0.0 && p >= b {
                assert!(res.conservative_q[i] <= res.q_values[i] + 1e-10);
            }
        }
    }
}

#[test]
fn uds_term_a_agrees_with_occupancy_form() {
    let mdp = families::gridworld(4, 0.2, 0.9, 3);
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    for seed in 0..5 {
        let labeled = sample_dataset(&mdp, &behavior_policy(&mdp, &QualitySpec::random()).unwrap(), 80, seed, true).unwrap();
        let unlabeled =
            sample_dataset(&mdp, &behavior_policy(&mdp, &QualitySpec::medium()).unwrap(), 800, seed + 99, false).unwrap();
        let eff = relabel::apply_uds(&labeled, &unlabeled).unwrap();
        let res = solver::solve_conservative(&eff, &ConservativeConfig::with_alpha(0.1), 0.9, mdp.initial_dist()).unwrap();
        let err = bounds::reward_error(&eff, mdp.reward_table()).unwrap();
        let occ = bounds::reward_bias(&eff, &res.policy, &err, 0.9, mdp.initial_dist()).unwrap();
        let val = bounds::uds_term_a(&eff, &res.policy, mdp.reward_table(), 0.9, mdp.initial_dist()).unwrap();
        assert_relative_eq!(occ, val, epsilon = 1e-9, max_relative = 1e-9);
        assert_eq!(res.policy.num_states(), ns);
        assert_eq!(res.policy.num_actions(), na);
    }
}

#[test]
fn zero_alpha_matches_value_iteration_on_empirical_mdp() {
    let mdp = families::gridworld(4, 0.1, 0.9, 1);
    let data = sample_dataset(&mdp, &TabularPolicy::uniform(mdp.num_states(), mdp.num_actions()), 3000, 5, true).unwrap();
    let eff = relabel::apply_no_sharing(&data).unwrap();
    let emp = eff.empirical(0.9, mdp.initial_dist(), mdp::CoverageMode::Lenient).unwrap();
    let (opt, _) = mdp::optimal_policy(&emp.mdp).unwrap();
    let res = solver::solve_conservative(&eff, &ConservativeConfig::with_alpha(0.0), 0.9, mdp.initial_dist()).unwrap();
    assert_relative_eq!(res.empirical_return, mdp::evaluate_return(&emp.mdp, &opt).unwrap(), max_relative = 1e-10);
}
