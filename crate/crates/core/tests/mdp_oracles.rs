//! Exact evaluators against simulation and enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use udslab::bounds::concentration_constants;
use udslab::data::{Dataset, Transition};
use udslab::mdp::families::{random_dense, gridworld};
use udslab::mdp::{self, CoverageMode, TabularMdp, TabularPolicy};

fn draw(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn random_policy(ns: usize, na: usize, seed: u64) -> TabularPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = Vec::new();
    for _ in 0..ns {
        let row: Vec<f64> = (0..na).map(|_| rng.gen::<f64>() + 0.05).collect();
        let z: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / z));
    }
    TabularPolicy::new(ns, na, probs).unwrap()
}

/// Discounted returns and discounted (s, a) visitation from truncated rollouts.
fn simulate(mdp: &TabularMdp, pi: &TabularPolicy, episodes: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = mdp.discount();
    let horizon = ((1e-9f64).ln() / gamma.ln()).ceil() as usize;
    let na = mdp.num_actions();
    let mut returns = Vec::with_capacity(episodes);
    let mut visits = vec![0.0; mdp.num_states() * na];
    for _ in 0..episodes {
        let mut s = draw(mdp.initial_dist(), &mut rng);
        let (mut g, mut w) = (0.0, 1.0);
        for _ in 0..horizon {
            let a = draw(pi.row(s), &mut rng);
            g += w * mdp.reward(s, a);
            visits[s * na + a] += (1.0 - gamma) * w;
            w *= gamma;
            s = draw(mdp.next_dist(s, a), &mut rng);
        }
        returns.push(g);
    }
    visits.iter_mut().for_each(|v| *v /= episodes as f64);
    (returns, visits)
}

#[test]
fn exact_return_matches_monte_carlo() {
    for seed in 0..3 {
        let mdp = random_dense(5, 2, 0.8, seed);
        let pi = random_policy(5, 2, seed + 100);
        let (returns, _) = simulate(&mdp, &pi, 20_000, seed);
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let sd = (returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let exact = mdp::evaluate_return(&mdp, &pi).unwrap();
        assert!((exact - mean).abs() < 4.0 * sd / n.sqrt() + 1e-6, "seed {seed}: {exact} vs {mean}");
    }
}

#[test]
fn occupancy_matches_rollout_visitation() {
    let mdp = gridworld(3, 0.3, 0.7, 4);
    let pi = random_policy(9, 4, 7);
    let (_, visits) = simulate(&mdp, &pi, 40_000, 11);
    let d = mdp::occupancy(&mdp, &pi).unwrap();
    for (exact, mc) in d.density().iter().zip(&visits) {
        assert!((exact - mc).abs() < 0.006, "{exact} vs {mc}");
    }
    assert!((d.density().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn optimal_policy_beats_every_deterministic_policy() {
    for seed in 0..4 {
        let mdp = random_dense(4, 3, 0.9, seed);
        let (star, _) = mdp::optimal_policy(&mdp).unwrap();
        let j_star = mdp::evaluate_return(&mdp, &star).unwrap();
        let mut best = f64::NEG_INFINITY;
        for code in 0..3usize.pow(4) {
            let actions: Vec<usize> = (0..4).map(|s| code / 3usize.pow(s) % 3).collect();
            let j = mdp::evaluate_return(&mdp, &TabularPolicy::deterministic(3, &actions)).unwrap();
            best = best.max(j);
        }
        assert!((best - j_star).abs() < 1e-9, "seed {seed}: {best} vs {j_star}");
    }
}

#[test]
fn q_values_satisfy_bellman_equation() {
    let mdp = random_dense(6, 3, 0.95, 3);
    let pi = random_policy(6, 3, 9);
    let q = mdp::q_values(&mdp, &pi).unwrap();
    let v = mdp::state_values(&mdp, &pi).unwrap();
    for s in 0..6 {
        let avg: f64 = (0..3).map(|a| pi.prob(s, a) * q[s * 3 + a]).sum();
        assert!((avg - v[s]).abs() < 1e-10);
        for a in 0..3 {
            let backup: f64 = mdp.reward(s, a)
                + 0.95 * mdp.next_dist(s, a).iter().zip(&v).map(|(p, x)| p * x).sum::<f64>();
            assert!((backup - q[s * 3 + a]).abs() < 1e-10);
        }
    }
}

#[test]
fn empirical_transitions_respect_hoeffding_radius() {
    // n samples per pair; the L1 deviation bound must hold in >= 1 - delta of trials
    let (ns, na, n, delta) = (5, 2, 60, 0.1);
    let c = concentration_constants(ns, na, delta, 1.0).unwrap();
    let mdp = random_dense(ns, na, 0.9, 21);
    let trials = 200;
    let mut ok = 0;
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
        let mut transitions = Vec::new();
        for s in 0..ns {
            for a in 0..na {
                for _ in 0..n {
                    let r = mdp.reward(s, a);
                    let half = r.min(1.0 - r);
                    let r = r + rng.gen_range(-1.0..1.0) * half;
                    transitions.push(Transition::labeled(s, a, draw(mdp.next_dist(s, a), &mut rng), r));
                }
            }
        }
        let ds = Dataset::new(ns, na, transitions, "hoeffding").unwrap();
        let emp = mdp::empirical_mdp(&ds, 0.9, mdp.initial_dist(), CoverageMode::Strict).unwrap();
        let within = (0..ns).all(|s| {
            (0..na).all(|a| {
                let l1: f64 = emp.mdp.next_dist(s, a).iter().zip(mdp.next_dist(s, a)).map(|(x, y)| (x - y).abs()).sum();
                let dr = (emp.mdp.reward(s, a) - mdp.reward(s, a)).abs();
                l1 <= c.c_p / (n as f64).sqrt() && dr <= c.c_r / (n as f64).sqrt()
            })
        });
        ok += within as usize;
    }
    assert!(ok as f64 >= (1.0 - delta) * trials as f64, "{ok}/{trials}");
}
