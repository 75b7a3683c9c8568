//! Seeded MDP generators: gridworld navigation, dense random MDPs, chains.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TabularMdp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MdpFamily {
    Gridworld,
    RandomDense,
    Chain,
}

/// Parameters of a generated MDP instance.
///
/// `size` is the grid side for gridworlds and the number of states otherwise.
/// `num_actions` is ignored by gridworlds (always four moves) and chains
/// (always two).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    #[serde(default = "default_family")]
    pub family: MdpFamily,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_actions")]
    pub num_actions: usize,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "default_slip")]
    pub slip: f64,
    /// Base seed; each experiment seed is mixed in.
    #[serde(default)]
    pub seed: u64,
}

fn default_family() -> MdpFamily {
    MdpFamily::Gridworld
}
fn default_size() -> usize {
    6
}
fn default_actions() -> usize {
    4
}
fn default_discount() -> f64 {
    0.95
}
fn default_slip() -> f64 {
    0.1
}

impl Default for MdpSpec {
    fn default() -> Self {
        Self {
            family: default_family(),
            size: default_size(),
            num_actions: default_actions(),
            discount: default_discount(),
            slip: default_slip(),
            seed: 0,
        }
    }
}

impl MdpSpec {
    pub fn build(&self, seed: u64) -> TabularMdp {
        let seed = mix_seed(self.seed, seed);
        match self.family {
            MdpFamily::Gridworld => gridworld(self.size, self.slip, self.discount, seed),
            MdpFamily::RandomDense => random_dense(self.size, self.num_actions, self.discount, seed),
            MdpFamily::Chain => chain(self.size, self.slip, self.discount),
        }
    }
}

/// SplitMix-style combination of two seeds.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(b)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Dense random MDP: next-state rows are normalized exponential draws,
/// rewards uniform on `[0, 1]`, uniform initial distribution.
pub fn random_dense(num_states: usize, num_actions: usize, discount: f64, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (ns, na) = (num_states, num_actions);
    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        let row: Vec<f64> = (0..ns).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = row.iter().sum();
        transition.extend(row.iter().map(|x| x / total));
    }
    let reward = (0..ns * na).map(|_| rng.gen::<f64>()).collect();
    let initial = vec![1.0 / ns as f64; ns];
    TabularMdp::new(ns, na, transition, reward, discount, initial)
        .expect("generated MDP is valid")
}

const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// `side x side` navigation grid with four moves.
///
/// The agent starts in the top-left corner. A goal cell, drawn from the
/// bottom-right quadrant, is absorbing and pays reward 1 for every action.
/// With probability `slip` a move is replaced by a uniformly random one.
/// Moves into the border leave the agent in place.
pub fn gridworld(side: usize, slip: f64, discount: f64, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ns = side * side;
    let na = MOVES.len();
    let half = side / 2;
    let goal_row = rng.gen_range(half..side);
    let goal_col = rng.gen_range(half..side);
    let goal = goal_row * side + goal_col;

    let step = |s: usize, m: usize| -> usize {
        let (r, c) = ((s / side) as isize, (s % side) as isize);
        let (nr, nc) = (r + MOVES[m].0, c + MOVES[m].1);
        if nr < 0 || nc < 0 || nr >= side as isize || nc >= side as isize {
            s
        } else {
            nr as usize * side + nc as usize
        }
    };

    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            if s == goal {
                row[s] = 1.0;
                reward[s * na + a] = 1.0;
                continue;
            }
            row[step(s, a)] += 1.0 - slip;
            for m in 0..na {
                row[step(s, m)] += slip / na as f64;
            }
        }
    }
    let mut initial = vec![0.0; ns];
    initial[0] = 1.0;
    TabularMdp::new(ns, na, transition, reward, discount, initial)
        .expect("generated gridworld is valid")
}

/// Two-action chain of `n` states starting at state 0.
///
/// Action 0 moves right, action 1 moves left; with probability `slip` the
/// opposite move happens. The last state pays 1 per step; state 0 pays a
/// small 0.1 so that staying put is a tempting local optimum.
pub fn chain(n: usize, slip: f64, discount: f64) -> TabularMdp {
    let na = 2;
    let mut transition = vec![0.0; n * na * n];
    let mut reward = vec![0.0; n * na];
    for s in 0..n {
        let right = (s + 1).min(n - 1);
        let left = s.saturating_sub(1);
        for a in 0..na {
            let (intended, other) = if a == 0 { (right, left) } else { (left, right) };
            let row = &mut transition[(s * na + a) * n..(s * na + a + 1) * n];
            row[intended] += 1.0 - slip;
            row[other] += slip;
        }
        if s == n - 1 {
            reward[s * na] = 1.0;
            reward[s * na + 1] = 1.0;
        } else if s == 0 {
            reward[0] = 0.1;
            reward[1] = 0.1;
        }
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    TabularMdp::new(n, na, transition, reward, discount, initial).expect("generated chain is valid")
}
