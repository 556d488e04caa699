//! Finite MDPs, tabular policies and rollouts.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};
use crate::loss::softmax;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// `transition[s][a]` is the next-state distribution.
    pub transition: Vec<Vec<DiscreteDistribution>>,
    pub reward: Vec<Vec<f64>>,
    pub gamma: f64,
    pub initial: DiscreteDistribution,
    pub terminal: Vec<bool>,
}

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<DiscreteDistribution>>,
        reward: Vec<Vec<f64>>,
        gamma: f64,
        initial: DiscreteDistribution,
        terminal: Vec<bool>,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::InvalidArgument("mdp needs at least one state".into()));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::InvalidArgument("mdp needs at least one action".into()));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if reward.len() != n_states || terminal.len() != n_states || initial.support_size() != n_states {
            return Err(Error::ShapeMismatch(n_states, reward.len()));
        }
        for (row, rewards) in transition.iter().zip(&reward) {
            if row.len() != n_actions || rewards.len() != n_actions {
                return Err(Error::ShapeMismatch(n_actions, row.len()));
            }
            if row.iter().any(|d| d.support_size() != n_states) {
                return Err(Error::InvalidArgument("transition rows must cover every state".into()));
            }
            if rewards.iter().any(|r| !r.is_finite()) {
                return Err(Error::InvalidArgument("rewards must be finite".into()));
            }
        }
        Ok(Self { n_states, n_actions, transition, reward, gamma, initial, terminal })
    }

    pub fn min_reward(&self) -> f64 {
        self.reward.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    /// Greedy Q after `sweeps` synchronous Bellman optimality backups from zero.
    pub fn value_iteration(&self, sweeps: usize) -> Vec<Vec<f64>> {
        let mut v = vec![0.0; self.n_states];
        let mut q = vec![vec![0.0; self.n_actions]; self.n_states];
        for _ in 0..sweeps {
            for s in 0..self.n_states {
                for a in 0..self.n_actions {
                    q[s][a] = self.backup(s, a, &v);
                }
            }
            for s in 0..self.n_states {
                v[s] = if self.terminal[s] {
                    0.0
                } else {
                    q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
                };
            }
        }
        q
    }

    fn backup(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let next: f64 = self.transition[s][a]
            .probs()
            .iter()
            .zip(v)
            .map(|(p, vn)| p * vn)
            .sum();
        self.reward[s][a] + self.gamma * next
    }
}

/// Square gridworld: start in one corner, terminal goal in the opposite one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridworldConfig {
    pub size: usize,
    pub step_reward: f64,
    pub goal_reward: f64,
    pub gamma: f64,
}

impl Default for GridworldConfig {
    fn default() -> Self {
        Self { size: 5, step_reward: -0.01, goal_reward: 1.0, gamma: 0.99 }
    }
}

/// Up, right, down, left.
const MOVES: [(isize, isize); 4] = [(-1, 0), (0, 1), (1, 0), (0, -1)];

pub fn gridworld(config: &GridworldConfig) -> Result<TabularMdp> {
    let n = config.size;
    if n < 2 {
        return Err(Error::InvalidArgument("gridworld size must be >= 2".into()));
    }
    let n_states = n * n;
    let goal = n_states - 1;
    let point = |s: usize| {
        let mut probs = vec![0.0; n_states];
        probs[s] = 1.0;
        DiscreteDistribution::new(probs).expect("point mass")
    };
    let mut transition = Vec::with_capacity(n_states);
    let mut reward = Vec::with_capacity(n_states);
    for s in 0..n_states {
        let (row, col) = ((s / n) as isize, (s % n) as isize);
        let mut t_row = Vec::with_capacity(4);
        let mut r_row = Vec::with_capacity(4);
        for (dr, dc) in MOVES {
            if s == goal {
                t_row.push(point(s));
                r_row.push(0.0);
                continue;
            }
            let (nr, nc) = (row + dr, col + dc);
            let next = if nr < 0 || nc < 0 || nr >= n as isize || nc >= n as isize {
                s
            } else {
                nr as usize * n + nc as usize
            };
            t_row.push(point(next));
            r_row.push(if next == goal { config.goal_reward } else { config.step_reward });
        }
        transition.push(t_row);
        reward.push(r_row);
    }
    let mut terminal = vec![false; n_states];
    terminal[goal] = true;
    TabularMdp::new(transition, reward, config.gamma, point(0), terminal)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    rows: Vec<DiscreteDistribution>,
}

impl TabularPolicy {
    pub fn new(rows: Vec<DiscreteDistribution>) -> Result<Self> {
        let width = rows.first().map(|r| r.support_size()).unwrap_or(0);
        if width == 0 || rows.iter().any(|r| r.support_size() != width) {
            return Err(Error::InvalidArgument("policy rows must share a nonempty width".into()));
        }
        Ok(Self { rows })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Result<Self> {
        Self::new(vec![DiscreteDistribution::uniform(n_actions)?; n_states])
    }

    pub fn from_logits(logits: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            logits
                .iter()
                .map(|row| DiscreteDistribution::from_weights(&softmax(row)))
                .collect::<Result<_>>()?,
        )
    }

    /// Argmax of each row (first on ties), mixed with `epsilon` uniform noise.
    pub fn epsilon_greedy(q: &[Vec<f64>], epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        Self::new(
            q.iter()
                .map(|row| {
                    let n = row.len() as f64;
                    let best = row
                        .iter()
                        .enumerate()
                        .fold(0, |b, (i, v)| if *v > row[b] { i } else { b });
                    let probs = (0..row.len())
                        .map(|a| epsilon / n + if a == best { 1.0 - epsilon } else { 0.0 })
                        .collect::<Vec<_>>();
                    DiscreteDistribution::from_weights(&probs)
                })
                .collect::<Result<_>>()?,
        )
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn n_actions(&self) -> usize {
        self.rows[0].support_size()
    }

    pub fn probs(&self, s: usize) -> &[f64] {
        self.rows[s].probs()
    }

    pub fn rows(&self) -> &[DiscreteDistribution] {
        &self.rows
    }
}

pub(crate) struct Sampler {
    policy: Vec<WeightedIndex<f64>>,
    transition: Vec<Vec<WeightedIndex<f64>>>,
    initial: WeightedIndex<f64>,
}

impl Sampler {
    pub(crate) fn new(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Self> {
        if policy.n_states() != mdp.n_states || policy.n_actions() != mdp.n_actions {
            return Err(Error::ShapeMismatch(mdp.n_states, policy.n_states()));
        }
        let index = |d: &DiscreteDistribution| {
            WeightedIndex::new(d.probs()).map_err(|e| Error::InvalidDistribution(e.to_string()))
        };
        Ok(Self {
            policy: policy.rows().iter().map(index).collect::<Result<_>>()?,
            transition: mdp
                .transition
                .iter()
                .map(|row| row.iter().map(index).collect::<Result<_>>())
                .collect::<Result<_>>()?,
            initial: index(&mdp.initial)?,
        })
    }

    pub(crate) fn start<R: Rng>(&self, rng: &mut R) -> usize {
        self.initial.sample(rng)
    }

    pub(crate) fn action<R: Rng>(&self, s: usize, rng: &mut R) -> usize {
        self.policy[s].sample(rng)
    }

    pub(crate) fn next<R: Rng>(&self, s: usize, a: usize, rng: &mut R) -> usize {
        self.transition[s][a].sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvaluationResult {
    pub discounted_mean: f64,
    pub discounted_std: f64,
    pub undiscounted_mean: f64,
    pub episodes: usize,
}

/// Mean return over seeded rollouts truncated at `horizon`.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    episodes: usize,
    horizon: usize,
    seed: u64,
) -> Result<EvaluationResult> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    let sampler = Sampler::new(mdp, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut discounted = Vec::with_capacity(episodes);
    let mut undiscounted = 0.0;
    for _ in 0..episodes {
        let mut s = sampler.start(&mut rng);
        let mut ret = 0.0;
        let mut raw = 0.0;
        let mut discount = 1.0;
        for _ in 0..horizon {
            if mdp.terminal[s] {
                break;
            }
            let a = sampler.action(s, &mut rng);
            let r = mdp.reward[s][a];
            ret += discount * r;
            raw += r;
            discount *= mdp.gamma;
            s = sampler.next(s, a, &mut rng);
        }
        discounted.push(ret);
        undiscounted += raw;
    }
    let mean = discounted.iter().sum::<f64>() / episodes as f64;
    let var = discounted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / episodes as f64;
    Ok(EvaluationResult {
        discounted_mean: mean,
        discounted_std: var.sqrt(),
        undiscounted_mean: undiscounted / episodes as f64,
        episodes,
    })
}
