//! Static transition datasets collected by a behavior policy.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mdp::{Sampler, TabularMdp, TabularPolicy};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub s_next: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    pub transitions: Vec<Transition>,
    /// `counts[s][a]`: occurrences of each state-action pair.
    pub counts: Vec<Vec<usize>>,
}

impl OfflineDataset {
    pub fn from_transitions(
        transitions: Vec<Transition>,
        n_states: usize,
        n_actions: usize,
    ) -> Result<Self> {
        let mut counts = vec![vec![0; n_actions]; n_states];
        for t in &transitions {
            if t.s >= n_states || t.s_next >= n_states || t.a >= n_actions {
                return Err(Error::InvalidArgument(format!("transition out of range: {t:?}")));
            }
            if !t.r.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite reward: {t:?}")));
            }
            counts[t.s][t.a] += 1;
        }
        Ok(Self { transitions, counts })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn n_states(&self) -> usize {
        self.counts.len()
    }

    pub fn n_actions(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn min_reward(&self) -> Option<f64> {
        self.transitions.iter().map(|t| t.r).reduce(f64::min)
    }
}

/// Concatenates seeded episodes until `n_transitions` are collected.
///
/// An episode ends at a terminal state or after `horizon` steps; the last
/// transition of a truncated episode keeps `done = false`.
pub fn generate_dataset(
    mdp: &TabularMdp,
    behavior: &TabularPolicy,
    n_transitions: usize,
    horizon: usize,
    seed: u64,
) -> Result<OfflineDataset> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be >= 1".into()));
    }
    let sampler = Sampler::new(mdp, behavior)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(n_transitions);
    'episodes: while transitions.len() < n_transitions {
        let mut s = sampler.start(&mut rng);
        if mdp.terminal[s] {
            return Err(Error::InvalidArgument("initial state is terminal".into()));
        }
        for _ in 0..horizon {
            let a = sampler.action(s, &mut rng);
            let s_next = sampler.next(s, a, &mut rng);
            let done = mdp.terminal[s_next];
            transitions.push(Transition { s, a, r: mdp.reward[s][a], s_next, done });
            if transitions.len() == n_transitions {
                break 'episodes;
            }
            if done {
                break;
            }
            s = s_next;
        }
    }
    OfflineDataset::from_transitions(transitions, mdp.n_states, mdp.n_actions)
}
