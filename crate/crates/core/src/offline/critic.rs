//! In-sample fitted Q with an expectile state value.

use serde::{Deserialize, Serialize};

use super::dataset::OfflineDataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticTables {
    pub q: Vec<Vec<f64>>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub expectile: f64,
    pub sweeps: usize,
    pub tolerance: f64,
}

impl Default for CriticConfig {
    fn default() -> Self {
        Self { expectile: 0.7, sweeps: 5000, tolerance: 1e-8 }
    }
}

/// Minimizer of `Σ wᵢ |κ − 1[xᵢ < v]| (xᵢ − v)²`.
///
/// The first-order condition is linear in `v` between consecutive sorted
/// values, so each gap is tried in turn.
pub fn expectile(values: &[f64], weights: &[f64], kappa: f64) -> Result<f64> {
    if values.len() != weights.len() {
        return Err(Error::ShapeMismatch(values.len(), weights.len()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::InvalidArgument(format!("expectile must lie in (0, 1), got {kappa}")));
    }
    let mut pairs: Vec<(f64, f64)> = values
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(&x, &w)| (x, w))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("expectile of an empty weighted set".into()));
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_w: f64 = pairs.iter().map(|p| p.1).sum();
    let total_wx: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    // Below: values ≤ v carry weight (1 − κ); above: κ.
    let (mut below_w, mut below_wx) = (0.0, 0.0);
    for k in 0..pairs.len() {
        below_w += pairs[k].1;
        below_wx += pairs[k].0 * pairs[k].1;
        let above_w = total_w - below_w;
        let above_wx = total_wx - below_wx;
        let v = ((1.0 - kappa) * below_wx + kappa * above_wx)
            / ((1.0 - kappa) * below_w + kappa * above_w);
        let upper = pairs.get(k + 1).map_or(f64::INFINITY, |p| p.0);
        if v >= pairs[k].0 && v <= upper {
            return Ok(v);
        }
    }
    Ok(pairs[pairs.len() - 1].0)
}

struct PairStats {
    count: usize,
    reward_sum: f64,
    /// `(s', continuing count)`.
    next: Vec<(usize, usize)>,
}

/// Alternates `q(s,a) ← mean[r + γ(1 − done) v(s')]` and `v(s) ← expectile of q(s,·)`
/// weighted by dataset action counts, until the largest change is below tolerance.
///
/// Pairs absent from the data keep `min r / (1 − γ)`.
pub fn fit_critics(dataset: &OfflineDataset, gamma: f64, config: &CriticConfig) -> Result<CriticTables> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot fit critics on an empty dataset".into()));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let (n_states, n_actions) = (dataset.n_states(), dataset.n_actions());
    let pessimistic = dataset.min_reward().expect("nonempty") / (1.0 - gamma);
    let mut stats: Vec<Vec<PairStats>> = (0..n_states)
        .map(|_| {
            (0..n_actions)
                .map(|_| PairStats { count: 0, reward_sum: 0.0, next: Vec::new() })
                .collect()
        })
        .collect();
    for t in &dataset.transitions {
        let st = &mut stats[t.s][t.a];
        st.count += 1;
        st.reward_sum += t.r;
        if !t.done {
            match st.next.iter_mut().find(|(s, _)| *s == t.s_next) {
                Some(entry) => entry.1 += 1,
                None => st.next.push((t.s_next, 1)),
            }
        }
    }
    for row in &mut stats {
        for st in row {
            st.next.sort_unstable();
        }
    }

    let mut q = vec![vec![pessimistic; n_actions]; n_states];
    let mut v = vec![pessimistic; n_states];
    for _ in 0..config.sweeps {
        let mut change: f64 = 0.0;
        for s in 0..n_states {
            for a in 0..n_actions {
                let st = &stats[s][a];
                if st.count == 0 {
                    continue;
                }
                let bootstrap: f64 = st.next.iter().map(|&(sn, c)| c as f64 * v[sn]).sum();
                let new = (st.reward_sum + gamma * bootstrap) / st.count as f64;
                change = change.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        for s in 0..n_states {
            let weights: Vec<f64> = dataset.counts[s].iter().map(|&c| c as f64).collect();
            if weights.iter().all(|&w| w == 0.0) {
                continue;
            }
            let new = expectile(&q[s], &weights, config.expectile)?;
            change = change.max((new - v[s]).abs());
            v[s] = new;
        }
        if change < config.tolerance {
            break;
        }
    }
    Ok(CriticTables { q, v })
}
