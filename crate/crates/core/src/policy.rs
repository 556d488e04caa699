//! Closed-form regularized policies under truncated χⁿ regularization.
//!
//! The objective per state is `E_π[Q] − τ Σₙ wₙ χⁿ(π‖μ)` with `wₙ = f⁽ⁿ⁾(1)/n!`.
//! Writing `W = π/μ − 1`, stationarity reads `Q − τ₂ W − τ₃ W² = α` with
//! `τ₂ = 2τ w₂` and `τ₃ = 3τ w₃`, so `π = μ [1 + W(α)]₊` where `α` normalizes.
//! For `N = 2` this is the `q = 0` exponential `μ [1 + (Q − α)/2τ]₊`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::divergence::DivergenceFamily;
use crate::error::{Error, Result};

/// Exponent cap on the `q = 1` path of [`q_exp`].
pub const Q_EXP_MAX_ARG: f64 = 500.0;

/// Deformed exponential `[1 + (1 − q) x]₊^{1/(1−q)}`; `q = 1` is `exp`.
pub fn q_exp(x: f64, q: f64) -> f64 {
    if q == 1.0 {
        return x.min(Q_EXP_MAX_ARG).exp();
    }
    let base = 1.0 + (1.0 - q) * x;
    if base <= 0.0 {
        return if q < 1.0 { 0.0 } else { f64::INFINITY };
    }
    if q == 0.0 {
        base
    } else {
        base.powf(1.0 / (1.0 - q))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizedSolution {
    pub probs: DiscreteDistribution,
    /// Normalization multiplier.
    pub alpha: f64,
    pub support: Vec<bool>,
    pub objective_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationConfig {
    pub tau: f64,
    pub order: u32,
    pub family: DivergenceFamily,
}

impl RegularizationConfig {
    pub fn new(tau: f64, order: u32, family: DivergenceFamily) -> Result<Self> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
        }
        if !(2..=3).contains(&order) {
            return Err(Error::InvalidArgument(format!(
                "only orders 2 and 3 have closed forms, got {order}"
            )));
        }
        Ok(Self { tau, order, family })
    }

    /// Penalty weights `[w₂, …, w_N]`: plain χ² (`[1]`) at order 2, and
    /// `wₙ = f⁽ⁿ⁾(1)/n!` of the family at order 3.
    pub fn weights(&self) -> Result<Vec<f64>> {
        if self.order == 2 {
            return Ok(vec![1.0]);
        }
        (2..=self.order)
            .map(|n| self.family.f_series_coefficient(n))
            .collect()
    }

    pub fn solve(&self, mu: &DiscreteDistribution, q: &[f64]) -> Result<RegularizedSolution> {
        if self.order == 2 {
            return solve_chi2(mu, q, self.tau);
        }
        let w = self.weights()?;
        solve_chi23_weights(mu, q, self.tau, w[0], w[1])
    }
}

fn validate(mu: &DiscreteDistribution, q: &[f64], tau: f64) -> Result<()> {
    if mu.support_size() != q.len() {
        return Err(Error::ShapeMismatch(mu.support_size(), q.len()));
    }
    if !mu.is_strictly_positive() {
        return Err(Error::InvalidArgument(
            "behavior distribution must be strictly positive".into(),
        ));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("action values must be finite".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("tau must be > 0, got {tau}")));
    }
    Ok(())
}

/// `E_π[Q] − τ Σₙ wₙ χⁿ(π‖μ)` with `weights[0] = w₂`.
pub fn regularized_objective(pi: &[f64], mu: &[f64], q: &[f64], tau: f64, weights: &[f64]) -> f64 {
    let mut value = 0.0;
    let mut penalty = 0.0;
    for ((&p, &m), &qa) in pi.iter().zip(mu).zip(q) {
        value += p * qa;
        let w = p / m - 1.0;
        let mut power = w;
        for &c in weights {
            power *= w;
            penalty += c * m * power;
        }
    }
    value - tau * penalty
}

fn finish(
    raw: Vec<f64>,
    alpha: f64,
    mu: &DiscreteDistribution,
    q: &[f64],
    tau: f64,
    weights: &[f64],
) -> Result<RegularizedSolution> {
    let total: f64 = raw.iter().sum();
    let probs: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let support = probs.iter().map(|&p| p > 0.0).collect();
    let objective_value = regularized_objective(&probs, mu.probs(), q, tau, weights);
    Ok(RegularizedSolution {
        probs: DiscreteDistribution::new(probs)?,
        alpha,
        support,
        objective_value,
    })
}

/// χ²-regularized policy `μ [1 + (Q − α)/2τ]₊` by exact support enumeration.
pub fn solve_chi2(mu: &DiscreteDistribution, q: &[f64], tau: f64) -> Result<RegularizedSolution> {
    validate(mu, q, tau)?;
    let m = mu.probs();
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| q[b].total_cmp(&q[a]));

    // On support S = top-k actions: Σ_S μ (1 + (Q − α)/2τ) = 1
    //   ⇒ α = (2τ (M − 1) + Σ_S μ Q) / M,  M = Σ_S μ.
    let mut mass = 0.0;
    let mut weighted = 0.0;
    let mut alpha = f64::NAN;
    for (k, &i) in order.iter().enumerate() {
        mass += m[i];
        weighted += m[i] * q[i];
        let candidate = (2.0 * tau * (mass - 1.0) + weighted) / mass;
        if q[i] > candidate - 2.0 * tau {
            alpha = candidate;
        } else {
            break;
        }
        let _ = k;
    }
    if alpha.is_nan() {
        return Err(Error::Numeric("empty support in chi2 solve".into()));
    }
    let raw: Vec<f64> = m
        .iter()
        .zip(q)
        .map(|(&mi, &qi)| mi * q_exp((qi - alpha) / (2.0 * tau), 0.0))
        .collect();
    finish(raw, alpha, mu, q, tau, &[1.0])
}

/// χ²+χ³-regularized policy for a divergence family: `wₙ = f⁽ⁿ⁾(1)/n!`.
pub fn solve_chi23(
    mu: &DiscreteDistribution,
    q: &[f64],
    tau: f64,
    family: DivergenceFamily,
) -> Result<RegularizedSolution> {
    RegularizationConfig::new(tau, 3, family)?.solve(mu, q)
}

/// Upper limit on `W` where the truncated penalty `w₂W² + w₃W³` stays convex.
pub fn convexity_cap(w2: f64, w3: f64) -> f64 {
    if w3 < 0.0 {
        w2 / (3.0 * -w3)
    } else {
        f64::INFINITY
    }
}

/// Root of `τ₂ W + τ₃ W² = c` on the convex branch, capped at `cap`.
///
/// Uses `W = 2c/(τ₂ + √D)`, which is the `(−τ₂ + √D)/(2τ₃)` root without the
/// cancellation at small `τ₃`. A negative discriminant means every admissible
/// `W` has marginal value above `α` (τ₃ < 0, pinned at the cap) or below it
/// (τ₃ > 0, zero probability).
fn convex_branch_w(c: f64, tau2: f64, tau3: f64, cap: f64) -> f64 {
    let disc = tau2 * tau2 + 4.0 * tau3 * c;
    if disc < 0.0 {
        return if tau3 < 0.0 { cap } else { -1.0 };
    }
    (2.0 * c / (tau2 + disc.sqrt())).min(cap)
}

/// Closed-form policy for the penalty `τ (w₂ χ² + w₃ χ³)`.
///
/// `α` is bracketed by geometric expansion and bisected; `π(α)` is continuous
/// and nonincreasing in `α`. With `w₃ < 0` the problem is posed on the region
/// `W ≤ w₂/(3|w₃|)` where the truncated penalty is convex.
pub fn solve_chi23_weights(
    mu: &DiscreteDistribution,
    q: &[f64],
    tau: f64,
    w2: f64,
    w3: f64,
) -> Result<RegularizedSolution> {
    validate(mu, q, tau)?;
    if !(w2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "second-order weight must be > 0, got {w2}"
        )));
    }
    if w3 == 0.0 {
        let sol = solve_chi2(mu, q, tau * w2)?;
        return finish(sol.probs.into_vec(), sol.alpha, mu, q, tau, &[w2]);
    }
    let tau2 = 2.0 * tau * w2;
    let tau3 = 3.0 * tau * w3;
    let cap = convexity_cap(w2, w3);
    let m = mu.probs();
    let probs_at = |alpha: f64| -> Vec<f64> {
        m.iter()
            .zip(q)
            .map(|(&mi, &qi)| mi * (1.0 + convex_branch_w(qi - alpha, tau2, tau3, cap)).max(0.0))
            .collect()
    };
    let residual = |alpha: f64| probs_at(alpha).iter().sum::<f64>() - 1.0;

    let q_min = q.iter().copied().fold(f64::INFINITY, f64::min);
    let q_max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut spread = (q_max - q_min).max(1.0) + tau2 + tau3.abs();
    let (mut lo, mut hi) = (q_min - spread, q_max + spread);
    let mut expansions = 0;
    while residual(lo) < 0.0 || residual(hi) > 0.0 {
        if expansions == 60 {
            return Err(Error::Numeric(
                "normalization multiplier could not be bracketed".into(),
            ));
        }
        spread *= 2.0;
        lo = q_min - spread;
        hi = q_max + spread;
        expansions += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = 0.5 * (lo + hi);
    finish(probs_at(alpha), alpha, mu, q, tau, &[w2, w3])
}

/// `|Q − τ₂W − τ₃W² − α|` for each in-support action strictly inside the cap.
pub fn stationarity_residuals(
    sol: &RegularizedSolution,
    mu: &DiscreteDistribution,
    q: &[f64],
    tau: f64,
    weights: &[f64],
) -> Vec<f64> {
    let w2 = weights[0];
    let w3 = weights.get(1).copied().unwrap_or(0.0);
    let cap = convexity_cap(w2, w3);
    let (tau2, tau3) = (2.0 * tau * w2, 3.0 * tau * w3);
    sol.probs
        .probs()
        .iter()
        .zip(mu.probs())
        .zip(q)
        .filter_map(|((&p, &m), &qa)| {
            let w = p / m - 1.0;
            (p > 0.0 && w < cap - 1e-9).then(|| (qa - tau2 * w - tau3 * w * w - sol.alpha).abs())
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub iterations: usize,
    pub step: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            step: 1e-2,
            restarts: 8,
            seed: 0,
        }
    }
}

/// Euclidean projection onto `{x : Σx = 1, 0 ≤ x ≤ upper}`.
///
/// The projection is `clamp(v − θ, 0, upper)`; the clamped sum is piecewise
/// linear in `θ` with kinks at `vᵢ` and `vᵢ − upperᵢ`, so `θ` is found exactly.
pub fn project_capped_simplex(v: &[f64], upper: &[f64]) -> Vec<f64> {
    let clamp = |theta: f64| -> Vec<f64> {
        v.iter()
            .zip(upper)
            .map(|(&x, &u)| (x - theta).clamp(0.0, u))
            .collect()
    };
    let mass = |theta: f64| clamp(theta).iter().sum::<f64>();
    let mut kinks: Vec<f64> = v
        .iter()
        .zip(upper)
        .flat_map(|(&x, &u)| [x, x - u])
        .filter(|k| k.is_finite())
        .collect();
    kinks.sort_by(f64::total_cmp);
    let mut lo = kinks[0] - 1.0;
    let mut m_lo = mass(lo);
    let mut theta = lo;
    for &k in &kinks {
        let m_k = mass(k);
        if m_k <= 1.0 {
            theta = if m_lo > m_k {
                lo + (m_lo - 1.0) * (k - lo) / (m_lo - m_k)
            } else {
                k
            };
            break;
        }
        lo = k;
        m_lo = m_k;
    }
    let x = clamp(theta);
    let s: f64 = x.iter().sum();
    x.iter().map(|xi| xi / s).collect()
}

/// Brute-force maximizer of the truncated objective by projected gradient ascent.
///
/// Starts from `μ` and `restarts` random simplex points; the step halves whenever
/// a trial step would decrease the objective. With a negative cubic weight the
/// feasible set is capped at the convex region, matching [`solve_chi23_weights`].
pub fn oracle_solve(
    mu: &DiscreteDistribution,
    q: &[f64],
    tau: f64,
    weights: &[f64],
    options: OracleOptions,
) -> Result<RegularizedSolution> {
    validate(mu, q, tau)?;
    if weights.is_empty() {
        return Err(Error::InvalidArgument("at least one penalty weight".into()));
    }
    let m = mu.probs();
    let n = m.len();
    let cap = if weights.len() == 2 {
        convexity_cap(weights[0], weights[1])
    } else {
        f64::INFINITY
    };
    let upper: Vec<f64> = m.iter().map(|&mi| (mi * (1.0 + cap)).min(1.0)).collect();
    let objective = |x: &[f64]| regularized_objective(x, m, q, tau, weights);
    let gradient = |x: &[f64]| -> Vec<f64> {
        x.iter()
            .zip(m)
            .zip(q)
            .map(|((&p, &mi), &qa)| {
                let w = p / mi - 1.0;
                let mut dpen = 0.0;
                let mut power = 1.0;
                for (k, &c) in weights.iter().enumerate() {
                    power *= w;
                    dpen += c * (k as f64 + 2.0) * power;
                }
                qa - tau * dpen
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut starts = vec![m.to_vec()];
    for _ in 0..options.restarts {
        let e: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
        starts.push(project_capped_simplex(&e.iter().map(|x| x / e.iter().sum::<f64>()).collect::<Vec<_>>(), &upper));
    }

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let mut x = start;
        let mut fx = objective(&x);
        let mut step = options.step;
        for _ in 0..options.iterations {
            let g = gradient(&x);
            let trial: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a + step * b).collect();
            let y = project_capped_simplex(&trial, &upper);
            let fy = objective(&y);
            if fy < fx {
                step *= 0.5;
                if step < 1e-18 {
                    break;
                }
            } else {
                let moved = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                x = y;
                fx = fy;
                if moved < 1e-16 {
                    break;
                }
            }
        }
        if best.as_ref().is_none_or(|(_, fb)| fx > *fb) {
            best = Some((x, fx));
        }
    }
    let (x, _) = best.expect("at least one start");
    let g = gradient(&x);
    let interior: Vec<f64> = x
        .iter()
        .zip(&upper)
        .zip(&g)
        .filter(|((&p, &u), _)| p > 0.0 && p < u)
        .map(|(_, &gi)| gi)
        .collect();
    let alpha = if interior.is_empty() {
        x.iter().zip(&g).filter(|(&p, _)| p > 0.0).map(|(_, &gi)| gi).fold(f64::NEG_INFINITY, f64::max)
    } else {
        interior.iter().sum::<f64>() / interior.len() as f64
    };
    finish(x, alpha, mu, q, tau, weights)
}
