//! Advantage regression plus the clipped, truncated conditional-symmetry series.

use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceFamily;
use crate::error::{Error, Result};
use crate::policy::q_exp;

/// Which Taylor coefficients weight the powers of the clipped ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientConvention {
    /// `g⁽ⁿ⁾(1)/n!`, the expansion of the conditional-symmetry part alone.
    #[default]
    G,
    /// `f⁽ⁿ⁾(1)/n!`, the expansion of the whole generator.
    F,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub family: DivergenceFamily,
    pub n_loss: u32,
    pub eps: f64,
    pub tau: f64,
    pub q_weight: f64,
    pub coefficient_convention: CoefficientConvention,
    pub samples_per_state: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            family: DivergenceFamily::JensenShannon,
            n_loss: 3,
            eps: 100.0,
            tau: 0.01,
            q_weight: 0.0,
            coefficient_convention: CoefficientConvention::G,
            samples_per_state: 1,
        }
    }
}

impl LossConfig {
    pub fn new(family: DivergenceFamily, n_loss: u32, eps: f64, tau: f64) -> Result<Self> {
        let cfg = Self {
            family,
            n_loss,
            eps,
            tau,
            q_weight: 0.0,
            coefficient_convention: CoefficientConvention::G,
            samples_per_state: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.family.is_symmetric() {
            return Err(Error::UnsupportedFamily {
                operation: "conditional-symmetry loss",
                family: self.family.to_string(),
            });
        }
        if self.n_loss < 2 {
            return Err(Error::InvalidArgument(format!(
                "n_loss must be >= 2, got {}",
                self.n_loss
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidArgument(format!("eps must be > 0, got {}", self.eps)));
        }
        if !(self.tau > 0.0) {
            return Err(Error::InvalidArgument(format!("tau must be > 0, got {}", self.tau)));
        }
        if !self.q_weight.is_finite() {
            return Err(Error::InvalidArgument("q_weight must be finite".into()));
        }
        if self.samples_per_state == 0 {
            return Err(Error::InvalidArgument("samples_per_state must be >= 1".into()));
        }
        Ok(())
    }

    /// `[c₂, …, c_N]` under the configured convention.
    pub fn coefficients(&self) -> Result<Vec<f64>> {
        (2..=self.n_loss)
            .map(|n| match self.coefficient_convention {
                CoefficientConvention::G => self.family.series_coefficient(n),
                CoefficientConvention::F => self.family.f_series_coefficient(n),
            })
            .collect()
    }
}

/// Clips to `[max(1 − ε, 0), 1 + ε]`.
pub fn clip_ratio(r: f64, eps: f64) -> f64 {
    r.clamp((1.0 - eps).max(0.0), 1.0 + eps)
}

pub fn advantage_weight(q_value: f64, v_value: f64, tau: f64, q_weight: f64) -> f64 {
    q_exp((q_value - v_value) / tau, q_weight)
}

/// Batch mean of `−wᵢ ln πᵢ`.
pub fn awr_term(weights: &[f64], log_probs: &[f64]) -> Result<f64> {
    if weights.len() != log_probs.len() {
        return Err(Error::ShapeMismatch(weights.len(), log_probs.len()));
    }
    if weights.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (&w, &lp) in weights.iter().zip(log_probs) {
        if !lp.is_finite() {
            return Err(Error::Numeric(format!("log-probability {lp}")));
        }
        if w != 0.0 {
            total -= w * lp;
        }
    }
    Ok(total / weights.len() as f64)
}

/// Sampled ratios `π_ζ(b|s)/π_θ(b|s)` with optional per-sample weights.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatioBatch {
    pub ratios: Vec<f64>,
    pub weights: Option<Vec<f64>>,
}

impl RatioBatch {
    pub fn new(ratios: Vec<f64>) -> Self {
        Self { ratios, weights: None }
    }
}

/// `Σₙ cₙ (x − 1)ⁿ` with running powers.
pub fn series_value(x: f64, coeffs: &[f64]) -> f64 {
    let d = x - 1.0;
    let mut power = d;
    let mut total = 0.0;
    for &c in coeffs {
        power *= d;
        total += c * power;
    }
    total
}

/// Derivative of [`series_value`] in `x`.
pub fn series_derivative(x: f64, coeffs: &[f64]) -> f64 {
    let d = x - 1.0;
    let mut power = 1.0;
    let mut total = 0.0;
    for (k, &c) in coeffs.iter().enumerate() {
        power *= d;
        total += c * (k as f64 + 2.0) * power;
    }
    total
}

pub fn conditional_symmetry_term(batch: &RatioBatch, config: &LossConfig) -> Result<f64> {
    config.validate()?;
    let coeffs = config.coefficients()?;
    if let Some(r) = batch.ratios.iter().find(|r| !r.is_finite() || **r < 0.0) {
        return Err(Error::InvalidArgument(format!("ratio {r}")));
    }
    if batch.ratios.is_empty() {
        return Ok(0.0);
    }
    let terms = batch
        .ratios
        .iter()
        .map(|&r| series_value(clip_ratio(r, config.eps), &coeffs));
    match &batch.weights {
        None => Ok(terms.sum::<f64>() / batch.ratios.len() as f64),
        Some(w) => {
            if w.len() != batch.ratios.len() {
                return Err(Error::ShapeMismatch(batch.ratios.len(), w.len()));
            }
            Ok(terms.zip(w).map(|(t, wi)| t * wi).sum::<f64>() / batch.ratios.len() as f64)
        }
    }
}

pub fn sfac_total_loss(awr: f64, consym: f64) -> f64 {
    awr + consym
}

/// Per-update loss diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossDiagnostics {
    pub awr_term: f64,
    pub consym_term: f64,
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// Probability mass of actions whose ratio lies outside the clip band.
    pub clip_fraction: f64,
}

impl LossDiagnostics {
    pub fn total(&self) -> f64 {
        sfac_total_loss(self.awr_term, self.consym_term)
    }
}

/// Softmax with max-shift.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// One state's contribution to the tabular loss.
#[derive(Debug, Clone, Copy)]
pub struct TabularSample<'a> {
    pub logits: &'a [f64],
    /// Auxiliary policy at the same state.
    pub reference: &'a [f64],
    pub action: usize,
    pub weight: f64,
}

/// Per-state loss `−w ln π_θ(a) + Σ_b π_θ(b) h([π_ζ(b)/π_θ(b)]_ε)` and its logit gradient.
///
/// `h` is the truncated series. The expectation over `b` is enumerated, so the
/// gradient flows through both the sampling distribution and the ratio.
pub fn tabular_state_loss(
    sample: TabularSample<'_>,
    coeffs: &[f64],
    eps: f64,
    with_consym: bool,
) -> (LossDiagnostics, Vec<f64>) {
    let pi = softmax(sample.logits);
    let n = pi.len();
    let lo = (1.0 - eps).max(0.0);
    let hi = 1.0 + eps;

    let awr = -sample.weight * pi[sample.action].ln();
    let mut grad: Vec<f64> = pi.iter().map(|&p| sample.weight * p).collect();
    grad[sample.action] -= sample.weight;

    let mut diag = LossDiagnostics {
        awr_term: awr,
        consym_term: 0.0,
        max_ratio: f64::NEG_INFINITY,
        min_ratio: f64::INFINITY,
        clip_fraction: 0.0,
    };
    if !with_consym {
        diag.max_ratio = f64::NAN;
        diag.min_ratio = f64::NAN;
        return (diag, grad);
    }
    // ∂/∂π_b [π_b h(clip(ζ_b/π_b))] = h − r h'(r) inside the band, h outside.
    let mut outer = vec![0.0; n];
    for b in 0..n {
        let r = sample.reference[b] / pi[b];
        diag.max_ratio = diag.max_ratio.max(r);
        diag.min_ratio = diag.min_ratio.min(r);
        let clipped = r < lo || r > hi;
        let x = clip_ratio(r, eps);
        let h = series_value(x, coeffs);
        diag.consym_term += pi[b] * h;
        if clipped {
            diag.clip_fraction += pi[b];
            outer[b] = h;
        } else {
            outer[b] = h - r * series_derivative(r, coeffs);
        }
    }
    let mean: f64 = pi.iter().zip(&outer).map(|(p, g)| p * g).sum();
    for j in 0..n {
        grad[j] += pi[j] * (outer[j] - mean);
    }
    (diag, grad)
}
