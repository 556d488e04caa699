//! Fitting a single Gaussian to a univariate Gaussian mixture under an f-divergence.
//!
//! Three routes: quadrature best fit, stochastic minimization of the exact
//! divergence, and stochastic minimization of the expanded loss (cross-entropy
//! plus the clipped conditional-symmetry series).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceFamily;
use crate::error::{Error, Result};
use crate::loss::{clip_ratio, series_derivative, series_value, LossConfig};
use crate::quadrature::integrate;

const LN_2: f64 = std::f64::consts::LN_2;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub const QUADRATURE_TOL: f64 = 1e-9;
const QUADRATURE_PANELS: usize = 4000;

fn logaddexp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `ln(1 + eˣ)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || means.len() != stds.len() {
            return Err(Error::InvalidArgument(
                "mixture needs equal-length nonempty weights, means, stds".into(),
            ));
        }
        if stds.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidArgument("mixture stds must be positive".into()));
        }
        if means.iter().any(|m| !m.is_finite()) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidArgument("bad mixture weights or means".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("mixture weights sum to {total}")));
        }
        Ok(Self { weights, means, stds })
    }

    pub fn single(mean: f64, std: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![std])
    }

    /// `0.5·N(−1.64, 1.52²) + 0.5·N(1.64, 1.52²)`: variance 5, so the
    /// forward-KL best fit is `N(0, 5)`.
    pub fn standard() -> Self {
        Self::new(vec![0.5, 0.5], vec![-1.64, 1.64], vec![1.52, 1.52]).expect("valid")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn mean(&self) -> f64 {
        self.weights.iter().zip(&self.means).map(|(w, m)| w * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((w, mu), s)| w * (s * s + (mu - m) * (mu - m)))
            .sum()
    }

    fn component_logs(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(move |((w, m), s)| {
                let z = (x - m) / s;
                w.ln() - 0.5 * z * z - s.ln() - HALF_LN_2PI
            })
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let logs: Vec<f64> = self.component_logs(x).collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.log_pdf(x).exp()
    }

    /// `d/dx ln p(x)`.
    pub fn d_log_pdf(&self, x: f64) -> f64 {
        let logs: Vec<f64> = self.component_logs(x).collect();
        let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut num = 0.0;
        let mut den = 0.0;
        for ((l, mu), s) in logs.iter().zip(&self.means).zip(&self.stds) {
            let r = (l - m).exp();
            num += r * (-(x - mu) / (s * s));
            den += r;
        }
        num / den
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.weights.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        let z: f64 = rng.sample(StandardNormal);
        self.means[k] + self.stds[k] * z
    }

    fn range(&self) -> (f64, f64) {
        let s = self.stds.iter().copied().fold(0.0, f64::max);
        let lo = self.means.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - 10.0 * s, hi + 10.0 * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mu: f64,
    pub log_sigma: f64,
}

impl GaussianModel {
    pub fn new(mu: f64, sigma: f64) -> Self {
        Self { mu, log_sigma: sigma.ln() }
    }

    pub fn sigma(&self) -> f64 {
        self.log_sigma.exp()
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let z = (x - self.mu) / self.sigma();
        -0.5 * z * z - self.log_sigma - HALF_LN_2PI
    }

    /// `∂ ln q(x)/∂(μ, log σ)`.
    pub fn score(&self, x: f64) -> [f64; 2] {
        let s = self.sigma();
        let z = (x - self.mu) / s;
        [z / s, z * z - 1.0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Quadrature,
    ExactLoss,
    ExpandedLoss,
}

impl std::fmt::Display for FitMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Quadrature => "quadrature",
            Self::ExactLoss => "exact_loss",
            Self::ExpandedLoss => "expanded_loss",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub method: FitMethod,
    pub family: DivergenceFamily,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    /// Quadrature divergence at the fitted parameters.
    pub divergence_value: f64,
    pub steps: usize,
    pub seed: Option<u64>,
}

fn integration_range(target: &GaussianMixture, model: &GaussianModel) -> (f64, f64) {
    let (lo, hi) = target.range();
    let s = model.sigma();
    (lo.min(model.mu - 10.0 * s), hi.max(model.mu + 10.0 * s))
}

/// `q (f(p/q) + offset)` from log densities, unscaled.
fn divergence_integrand(family: DivergenceFamily, lp: f64, lq: f64) -> f64 {
    let (p, q) = (lp.exp(), lq.exp());
    match family {
        DivergenceFamily::ForwardKl => {
            if p == 0.0 {
                0.0
            } else {
                p * (lp - lq)
            }
        }
        DivergenceFamily::ReverseKl => {
            if q == 0.0 {
                0.0
            } else {
                q * (lq - lp)
            }
        }
        DivergenceFamily::Jeffreys => (p - q) * (lp - lq),
        DivergenceFamily::JensenShannon | DivergenceFamily::Gan => {
            let m = logaddexp(lp, lq);
            let a = if p == 0.0 { 0.0 } else { p * (LN_2 + lp - m) };
            let b = if q == 0.0 { 0.0 } else { q * (LN_2 + lq - m) };
            a + b
        }
        DivergenceFamily::ChiN(k) => {
            if q == 0.0 {
                0.0
            } else {
                q * ((lp - lq).exp() - 1.0).powi(k as i32)
            }
        }
    }
}

/// `f(t) − t f'(t)` with `t = p/q`, from log densities, unscaled.
fn gradient_weight(family: DivergenceFamily, lp: f64, lq: f64) -> f64 {
    let lt = lp - lq;
    match family {
        DivergenceFamily::ForwardKl => -lt.exp(),
        DivergenceFamily::ReverseKl => 1.0 - lt,
        DivergenceFamily::Jeffreys => 1.0 - lt - lt.exp(),
        DivergenceFamily::JensenShannon | DivergenceFamily::Gan => LN_2 - softplus(lt),
        DivergenceFamily::ChiN(k) => {
            let t = lt.exp();
            let k = k as i32;
            (t - 1.0).powi(k) - k as f64 * t * (t - 1.0).powi(k - 1)
        }
    }
}

/// Divergence of the model from the mixture, with the mixture in the numerator.
pub fn quadrature_divergence(
    family: DivergenceFamily,
    target: &GaussianMixture,
    model: &GaussianModel,
) -> Result<f64> {
    quadrature_divergence_tol(family, target, model, QUADRATURE_TOL)
}

fn quadrature_divergence_tol(
    family: DivergenceFamily,
    target: &GaussianMixture,
    model: &GaussianModel,
    tol: f64,
) -> Result<f64> {
    let (a, b) = integration_range(target, model);
    let scale = family.scale();
    let v = integrate(
        |x| divergence_integrand(family, target.log_pdf(x), model.log_pdf(x)),
        a,
        b,
        tol / scale,
        QUADRATURE_PANELS,
    )?;
    Ok(scale * v)
}

/// `∂D/∂(μ, log σ) = ∫ q ∂ln q · (f(t) − t f'(t))` by quadrature.
pub fn quadrature_gradient(
    family: DivergenceFamily,
    target: &GaussianMixture,
    model: &GaussianModel,
) -> Result<[f64; 2]> {
    let (a, b) = integration_range(target, model);
    let scale = family.scale();
    let mut out = [0.0; 2];
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = scale
            * integrate(
                |x| {
                    let lq = model.log_pdf(x);
                    let q = lq.exp();
                    if q == 0.0 {
                        return 0.0;
                    }
                    q * model.score(x)[k] * gradient_weight(family, target.log_pdf(x), lq)
                },
                a,
                b,
                QUADRATURE_TOL * 1e-2,
                QUADRATURE_PANELS,
            )?;
    }
    Ok(out)
}

fn minimize_coordinate(
    family: DivergenceFamily,
    target: &GaussianMixture,
    model: &mut GaussianModel,
    k: usize,
) -> Result<()> {
    let partial = |m: &GaussianModel| quadrature_gradient(family, target, m).map(|g| g[k]);
    let get = |m: &GaussianModel| if k == 0 { m.mu } else { m.log_sigma };
    let with = |m: &GaussianModel, v: f64| {
        let mut out = *m;
        if k == 0 {
            out.mu = v;
        } else {
            out.log_sigma = v;
        }
        out
    };
    let g0 = partial(model)?;
    if g0 == 0.0 {
        return Ok(());
    }
    let x0 = get(model);
    let dir = -g0.signum();
    let mut width = 1e-3;
    let mut far = x0 + dir * width;
    let mut expansions = 0;
    while partial(&with(model, far))?.signum() == g0.signum() {
        width *= 2.0;
        far = x0 + dir * width;
        expansions += 1;
        if expansions > 40 {
            return Err(Error::Numeric("coordinate search could not bracket a minimum".into()));
        }
    }
    let (mut near, mut far) = (x0, far);
    for _ in 0..80 {
        let mid = 0.5 * (near + far);
        if mid == near || mid == far {
            break;
        }
        if partial(&with(model, mid))?.signum() == g0.signum() {
            near = mid;
        } else {
            far = mid;
        }
    }
    *model = with(model, 0.5 * (near + far));
    Ok(())
}

/// Grid search over `(μ, σ)` then coordinate descent on the quadrature divergence.
pub fn best_fit_quadrature(family: DivergenceFamily, target: &GaussianMixture) -> Result<FitReport> {
    let mut best = (f64::INFINITY, GaussianModel::new(0.0, 1.0));
    let sigma_points = 60;
    let (s_lo, s_hi) = (0.3f64.ln(), 6.0f64.ln());
    for i in 0..=160 {
        let mu = -4.0 + 0.05 * i as f64;
        for j in 0..=sigma_points {
            let log_sigma = s_lo + (s_hi - s_lo) * j as f64 / sigma_points as f64;
            let model = GaussianModel { mu, log_sigma };
            let d = quadrature_divergence_tol(family, target, &model, 1e-7)?;
            if d < best.0 {
                best = (d, model);
            }
        }
    }
    let mut model = best.1;
    let mut rounds = 0;
    loop {
        let g = quadrature_gradient(family, target, &model)?;
        if g[0].hypot(g[1]) < 1e-6 || rounds == 200 {
            break;
        }
        minimize_coordinate(family, target, &mut model, 0)?;
        minimize_coordinate(family, target, &mut model, 1)?;
        rounds += 1;
    }
    Ok(FitReport {
        method: FitMethod::Quadrature,
        family,
        mu_hat: model.mu,
        sigma_hat: model.sigma(),
        divergence_value: quadrature_divergence(family, target, &model)?,
        steps: rounds,
        seed: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitVariant {
    Exact,
    Expanded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    pub variant: FitVariant,
    pub n_loss: u32,
    /// Clip radius for the expanded loss.
    pub eps: f64,
    pub steps: usize,
    pub lr: f64,
    pub batch: usize,
    pub init_mu: f64,
    pub init_sigma: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            variant: FitVariant::Exact,
            n_loss: 5,
            eps: 0.2,
            steps: 1000,
            lr: 1e-3,
            batch: 128,
            init_mu: 0.0,
            init_sigma: 4.0,
        }
    }
}

/// Fixed draws defining one minibatch estimate of the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSamples {
    /// Standard normal noise; model samples are `μ + σ z`.
    pub model_noise: Vec<f64>,
    /// Samples from the mixture, used by the cross-entropy part.
    pub target_draws: Vec<f64>,
}

/// `(f(r) + offset, r f'(r))` as functions of `ln r`, unscaled.
fn generator_and_slope(family: DivergenceFamily, lr: f64) -> (f64, f64) {
    let r = lr.exp();
    match family {
        DivergenceFamily::ForwardKl => (r * lr, r * (lr + 1.0)),
        DivergenceFamily::ReverseKl => (-lr, -1.0),
        DivergenceFamily::Jeffreys => ((r - 1.0) * lr, r * (lr + 1.0) - 1.0),
        DivergenceFamily::JensenShannon => {
            let sp = softplus(lr);
            (r * lr - (1.0 + r) * (sp - LN_2), r * (lr - sp + LN_2))
        }
        DivergenceFamily::Gan => {
            let sp = softplus(lr);
            (r * lr - (1.0 + r) * sp + 2.0 * LN_2, r * (lr - sp))
        }
        DivergenceFamily::ChiN(k) => {
            let k = k as i32;
            ((r - 1.0).powi(k), k as f64 * r * (r - 1.0).powi(k - 1))
        }
    }
}

/// Minibatch loss and its exact gradient in `(μ, log σ)` for fixed samples.
///
/// Model samples are reparameterized, so `d ln(p/q)/dμ = (ln p)'(x)` and
/// `d ln(p/q)/d log σ = (ln p)'(x) σ z + 1`.
pub fn minibatch_loss(
    family: DivergenceFamily,
    target: &GaussianMixture,
    model: &GaussianModel,
    config: &SgdConfig,
    samples: &LossSamples,
) -> Result<(f64, [f64; 2])> {
    let s = model.sigma();
    let mut loss = 0.0;
    let mut grad = [0.0; 2];
    let n = samples.model_noise.len() as f64;
    match config.variant {
        FitVariant::Exact => {
            let scale = family.scale();
            for &z in &samples.model_noise {
                let x = model.mu + s * z;
                let lr = target.log_pdf(x) - model.log_pdf(x);
                let (value, slope) = generator_and_slope(family, lr);
                let dlp = target.d_log_pdf(x);
                loss += scale * value / n;
                grad[0] += scale * slope * dlp / n;
                grad[1] += scale * slope * (dlp * s * z + 1.0) / n;
            }
        }
        FitVariant::Expanded => {
            let cfg = LossConfig::new(family, config.n_loss, config.eps, 1.0)?;
            let coeffs = cfg.coefficients()?;
            let m = samples.target_draws.len() as f64;
            for &y in &samples.target_draws {
                let score = model.score(y);
                loss -= model.log_pdf(y) / m;
                grad[0] -= score[0] / m;
                grad[1] -= score[1] / m;
            }
            let lo = (1.0 - config.eps).max(0.0);
            let hi = 1.0 + config.eps;
            for &z in &samples.model_noise {
                let x = model.mu + s * z;
                let r = (target.log_pdf(x) - model.log_pdf(x)).exp();
                loss += series_value(clip_ratio(r, config.eps), &coeffs) / n;
                if r > lo && r < hi {
                    let dlp = target.d_log_pdf(x);
                    let slope = series_derivative(r, &coeffs) * r;
                    grad[0] += slope * dlp / n;
                    grad[1] += slope * (dlp * s * z + 1.0) / n;
                }
            }
        }
    }
    Ok((loss, grad))
}

pub fn draw_samples<R: Rng + ?Sized>(
    rng: &mut R,
    target: &GaussianMixture,
    variant: FitVariant,
    batch: usize,
) -> LossSamples {
    let model_noise = (0..batch).map(|_| rng.sample(StandardNormal)).collect();
    let target_draws = match variant {
        FitVariant::Exact => Vec::new(),
        FitVariant::Expanded => (0..batch).map(|_| target.sample(rng)).collect(),
    };
    LossSamples { model_noise, target_draws }
}

/// Plain SGD on `(μ, log σ)`.
pub fn fit_sgd(
    family: DivergenceFamily,
    target: &GaussianMixture,
    config: &SgdConfig,
    seed: u64,
) -> Result<FitReport> {
    if config.batch == 0 || !(config.lr >= 0.0) || !(config.init_sigma > 0.0) {
        return Err(Error::InvalidArgument("batch > 0, lr >= 0, init_sigma > 0 required".into()));
    }
    if config.variant == FitVariant::Expanded {
        LossConfig::new(family, config.n_loss, config.eps, 1.0)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = GaussianModel::new(config.init_mu, config.init_sigma);
    for step in 0..config.steps {
        let samples = draw_samples(&mut rng, target, config.variant, config.batch);
        let (_, g) = minibatch_loss(family, target, &model, config, &samples)?;
        model.mu -= config.lr * g[0];
        model.log_sigma -= config.lr * g[1];
        if !model.mu.is_finite()
            || !model.log_sigma.is_finite()
            || model.mu.abs() > 100.0
            || model.sigma() > 100.0
        {
            return Err(Error::Numeric(format!(
                "fit diverged at step {step}: mu = {}, sigma = {}",
                model.mu,
                model.sigma()
            )));
        }
    }
    Ok(FitReport {
        method: match config.variant {
            FitVariant::Exact => FitMethod::ExactLoss,
            FitVariant::Expanded => FitMethod::ExpandedLoss,
        },
        family,
        mu_hat: model.mu,
        sigma_hat: model.sigma(),
        divergence_value: quadrature_divergence(family, target, &model)?,
        steps: config.steps,
        seed: Some(seed),
    })
}

/// `(x, target pdf, model pdf)` on an even grid.
pub fn density_grid(
    target: &GaussianMixture,
    model: &GaussianModel,
    lo: f64,
    hi: f64,
    points: usize,
) -> Vec<(f64, f64, f64)> {
    (0..points)
        .map(|i| {
            let x = if points == 1 {
                lo
            } else {
                lo + (hi - lo) * i as f64 / (points - 1) as f64
            };
            (x, target.pdf(x), model.log_pdf(x).exp())
        })
        .collect()
}
