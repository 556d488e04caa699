//! Tabular actor updates on a static dataset: the regularized actor pair
//! (θ with the conditional-symmetry series, ζ by advantage regression) and an
//! advantage-weighted regression baseline.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::critic::{fit_critics, CriticConfig, CriticTables};
use super::dataset::{generate_dataset, OfflineDataset, Transition};
use super::mdp::{evaluate_policy, gridworld, EvaluationResult, GridworldConfig, TabularPolicy};
use crate::error::{Error, Result};
use crate::loss::{advantage_weight, softmax, tabular_state_loss, LossConfig, LossDiagnostics, TabularSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    #[default]
    Sfac,
    /// Advantage-weighted regression with exponential weights, no series term.
    Awac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_transitions: usize,
    pub horizon: usize,
    pub behavior_epsilon: f64,
    /// Value-iteration sweeps behind the behavior policy's greedy part.
    pub vi_sweeps: usize,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self { n_transitions: 10_000, horizon: 100, behavior_epsilon: 0.3, vi_sweeps: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub lr_theta: f64,
    pub lr_zeta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Std of the independent Gaussian draws initializing θ and ζ logits.
    pub init_logit_std: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 256,
            lr_theta: 1e-3,
            lr_zeta: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            adam_eps: 1e-8,
            init_logit_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub eval_every: usize,
    pub episodes: usize,
    pub horizon: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { eval_every: 1000, episodes: 100, horizon: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub environment: GridworldConfig,
    pub dataset: DatasetConfig,
    pub critic: CriticConfig,
    pub loss: LossConfig,
    pub mode: TrainMode,
    /// Drops the series term from the θ update while keeping the Sf-AC path.
    pub disable_conditional_symmetry: bool,
    pub optimizer: OptimizerConfig,
    pub evaluation: EvaluationConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.optimizer.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if self.evaluation.eval_every == 0 || self.evaluation.episodes == 0 {
            return Err(Error::InvalidArgument("eval_every and episodes must be >= 1".into()));
        }
        let o = &self.optimizer;
        if !(o.lr_theta >= 0.0 && o.lr_zeta >= 0.0) {
            return Err(Error::InvalidArgument("learning rates must be >= 0".into()));
        }
        if !(o.init_logit_std >= 0.0) || !o.init_logit_std.is_finite() {
            return Err(Error::InvalidArgument("init_logit_std must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || !(o.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("adam betas must lie in [0, 1), eps > 0".into()));
        }
        Ok(())
    }
}

/// Adam moments for one logits table.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { m: vec![vec![0.0; n_actions]; n_states], v: vec![vec![0.0; n_actions]; n_states], t: 0 }
    }

    pub fn step(&mut self, params: &mut [Vec<f64>], grad: &[Vec<f64>], lr: f64, cfg: &OptimizerConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for s in 0..params.len() {
            for a in 0..params[s].len() {
                let g = grad[s][a];
                self.m[s][a] = cfg.beta1 * self.m[s][a] + (1.0 - cfg.beta1) * g;
                self.v[s][a] = cfg.beta2 * self.v[s][a] + (1.0 - cfg.beta2) * g * g;
                let m_hat = self.m[s][a] / c1;
                let v_hat = self.v[s][a] / c2;
                params[s][a] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub theta_logits: Vec<Vec<f64>>,
    pub zeta_logits: Vec<Vec<f64>>,
    pub critics: CriticTables,
    pub step: usize,
    pub theta_opt: Adam,
    pub zeta_opt: Adam,
}

impl TrainState {
    /// Uniform actors (zero logits).
    pub fn new(critics: CriticTables) -> Self {
        let n_states = critics.q.len();
        let n_actions = critics.q.first().map_or(0, Vec::len);
        Self {
            theta_logits: vec![vec![0.0; n_actions]; n_states],
            zeta_logits: vec![vec![0.0; n_actions]; n_states],
            critics,
            step: 0,
            theta_opt: Adam::new(n_states, n_actions),
            zeta_opt: Adam::new(n_states, n_actions),
        }
    }

    /// Independent `N(0, std²)` logits for θ and ζ.
    pub fn random<R: Rng>(critics: CriticTables, std: f64, rng: &mut R) -> Self {
        let mut state = Self::new(critics);
        for table in [&mut state.theta_logits, &mut state.zeta_logits] {
            for z in table.iter_mut().flatten() {
                *z = std * rng.sample::<f64, _>(StandardNormal);
            }
        }
        state
    }

    pub fn theta_policy(&self) -> Result<TabularPolicy> {
        TabularPolicy::from_logits(&self.theta_logits)
    }

    pub fn zeta_policy(&self) -> Result<TabularPolicy> {
        TabularPolicy::from_logits(&self.zeta_logits)
    }
}

fn check_gradient(grad: &[Vec<f64>], step: usize, diag: &LossDiagnostics) -> Result<()> {
    if grad.iter().flatten().any(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!("non-finite gradient at step {step}: {diag:?}")));
    }
    Ok(())
}

fn assert_positive(logits: &[f64], s: usize, step: usize) -> Result<()> {
    if softmax(logits).iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Numeric(format!(
            "actor probability reached zero at state {s}, step {step}"
        )));
    }
    Ok(())
}

/// Batch-mean logit gradients of the θ loss (advantage regression plus the
/// series term) and the ζ loss (advantage regression).
#[derive(Debug, Clone, PartialEq)]
pub struct ActorGradients {
    pub theta: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    pub diagnostics: LossDiagnostics,
}

pub fn actor_gradients(
    state: &TrainState,
    batch: &[Transition],
    loss: &LossConfig,
    with_consym: bool,
) -> Result<ActorGradients> {
    loss.validate()?;
    let coeffs = loss.coefficients()?;
    let (n_states, n_actions) = (state.theta_logits.len(), state.theta_logits[0].len());
    let mut g_theta = vec![vec![0.0; n_actions]; n_states];
    let mut g_zeta = vec![vec![0.0; n_actions]; n_states];
    let mut diag = LossDiagnostics {
        max_ratio: f64::NEG_INFINITY,
        min_ratio: f64::INFINITY,
        ..Default::default()
    };
    let scale = 1.0 / batch.len() as f64;
    for t in batch {
        assert_positive(&state.theta_logits[t.s], t.s, state.step)?;
        let w = advantage_weight(state.critics.q[t.s][t.a], state.critics.v[t.s], loss.tau, loss.q_weight);
        let reference = softmax(&state.zeta_logits[t.s]);
        let sample = TabularSample { logits: &state.theta_logits[t.s], reference: &reference, action: t.a, weight: w };
        let (d, g) = tabular_state_loss(sample, &coeffs, loss.eps, with_consym);
        for (acc, gi) in g_theta[t.s].iter_mut().zip(&g) {
            *acc += scale * gi;
        }
        diag.awr_term += scale * d.awr_term;
        diag.consym_term += scale * d.consym_term;
        diag.clip_fraction += scale * d.clip_fraction;
        diag.max_ratio = diag.max_ratio.max(d.max_ratio);
        diag.min_ratio = diag.min_ratio.min(d.min_ratio);

        let zeta_sample = TabularSample { logits: &state.zeta_logits[t.s], reference: &reference, action: t.a, weight: w };
        let (_, gz) = tabular_state_loss(zeta_sample, &coeffs, loss.eps, false);
        for (acc, gi) in g_zeta[t.s].iter_mut().zip(&gz) {
            *acc += scale * gi;
        }
    }
    if !with_consym {
        diag.max_ratio = f64::NAN;
        diag.min_ratio = f64::NAN;
    }
    Ok(ActorGradients { theta: g_theta, zeta: g_zeta, diagnostics: diag })
}

/// One θ step on advantage regression plus the series term, and one ζ step on
/// advantage regression, both from the same pre-update state.
pub fn sfac_update(
    state: &mut TrainState,
    batch: &[Transition],
    loss: &LossConfig,
    optimizer: &OptimizerConfig,
    with_consym: bool,
) -> Result<LossDiagnostics> {
    let g = actor_gradients(state, batch, loss, with_consym)?;
    check_gradient(&g.theta, state.step, &g.diagnostics)?;
    check_gradient(&g.zeta, state.step, &g.diagnostics)?;
    state.theta_opt.step(&mut state.theta_logits, &g.theta, optimizer.lr_theta, optimizer);
    state.zeta_opt.step(&mut state.zeta_logits, &g.zeta, optimizer.lr_zeta, optimizer);
    state.step += 1;
    Ok(g.diagnostics)
}

/// Advantage-weighted regression: minimize the batch mean of
/// `−exp((Q − V)/τ) ln π_θ(a|s)`. ζ follows the same update so the state
/// layout matches [`sfac_update`].
pub fn awac_update(
    state: &mut TrainState,
    batch: &[Transition],
    tau: f64,
    optimizer: &OptimizerConfig,
) -> Result<LossDiagnostics> {
    let (n_states, n_actions) = (state.theta_logits.len(), state.theta_logits[0].len());
    let mut g_theta = vec![vec![0.0; n_actions]; n_states];
    let mut g_zeta = vec![vec![0.0; n_actions]; n_states];
    let mut diag = LossDiagnostics::default();
    let scale = 1.0 / batch.len() as f64;
    let regress = |logits: &[f64], a: usize, w: f64, acc: &mut [f64]| -> f64 {
        let pi = softmax(logits);
        for (j, (slot, p)) in acc.iter_mut().zip(&pi).enumerate() {
            let g = w * p - if j == a { w } else { 0.0 };
            *slot += scale * g;
        }
        -w * pi[a].ln()
    };
    for t in batch {
        assert_positive(&state.theta_logits[t.s], t.s, state.step)?;
        let w = advantage_weight(state.critics.q[t.s][t.a], state.critics.v[t.s], tau, 1.0);
        diag.awr_term += scale * regress(&state.theta_logits[t.s], t.a, w, &mut g_theta[t.s]);
        regress(&state.zeta_logits[t.s], t.a, w, &mut g_zeta[t.s]);
    }
    diag.max_ratio = f64::NAN;
    diag.min_ratio = f64::NAN;
    check_gradient(&g_theta, state.step, &diag)?;
    check_gradient(&g_zeta, state.step, &diag)?;
    state.theta_opt.step(&mut state.theta_logits, &g_theta, optimizer.lr_theta, optimizer);
    state.zeta_opt.step(&mut state.zeta_logits, &g_zeta, optimizer.lr_zeta, optimizer);
    state.step += 1;
    Ok(diag)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurveRow {
    pub step: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub undiscounted_mean: f64,
    pub awr_term: Option<f64>,
    pub consym_term: Option<f64>,
    pub clip_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub dataset: OfflineDataset,
    pub behavior: TabularPolicy,
    pub behavior_eval: EvaluationResult,
    pub curve: Vec<CurveRow>,
    pub state: TrainState,
}

impl TrainOutput {
    pub fn final_return(&self) -> f64 {
        self.curve.last().map_or(f64::NAN, |r| r.return_mean)
    }
}

fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)
}

fn batch_seed(seed: u64) -> u64 {
    seed.wrapping_mul(0xD1B5_4A32_D192_ED03).wrapping_add(2)
}

/// Builds the gridworld, collects data with the behavior policy, fits the
/// critics once, then runs `steps` actor updates with periodic evaluation.
pub fn train(config: &TrainConfig, seed: u64) -> Result<TrainOutput> {
    config.validate()?;
    let mdp = gridworld(&config.environment)?;
    let q_vi = mdp.value_iteration(config.dataset.vi_sweeps);
    let behavior = TabularPolicy::epsilon_greedy(&q_vi, config.dataset.behavior_epsilon)?;
    let dataset = generate_dataset(&mdp, &behavior, config.dataset.n_transitions, config.dataset.horizon, seed)?;
    let critics = fit_critics(&dataset, mdp.gamma, &config.critic)?;
    let ev = &config.evaluation;
    let behavior_eval = evaluate_policy(&mdp, &behavior, ev.episodes, ev.horizon, eval_seed(seed))?;

    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed(seed));
    let mut state = TrainState::random(critics, config.optimizer.init_logit_std, &mut rng);
    let evaluate = |state: &TrainState| evaluate_policy(&mdp, &state.theta_policy()?, ev.episodes, ev.horizon, eval_seed(seed));
    let first = evaluate(&state)?;
    let mut curve = vec![CurveRow {
        step: 0,
        return_mean: first.discounted_mean,
        return_std: first.discounted_std,
        undiscounted_mean: first.undiscounted_mean,
        awr_term: None,
        consym_term: None,
        clip_fraction: None,
    }];
    let steps = config.optimizer.steps;
    let with_consym = !config.disable_conditional_symmetry;
    let mut batch = Vec::with_capacity(config.optimizer.batch_size);
    for step in 1..=steps {
        batch.clear();
        batch.extend(
            (0..config.optimizer.batch_size).map(|_| dataset.transitions[rng.random_range(0..dataset.len())]),
        );
        let diag = match config.mode {
            TrainMode::Sfac => sfac_update(&mut state, &batch, &config.loss, &config.optimizer, with_consym)?,
            TrainMode::Awac => awac_update(&mut state, &batch, config.loss.tau, &config.optimizer)?,
        };
        if step % ev.eval_every == 0 || step == steps {
            let r = evaluate(&state)?;
            curve.push(CurveRow {
                step,
                return_mean: r.discounted_mean,
                return_std: r.discounted_std,
                undiscounted_mean: r.undiscounted_mean,
                awr_term: Some(diag.awr_term),
                consym_term: Some(diag.consym_term),
                clip_fraction: Some(diag.clip_fraction),
            });
        }
    }
    Ok(TrainOutput { dataset, behavior, behavior_eval, curve, state })
}
