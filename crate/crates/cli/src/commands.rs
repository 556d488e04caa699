use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sfac_core::divergence::{exact_f_divergence, g_derivative_at_one, series_coefficient, taylor_terms, truncation_bound};
use sfac_core::gaussfit::{
    best_fit_quadrature, density_grid, fit_sgd, FitReport, FitVariant, GaussianModel, SgdConfig,
};
use sfac_core::offline::{evaluate_policy, gridworld, train, TabularPolicy, TrainConfig};
use sfac_core::policy::RegularizationConfig;
use sfac_core::{DiscreteDistribution, DivergenceFamily};

use crate::config::GaussFitFile;
use crate::output::{csv_bytes, RunOutput};

pub fn coeffs(family: DivergenceFamily, n_max: u32) -> Result<String> {
    ensure!(n_max >= 2, "n-max must be >= 2, got {n_max}");
    #[derive(Serialize)]
    struct Row {
        n: u32,
        g_deriv_at_1: f64,
        coefficient: f64,
    }
    let rows = (2..=n_max)
        .map(|n| Ok(Row { n, g_deriv_at_1: g_derivative_at_one(family, n)?, coefficient: series_coefficient(family, n)? }))
        .collect::<Result<Vec<_>>>()?;
    Ok(String::from_utf8(csv_bytes(rows)?)?)
}

/// Reads every comma- or newline-separated number in the file.
pub fn read_distribution(path: &Path) -> Result<DiscreteDistribution> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut probs = Vec::new();
    for record in reader.records() {
        for field in record?.iter().filter(|f| !f.is_empty()) {
            probs.push(field.parse::<f64>().with_context(|| format!("{}: bad number {field:?}", path.display()))?);
        }
    }
    DiscreteDistribution::new(probs).with_context(|| format!("{} is not a distribution", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DivergenceMode {
    Exact,
    Taylor(u32),
}

pub fn divergence(family: DivergenceFamily, p: &Path, q: &Path, mode: DivergenceMode) -> Result<String> {
    let (p, q) = (read_distribution(p)?, read_distribution(q)?);
    match mode {
        DivergenceMode::Exact => {
            let value = exact_f_divergence(family, &p, &q)?;
            Ok(format!("value\n{value}\n"))
        }
        DivergenceMode::Taylor(order) => {
            ensure!(order >= 2, "taylor order must be >= 2, got {order}");
            let mut out = String::from("order,term,partial_sum\n");
            let mut sum = 0.0;
            for (n, term) in (2..).zip(taylor_terms(family, &p, &q, order)?) {
                // Adding 0.0 turns −0 into 0 so vanishing odd terms print as 0.
                let term = term + 0.0;
                sum += term;
                writeln!(out, "{n},{term},{sum}")?;
            }
            Ok(out)
        }
    }
}

pub fn bound(family: DivergenceFamily, order: u32, eps: f64, dataset_size: u64) -> Result<String> {
    Ok(format!("{}\n", truncation_bound(family, order, eps, dataset_size)?))
}

#[derive(Debug, Deserialize)]
struct PolicyInputRow {
    state: usize,
    mu: f64,
    q: f64,
}

/// `(state, mu, q)` for one state.
type Instance = (usize, Vec<f64>, Vec<f64>);

/// Rows `state,mu,q`, one per action, grouped by state in order of first appearance.
fn read_policy_instances(path: &Path) -> Result<Vec<Instance>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut groups: Vec<Instance> = Vec::new();
    for row in reader.deserialize() {
        let row: PolicyInputRow = row.with_context(|| format!("parsing {}", path.display()))?;
        match groups.iter_mut().find(|g| g.0 == row.state) {
            Some(g) => {
                g.1.push(row.mu);
                g.2.push(row.q);
            }
            None => groups.push((row.state, vec![row.mu], vec![row.q])),
        }
    }
    ensure!(!groups.is_empty(), "{} has no rows", path.display());
    Ok(groups)
}

pub fn solve_policy(input: &Path, config: &RegularizationConfig) -> Result<RunOutput> {
    #[derive(Serialize)]
    struct Row {
        state: usize,
        action: usize,
        prob: f64,
        alpha: f64,
        in_support: bool,
    }
    let mut rows = Vec::new();
    for (state, mu, q) in read_policy_instances(input)? {
        let mu = DiscreteDistribution::new(mu).with_context(|| format!("state {state}: mu"))?;
        let sol = config.solve(&mu, &q).with_context(|| format!("state {state}"))?;
        for (action, (&prob, &in_support)) in sol.probs.probs().iter().zip(&sol.support).enumerate() {
            rows.push(Row { state, action, prob, alpha: sol.alpha, in_support });
        }
    }
    let bytes = csv_bytes(rows)?;
    let mut out = RunOutput { stdout: String::from_utf8(bytes.clone())?, ..Default::default() };
    out.add("policy.csv", bytes);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum GaussVariant {
    Quadrature,
    Exact,
    Expanded,
}

pub struct GaussFitArgs<'a> {
    pub family: DivergenceFamily,
    pub variant: GaussVariant,
    pub n_loss: Option<u32>,
    pub seed: u64,
    pub config: Option<&'a Path>,
    pub grid_points: usize,
}

pub fn gaussfit(args: &GaussFitArgs) -> Result<RunOutput> {
    let file: GaussFitFile = match args.config {
        Some(path) => crate::config::load(path)?,
        None => GaussFitFile::default(),
    };
    let target = file.mixture()?;
    let mut sgd = file.sgd;
    if let Some(n) = args.n_loss {
        sgd.n_loss = n;
    }
    let report: FitReport = match args.variant {
        GaussVariant::Quadrature => best_fit_quadrature(args.family, &target)?,
        GaussVariant::Exact => fit_sgd(args.family, &target, &SgdConfig { variant: FitVariant::Exact, ..sgd }, args.seed)?,
        GaussVariant::Expanded => {
            fit_sgd(args.family, &target, &SgdConfig { variant: FitVariant::Expanded, ..sgd }, args.seed)?
        }
    };
    let bytes = csv_bytes([&report])?;
    let mut out = RunOutput { stdout: String::from_utf8(bytes.clone())?, ..Default::default() };
    out.add("fit_report.csv", bytes);
    if args.grid_points > 0 {
        #[derive(Serialize)]
        struct Row {
            x: f64,
            target_pdf: f64,
            model_pdf: f64,
        }
        let model = GaussianModel::new(report.mu_hat, report.sigma_hat);
        let lo = (report.mu_hat - 4.0 * report.sigma_hat).min(-8.0);
        let hi = (report.mu_hat + 4.0 * report.sigma_hat).max(8.0);
        let rows = density_grid(&target, &model, lo, hi, args.grid_points)
            .into_iter()
            .map(|(x, target_pdf, model_pdf)| Row { x, target_pdf, model_pdf });
        out.add("density.csv", csv_bytes(rows)?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct PolicyRow {
    state: usize,
    action: usize,
    prob: f64,
}

fn policy_rows(policy: &TabularPolicy) -> Vec<PolicyRow> {
    (0..policy.n_states())
        .flat_map(|state| {
            policy.probs(state).iter().enumerate().map(move |(action, &prob)| PolicyRow { state, action, prob })
        })
        .collect()
}

pub fn train_run(config: &TrainConfig, seed: u64) -> Result<RunOutput> {
    let result = train(config, seed)?;
    let mut out = RunOutput::default();
    out.add("transitions.csv", csv_bytes(&result.dataset.transitions)?);
    out.add("learning_curve.csv", csv_bytes(&result.curve)?);
    out.add("policy_final.csv", csv_bytes(policy_rows(&result.state.theta_policy()?))?);
    out.add("policy_reference.csv", csv_bytes(policy_rows(&result.state.zeta_policy()?))?);
    out.add("policy_behavior.csv", csv_bytes(policy_rows(&result.behavior))?);

    #[derive(Serialize)]
    struct CriticRow {
        state: usize,
        action: usize,
        q: f64,
        v: f64,
    }
    let critics = &result.state.critics;
    let rows = critics.q.iter().enumerate().flat_map(|(state, row)| {
        row.iter().enumerate().map(move |(action, &q)| CriticRow { state, action, q, v: critics.v[state] })
    });
    out.add("critics.csv", csv_bytes(rows)?);

    #[derive(Serialize)]
    struct Summary {
        behavior_return: f64,
        final_return: f64,
        final_return_std: f64,
        steps: usize,
    }
    let last = result.curve.last().expect("curve has the initial evaluation");
    let summary = Summary {
        behavior_return: result.behavior_eval.discounted_mean,
        final_return: last.return_mean,
        final_return_std: last.return_std,
        steps: last.step,
    };
    let bytes = csv_bytes([summary])?;
    out.stdout = String::from_utf8(bytes.clone())?;
    out.add("summary.csv", bytes);
    Ok(out)
}

/// Reads a `state,action,prob` table into a policy.
pub fn read_policy(path: &Path, n_states: usize, n_actions: usize) -> Result<TabularPolicy> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut table = vec![vec![f64::NAN; n_actions]; n_states];
    for row in reader.deserialize() {
        let row: PolicyRow = row.with_context(|| format!("parsing {}", path.display()))?;
        if row.state >= n_states || row.action >= n_actions {
            bail!("{}: entry ({}, {}) outside {n_states}x{n_actions}", path.display(), row.state, row.action);
        }
        table[row.state][row.action] = row.prob;
    }
    let rows = table
        .into_iter()
        .enumerate()
        .map(|(s, probs)| {
            ensure!(probs.iter().all(|p| !p.is_nan()), "{}: state {s} is incomplete", path.display());
            DiscreteDistribution::new(probs).with_context(|| format!("{}: state {s}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TabularPolicy::new(rows)?)
}

pub fn eval(config: &TrainConfig, policy: &Path, seed: u64) -> Result<RunOutput> {
    let mdp = gridworld(&config.environment)?;
    let policy = read_policy(policy, mdp.n_states, mdp.n_actions)?;
    let ev = &config.evaluation;
    let result = evaluate_policy(&mdp, &policy, ev.episodes, ev.horizon, seed)?;
    let bytes = csv_bytes([result])?;
    let mut out = RunOutput { stdout: String::from_utf8(bytes.clone())?, ..Default::default() };
    out.add("evaluation.csv", bytes);
    Ok(out)
}
