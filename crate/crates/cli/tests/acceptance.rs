//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines are always printed. Exits
//! nonzero if a criterion outside `KNOWN_RED` fails.

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfac_core::divergence::{
    chi_n, exact_f_divergence, g_derivative_at_one, series_coefficient, split_taylor_divergence,
    taylor_divergence, truncation_bound,
};
use sfac_core::gaussfit::{
    best_fit_quadrature, draw_samples, fit_sgd, minibatch_loss, FitVariant, GaussianMixture, GaussianModel,
    SgdConfig,
};
use sfac_core::loss::{softmax, tabular_state_loss, LossConfig, TabularSample};
use sfac_core::offline::{train, TrainConfig, TrainMode};
use sfac_core::policy::{oracle_solve, solve_chi2, OracleOptions, RegularizationConfig};
use sfac_core::{total_variation, DiscreteDistribution, DivergenceFamily};

use DivergenceFamily::*;

/// Criteria that are implemented as stated but do not hold; see the README.
const KNOWN_RED: [u32; 1] = [3];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn dist(w: &[f64]) -> DiscreteDistribution {
    DiscreteDistribution::from_weights(w).unwrap()
}

/// `(p, q)` whose largest `|p/q − 1|` equals `r`.
fn pair_with_radius(rng: &mut ChaCha8Rng, r: f64) -> (DiscreteDistribution, DiscreteDistribution) {
    let n = rng.random_range(2..=8);
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let q = dist(&w);
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mean: f64 = q.probs().iter().zip(&u).map(|(a, b)| a * b).sum();
    let d: Vec<f64> = u.iter().map(|x| x - mean).collect();
    let m = d.iter().map(|x| x.abs()).fold(0.0, f64::max).max(1e-12);
    let p: Vec<f64> = q.probs().iter().zip(&d).map(|(qi, di)| qi * (1.0 + r * di / m)).collect();
    (dist(&p), q)
}

fn max_ratio_gap(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    p.probs().iter().zip(q.probs()).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let v = truncation_bound(Jeffreys, 5, 0.2, 1).unwrap();
    let rel = (v - 8.13e-5).abs() / 8.13e-5;
    outcome(rel <= 5e-3, format!("bound {v:.6e}, relative error {rel:.2e}"))
}

/// `g⁽ⁿ⁾(1)` by a Richardson-extrapolated central difference.
fn fd_derivative(g: impl Fn(f64) -> f64, n: u32, h: f64) -> f64 {
    let d = |h: f64| {
        let mut total = 0.0;
        let mut binom = 1.0;
        for k in 0..=n {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * binom * g(1.0 + (n as f64 / 2.0 - k as f64) * h);
            binom = binom * (n - k) as f64 / (k + 1) as f64;
        }
        total / h.powi(n as i32)
    };
    (4.0 * d(h / 2.0) - d(h)) / 3.0
}

fn criterion_2() -> Outcome {
    let mut failures = Vec::new();
    for n in 2..=10u32 {
        let expected = if n % 2 == 0 { 1.0 } else { -1.0 } / n as f64;
        if series_coefficient(Jeffreys, n).unwrap() != expected {
            failures.push(format!("jeffreys n={n}"));
        }
        let magnitude = 1.0 / (n as f64 * (n - 1) as f64 * 2f64.powi(n as i32 - 1));
        for fam in [JensenShannon, Gan] {
            if series_coefficient(fam, n).unwrap().abs() != magnitude {
                failures.push(format!("{fam} magnitude n={n}"));
            }
        }
    }
    for fam in [JensenShannon, Gan] {
        for n in 2..=5 {
            let closed = g_derivative_at_one(fam, n).unwrap();
            let fd = fd_derivative(|t| fam.g(t).unwrap(), n, 2e-2);
            if (closed - fd).abs() > 1e-4 * closed.abs() || closed.signum() != fd.signum() {
                failures.push(format!("{fam} n={n}: {closed} vs {fd}"));
            }
        }
    }
    let detail = if failures.is_empty() {
        "Jeffreys exact, JS/GAN magnitudes exact, signs match finite differences".to_string()
    } else {
        failures.join("; ")
    };
    outcome(failures.is_empty(), detail)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let orders = [2u32, 3, 5, 8];
    let (mut checks, mut over_bound, mut non_monotone, mut split_over) = (0, 0, 0, 0);
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..100 {
        let r = rng.random_range(0.05..0.4);
        let (p, q) = pair_with_radius(&mut rng, r);
        let eps = max_ratio_gap(&p, &q);
        for fam in DivergenceFamily::SYMMETRIC {
            let exact = exact_f_divergence(fam, &p, &q).unwrap();
            let mut prev = f64::INFINITY;
            for n in orders {
                let gap = (taylor_divergence(fam, &p, &q, n).unwrap() - exact).abs();
                let bound = truncation_bound(fam, n, eps, 1).unwrap();
                checks += 1;
                if gap > bound {
                    over_bound += 1;
                    worst_ratio = worst_ratio.max(gap / bound);
                }
                if gap > prev {
                    non_monotone += 1;
                }
                prev = gap;
                let split_gap = (split_taylor_divergence(fam, &p, &q, n).unwrap() - exact).abs();
                if split_gap > bound + 1e-14 {
                    split_over += 1;
                }
            }
        }
    }
    outcome(
        over_bound == 0 && non_monotone == 0,
        format!(
            "full series: {over_bound}/{checks} gaps exceed the bound (worst x{worst_ratio:.1}), \
             {non_monotone} increases in N; conditional-symmetry split: {split_over}/{checks} exceed it"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let r = rng.random_range(0.005..0.05);
        let (p, q) = pair_with_radius(&mut rng, r);
        let kl = exact_f_divergence(ForwardKl, &p, &q).unwrap();
        let chi2 = chi_n(&p, &q, 2).unwrap();
        worst = worst.max((chi2 - 2.0 * kl).abs() / kl);
    }
    outcome(worst <= 0.05, format!("worst |χ² − 2KL|/KL = {worst:.4}"))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst2, mut worst3): (f64, f64) = (0.0, 0.0);
    let chi23 = |tau| RegularizationConfig::new(tau, 3, ForwardKl).unwrap();
    for i in 0..200u64 {
        let n = rng.random_range(3..=8);
        let tau = [0.1, 0.5, 2.0][i as usize % 3];
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let mu = dist(&w);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let opts = OracleOptions { seed: i, ..Default::default() };

        let closed = solve_chi2(&mu, &q, tau).unwrap();
        let oracle = oracle_solve(&mu, &q, tau, &[1.0], opts).unwrap();
        worst2 = worst2.max(total_variation(closed.probs.probs(), oracle.probs.probs()));

        let cfg = chi23(tau);
        let closed = cfg.solve(&mu, &q).unwrap();
        let oracle = oracle_solve(&mu, &q, tau, &cfg.weights().unwrap(), opts).unwrap();
        worst3 = worst3.max(total_variation(closed.probs.probs(), oracle.probs.probs()));
    }
    let half = DiscreteDistribution::uniform(2).unwrap();
    let a = solve_chi2(&half, &[1.0, 0.0], 0.5).unwrap();
    let b = solve_chi2(&half, &[10.0, 0.0], 0.5).unwrap();
    let hand = (a.probs.probs()[0] - 0.75).abs() <= 1e-10
        && (a.probs.probs()[1] - 0.25).abs() <= 1e-10
        && (a.alpha - 0.5).abs() <= 1e-10
        && (b.probs.probs()[0] - 1.0).abs() <= 1e-10
        && b.probs.probs()[1].abs() <= 1e-10
        && (b.alpha - 9.0).abs() <= 1e-10;
    outcome(
        worst2 <= 1e-3 && worst3 <= 1e-3 && hand,
        format!("worst TV χ² {worst2:.2e}, χ²+χ³ {worst3:.2e}; hand examples {}", if hand { "exact" } else { "off" }),
    )
}

fn criterion_6() -> Outcome {
    let target = GaussianMixture::standard();
    let fkl = best_fit_quadrature(ForwardKl, &target).unwrap();
    let jeff = best_fit_quadrature(Jeffreys, &target).unwrap();
    let mean_sigma = |variant| {
        let cfg = SgdConfig { variant, n_loss: 5, ..Default::default() };
        (0..5).map(|s| fit_sgd(JensenShannon, &target, &cfg, s).unwrap().sigma_hat).sum::<f64>() / 5.0
    };
    let exact = mean_sigma(FitVariant::Exact);
    let expanded = mean_sigma(FitVariant::Expanded);
    let a = (fkl.sigma_hat - 2.236).abs() <= 0.01 && fkl.mu_hat.abs() <= 0.01;
    let b = (jeff.sigma_hat - 2.22).abs() <= 0.03;
    let c = exact > 3.0 && (2.2..=3.0).contains(&expanded);
    outcome(
        a && b && c,
        format!(
            "forward KL σ* {:.4} μ* {:.4}; Jeffreys σ* {:.4}; JS exact σ̂ {exact:.3}, JS expanded σ̂ {expanded:.3}",
            fkl.sigma_hat, fkl.mu_hat, jeff.sigma_hat
        ),
    )
}

/// Relative error with an absolute floor at the finite-difference noise level.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-5;
    let mut worst_loss: f64 = 0.0;
    for case in 0..50 {
        let fam = DivergenceFamily::SYMMETRIC[case % 3];
        let n = rng.random_range(2..=6);
        let eps = [0.2, 0.5, 1.0, 10.0][case % 4];
        let coeffs = LossConfig::new(fam, rng.random_range(2..=6), eps, 1.0).unwrap().coefficients().unwrap();
        let logits: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let ref_logits: Vec<f64> = logits.iter().map(|z| z + rng.random_range(-0.6..0.6)).collect();
        let reference = softmax(&ref_logits);
        let action = rng.random_range(0..n);
        let weight = rng.random_range(0.0..3.0);
        let value = |l: &[f64]| {
            let s = TabularSample { logits: l, reference: &reference, action, weight };
            tabular_state_loss(s, &coeffs, eps, true).0.total()
        };
        let (_, grad) = tabular_state_loss(TabularSample { logits: &logits, reference: &reference, action, weight }, &coeffs, eps, true);
        for j in 0..n {
            let (mut up, mut down) = (logits.clone(), logits.clone());
            up[j] += h;
            down[j] -= h;
            worst_loss = worst_loss.max(rel_err(grad[j], (value(&up) - value(&down)) / (2.0 * h)));
        }
    }

    let target = GaussianMixture::standard();
    let mut worst_fit: f64 = 0.0;
    for case in 0..50 {
        let variant = if case % 2 == 0 { FitVariant::Exact } else { FitVariant::Expanded };
        let fam = DivergenceFamily::SYMMETRIC[case % 3];
        let config = SgdConfig { variant, n_loss: rng.random_range(2..=6), eps: [0.2, 0.5, 1.0][case % 3], ..Default::default() };
        let model = GaussianModel::new(rng.random_range(-1.0..1.0), rng.random_range(1.0..4.0));
        let samples = draw_samples(&mut rng, &target, variant, 64);
        let (_, g) = minibatch_loss(fam, &target, &model, &config, &samples).unwrap();
        for k in 0..2 {
            let eval = |d: f64| {
                let mut m = model;
                if k == 0 {
                    m.mu += d;
                } else {
                    m.log_sigma += d;
                }
                minibatch_loss(fam, &target, &m, &config, &samples).unwrap().0
            };
            worst_fit = worst_fit.max(rel_err(g[k], (eval(h) - eval(-h)) / (2.0 * h)));
        }
    }
    outcome(
        worst_loss <= 1e-5 && worst_fit <= 1e-5,
        format!("worst relative error: actor loss {worst_loss:.2e}, Gaussian-fit loss {worst_fit:.2e}"),
    )
}

fn criterion_8() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for fam in [JensenShannon, Jeffreys] {
        let mut cfg = TrainConfig::default();
        cfg.loss = LossConfig { family: fam, n_loss: 3, eps: 100.0, tau: 0.01, ..Default::default() };
        let (mut learned, mut behavior) = (0.0, 0.0);
        for seed in 0..5 {
            match train(&cfg, seed) {
                Ok(out) => {
                    learned += out.final_return() / 5.0;
                    behavior += out.behavior_eval.discounted_mean / 5.0;
                    let positive = out.state.theta_logits.iter().all(|row| softmax(row).iter().all(|&p| p > 0.0));
                    pass &= positive;
                }
                Err(e) => {
                    pass = false;
                    notes.push(format!("{fam} seed {seed} failed: {e}"));
                }
            }
        }
        pass &= learned >= behavior;
        notes.push(format!("{fam} {learned:.4} vs behavior {behavior:.4}"));
    }

    let mut plain = TrainConfig::default();
    plain.disable_conditional_symmetry = true;
    plain.loss.q_weight = 1.0;
    let awac = TrainConfig { mode: TrainMode::Awac, ..plain };
    let (a, b) = (train(&plain, 0).unwrap(), train(&awac, 0).unwrap());
    let identical = a.state.theta_logits == b.state.theta_logits
        && a.state.zeta_logits == b.state.zeta_logits
        && a.curve.iter().zip(&b.curve).all(|(x, y)| x.return_mean.to_bits() == y.return_mean.to_bits());
    pass &= identical;
    notes.push(format!("baseline bit-identical: {identical}"));
    outcome(pass, notes.join("; "))
}

fn sfac(args: &[&str], cwd: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_sfac")).args(args).current_dir(cwd).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

/// Stdout plus every CSV in `dir`, sorted by name.
fn artifacts(stdout: Vec<u8>, dir: Option<&Path>) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![("stdout".to_string(), stdout)];
    if let Some(dir) = dir {
        let mut csvs: Vec<_> = fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        csvs.sort();
        files.extend(csvs);
    }
    files
}

fn criterion_9() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("p.csv"), "0.6,0.3,0.1\n").unwrap();
    fs::write(d.join("q.csv"), "0.5,0.3,0.2\n").unwrap();
    fs::write(d.join("instances.csv"), "state,mu,q\n0,0.2,0.4\n0,0.5,-0.1\n0,0.3,0.9\n1,0.5,1\n1,0.5,0\n").unwrap();
    fs::write(
        d.join("train.toml"),
        "schema_version = 1\n[dataset]\nn_transitions = 2000\n[optimizer]\nsteps = 2000\n[evaluation]\neval_every = 500\n",
    )
    .unwrap();
    let commands: Vec<(Vec<&str>, bool)> = vec![
        (vec!["coeffs", "--family", "gan", "--n-max", "8"], false),
        (vec!["divergence", "--family", "jensen_shannon", "--p", "p.csv", "--q", "q.csv"], false),
        (vec!["divergence", "--family", "jeffreys", "--p", "p.csv", "--q", "q.csv", "--mode", "taylor", "--order", "6"], false),
        (vec!["bound", "--family", "jeffreys", "--order", "5", "--eps", "0.2", "--dataset-size", "10"], false),
        (vec!["solve-policy", "--input", "instances.csv", "--tau", "0.3", "--order", "3", "--family", "jeffreys"], true),
        (vec!["gaussfit", "--variant", "expanded", "--seed", "0", "--grid-points", "50"], true),
        (vec!["gaussfit", "--variant", "exact", "--seed", "1"], true),
        (vec!["gaussfit", "--variant", "quadrature", "--family", "jeffreys", "--seed", "0"], true),
        (vec!["train", "--config", "train.toml", "--seed", "3"], true),
        (vec!["eval", "--config", "train.toml", "--policy", "policy.csv", "--seed", "5"], true),
    ];
    let mut differing = Vec::new();
    for (i, (args, has_dir)) in commands.iter().enumerate() {
        let mut runs = Vec::new();
        for rep in 0..2 {
            let out_dir = format!("run{i}_{rep}");
            let mut full: Vec<&str> = args.clone();
            if *has_dir {
                full.extend(["--output-dir", &out_dir]);
            }
            let stdout = sfac(&full, d);
            if args[0] == "train" && rep == 0 {
                fs::copy(d.join(&out_dir).join("policy_final.csv"), d.join("policy.csv")).unwrap();
            }
            let dir = d.join(&out_dir);
            runs.push(artifacts(stdout, has_dir.then_some(dir.as_path())));
        }
        if runs[0] != runs[1] {
            differing.push(args[0].to_string());
        }
    }
    let detail = if differing.is_empty() {
        format!("{} command lines re-run with byte-identical stdout and CSVs", commands.len())
    } else {
        format!("outputs differ for: {}", differing.join(", "))
    };
    outcome(differing.is_empty(), detail)
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, fn() -> Outcome, Duration); 9] = [
        (1, "truncation bound spot value", criterion_1, Duration::from_secs(1)),
        (2, "series coefficients", criterion_2, Duration::from_secs(1)),
        (3, "series convergence within the bound", criterion_3, Duration::from_secs(10)),
        (4, "χ² ≈ 2·KL near one", criterion_4, Duration::from_secs(5)),
        (5, "closed-form policies vs oracle", criterion_5, Duration::from_secs(60)),
        (6, "Gaussian fit anchors and trend", criterion_6, Duration::from_secs(300)),
        (7, "gradient checks", criterion_7, Duration::from_secs(30)),
        (8, "offline training properties", criterion_8, Duration::from_secs(600)),
        (9, "CLI determinism", criterion_9, Duration::MAX),
    ];
    let mut unexpected = 0;
    for (id, name, run, budget) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        let tag = if pass { "PASS" } else { "FAIL" };
        let timing = if budget == Duration::MAX {
            format!("{:.2}s", elapsed.as_secs_f64())
        } else {
            format!("{:.2}s of {}s", elapsed.as_secs_f64(), budget.as_secs())
        };
        let red = if !pass && KNOWN_RED.contains(&id) { " (known red)" } else { "" };
        println!("acceptance {id} [{tag}]{red} {name}: {} ({timing})", result.detail);
        if !pass && !KNOWN_RED.contains(&id) {
            unexpected += 1;
        }
    }
    if unexpected == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
