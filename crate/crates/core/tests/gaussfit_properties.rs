use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sfac_core::gaussfit::{
    best_fit_quadrature, draw_samples, fit_sgd, minibatch_loss, quadrature_divergence,
    quadrature_gradient, FitVariant, GaussianMixture, GaussianModel, SgdConfig,
};
use sfac_core::DivergenceFamily::{self, *};

fn gaussian_kl(m1: f64, s1: f64, m2: f64, s2: f64) -> f64 {
    (s2 / s1).ln() + (s1 * s1 + (m1 - m2) * (m1 - m2)) / (2.0 * s2 * s2) - 0.5
}

#[test]
fn forward_kl_matches_closed_form_between_gaussians() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let (m1, s1) = (rng.random_range(-2.0..2.0), rng.random_range(0.4..3.0));
        let (m2, s2) = (rng.random_range(-2.0..2.0), rng.random_range(0.4..3.0));
        let target = GaussianMixture::single(m1, s1).unwrap();
        let d = quadrature_divergence(ForwardKl, &target, &GaussianModel::new(m2, s2)).unwrap();
        let exact = gaussian_kl(m1, s1, m2, s2);
        assert!((d - exact).abs() < 1e-8, "{d} vs {exact}");
    }
}

#[test]
fn symmetric_families_ignore_argument_order() {
    for fam in [Jeffreys, JensenShannon, Gan] {
        let a = quadrature_divergence(
            fam,
            &GaussianMixture::single(0.3, 1.2).unwrap(),
            &GaussianModel::new(-0.5, 0.7),
        )
        .unwrap();
        let b = quadrature_divergence(
            fam,
            &GaussianMixture::single(-0.5, 0.7).unwrap(),
            &GaussianModel::new(0.3, 1.2),
        )
        .unwrap();
        assert!((a - b).abs() < 1e-9, "{fam}: {a} vs {b}");
    }
}

#[test]
fn quadrature_gradient_matches_differences() {
    let target = GaussianMixture::standard();
    let h = 1e-4;
    for fam in [ForwardKl, ReverseKl, Jeffreys, JensenShannon, Gan] {
        for (mu, sigma) in [(0.0, 2.0), (0.4, 1.1), (-1.0, 3.5)] {
            let model = GaussianModel::new(mu, sigma);
            let g = quadrature_gradient(fam, &target, &model).unwrap();
            for k in 0..2 {
                let shift = |d: f64| {
                    let mut m = model;
                    if k == 0 {
                        m.mu += d;
                    } else {
                        m.log_sigma += d;
                    }
                    quadrature_divergence(fam, &target, &m).unwrap()
                };
                let fd = (shift(h) - shift(-h)) / (2.0 * h);
                assert!((g[k] - fd).abs() < 1e-4 * g[k].abs().max(1.0), "{fam} {k}: {} vs {fd}", g[k]);
            }
        }
    }
}

#[test]
fn minibatch_gradient_matches_differences() {
    let target = GaussianMixture::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let h = 1e-5;
    for case in 0..50 {
        let variant = if case % 2 == 0 { FitVariant::Exact } else { FitVariant::Expanded };
        let fam = DivergenceFamily::SYMMETRIC[case % 3];
        let config = SgdConfig {
            variant,
            n_loss: rng.random_range(2..=6),
            eps: [0.2, 0.5, 1.0][case % 3],
            ..Default::default()
        };
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
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let scale = g[k].abs().max(fd.abs()).max(1e-3);
            assert!((g[k] - fd).abs() / scale < 1e-5, "case {case} coord {k}: {} vs {fd}", g[k]);
        }
    }
}

#[test]
fn quadrature_best_fits_on_standard_mixture() {
    let target = GaussianMixture::standard();
    let fkl = best_fit_quadrature(ForwardKl, &target).unwrap();
    assert!((fkl.sigma_hat - 5f64.sqrt()).abs() < 0.01, "{fkl:?}");
    assert!(fkl.mu_hat.abs() < 0.01);
    let jeff = best_fit_quadrature(Jeffreys, &target).unwrap();
    assert!((jeff.sigma_hat - 2.22).abs() < 0.03, "{jeff:?}");
    assert!(jeff.mu_hat.abs() < 0.01);
}

#[test]
fn quadrature_recovers_single_gaussian() {
    let target = GaussianMixture::single(0.7, 1.3).unwrap();
    for fam in [ForwardKl, Jeffreys, JensenShannon] {
        let r = best_fit_quadrature(fam, &target).unwrap();
        assert!((r.mu_hat - 0.7).abs() < 1e-4 && (r.sigma_hat - 1.3).abs() < 1e-4, "{fam}: {r:?}");
        assert!(r.divergence_value < 1e-9);
    }
}

#[test]
fn sgd_recovers_single_gaussian() {
    let target = GaussianMixture::single(0.5, 1.3).unwrap();
    for variant in [FitVariant::Exact, FitVariant::Expanded] {
        for fam in [Jeffreys, JensenShannon, Gan] {
            let cfg = SgdConfig { variant, lr: 0.05, steps: 2000, batch: 1024, ..Default::default() };
            let r = fit_sgd(fam, &target, &cfg, 1).unwrap();
            assert!(
                (r.mu_hat - 0.5).abs() < 0.05 && (r.sigma_hat - 1.3).abs() < 0.05,
                "{fam} {variant:?}: {r:?}"
            );
        }
    }
}

#[test]
fn jeffreys_expanded_fit_lands_near_best_fit() {
    let cfg = SgdConfig { variant: FitVariant::Expanded, ..Default::default() };
    let r = fit_sgd(Jeffreys, &GaussianMixture::standard(), &cfg, 0).unwrap();
    assert!((2.0..=3.0).contains(&r.sigma_hat), "{r:?}");
}

#[test]
fn expanded_loss_stays_closer_to_best_fit_than_exact_js() {
    let target = GaussianMixture::standard();
    let best = best_fit_quadrature(JensenShannon, &target).unwrap();
    let mean_sigma = |variant| {
        let cfg = SgdConfig { variant, ..Default::default() };
        (0..5).map(|s| fit_sgd(JensenShannon, &target, &cfg, s).unwrap().sigma_hat).sum::<f64>() / 5.0
    };
    let exact = mean_sigma(FitVariant::Exact);
    let expanded = mean_sigma(FitVariant::Expanded);
    assert!((expanded - best.sigma_hat).abs() < (exact - best.sigma_hat).abs());
    let cfg = SgdConfig { variant: FitVariant::Expanded, ..Default::default() };
    let r = fit_sgd(JensenShannon, &target, &cfg, 0).unwrap();
    assert!(r.divergence_value.is_finite() && r.divergence_value <= 3.0 * best.divergence_value, "{r:?} {best:?}");
}

#[test]
fn sgd_is_deterministic_per_seed() {
    let cfg = SgdConfig { variant: FitVariant::Expanded, steps: 200, ..Default::default() };
    let a = fit_sgd(JensenShannon, &GaussianMixture::standard(), &cfg, 9).unwrap();
    let b = fit_sgd(JensenShannon, &GaussianMixture::standard(), &cfg, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mu_hat.to_bits(), b.mu_hat.to_bits());
}
