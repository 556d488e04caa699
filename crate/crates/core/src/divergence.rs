//! f-divergences over finite supports.
//!
//! Every generator is written as `f(t) = t ln t + g(t)`: the `t ln t` part is
//! the forward-KL asymmetry, `g` is the conditional-symmetry remainder. The
//! symmetric families (Jeffreys, Jensen-Shannon, GAN) expand `g` around
//! `t = 1` into a χⁿ series whose coefficients decay with `n`.
//!
//! | family | f(t) | g(t) |
//! |--------|------|------|
//! | forward KL | t ln t | 0 |
//! | reverse KL | −ln t | −ln t − t ln t |
//! | Jeffreys | (t−1) ln t | −ln t |
//! | Jensen-Shannon | t ln t − (1+t) ln((1+t)/2) | −(1+t) ln((1+t)/2) |
//! | GAN | t ln t − (1+t) ln(1+t) | −(1+t) ln(1+t) |
//! | χⁿ | (t−1)ⁿ | (t−1)ⁿ − t ln t |
//!
//! Two families need a normalization on top of the raw generator to make
//! `D(p‖p) = 0`: Jensen-Shannon carries a ½ prefactor ([`DivergenceFamily::scale`])
//! and the GAN generator has `f(1) = −ln 4` ([`DivergenceFamily::normalizing_offset`]).

use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteDistribution;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DivergenceFamily {
    ForwardKl,
    ReverseKl,
    Jeffreys,
    JensenShannon,
    Gan,
    /// Pearson-Vajda χⁿ with `f(t) = (t − 1)ⁿ`, order ≥ 2.
    ChiN(u32),
}

/// `n!` as a float. Exact up to `n = 22`.
pub fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn sign(n: u32) -> f64 {
    if n % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// `t ln t` with the `0 ln 0 = 0` limit.
pub fn xlogx(t: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else {
        t * t.ln()
    }
}

impl DivergenceFamily {
    pub const SYMMETRIC: [DivergenceFamily; 3] = [Self::Jeffreys, Self::JensenShannon, Self::Gan];

    pub fn is_symmetric(self) -> bool {
        matches!(self, Self::Jeffreys | Self::JensenShannon | Self::Gan)
    }

    /// Prefactor applied to `Σ q f(p/q)` by [`exact_f_divergence`] and [`taylor_divergence`].
    pub fn scale(self) -> f64 {
        match self {
            Self::JensenShannon => 0.5,
            _ => 1.0,
        }
    }

    /// Constant `c` such that `f(1) + c = 0`.
    pub fn normalizing_offset(self) -> f64 {
        match self {
            Self::Gan => 2.0 * LN_2,
            _ => 0.0,
        }
    }

    fn domain_error(self, value: f64) -> Error {
        Error::Domain {
            family: self.to_string(),
            value,
        }
    }

    /// Generator `f(t)`.
    pub fn f(self, t: f64) -> Result<f64> {
        if t.is_nan() {
            return Err(self.domain_error(t));
        }
        let needs_positive = matches!(self, Self::ReverseKl | Self::Jeffreys);
        if t < 0.0 || (needs_positive && t == 0.0) {
            return Err(self.domain_error(t));
        }
        Ok(match self {
            Self::ForwardKl => xlogx(t),
            Self::ReverseKl => -t.ln(),
            Self::Jeffreys => (t - 1.0) * t.ln(),
            Self::JensenShannon => xlogx(t) - (1.0 + t) * ((1.0 + t) / 2.0).ln(),
            Self::Gan => xlogx(t) - (1.0 + t) * (1.0 + t).ln(),
            Self::ChiN(n) => (t - 1.0).powi(n as i32),
        })
    }

    /// Conditional-symmetry term `g(t) = f(t) − t ln t`.
    pub fn g(self, t: f64) -> Result<f64> {
        if t.is_nan() {
            return Err(self.domain_error(t));
        }
        match self {
            Self::JensenShannon | Self::Gan if t <= -1.0 => Err(self.domain_error(t)),
            Self::JensenShannon => Ok(-(1.0 + t) * ((1.0 + t) / 2.0).ln()),
            Self::Gan => Ok(-(1.0 + t) * (1.0 + t).ln()),
            Self::Jeffreys if t <= 0.0 => Err(self.domain_error(t)),
            Self::Jeffreys => Ok(-t.ln()),
            _ => Ok(self.f(t)? - xlogx(t)),
        }
    }

    /// `f⁽ⁿ⁾(1)` for `n ≥ 2`.
    pub fn f_derivative_at_one(self, n: u32) -> Result<f64> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be >= 2, got {n}"
            )));
        }
        // (t ln t)⁽ⁿ⁾(1) = (−1)ⁿ (n−2)!
        let asym = sign(n) * factorial(n - 2);
        Ok(match self {
            Self::ForwardKl => asym,
            Self::ReverseKl => sign(n) * factorial(n - 1),
            Self::ChiN(k) if k == n => factorial(n),
            Self::ChiN(_) => 0.0,
            _ => asym + self.g_derivative_at_one(n)?,
        })
    }

    /// `g⁽ⁿ⁾(t)` for the symmetric families, `n ≥ 2`.
    pub fn g_derivative(self, n: u32, t: f64) -> Result<f64> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "derivative order must be >= 2, got {n}"
            )));
        }
        match self {
            Self::Jeffreys if t > 0.0 => Ok(sign(n) * factorial(n - 1) * t.powi(-(n as i32))),
            Self::JensenShannon | Self::Gan if t > -1.0 => {
                Ok(-sign(n) * factorial(n - 2) * (1.0 + t).powi(1 - n as i32))
            }
            Self::Jeffreys | Self::JensenShannon | Self::Gan => Err(self.domain_error(t)),
            _ => Err(Error::UnsupportedFamily {
                operation: "g derivative",
                family: self.to_string(),
            }),
        }
    }

    /// `g⁽ⁿ⁾(1)`.
    pub fn g_derivative_at_one(self, n: u32) -> Result<f64> {
        self.g_derivative(n, 1.0)
    }

    /// Coefficient `g⁽ⁿ⁾(1)/n!` of the n-th χⁿ term of the conditional-symmetry series.
    ///
    /// Jeffreys: `(−1)ⁿ/n`. Jensen-Shannon and GAN: `(−1)ⁿ⁺¹/(n(n−1)2ⁿ⁻¹)`.
    pub fn series_coefficient(self, n: u32) -> Result<f64> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "series order must be >= 2, got {n}"
            )));
        }
        let nf = f64::from(n);
        match self {
            Self::Jeffreys => Ok(sign(n) / nf),
            Self::JensenShannon | Self::Gan => {
                Ok(-sign(n) / (nf * (nf - 1.0) * 2f64.powi(n as i32 - 1)))
            }
            _ => Err(Error::UnsupportedFamily {
                operation: "series coefficient",
                family: self.to_string(),
            }),
        }
    }

    /// Full-generator Taylor coefficient `f⁽ⁿ⁾(1)/n!`.
    pub fn f_series_coefficient(self, n: u32) -> Result<f64> {
        Ok(self.f_derivative_at_one(n)? / factorial(n))
    }

    /// Lower end of the open domain of `g`.
    fn g_domain_lower(self) -> f64 {
        match self {
            Self::JensenShannon | Self::Gan => -1.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for DivergenceFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::ForwardKl => f.write_str("forward_kl"),
            Self::ReverseKl => f.write_str("reverse_kl"),
            Self::Jeffreys => f.write_str("jeffreys"),
            Self::JensenShannon => f.write_str("jensen_shannon"),
            Self::Gan => f.write_str("gan"),
            Self::ChiN(n) => write!(f, "chi{n}"),
        }
    }
}

impl FromStr for DivergenceFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "forward_kl" => Self::ForwardKl,
            "reverse_kl" => Self::ReverseKl,
            "jeffreys" => Self::Jeffreys,
            "jensen_shannon" => Self::JensenShannon,
            "gan" => Self::Gan,
            other => match other.strip_prefix("chi").map(str::parse::<u32>) {
                Some(Ok(n)) if n >= 2 => Self::ChiN(n),
                _ => return Err(Error::UnknownFamily(s.to_string())),
            },
        })
    }
}

impl TryFrom<String> for DivergenceFamily {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DivergenceFamily> for String {
    fn from(f: DivergenceFamily) -> String {
        f.to_string()
    }
}

pub fn f_value(family: DivergenceFamily, t: f64) -> Result<f64> {
    family.f(t)
}

pub fn g_value(family: DivergenceFamily, t: f64) -> Result<f64> {
    family.g(t)
}

pub fn g_derivative_at_one(family: DivergenceFamily, n: u32) -> Result<f64> {
    family.g_derivative_at_one(n)
}

pub fn series_coefficient(family: DivergenceFamily, n: u32) -> Result<f64> {
    family.series_coefficient(n)
}

fn check_shapes(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<()> {
    if p.support_size() != q.support_size() {
        return Err(Error::ShapeMismatch(p.support_size(), q.support_size()));
    }
    Ok(())
}

/// Ratios `pᵢ/qᵢ` on the support of `q`, paired with `qᵢ`. Fails if `p ≪ q` does not hold.
fn ratios(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<Vec<(f64, f64)>> {
    check_shapes(p, q)?;
    let mut out = Vec::with_capacity(p.support_size());
    for (index, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if qi == 0.0 {
            if pi > 0.0 {
                return Err(Error::AbsoluteContinuity { index, p: pi, q: qi });
            }
            continue;
        }
        out.push((qi, pi / qi));
    }
    Ok(out)
}

/// `scale · Σᵢ qᵢ (f(pᵢ/qᵢ) + offset)` with `0·f(0/0) = 0`.
///
/// Reverse KL and Jeffreys also need `q ≪ p`; a zero `pᵢ` against a positive
/// `qᵢ` is reported as an absolute-continuity error rather than `+∞`.
pub fn exact_f_divergence(
    family: DivergenceFamily,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<f64> {
    let offset = family.normalizing_offset();
    let needs_mutual = matches!(family, DivergenceFamily::ReverseKl | DivergenceFamily::Jeffreys);
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.probs().iter().zip(q.probs()).enumerate() {
        if needs_mutual && pi == 0.0 && qi > 0.0 {
            return Err(Error::AbsoluteContinuity { index, p: pi, q: qi });
        }
    }
    for (qi, t) in ratios(p, q)? {
        total += qi * (family.f(t)? + offset);
    }
    Ok(family.scale() * total)
}

/// `χⁿ(p‖q) = Σᵢ qᵢ (pᵢ/qᵢ − 1)ⁿ`. `χ¹` is identically zero.
pub fn chi_n(p: &DiscreteDistribution, q: &DiscreteDistribution, n: u32) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("chi order must be >= 1".into()));
    }
    let r = ratios(p, q)?;
    if n == 1 {
        return Ok(0.0);
    }
    Ok(r.iter().map(|(qi, t)| qi * (t - 1.0).powi(n as i32)).sum())
}

/// `[χ²(p‖q), …, χᴺ(p‖q)]` in one pass with running powers.
pub fn chi_series(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    max_order: u32,
) -> Result<Vec<f64>> {
    if max_order < 2 {
        return Err(Error::InvalidArgument(format!(
            "series order must be >= 2, got {max_order}"
        )));
    }
    let mut chis = vec![0.0; max_order as usize - 1];
    for (qi, t) in ratios(p, q)? {
        let d = t - 1.0;
        let mut power = d;
        for chi in chis.iter_mut() {
            power *= d;
            *chi += qi * power;
        }
    }
    Ok(chis)
}

/// Per-order contributions `scale · f⁽ⁿ⁾(1)/n! · χⁿ(p‖q)` for `n = 2..=N`.
pub fn taylor_terms(
    family: DivergenceFamily,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    order: u32,
) -> Result<Vec<f64>> {
    let chis = chi_series(p, q, order)?;
    (2..=order)
        .zip(chis)
        .map(|(n, chi)| Ok(family.scale() * family.f_series_coefficient(n)? * chi))
        .collect()
}

/// Full generator Taylor series around `t = 1`, truncated at order `N`.
pub fn taylor_divergence(
    family: DivergenceFamily,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    order: u32,
) -> Result<f64> {
    Ok(taylor_terms(family, p, q, order)?.iter().sum())
}

/// Decomposed evaluation: exact `t ln t` part plus the conditional-symmetry
/// series truncated at order `N`. This is the quantity the clipped Sf-AC loss
/// approximates and that [`truncation_bound`] controls.
pub fn split_taylor_divergence(
    family: DivergenceFamily,
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    order: u32,
) -> Result<f64> {
    if !family.is_symmetric() {
        return Err(Error::UnsupportedFamily {
            operation: "split series",
            family: family.to_string(),
        });
    }
    let asym: f64 = ratios(p, q)?.iter().map(|(qi, t)| qi * xlogx(*t)).sum();
    let chis = chi_series(p, q, order)?;
    let mut series = family.g(1.0)? + family.normalizing_offset();
    for (n, chi) in (2..=order).zip(chis) {
        series += family.series_coefficient(n)? * chi;
    }
    Ok(family.scale() * (asym + series))
}

/// `sup |g⁽ᵏ⁾|` on `[lo, hi]`. Every supported `|g⁽ᵏ⁾|` is a negative power of
/// `t` or `1 + t`, so the supremum sits at `lo`.
pub fn g_derivative_sup(family: DivergenceFamily, k: u32, lo: f64, hi: f64) -> Result<f64> {
    if lo > hi {
        return Err(Error::InvalidArgument(format!("empty interval [{lo}, {hi}]")));
    }
    Ok(family.g_derivative(k, lo)?.abs())
}

/// Clipped-series truncation bound `2|D| εᴺ⁺¹/(N+1)! · sup |g⁽ᴺ⁺¹⁾|` over `[1−ε, 1+ε]`.
pub fn truncation_bound(
    family: DivergenceFamily,
    order: u32,
    eps: f64,
    dataset_size: u64,
) -> Result<f64> {
    if !family.is_symmetric() {
        return Err(Error::UnsupportedFamily {
            operation: "truncation bound",
            family: family.to_string(),
        });
    }
    if order < 2 {
        return Err(Error::InvalidArgument(format!(
            "series order must be >= 2, got {order}"
        )));
    }
    if !(eps >= 0.0) || !eps.is_finite() {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    if eps == 0.0 {
        return Ok(0.0);
    }
    let lo = 1.0 - eps;
    if lo <= family.g_domain_lower() {
        return Err(family.domain_error(lo));
    }
    let sup = g_derivative_sup(family, order + 1, lo, 1.0 + eps)?;
    Ok(2.0 * dataset_size as f64 * eps.powi(order as i32 + 1) / factorial(order + 1) * sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use DivergenceFamily::*;

    fn dist(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(v.to_vec()).unwrap()
    }

    const ALL: [DivergenceFamily; 7] = [
        ForwardKl,
        ReverseKl,
        Jeffreys,
        JensenShannon,
        Gan,
        ChiN(2),
        ChiN(3),
    ];

    #[test]
    fn f_value_examples() {
        assert_eq!(Jeffreys.f(1.0).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((ForwardKl.f(e).unwrap() - e).abs() < 1e-15);
        // 2 ln 2 − 3 ln 1.5
        let js2 = 2.0 * 2f64.ln() - 3.0 * 1.5f64.ln();
        assert!((JensenShannon.f(2.0).unwrap() - js2).abs() < 1e-15);
        assert!((js2 - 0.169899).abs() < 1e-6);
    }

    #[test]
    fn f_domain_errors() {
        assert!(ReverseKl.f(0.0).is_err());
        assert!(Jeffreys.f(-1.0).is_err());
        assert_eq!(ForwardKl.f(0.0).unwrap(), 0.0);
        assert!((JensenShannon.f(0.0).unwrap() - LN_2).abs() < 1e-15);
        assert_eq!(Gan.f(0.0).unwrap(), 0.0);
        assert!(ForwardKl.f(f64::NAN).is_err());
    }

    #[test]
    fn normalized_generator_vanishes_at_one() {
        for fam in ALL {
            let v = fam.f(1.0).unwrap() + fam.normalizing_offset();
            assert!(v.abs() < 1e-12, "{fam}: {v}");
        }
    }

    #[test]
    fn second_derivative_positive_at_one() {
        for fam in ALL.into_iter().filter(|f| !matches!(f, ChiN(k) if *k != 2)) {
            assert!(fam.f_derivative_at_one(2).unwrap() > 0.0, "{fam}");
        }
    }

    #[test]
    fn g_value_examples() {
        assert_eq!(Jeffreys.g(1.0).unwrap(), 0.0);
        assert_eq!(JensenShannon.g(1.0).unwrap(), 0.0);
        assert!((Gan.g(1.0).unwrap() + 2.0 * LN_2).abs() < 1e-15);
        assert!(Jeffreys.g(0.0).is_err());
        assert!(JensenShannon.g(-1.0).is_err());
        assert!(JensenShannon.g(-0.5).is_ok());
    }

    #[test]
    fn decomposition_holds_on_grid() {
        for fam in ALL {
            for i in 1..400 {
                let t = i as f64 * 0.0125;
                let lhs = fam.f(t).unwrap() - xlogx(t) - fam.g(t).unwrap();
                assert!(lhs.abs() < 1e-12, "{fam} at {t}: {lhs}");
            }
        }
    }

    #[test]
    fn g_derivative_examples() {
        assert_eq!(Jeffreys.g_derivative_at_one(2).unwrap(), 1.0);
        assert_eq!(Jeffreys.g_derivative_at_one(3).unwrap(), -2.0);
        assert_eq!(JensenShannon.g_derivative_at_one(2).unwrap(), -0.5);
        assert!(ForwardKl.g_derivative_at_one(2).is_err());
        assert!(Jeffreys.g_derivative_at_one(1).is_err());
    }

    #[test]
    fn series_coefficient_examples() {
        assert_eq!(Jeffreys.series_coefficient(2).unwrap(), 0.5);
        assert_eq!(Jeffreys.series_coefficient(4).unwrap(), 0.25);
        let c3 = JensenShannon.series_coefficient(3).unwrap();
        assert!((c3.abs() - 1.0 / 24.0).abs() < 1e-16);
        assert!(c3 > 0.0);
        for fam in DivergenceFamily::SYMMETRIC {
            for n in 2..=12 {
                let direct = fam.g_derivative_at_one(n).unwrap() / factorial(n);
                let c = fam.series_coefficient(n).unwrap();
                assert!((direct - c).abs() <= 1e-15 * c.abs(), "{fam} n={n}");
            }
        }
        assert!(ReverseKl.series_coefficient(2).is_err());
    }

    #[test]
    fn coefficients_decay() {
        for fam in DivergenceFamily::SYMMETRIC {
            for n in 2..20 {
                let a = fam.series_coefficient(n).unwrap().abs();
                let b = fam.series_coefficient(n + 1).unwrap().abs();
                assert!(b < a, "{fam} n={n}");
                if fam != Jeffreys {
                    assert!(b / a < 0.5);
                }
            }
        }
        for n in 2..20 {
            assert_eq!(
                JensenShannon.series_coefficient(n).unwrap(),
                Gan.series_coefficient(n).unwrap()
            );
        }
    }

    #[test]
    fn f_derivatives_match_family_rules() {
        // Jeffreys: (−1)ⁿ n (n−2)!, so f⁽ⁿ⁾(1)/n! = (−1)ⁿ/(n−1)
        for n in 2..10 {
            let c = Jeffreys.f_series_coefficient(n).unwrap();
            assert!((c - sign(n) / (n as f64 - 1.0)).abs() < 1e-14);
        }
        assert_eq!(ForwardKl.f_derivative_at_one(2).unwrap(), 1.0);
        assert_eq!(ForwardKl.f_derivative_at_one(3).unwrap(), -1.0);
        assert_eq!(ChiN(3).f_derivative_at_one(3).unwrap(), 6.0);
        assert_eq!(ChiN(3).f_derivative_at_one(2).unwrap(), 0.0);
        assert_eq!(JensenShannon.f_derivative_at_one(2).unwrap(), 0.5);
    }

    #[test]
    fn exact_divergence_examples() {
        let p = dist(&[0.75, 0.25]);
        let u = dist(&[0.5, 0.5]);
        // forward + reverse KL summed by hand
        let fkl = 0.75 * (1.5f64).ln() + 0.25 * (0.5f64).ln();
        let rkl = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
        let jef = exact_f_divergence(Jeffreys, &p, &u).unwrap();
        assert!((jef - (fkl + rkl)).abs() < 1e-15);
        assert!((jef - 0.274653).abs() < 1e-6);

        let point = dist(&[1.0, 0.0]);
        let m = [0.75, 0.25];
        let js_direct = 0.5 * (1.0 * (1.0f64 / m[0]).ln() + 0.5 * (0.5 / m[0]).ln() + 0.5 * (0.5 / m[1]).ln());
        let js = exact_f_divergence(JensenShannon, &point, &u).unwrap();
        assert!((js - js_direct).abs() < 1e-15);
        assert!((js - 0.215761).abs() < 1e-6);

        for fam in ALL {
            assert!(exact_f_divergence(fam, &p, &p).unwrap().abs() < 1e-15, "{fam}");
        }
    }

    #[test]
    fn absolute_continuity_is_enforced() {
        let point = dist(&[1.0, 0.0]);
        let other = dist(&[0.0, 1.0]);
        let u = dist(&[0.5, 0.5]);
        assert!(matches!(
            exact_f_divergence(ForwardKl, &u, &point),
            Err(Error::AbsoluteContinuity { index: 1, .. })
        ));
        assert!(exact_f_divergence(ForwardKl, &point, &u).is_ok());
        assert!(exact_f_divergence(ReverseKl, &point, &u).is_err());
        assert!(exact_f_divergence(Jeffreys, &point, &u).is_err());
        assert!(chi_n(&point, &other, 2).is_err());
        assert!(exact_f_divergence(Jeffreys, &u, &dist(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn chi_examples() {
        let p = dist(&[0.5, 0.5]);
        let q = dist(&[0.25, 0.75]);
        assert_eq!(chi_n(&p, &q, 1).unwrap(), 0.0);
        // 0.25·1² + 0.75·(−1/3)² = 1/3
        assert!((chi_n(&p, &q, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(chi_n(&p, &p, 4).unwrap(), 0.0);
        let series = chi_series(&p, &q, 6).unwrap();
        for (i, &s) in series.iter().enumerate() {
            let direct = chi_n(&p, &q, i as u32 + 2).unwrap();
            assert!((s - direct).abs() < 1e-15);
        }
    }

    #[test]
    fn taylor_examples() {
        let p = dist(&[0.3, 0.7]);
        let q = dist(&[0.4, 0.6]);
        for fam in ALL {
            assert_eq!(taylor_divergence(fam, &p, &p, 6).unwrap(), 0.0);
        }
        let t2 = taylor_divergence(ForwardKl, &p, &q, 2).unwrap();
        assert!((t2 - 0.5 * chi_n(&p, &q, 2).unwrap()).abs() < 1e-16);

        let p = dist(&[0.52, 0.48]);
        let u = dist(&[0.5, 0.5]);
        let exact = exact_f_divergence(Jeffreys, &p, &u).unwrap();
        let approx = taylor_divergence(Jeffreys, &p, &u, 8).unwrap();
        assert!((exact - approx).abs() < 1e-6);
    }

    #[test]
    fn split_series_matches_exact_at_high_order() {
        let p = dist(&[0.3, 0.45, 0.25]);
        let q = dist(&[0.35, 0.4, 0.25]);
        for fam in DivergenceFamily::SYMMETRIC {
            let exact = exact_f_divergence(fam, &p, &q).unwrap();
            let split = split_taylor_divergence(fam, &p, &q, 20).unwrap();
            assert!((exact - split).abs() < 1e-14, "{fam}");
        }
        assert!(split_taylor_divergence(ForwardKl, &p, &q, 3).is_err());
    }

    #[test]
    fn bound_examples() {
        let b = truncation_bound(Jeffreys, 5, 0.2, 1).unwrap();
        assert!((b / 8.13e-5 - 1.0).abs() < 5e-3, "{b}");
        let b1000 = truncation_bound(Jeffreys, 5, 0.2, 1000).unwrap();
        assert!((b1000 - 1000.0 * b).abs() < 1e-15);
        for fam in DivergenceFamily::SYMMETRIC {
            assert_eq!(truncation_bound(fam, 4, 0.0, 7).unwrap(), 0.0);
        }
        assert!(truncation_bound(Jeffreys, 3, 1.0, 1).is_err());
        assert!(truncation_bound(JensenShannon, 3, 1.5, 1).is_ok());
        assert!(truncation_bound(JensenShannon, 3, 2.0, 1).is_err());
        assert!(truncation_bound(ForwardKl, 3, 0.1, 1).is_err());
    }

    #[test]
    fn bound_sup_sits_at_left_endpoint() {
        // dense-grid maximization of |g⁽⁴⁾| on [0.8, 1.2]
        for fam in DivergenceFamily::SYMMETRIC {
            let grid_max = (0..=4000)
                .map(|i| 0.8 + 0.4 * i as f64 / 4000.0)
                .map(|t| fam.g_derivative(4, t).unwrap().abs())
                .fold(0.0, f64::max);
            let sup = g_derivative_sup(fam, 4, 0.8, 1.2).unwrap();
            assert!((grid_max - sup).abs() <= 1e-14 * sup, "{fam}");
        }
        // JS, N = 3, ε = 0.2, |D| = 10: g⁽⁴⁾(t) = −2 (1+t)⁻³, sup at 0.8
        let expected = 2.0 * 10.0 * 0.2f64.powi(4) / 24.0 * (2.0 / 1.8f64.powi(3));
        let b = truncation_bound(JensenShannon, 3, 0.2, 10).unwrap();
        assert!((b - expected).abs() < 1e-15);
    }

    #[test]
    fn family_names_round_trip() {
        for fam in ALL.into_iter().chain([ChiN(9)]) {
            assert_eq!(fam.to_string().parse::<DivergenceFamily>().unwrap(), fam);
        }
        assert!("chi1".parse::<DivergenceFamily>().is_err());
        assert!("kl".parse::<DivergenceFamily>().is_err());
    }
}
