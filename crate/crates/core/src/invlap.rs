//! Numerical inversion of Laplace transforms and the weights
//! `h(t; mu) = E[exp(-mu L_t)]` of the inverse subordinator.
//!
//! Two inverters are provided: Gaver-Stehfest, which only needs the
//! transform on the positive real axis, and the fixed Talbot contour, which
//! needs its analytic continuation. Where both apply they are run together
//! and their disagreement is reported.

use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::bernstein::BernsteinSymbol;
use crate::error::{check_nonnegative, check_positive, Error, Result};

pub const DEFAULT_STEHFEST_TERMS: usize = 14;
pub const DEFAULT_TALBOT_NODES: usize = 32;

type RealFn<'a> = Box<dyn Fn(f64) -> f64 + Send + Sync + 'a>;
type ComplexFn<'a> = Box<dyn Fn(Complex64) -> Complex64 + Send + Sync + 'a>;

/// A Laplace transform `F(lambda)`, defined for `Re lambda > abscissa`.
pub struct TransformFn<'a> {
    real: RealFn<'a>,
    complex: Option<ComplexFn<'a>>,
    abscissa: f64,
}

impl<'a> TransformFn<'a> {
    /// A transform known only on the real axis.
    pub fn real_only<F>(abscissa: f64, f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'a,
    {
        Self {
            real: Box::new(f),
            complex: None,
            abscissa,
        }
    }

    /// A transform with an analytic continuation; the real-axis values are
    /// taken from the complex function.
    pub fn analytic<F>(abscissa: f64, f: F) -> Self
    where
        F: Fn(Complex64) -> Complex64 + Send + Sync + Clone + 'a,
    {
        let g = f.clone();
        Self {
            real: Box::new(move |x| g(Complex64::new(x, 0.0)).re),
            complex: Some(Box::new(f)),
            abscissa,
        }
    }

    pub fn is_complex_analytic(&self) -> bool {
        self.complex.is_some()
    }

    pub fn abscissa(&self) -> f64 {
        self.abscissa
    }

    pub fn eval(&self, lambda: f64) -> f64 {
        (self.real)(lambda)
    }

    /// Checks that `F` is finite on a grid of `(w, w + 10]`.
    pub fn validate(&self) -> Result<()> {
        check_nonnegative("abscissa", self.abscissa)?;
        for k in 1..=100 {
            let x = self.abscissa + 0.1 * k as f64;
            let v = self.eval(x);
            if !v.is_finite() {
                return Err(Error::Domain {
                    name: "lambda",
                    value: x,
                    domain: "transform must be finite to the right of its abscissa",
                });
            }
        }
        Ok(())
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Gaver-Stehfest weights `V_1..V_n`.
pub fn stehfest_weights(n_terms: usize) -> Result<Vec<f64>> {
    if n_terms == 0 || n_terms % 2 == 1 {
        return Err(Error::InvalidParameter {
            name: "n_terms",
            reason: format!("must be a positive even integer, got {n_terms}"),
        });
    }
    if n_terms > 18 {
        return Err(Error::Precision { n_terms });
    }
    let half = n_terms / 2;
    let mut weights = Vec::with_capacity(n_terms);
    for k in 1..=n_terms {
        let mut v = 0.0;
        for j in k.div_ceil(2)..=k.min(half) {
            v += (j as f64).powi(half as i32) * factorial(2 * j)
                / (factorial(half - j)
                    * factorial(j)
                    * factorial(j - 1)
                    * factorial(k - j)
                    * factorial(2 * j - k));
        }
        let sign = if (k + half).is_multiple_of(2) {
            1.0
        } else {
            -1.0
        };
        weights.push(sign * v);
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Precision { n_terms });
    }
    Ok(weights)
}

/// Gaver-Stehfest approximation of `f(t)` from `F` on the real axis.
/// A positive abscissa `w` is handled by inverting `F(lambda + w)` and
/// multiplying by `e^{wt}`.
pub fn gaver_stehfest(f: &TransformFn<'_>, t: f64, n_terms: usize) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain {
            name: "t",
            value: t,
            domain: "(0, inf)",
        });
    }
    let weights = stehfest_weights(n_terms)?;
    let w = f.abscissa;
    let a = LN_2 / t;
    let sum: f64 = weights
        .iter()
        .enumerate()
        .map(|(i, v)| v * f.eval(w + (i + 1) as f64 * a))
        .sum();
    Ok((w * t).exp() * a * sum)
}

/// Fixed-Talbot inversion with `n_nodes` contour nodes.
pub fn talbot(f: &TransformFn<'_>, t: f64, n_nodes: usize) -> Result<f64> {
    let cf = f.complex.as_ref().ok_or(Error::UnsupportedTransform)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::Domain {
            name: "t",
            value: t,
            domain: "(0, inf)",
        });
    }
    if n_nodes < 2 {
        return Err(Error::InvalidParameter {
            name: "n_nodes",
            reason: format!("need at least 2 nodes, got {n_nodes}"),
        });
    }
    let m = n_nodes as f64;
    let w = f.abscissa;
    let r = 2.0 * m / (5.0 * t);
    let shifted = |s: Complex64| cf(s + w);
    let mut sum = 0.5 * shifted(Complex64::new(r, 0.0)).re * (r * t).exp();
    for k in 1..n_nodes {
        let theta = k as f64 * PI / m;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let term = (s * t).exp() * shifted(s) * Complex64::new(1.0, sigma);
        sum += term.re;
    }
    Ok((w * t).exp() * r / m * sum)
}

/// Which inverter produced a weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InversionMethod {
    Exact,
    Talbot,
    GaverStehfest,
}

impl InversionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            InversionMethod::Exact => "exact",
            InversionMethod::Talbot => "talbot",
            InversionMethod::GaverStehfest => "gaver-stehfest",
        }
    }
}

/// Inverter settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub stehfest_terms: usize,
    pub talbot_nodes: usize,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            stehfest_terms: DEFAULT_STEHFEST_TERMS,
            talbot_nodes: DEFAULT_TALBOT_NODES,
        }
    }
}

/// A weight `h(t; mu)` together with the diagnostics of its computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightEstimate {
    pub t: f64,
    pub mu: f64,
    pub value: f64,
    pub method: InversionMethod,
    /// Gaver-Stehfest value, when it was computed.
    pub stehfest: Option<f64>,
    /// Talbot value, when it was computed.
    pub talbot: Option<f64>,
    /// The two inverters disagreed beyond `max(1e-6, 1e-5 |value|)`.
    pub flagged: bool,
}

/// Agreement tolerance between the two inverters.
pub fn agreement_tolerance(value: f64) -> f64 {
    1e-6f64.max(1e-5 * value.abs())
}

/// `h(t; mu) = E[exp(-mu L_t)]` with diagnostics, by inverting
/// `lambda -> Phi(lambda) / (lambda (mu + Phi(lambda)))`.
pub fn l_laplace_weight_estimate(
    sym: &BernsteinSymbol,
    mu: f64,
    t: f64,
    cfg: &InversionConfig,
) -> Result<WeightEstimate> {
    check_nonnegative("mu", mu)?;
    check_positive("t", t)?;
    if sym.phi_at_zero() != 0.0 {
        return Err(Error::InvalidParameter {
            name: "killing",
            reason: "inverse subordinator weights need k = 0".into(),
        });
    }
    let exact = |value: f64| WeightEstimate {
        t,
        mu,
        value,
        method: InversionMethod::Exact,
        stehfest: None,
        talbot: None,
        flagged: false,
    };
    if mu == 0.0 {
        return Ok(exact(1.0));
    }
    if sym.is_identity() {
        return Ok(exact((-mu * t).exp()));
    }
    if sym.is_complex_analytic() {
        let s = sym.clone();
        let f = TransformFn::analytic(0.0, move |z: Complex64| {
            let phi = s.eval_complex(z).expect("closed-form symbol");
            phi / (z * (phi + mu))
        });
        let tb = talbot(&f, t, cfg.talbot_nodes)?;
        let mut gs = gaver_stehfest(&f, t, cfg.stehfest_terms)?;
        let tol = agreement_tolerance(tb);
        if !((gs - tb).abs() <= tol) && cfg.stehfest_terms + 2 <= 18 {
            // Stehfest truncation error decays slowly for nearly exponential
            // inverses; one more order separates that from a Talbot failure.
            let next = gaver_stehfest(&f, t, cfg.stehfest_terms + 2)?;
            if (next - tb).abs() < (gs - tb).abs() {
                gs = next;
            }
        }
        Ok(WeightEstimate {
            t,
            mu,
            value: tb.clamp(0.0, 1.0),
            method: InversionMethod::Talbot,
            stehfest: Some(gs),
            talbot: Some(tb),
            flagged: !((gs - tb).abs() <= tol),
        })
    } else {
        let s = sym.clone();
        let f = TransformFn::real_only(0.0, move |x| match s.eval(x) {
            Ok(phi) => phi / (x * (phi + mu)),
            Err(_) => f64::NAN,
        });
        let gs = gaver_stehfest(&f, t, cfg.stehfest_terms)?;
        if !gs.is_finite() {
            return Err(Error::InversionInstability {
                t,
                stehfest: gs,
                talbot: f64::NAN,
            });
        }
        Ok(WeightEstimate {
            t,
            mu,
            value: gs.clamp(0.0, 1.0),
            method: InversionMethod::GaverStehfest,
            stehfest: Some(gs),
            talbot: None,
            flagged: false,
        })
    }
}

/// `h(t; mu) = E[exp(-mu L_t)]`, clamped to `[0, 1]`. Fails with an
/// inversion-instability error when the two inverters disagree.
pub fn l_laplace_weight(sym: &BernsteinSymbol, mu: f64, t: f64) -> Result<f64> {
    let est = l_laplace_weight_estimate(sym, mu, t, &InversionConfig::default())?;
    if est.flagged {
        return Err(Error::InversionInstability {
            t,
            stehfest: est.stehfest.unwrap_or(f64::NAN),
            talbot: est.talbot.unwrap_or(f64::NAN),
        });
    }
    Ok(est.value)
}
