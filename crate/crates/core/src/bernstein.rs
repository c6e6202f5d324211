//! Bernstein functions: Laplace exponents of subordinators.
//!
//! A symbol is either one of the closed forms used throughout the crate
//! (identity, stable, generalized stable, gamma, inverse Gaussian) or a Levy
//! triplet `(k, d, Pi)` evaluated through the Levy-Khintchine integral
//!
//! ```text
//! Phi(lambda) = k + d lambda + int_0^inf (1 - e^{-lambda z}) Pi(dz)
//! ```
//!
//! Integrals against `Pi` are split at `z = 1`; the piece on `(0, 1]` uses
//! `z = e^{-u}` and the piece on `[1, inf)` uses `z = e^{u}`, both handed to
//! the adaptive Gauss-Kronrod rule in [`crate::quad`].

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{check_nonnegative, check_positive, check_unit_open, Error, Result};
use crate::quad::{integrate, integrate_semi_infinite, QuadConfig};

/// Density of a Levy measure with respect to Lebesgue measure on `(0, inf)`.
pub type LevyDensity = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Serializable description of a symbol, as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SymbolSpec {
    Identity,
    Stable {
        beta: f64,
    },
    GeneralizedStable {
        alpha: f64,
        gamma: f64,
    },
    Gamma {
        a: f64,
        b: f64,
    },
    InverseGaussian {
        sigma: f64,
        mu: f64,
    },
    /// Triplet whose Levy density is borrowed from a closed-form symbol.
    Triplet {
        #[serde(default)]
        killing: f64,
        #[serde(default)]
        drift: f64,
        levy: Box<SymbolSpec>,
    },
}

/// Levy triplet `(k, d, Pi)` with `Pi` given by a density.
#[derive(Clone)]
pub struct LevyTriplet {
    killing: f64,
    drift: f64,
    density: Option<LevyDensity>,
    quad: QuadConfig,
}

impl fmt::Debug for LevyTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevyTriplet")
            .field("killing", &self.killing)
            .field("drift", &self.drift)
            .field("has_density", &self.density.is_some())
            .finish()
    }
}

impl LevyTriplet {
    /// Builds a triplet after checking `int (1 ^ z) Pi(dz) < inf` and that the
    /// subordinator is strictly increasing (drift or infinite activity).
    pub fn new(killing: f64, drift: f64, density: Option<LevyDensity>) -> Result<Self> {
        let triplet = Self::new_unchecked(killing, drift, density)?;
        triplet.check_integrability()?;
        if triplet.drift == 0.0 && !triplet.has_infinite_activity()? {
            return Err(Error::FiniteActivity);
        }
        Ok(triplet)
    }

    pub(crate) fn new_unchecked(
        killing: f64,
        drift: f64,
        density: Option<LevyDensity>,
    ) -> Result<Self> {
        check_nonnegative("killing", killing)?;
        check_nonnegative("drift", drift)?;
        Ok(Self {
            killing,
            drift,
            density,
            quad: QuadConfig::default(),
        })
    }

    pub fn with_quadrature(mut self, quad: QuadConfig) -> Self {
        self.quad = quad;
        self
    }

    pub fn killing(&self) -> f64 {
        self.killing
    }

    pub fn drift(&self) -> f64 {
        self.drift
    }

    pub fn density(&self) -> Option<&LevyDensity> {
        self.density.as_ref()
    }

    /// `int_0^{hi} h(z) Pi(z) dz` via `z = hi e^{-u}`.
    fn near_zero<H: Fn(f64) -> f64>(&self, h: H, hi: f64, quad: &QuadConfig) -> Result<f64> {
        let Some(pi) = &self.density else {
            return Ok(0.0);
        };
        let g = |u: f64| {
            let z = hi * (-u).exp();
            if z == 0.0 {
                return 0.0;
            }
            h(z) * pi(z) * z
        };
        Ok(integrate_semi_infinite(g, 0.0, quad)?.value)
    }

    /// `int_{lo}^{inf} h(z) Pi(z) dz` via `z = lo e^{u}`, `lo > 0`.
    fn to_infinity<H: Fn(f64) -> f64>(&self, h: H, lo: f64, quad: &QuadConfig) -> Result<f64> {
        let Some(pi) = &self.density else {
            return Ok(0.0);
        };
        let g = |u: f64| {
            let z = lo * u.min(700.0).exp();
            h(z) * pi(z) * z
        };
        Ok(integrate_semi_infinite(g, 0.0, quad)?.value)
    }

    /// `int_a^b h(z) Pi(z) dz` for `0 < a < b < inf`, via `z = e^{v}`.
    fn between<H: Fn(f64) -> f64>(&self, h: H, a: f64, b: f64) -> Result<f64> {
        let Some(pi) = &self.density else {
            return Ok(0.0);
        };
        let g = |v: f64| {
            let z = v.exp();
            h(z) * pi(z) * z
        };
        Ok(integrate(g, a.ln(), b.ln(), &self.quad)?.value)
    }

    fn check_integrability(&self) -> Result<()> {
        let coarse = QuadConfig {
            abs_tol: 1e-8,
            rel_tol: 1e-10,
            ..self.quad
        };
        let mass = |q: &QuadConfig| -> Result<f64> {
            let small = self.near_zero(|z| z, 1.0, q)?;
            let large = self.to_infinity(|_| 1.0, 1.0, q)?;
            Ok(small + large)
        };
        let a = mass(&coarse).map_err(|e| Error::Integrability(e.to_string()))?;
        let b = mass(&self.quad).map_err(|e| Error::Integrability(e.to_string()))?;
        // The log-substituted integrands must have decayed by the time z
        // under- or overflows; otherwise the finite value is a truncation artifact.
        let edge = match &self.density {
            Some(pi) => {
                let tiny = (-300.0f64).exp();
                let huge = 300.0f64.exp();
                let lo = tiny * (tiny * pi(tiny));
                let hi = huge * pi(huge);
                if lo.is_nan() || hi.is_nan() {
                    f64::INFINITY
                } else {
                    lo.abs().max(hi.abs())
                }
            }
            None => 0.0,
        };
        if !a.is_finite() || !b.is_finite() || !edge.is_finite() || edge > 1e-3 * b.abs().max(1e-12)
        {
            return Err(Error::Integrability("int (1 ^ z) Pi(dz) diverges".into()));
        }
        let change = (a - b).abs() / b.abs().max(1e-300);
        if b > 0.0 && change >= 1e-6 {
            return Err(Error::Integrability(format!(
                "int (1 ^ z) Pi(dz) unstable under refinement ({a} vs {b})"
            )));
        }
        Ok(())
    }

    /// Heuristic: the mass of `Pi` on `[1e-12, 1e-6]` is negligible for a
    /// bounded density but grows like `log` or faster for infinite activity.
    pub fn has_infinite_activity(&self) -> Result<bool> {
        if self.density.is_none() {
            return Ok(false);
        }
        let shell = self.between(|_| 1.0, 1e-12, 1e-6)?;
        let bulk =
            self.between(|_| 1.0, 1e-6, 1.0)? + self.to_infinity(|_| 1.0, 1.0, &self.quad)?;
        Ok(shell > 1e-4 * bulk.max(1.0))
    }

    /// `Phi(lambda) = k + d lambda + int (1 - e^{-lambda z}) Pi(dz)`.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Domain {
                name: "lambda",
                value: lambda,
                domain: "[0, inf)",
            });
        }
        if lambda == 0.0 {
            return Ok(self.killing);
        }
        let h = |z: f64| -(-lambda * z).exp_m1();
        let jumps = self.near_zero(h, 1.0, &self.quad)? + self.to_infinity(h, 1.0, &self.quad)?;
        Ok(self.killing + self.drift * lambda + jumps)
    }

    /// Tail of the Levy measure, `k + Pi((z, inf))`.
    pub fn tail(&self, z: f64) -> Result<f64> {
        check_positive("z", z)?;
        let beyond = if z < 1.0 {
            self.between(|_| 1.0, z, 1.0)? + self.to_infinity(|_| 1.0, 1.0, &self.quad)?
        } else {
            self.to_infinity(|_| 1.0, z, &self.quad)?
        };
        if !beyond.is_finite() {
            return Err(Error::Integrability(format!("tail diverges at z = {z}")));
        }
        Ok(self.killing + beyond)
    }

    /// `int_0^z tail(y) dy = k z + int min(y, z) Pi(dy)`.
    pub fn integrated_tail(&self, z: f64) -> Result<f64> {
        check_nonnegative("z", z)?;
        if z == 0.0 {
            return Ok(0.0);
        }
        let inside = self.near_zero(|y| y, z, &self.quad)?;
        let outside = self.to_infinity(|_| z, z, &self.quad)?;
        Ok(self.killing * z + inside + outside)
    }

    /// `int_0^inf e^{-lambda z} tail(z) dz`, which equals `Phi(lambda)/lambda - d`.
    pub fn tail_laplace(&self, lambda: f64) -> Result<f64> {
        check_positive("lambda", lambda)?;
        let quad = QuadConfig {
            abs_tol: 1e-11,
            rel_tol: 1e-9,
            ..self.quad
        };
        let body = |z: f64| -> f64 {
            if z == 0.0 || !z.is_finite() {
                return 0.0;
            }
            let tail = self.tail(z).unwrap_or(f64::NAN);
            (-lambda * z).exp() * tail
        };
        let small = integrate_semi_infinite(
            |u| {
                let z = (-u).exp();
                body(z) * z
            },
            0.0,
            &quad,
        )?
        .value;
        let large = integrate_semi_infinite(
            |u| {
                let z = u.min(700.0).exp();
                body(z) * z
            },
            0.0,
            &quad,
        )?
        .value;
        Ok(small + large)
    }

    /// Relative discrepancy in `Phi(lambda)/lambda = d + int e^{-lambda z} tail(z) dz`.
    pub fn tail_identity_residual(&self, lambda: f64) -> Result<f64> {
        let lhs = self.eval(lambda)? / lambda;
        let rhs = self.drift + self.tail_laplace(lambda)?;
        Ok((lhs - rhs).abs() / lhs.abs().max(1e-300))
    }

    /// `int_0^delta z Pi(dz)`: mean contribution of jumps below `delta`.
    pub fn small_jump_mean(&self, delta: f64) -> Result<f64> {
        check_positive("delta", delta)?;
        self.near_zero(|z| z, delta, &self.quad)
    }

    /// `Pi([delta, inf))`.
    pub fn jump_rate(&self, delta: f64) -> Result<f64> {
        check_positive("delta", delta)?;
        if delta < 1.0 {
            Ok(self.between(|_| 1.0, delta, 1.0)? + self.to_infinity(|_| 1.0, 1.0, &self.quad)?)
        } else {
            self.to_infinity(|_| 1.0, delta, &self.quad)
        }
    }

    /// `Phi'(0)` by one-sided differences at `h = 1e-2, 1e-3, 1e-4` with
    /// Richardson extrapolation; `+inf` when the differences keep growing.
    pub fn mean_by_differences(&self) -> Result<f64> {
        let phi0 = self.eval(0.0)?;
        let d = |h: f64| -> Result<f64> { Ok((self.eval(h)? - phi0) / h) };
        let (d1, d2, d3) = (d(1e-2)?, d(1e-3)?, d(1e-4)?);
        let g1 = d2 - d1;
        let g2 = d3 - d2;
        // Concavity makes the differences increase as h shrinks. A finite
        // derivative shrinks the increments ~10x per decade; power-law or
        // logarithmic divergence shrinks them by at most 10^{1-beta}.
        let negligible = g2.abs() <= 1e-9 * d3.abs().max(1.0);
        if !negligible && g2 > 0.0 && g1 < 8.5 * g2 {
            return Ok(f64::INFINITY);
        }
        let r12 = (10.0 * d2 - d1) / 9.0;
        let r23 = (10.0 * d3 - d2) / 9.0;
        Ok((100.0 * r23 - r12) / 99.0)
    }
}

/// The kinds of Laplace exponent supported by the crate.
#[derive(Debug, Clone)]
pub enum SymbolKind {
    /// `Phi(lambda) = lambda`: `H_t = L_t = t`.
    Identity,
    /// `lambda^beta`, `beta in (0, 1)`.
    Stable {
        beta: f64,
    },
    /// `(lambda + gamma)^alpha - gamma^alpha`.
    GeneralizedStable {
        alpha: f64,
        gamma: f64,
    },
    /// `a ln(1 + lambda / b)`.
    Gamma {
        a: f64,
        b: f64,
    },
    /// `sigma^{-2} (sqrt(2 lambda sigma^2 + mu^2) - mu)`.
    InverseGaussian {
        sigma: f64,
        mu: f64,
    },
    Triplet(LevyTriplet),
}

/// An immutable Laplace exponent with its cached `Phi(0)` and `Phi'(0)`.
#[derive(Debug, Clone)]
pub struct BernsteinSymbol {
    kind: SymbolKind,
    phi_at_zero: f64,
    mean: f64,
}

impl BernsteinSymbol {
    fn closed(kind: SymbolKind) -> Self {
        let mean = match &kind {
            SymbolKind::Identity => 1.0,
            SymbolKind::Stable { .. } => f64::INFINITY,
            SymbolKind::GeneralizedStable { alpha, gamma } => alpha * gamma.powf(alpha - 1.0),
            SymbolKind::Gamma { a, b } => a / b,
            SymbolKind::InverseGaussian { mu, .. } => 1.0 / mu,
            SymbolKind::Triplet(_) => unreachable!("triplets go through from_triplet"),
        };
        Self {
            kind,
            phi_at_zero: 0.0,
            mean,
        }
    }

    pub fn identity() -> Self {
        Self::closed(SymbolKind::Identity)
    }

    pub fn stable(beta: f64) -> Result<Self> {
        check_unit_open("beta", beta)?;
        Ok(Self::closed(SymbolKind::Stable { beta }))
    }

    pub fn generalized_stable(alpha: f64, gamma: f64) -> Result<Self> {
        check_unit_open("alpha", alpha)?;
        check_positive("gamma", gamma)?;
        Ok(Self::closed(SymbolKind::GeneralizedStable { alpha, gamma }))
    }

    pub fn gamma(a: f64, b: f64) -> Result<Self> {
        check_positive("a", a)?;
        check_positive("b", b)?;
        Ok(Self::closed(SymbolKind::Gamma { a, b }))
    }

    pub fn inverse_gaussian(sigma: f64, mu: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma == 0.0 {
            return Err(Error::InvalidParameter {
                name: "sigma",
                reason: format!("must be finite and nonzero, got {sigma}"),
            });
        }
        check_positive("mu", mu)?;
        Ok(Self::closed(SymbolKind::InverseGaussian { sigma, mu }))
    }

    pub fn from_triplet(triplet: LevyTriplet) -> Result<Self> {
        let phi_at_zero = triplet.killing;
        let mean = triplet.mean_by_differences()?;
        Ok(Self {
            kind: SymbolKind::Triplet(triplet),
            phi_at_zero,
            mean,
        })
    }

    pub fn from_spec(spec: &SymbolSpec) -> Result<Self> {
        match spec {
            SymbolSpec::Identity => Ok(Self::identity()),
            SymbolSpec::Stable { beta } => Self::stable(*beta),
            SymbolSpec::GeneralizedStable { alpha, gamma } => {
                Self::generalized_stable(*alpha, *gamma)
            }
            SymbolSpec::Gamma { a, b } => Self::gamma(*a, *b),
            SymbolSpec::InverseGaussian { sigma, mu } => Self::inverse_gaussian(*sigma, *mu),
            SymbolSpec::Triplet {
                killing,
                drift,
                levy,
            } => {
                let base = Self::from_spec(levy)?;
                let density = base.levy_density();
                Self::from_triplet(LevyTriplet::new(*killing, *drift, density)?)
            }
        }
    }

    pub fn kind(&self) -> &SymbolKind {
        &self.kind
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, SymbolKind::Identity)
    }

    /// Cached `Phi(0)`, the killing rate.
    pub fn phi_at_zero(&self) -> f64 {
        self.phi_at_zero
    }

    /// `Phi'(0) = E[H_1]`, possibly `+inf`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Drift coefficient `d`.
    pub fn drift(&self) -> f64 {
        match &self.kind {
            SymbolKind::Identity => 1.0,
            SymbolKind::Triplet(t) => t.drift,
            _ => 0.0,
        }
    }

    /// Short human-readable label, used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            SymbolKind::Identity => "identity".into(),
            SymbolKind::Stable { beta } => format!("stable(beta={beta})"),
            SymbolKind::GeneralizedStable { alpha, gamma } => {
                format!("generalized_stable(alpha={alpha},gamma={gamma})")
            }
            SymbolKind::Gamma { a, b } => format!("gamma(a={a},b={b})"),
            SymbolKind::InverseGaussian { sigma, mu } => {
                format!("inverse_gaussian(sigma={sigma},mu={mu})")
            }
            SymbolKind::Triplet(t) => format!("triplet(k={},d={})", t.killing, t.drift),
        }
    }

    /// `Phi(lambda)` for `lambda >= 0`.
    pub fn eval(&self, lambda: f64) -> Result<f64> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::Domain {
                name: "lambda",
                value: lambda,
                domain: "[0, inf)",
            });
        }
        Ok(match &self.kind {
            SymbolKind::Identity => lambda,
            SymbolKind::Stable { beta } => lambda.powf(*beta),
            SymbolKind::GeneralizedStable { alpha, gamma } => {
                (lambda + gamma).powf(*alpha) - gamma.powf(*alpha)
            }
            SymbolKind::Gamma { a, b } => a * (lambda / b).ln_1p(),
            SymbolKind::InverseGaussian { sigma, mu } => {
                let s2 = sigma * sigma;
                // sqrt(2 l s2 + mu^2) - mu, written without cancellation.
                2.0 * lambda / ((2.0 * lambda * s2 + mu * mu).sqrt() + mu)
            }
            SymbolKind::Triplet(t) => return t.eval(lambda),
        })
    }

    /// Analytic continuation to the right half plane (principal branches);
    /// `None` for triplets, which are only available on the real axis.
    pub fn eval_complex(&self, z: Complex64) -> Option<Complex64> {
        Some(match &self.kind {
            SymbolKind::Identity => z,
            SymbolKind::Stable { beta } => z.powf(*beta),
            SymbolKind::GeneralizedStable { alpha, gamma } => {
                (z + gamma).powf(*alpha) - gamma.powf(*alpha)
            }
            SymbolKind::Gamma { a, b } => (z / b + 1.0).ln() * a,
            SymbolKind::InverseGaussian { sigma, mu } => {
                let s2 = sigma * sigma;
                (z * 2.0) / ((z * (2.0 * s2) + mu * mu).sqrt() + mu)
            }
            SymbolKind::Triplet(_) => return None,
        })
    }

    pub fn is_complex_analytic(&self) -> bool {
        !matches!(self.kind, SymbolKind::Triplet(_))
    }

    /// Levy density of the closed forms; `None` for the identity (pure drift).
    pub fn levy_density(&self) -> Option<LevyDensity> {
        match &self.kind {
            SymbolKind::Identity => None,
            SymbolKind::Stable { beta } => {
                let beta = *beta;
                let c = beta / gamma(1.0 - beta);
                Some(Arc::new(move |z: f64| c * z.powf(-1.0 - beta)))
            }
            SymbolKind::GeneralizedStable { alpha, gamma: g } => {
                let (alpha, g) = (*alpha, *g);
                let c = alpha / gamma(1.0 - alpha);
                Some(Arc::new(move |z: f64| {
                    c * z.powf(-1.0 - alpha) * (-g * z).exp()
                }))
            }
            SymbolKind::Gamma { a, b } => {
                let (a, b) = (*a, *b);
                Some(Arc::new(move |z: f64| a * (-b * z).exp() / z))
            }
            SymbolKind::InverseGaussian { sigma, mu } => {
                let s = sigma.abs();
                let c = 1.0 / (s * (2.0 * std::f64::consts::PI).sqrt());
                let rate = mu * mu / (2.0 * s * s);
                Some(Arc::new(move |z: f64| c * z.powf(-1.5) * (-rate * z).exp()))
            }
            SymbolKind::Triplet(t) => t.density.clone(),
        }
    }

    /// The triplet form of this symbol (Levy-Khintchine representation).
    pub fn to_triplet(&self) -> Result<LevyTriplet> {
        match &self.kind {
            SymbolKind::Triplet(t) => Ok(t.clone()),
            _ => LevyTriplet::new_unchecked(0.0, self.drift(), self.levy_density()),
        }
    }

    /// Tail `k + Pi((z, inf))`; closed form for the stable kind.
    pub fn tail(&self, z: f64) -> Result<f64> {
        check_positive("z", z)?;
        match &self.kind {
            SymbolKind::Stable { beta } => Ok(z.powf(-beta) / gamma(1.0 - beta)),
            _ => self.to_triplet()?.tail(z),
        }
    }

    /// `int_0^z tail(y) dy`; closed form for the stable kind.
    pub fn integrated_tail(&self, z: f64) -> Result<f64> {
        check_nonnegative("z", z)?;
        match &self.kind {
            SymbolKind::Stable { beta } => Ok(z.powf(1.0 - beta) / gamma(2.0 - beta)),
            _ => self.to_triplet()?.integrated_tail(z),
        }
    }

    /// Errors unless `k = 0` and `d = 0`, the setting of the time-fractional
    /// operator. The identity is admitted separately by callers that accept it.
    pub fn require_pure_jump(&self) -> Result<()> {
        if self.phi_at_zero != 0.0 {
            return Err(Error::InvalidParameter {
                name: "killing",
                reason: "time-fractional operator requires k = 0".into(),
            });
        }
        if self.drift() != 0.0 {
            return Err(Error::InvalidParameter {
                name: "drift",
                reason: "time-fractional operator requires d = 0".into(),
            });
        }
        Ok(())
    }

    /// Smallest `lambda` with `Phi(lambda) >= level`, by bracketing and bisection.
    pub fn inverse(&self, level: f64) -> Result<f64> {
        check_nonnegative("level", level)?;
        if level <= self.phi_at_zero {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.eval(hi)? < level {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Domain {
                    name: "level",
                    value: level,
                    domain: "range of Phi",
                });
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid)? < level {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(hi)
    }
}

/// Largest relative discrepancy between a closed-form symbol and its triplet
/// (quadrature) evaluation over `grid`.
pub fn eval_triplet_vs_closed(sym: &BernsteinSymbol, grid: &[f64]) -> Result<f64> {
    if matches!(sym.kind, SymbolKind::Triplet(_)) {
        return Err(Error::Unsupported(
            "comparison needs a closed-form symbol".into(),
        ));
    }
    let triplet = sym.to_triplet()?;
    let mut worst = 0.0f64;
    for &lambda in grid {
        let closed = sym.eval(lambda)?;
        let quad = triplet.eval(lambda).map_err(|e| match e {
            Error::Quadrature { estimate, .. } => Error::Quadrature {
                at: lambda,
                estimate,
            },
            other => other,
        })?;
        let rel = if closed == 0.0 {
            quad.abs()
        } else {
            ((quad - closed) / closed).abs()
        };
        worst = worst.max(rel);
    }
    Ok(worst)
}
