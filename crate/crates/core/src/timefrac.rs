//! The time-fractional operator `D^Phi_t` and the equation `D^Phi_t u = A u`.
//!
//! With `k = d = 0` the operator is the convolution
//! `D^Phi_t u(t) = int_0^t tail(t - s) u'(s) ds`, whose Laplace transform is
//! `Phi(lambda) u~(lambda) - (Phi(lambda)/lambda) u(0)`. Solutions of the
//! equation are represented spectrally, `u(t) = sum_n h(t; mu_n) c_n phi_n`
//! with `h(t; mu) = E[exp(-mu L_t)]`, and their potentials satisfy
//! `lambda R^Phi_lambda f = Phi(lambda) R_{Phi(lambda)} f`.

use std::io::Write;

use serde::Serialize;

use crate::bernstein::BernsteinSymbol;
use crate::error::{check_nonnegative, check_positive, Error, Result};
use crate::generators::DiscreteGenerator;
use crate::invlap::{l_laplace_weight_estimate, InversionConfig, WeightEstimate};
use crate::quad::{integrate, QuadConfig};

/// Relative energy of the dropped modes used to pick the default truncation.
pub const DEFAULT_TRUNCATION_ENERGY: f64 = 1e-8;

/// `D^Phi_t u` on the uniform grid `t_j = j dt`.
///
/// `u` is interpolated piecewise linearly, for which the convolution is
/// exact: `D_j = sum_{k<j} s_k (I(t_j - t_k) - I(t_j - t_{k+1}))` with slopes
/// `s_k` and the integrated tail `I(z) = int_0^z tail`. The identity symbol
/// returns the ordinary (left) derivative.
pub fn frac_derivative(u: &[f64], dt: f64, sym: &BernsteinSymbol) -> Result<Vec<f64>> {
    check_positive("dt", dt)?;
    if u.len() < 2 {
        return Err(Error::InvalidParameter {
            name: "u",
            reason: "need at least two samples".into(),
        });
    }
    if !u[0].is_finite() {
        return Err(Error::Domain {
            name: "u(0)",
            value: u[0],
            domain: "finite reals",
        });
    }
    let slopes: Vec<f64> = u.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
    if sym.is_identity() {
        let mut out = Vec::with_capacity(u.len());
        out.push(slopes[0]);
        out.extend_from_slice(&slopes);
        return Ok(out);
    }
    sym.require_pure_jump()?;
    let n = u.len();
    let mut itail = Vec::with_capacity(n);
    for m in 0..n {
        itail.push(sym.integrated_tail(m as f64 * dt)?);
    }
    // Weight of slope s_k in D_j depends only on j - k.
    let kernel: Vec<f64> = itail.windows(2).map(|w| w[1] - w[0]).collect();
    Ok((0..n)
        .map(|j| (0..j).map(|k| slopes[k] * kernel[j - k - 1]).sum())
        .collect())
}

/// Both sides of `int |D^Phi u|^p <= (int |u'|^p) Phi'(0)^p` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YoungBound {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Evaluates the Young-inequality bound for `u` sampled on `n_steps` uniform
/// steps of `[0, t_max]`. Both sides use the piecewise-linear interpolant.
pub fn young_bound_check<F: Fn(f64) -> f64>(
    u: F,
    t_max: f64,
    n_steps: usize,
    sym: &BernsteinSymbol,
    p: f64,
) -> Result<YoungBound> {
    check_positive("t_max", t_max)?;
    if !(p >= 1.0) {
        return Err(Error::Domain {
            name: "p",
            value: p,
            domain: "[1, inf)",
        });
    }
    let mean = sym.mean();
    if !mean.is_finite() {
        return Err(Error::Unsupported(format!(
            "Phi'(0) is infinite for {}; the bound is vacuous",
            sym.label()
        )));
    }
    let dt = t_max / n_steps as f64;
    let samples: Vec<f64> = (0..=n_steps).map(|j| u(j as f64 * dt)).collect();
    let d = frac_derivative(&samples, dt, sym)?;
    let lhs = trapezoid(&d.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>(), dt);
    let rhs = samples
        .windows(2)
        .map(|w| ((w[1] - w[0]) / dt).abs().powf(p) * dt)
        .sum::<f64>()
        * mean.powf(p);
    Ok(YoungBound {
        lhs,
        rhs,
        holds: lhs <= rhs * (1.0 + 1e-3),
    })
}

fn trapezoid(v: &[f64], dt: f64) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    dt * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[v.len() - 1]))
}

/// Spectral solution of `D^Phi_t u = A u`, `u(0) = f`, on a time grid.
#[derive(Debug, Clone)]
pub struct TimeFracSolution {
    pub symbol: String,
    pub t_grid: Vec<f64>,
    pub grid: Vec<f64>,
    pub initial: Vec<f64>,
    pub coefficients: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub n_modes: usize,
    /// `sum_{n > n_modes} c_n^2`.
    pub truncation_energy: f64,
    /// `weights[i][n] = h(t_i; mu_n)`, with diagnostics.
    pub weights: Vec<Vec<WeightEstimate>>,
    /// `values[i]` is `u(t_i, .)` at the generator's unknowns.
    pub values: Vec<Vec<f64>>,
    /// True if any weight was flagged by the inversion consistency gate.
    pub flagged: bool,
}

impl TimeFracSolution {
    /// The solution at `t_grid[i]`.
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    /// Writes `t,x,u` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,x,u")?;
        for (t, row) in self.t_grid.iter().zip(&self.values) {
            for (x, v) in self.grid.iter().zip(row) {
                writeln!(out, "{t},{x},{v}")?;
            }
        }
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        let flagged: Vec<_> = self
            .weights
            .iter()
            .flatten()
            .filter(|w| w.flagged)
            .map(|w| serde_json::json!({"t": w.t, "mu": w.mu}))
            .collect();
        serde_json::json!({
            "symbol": self.symbol,
            "n_modes": self.n_modes,
            "truncation_energy": self.truncation_energy,
            "inversion_flags": flagged,
            "flagged": self.flagged,
        })
    }
}

/// Smallest number of modes whose dropped energy is below
/// `rel_energy * ||f||^2`.
pub fn default_mode_count(coefficients: &[f64], rel_energy: f64) -> usize {
    let total: f64 = coefficients.iter().map(|c| c * c).sum();
    let mut tail = 0.0;
    let mut n = coefficients.len();
    for c in coefficients.iter().rev() {
        if tail + c * c >= rel_energy * total {
            break;
        }
        tail += c * c;
        n -= 1;
    }
    n
}

/// Solves `D^Phi_t u = A u` with `u(0) = f` on `t_grid` using `n_modes`
/// eigenmodes (default: dropped energy below `1e-8 ||f||^2_m`). At `t = 0`
/// the datum is returned unchanged.
pub fn solve(
    g: &DiscreteGenerator,
    sym: &BernsteinSymbol,
    f: &[f64],
    t_grid: &[f64],
    n_modes: Option<usize>,
) -> Result<TimeFracSolution> {
    solve_with(g, sym, f, t_grid, n_modes, &InversionConfig::default())
}

pub fn solve_with(
    g: &DiscreteGenerator,
    sym: &BernsteinSymbol,
    f: &[f64],
    t_grid: &[f64],
    n_modes: Option<usize>,
    cfg: &InversionConfig,
) -> Result<TimeFracSolution> {
    if sym.phi_at_zero() != 0.0 {
        return Err(Error::InvalidParameter {
            name: "killing",
            reason: "the time-fractional equation requires k = 0".into(),
        });
    }
    let spec = g.spectral_decompose()?;
    let coefficients = g.coefficients(f)?;
    let n_modes = match n_modes {
        Some(n) if n == 0 || n > spec.len() => {
            return Err(Error::InvalidParameter {
                name: "n_modes",
                reason: format!("must be in 1..={}, got {n}", spec.len()),
            })
        }
        Some(n) => n,
        None => default_mode_count(&coefficients, DEFAULT_TRUNCATION_ENERGY).max(1),
    };
    let truncation_energy = coefficients[n_modes..].iter().map(|c| c * c).sum();
    let mut weights = Vec::with_capacity(t_grid.len());
    let mut values = Vec::with_capacity(t_grid.len());
    let mut flagged = false;
    for &t in t_grid {
        check_nonnegative("t", t)?;
        if t == 0.0 {
            let w: Vec<WeightEstimate> = spec.values[..n_modes]
                .iter()
                .map(|&mu| WeightEstimate {
                    t,
                    mu,
                    value: 1.0,
                    method: crate::invlap::InversionMethod::Exact,
                    stehfest: None,
                    talbot: None,
                    flagged: false,
                })
                .collect();
            weights.push(w);
            values.push(f.to_vec());
            continue;
        }
        let w = spec.values[..n_modes]
            .iter()
            .map(|&mu| l_laplace_weight_estimate(sym, mu.max(0.0), t, cfg))
            .collect::<Result<Vec<_>>>()?;
        flagged |= w.iter().any(|e| e.flagged);
        let h: Vec<f64> = w.iter().map(|e| e.value).collect();
        values.push(g.synthesize(&coefficients[..n_modes], &h)?);
        weights.push(w);
    }
    Ok(TimeFracSolution {
        symbol: sym.label(),
        t_grid: t_grid.to_vec(),
        grid: g.grid().to_vec(),
        initial: f.to_vec(),
        coefficients,
        eigenvalues: spec.values.clone(),
        n_modes,
        truncation_energy,
        weights,
        values,
        flagged,
    })
}

/// `R^Phi_lambda f = (Phi(lambda) / lambda) R_{Phi(lambda)} f`.
pub fn potential(
    g: &DiscreteGenerator,
    sym: &BernsteinSymbol,
    f: &[f64],
    lambda: f64,
) -> Result<Vec<f64>> {
    check_positive("lambda", lambda)?;
    if sym.is_identity() {
        return g.resolvent_apply(lambda, f);
    }
    let phi = sym.eval(lambda)?;
    check_positive("Phi(lambda)", phi)?;
    let scale = phi / lambda;
    Ok(g.resolvent_apply(phi, f)?
        .into_iter()
        .map(|v| scale * v)
        .collect())
}

/// `max_lambda || A p - Phi(lambda) p + (Phi(lambda)/lambda) f ||_m` with
/// `p = R^Phi_lambda f`.
pub fn residual_check(
    g: &DiscreteGenerator,
    sym: &BernsteinSymbol,
    f: &[f64],
    lambda_grid: &[f64],
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &lambda in lambda_grid {
        let p = potential(g, sym, f, lambda)?;
        let phi = sym.eval(lambda)?;
        let ap = g.apply(&p);
        let r: Vec<f64> = ap
            .iter()
            .zip(&p)
            .zip(f)
            .map(|((a, p), f)| a - phi * p + phi / lambda * f)
            .collect();
        worst = worst.max(g.norm(&r));
    }
    Ok(worst)
}

/// `E_x[zeta^Phi] = Phi'(0) E_x[zeta]` at the unknown located at `x`.
/// Conservative generators and infinite `Phi'(0)` give `+inf`.
pub fn lifetime_mean(g: &DiscreteGenerator, sym: &BernsteinSymbol, x: f64) -> Result<f64> {
    let k = g.node_index(x).ok_or_else(|| {
        Error::GridMismatch(format!("x = {x} is not an unknown of the generator"))
    })?;
    let mean = sym.mean();
    if !mean.is_finite() {
        return Ok(f64::INFINITY);
    }
    match g.shifted_solve(0.0, &vec![1.0; g.len()]) {
        Ok(u) => Ok(mean * u[k]),
        Err(Error::Singular { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `R^Phi_lambda 1 = (1/lambda) Phi(lambda) / (c + Phi(lambda))` for a base
/// process with an exponential lifetime of rate `c`.
pub fn exp_lifetime_potential(sym: &BernsteinSymbol, c: f64, lambda: f64) -> Result<f64> {
    check_positive("c", c)?;
    check_positive("lambda", lambda)?;
    let phi = sym.eval(lambda)?;
    Ok(phi / (lambda * (c + phi)))
}

/// The two candidate potentials of the spatially subordinated equation.
#[derive(Debug, Clone, Serialize)]
pub struct SubordinationComparison {
    /// `(Phi/lambda) sum c_n phi_n / (Phi(lambda) + Psi(mu_n))`.
    pub via_potential_identity: Vec<f64>,
    /// `(Phi/lambda) (Psi(Phi)/Phi)^2 sum c_n phi_n / (Psi(Phi(lambda)) + mu_n)`.
    pub via_closed_expression: Vec<f64>,
    /// `m`-norm of the difference.
    pub discrepancy: f64,
}

/// Evaluates the potential of `D^Phi_t u = -Psi(-A) u` in two ways: through
/// the potential identity applied to the generator `-Psi(-A)`, and through
/// the closed expression `(Phi/lambda)(Psi(Phi)/Phi)^2 R_{Psi(Phi)}`. Both are
/// returned; neither is preferred.
pub fn spatial_subordination_compare(
    g: &DiscreteGenerator,
    phi_sym: &BernsteinSymbol,
    psi_sym: &BernsteinSymbol,
    f: &[f64],
    lambda: f64,
) -> Result<SubordinationComparison> {
    check_positive("lambda", lambda)?;
    if psi_sym.phi_at_zero() != 0.0 {
        return Err(Error::InvalidParameter {
            name: "psi",
            reason: "spatial symbol must have k = 0".into(),
        });
    }
    let spec = g.spectral_decompose()?;
    let c = g.coefficients(f)?;
    let phi = phi_sym.eval(lambda)?;
    let psi_phi = psi_sym.eval(phi)?;
    let scale = phi / lambda;
    let w1 = spec
        .values
        .iter()
        .map(|&mu| Ok(scale / (phi + psi_sym.eval(mu.max(0.0))?)))
        .collect::<Result<Vec<f64>>>()?;
    let factor = scale * (psi_phi / phi).powi(2);
    let w2: Vec<f64> = spec
        .values
        .iter()
        .map(|&mu| factor / (psi_phi + mu))
        .collect();
    let via_potential_identity = g.synthesize(&c, &w1)?;
    let via_closed_expression = g.synthesize(&c, &w2)?;
    let diff: Vec<f64> = via_potential_identity
        .iter()
        .zip(&via_closed_expression)
        .map(|(a, b)| a - b)
        .collect();
    Ok(SubordinationComparison {
        discrepancy: g.norm(&diff),
        via_potential_identity,
        via_closed_expression,
    })
}

/// `int_0^inf e^{-lambda t} h(t; mu) dt` by adaptive quadrature on `[0, T]`
/// with `T` chosen so that `e^{-lambda T} < 1e-12`. Used to cross-check the
/// time representation against the potential.
pub fn laplace_of_weight(sym: &BernsteinSymbol, mu: f64, lambda: f64) -> Result<f64> {
    check_positive("lambda", lambda)?;
    let t_max = 12.0 * std::f64::consts::LN_10 / lambda;
    let cfg = InversionConfig::default();
    let quad = QuadConfig {
        abs_tol: 1e-10,
        rel_tol: 1e-8,
        max_intervals: 2000,
    };
    let h = |t: f64| {
        if t <= 0.0 {
            return 1.0;
        }
        l_laplace_weight_estimate(sym, mu, t, &cfg)
            .map(|e| e.value)
            .unwrap_or(f64::NAN)
    };
    Ok(integrate(|t| (-lambda * t).exp() * h(t), 0.0, t_max, &quad)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{build_limit_generator, Regime};
    use proptest::prelude::*;
    use statrs::function::erf::erfc;
    use statrs::function::gamma::gamma;
    use std::f64::consts::PI;

    fn dirichlet(n: usize) -> DiscreteGenerator {
        build_limit_generator(0.0, PI, Regime::Dirichlet, n).unwrap()
    }

    #[test]
    fn derivative_of_constant_is_zero() {
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let d = frac_derivative(&[1.0; 50], 0.02, &s).unwrap();
        assert!(d.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn derivative_of_ramp() {
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let n = 100;
        let dt = 1.0 / n as f64;
        let u: Vec<f64> = (0..=n).map(|j| j as f64 * dt).collect();
        let d = frac_derivative(&u, dt, &s).unwrap();
        let exact = 1.0 / gamma(1.5);
        assert!((d[n] - exact).abs() < 1e-10);
        assert!((exact - std::f64::consts::FRAC_2_SQRT_PI).abs() < 1e-12);
        let near_one = BernsteinSymbol::stable(0.99).unwrap();
        let d = frac_derivative(&u, dt, &near_one).unwrap();
        assert!((d[n] - 1.0).abs() < 0.05);
    }

    #[test]
    fn derivative_rejects_drift_and_killing() {
        let t = crate::bernstein::LevyTriplet::new(
            0.0,
            0.5,
            BernsteinSymbol::gamma(1.0, 1.0).unwrap().levy_density(),
        )
        .unwrap();
        let s = BernsteinSymbol::from_triplet(t).unwrap();
        assert!(frac_derivative(&[0.0, 1.0], 1.0, &s).is_err());
    }

    #[test]
    fn derivative_laplace_transform() {
        // u(t) = 1 + t^2 / 2, gamma(1,1)
        let s = BernsteinSymbol::gamma(1.0, 1.0).unwrap();
        let t_max: f64 = 30.0;
        let mut errs = Vec::new();
        for n in [1500usize, 3000] {
            let dt = t_max / n as f64;
            let u: Vec<f64> = (0..=n)
                .map(|j| 1.0 + 0.5 * (j as f64 * dt).powi(2))
                .collect();
            let d = frac_derivative(&u, dt, &s).unwrap();
            let mut worst = 0.0f64;
            for lambda in [1.0, 2.0, 4.0] {
                let w: Vec<f64> = d
                    .iter()
                    .enumerate()
                    .map(|(j, v)| (-lambda * j as f64 * dt).exp() * v)
                    .collect();
                let numeric = trapezoid(&w, dt);
                let phi = s.eval(lambda).unwrap();
                let u_hat = 1.0 / lambda + 1.0 / lambda.powi(3);
                let exact = phi * u_hat - phi / lambda;
                worst = worst.max((numeric - exact).abs() / exact.abs());
            }
            errs.push(worst);
        }
        assert!(errs[0] < 1e-2, "{errs:?}");
        assert!(errs[1] < 0.6 * errs[0], "{errs:?}");
    }

    #[test]
    fn identity_derivative_is_ordinary() {
        let u: Vec<f64> = (0..=10).map(|j| (j as f64 * 0.1).powi(2)).collect();
        let d = frac_derivative(&u, 0.1, &BernsteinSymbol::identity()).unwrap();
        assert!((d[10] - 1.9).abs() < 1e-12);
    }

    #[test]
    fn young_examples() {
        let g = BernsteinSymbol::gamma(1.0, 1.0).unwrap();
        let c = young_bound_check(|_| 3.0, 1.0, 200, &g, 2.0).unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (0.0, 0.0, true));
        let c = young_bound_check(|t| t, 1.0, 400, &g, 2.0).unwrap();
        assert!((c.rhs - 1.0).abs() < 1e-12);
        assert!(c.lhs <= 1.0 && c.holds);
        let ig = BernsteinSymbol::inverse_gaussian(1.0, 2.0).unwrap();
        assert!(
            young_bound_check(f64::sin, 2.0, 400, &ig, 2.0)
                .unwrap()
                .holds
        );
        let st = BernsteinSymbol::stable(0.5).unwrap();
        assert!(matches!(
            young_bound_check(|t| t, 1.0, 10, &st, 2.0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn heat_solution_for_identity() {
        let g = dirichlet(200);
        let phi1 = g.spectral_decompose().unwrap().mode(0);
        let mu1 = g.spectral_decompose().unwrap().values[0];
        let sol = solve(&g, &BernsteinSymbol::identity(), &phi1, &[0.0, 1.0], None).unwrap();
        assert_eq!(sol.at(0), &phi1[..]);
        for (u, p) in sol.at(1).iter().zip(&phi1) {
            assert!((u - (-mu1).exp() * p).abs() < 1e-10);
        }
    }

    #[test]
    fn stable_amplitude_matches_erfc() {
        let g = dirichlet(400);
        let spec = g.spectral_decompose().unwrap();
        let phi1 = spec.mode(0);
        let mu1 = spec.values[0];
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let sol = solve(&g, &s, &phi1, &[1.0], Some(5)).unwrap();
        let amp = sol.at(0)[200] / phi1[200];
        assert!((amp - (mu1 * mu1).exp() * erfc(mu1)).abs() < 1e-8);
        assert!(((0.25f64).exp() * erfc(0.5) - 0.615690).abs() < 1e-6);
        assert!(!sol.flagged);
    }

    #[test]
    fn default_truncation() {
        let g = dirichlet(200);
        let f = g.sample(|x| x * (PI - x));
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let sol = solve(&g, &s, &f, &[0.5], None).unwrap();
        let norm2 = g.inner(&f, &f);
        assert!(sol.truncation_energy < 1e-8 * norm2);
        assert!(sol.n_modes < g.len());
        // Weights are nonincreasing along the sorted spectrum.
        let h: Vec<f64> = sol.weights[0].iter().map(|w| w.value).collect();
        assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn potential_examples() {
        let g = dirichlet(400);
        let spec = g.spectral_decompose().unwrap();
        let phi1 = spec.mode(0);
        let mu1 = spec.values[0];
        let f = g.sample(|x| x.sin() + 0.3 * (3.0 * x).sin());
        let id = BernsteinSymbol::identity();
        assert_eq!(
            potential(&g, &id, &f, 1.3).unwrap(),
            g.resolvent_apply(1.3, &f).unwrap()
        );
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let p = potential(&g, &s, &phi1, 1.0).unwrap();
        for (a, b) in p.iter().zip(&phi1) {
            assert!((a - b / (1.0 + mu1)).abs() < 1e-10);
        }
    }

    #[test]
    fn potential_is_laplace_transform_of_solution() {
        let g = dirichlet(400);
        let spec = g.spectral_decompose().unwrap();
        let phi1 = spec.mode(0);
        let mu1 = spec.values[0];
        let s = BernsteinSymbol::stable(0.5).unwrap();
        for lambda in [0.5, 1.0, 2.0] {
            let numeric = laplace_of_weight(&s, mu1, lambda).unwrap() * phi1[200];
            let p = potential(&g, &s, &phi1, lambda).unwrap()[200];
            assert!(
                (numeric - p).abs() < 1e-3 * p.abs(),
                "lambda={lambda}: {numeric} vs {p}"
            );
        }
    }

    #[test]
    fn residuals() {
        let g = dirichlet(400);
        let f = g.sample(|x| x * (PI - x));
        for s in [
            BernsteinSymbol::identity(),
            BernsteinSymbol::stable(0.5).unwrap(),
            BernsteinSymbol::gamma(1.0, 1.0).unwrap(),
        ] {
            let r = residual_check(&g, &s, &f, &[0.5, 1.0, 2.0]).unwrap();
            assert!(r < 1e-8, "{}: {r}", s.label());
        }
    }

    #[test]
    fn lifetimes() {
        let g = dirichlet(400);
        let x = PI / 2.0;
        let base = x * (PI - x);
        let id = lifetime_mean(&g, &BernsteinSymbol::identity(), x).unwrap();
        assert!((id - base).abs() < 1e-9);
        let ga = lifetime_mean(&g, &BernsteinSymbol::gamma(1.0, 1.0).unwrap(), x).unwrap();
        assert!((ga - 2.4674).abs() < 1e-4);
        let st = lifetime_mean(&g, &BernsteinSymbol::stable(0.5).unwrap(), x).unwrap();
        assert!(st.is_infinite());
        assert!(lifetime_mean(&g, &BernsteinSymbol::identity(), 0.1234).is_err());
    }

    #[test]
    fn exponential_lifetime_potential() {
        let id = BernsteinSymbol::identity();
        assert!((exp_lifetime_potential(&id, 1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        let st = BernsteinSymbol::stable(0.5).unwrap();
        assert!((exp_lifetime_potential(&st, 1.0, 4.0).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let ga = BernsteinSymbol::gamma(1.0, 1.0).unwrap();
        let lambda = 1e-4;
        let small = exp_lifetime_potential(&ga, 1.0, lambda).unwrap();
        // Phi'(0) E[zeta] = 1 * 1 for rate c = 1.
        assert!((small - 1.0).abs() < 1e-3);
        assert!(exp_lifetime_potential(&ga, 1.0, 0.0).is_err());
    }

    #[test]
    fn subordination_comparison() {
        let g = dirichlet(200);
        let spec = g.spectral_decompose().unwrap();
        let f = g.sample(|x| x * (PI - x));
        let st = BernsteinSymbol::stable(0.5).unwrap();
        let id = BernsteinSymbol::identity();
        let c = spatial_subordination_compare(&g, &st, &id, &f, 1.0).unwrap();
        assert!(c.discrepancy < 1e-10);
        let p = potential(&g, &st, &f, 1.0).unwrap();
        for (a, b) in c.via_potential_identity.iter().zip(&p) {
            assert!((a - b).abs() < 1e-10);
        }
        let c = spatial_subordination_compare(&g, &id, &st, &spec.mode(0), 1.0).unwrap();
        let mu1 = spec.values[0];
        for (a, b) in c.via_potential_identity.iter().zip(&spec.mode(0)) {
            assert!((a - b / (1.0 + mu1.sqrt())).abs() < 1e-12);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn residual_is_uniform_in_f(seed in 0u64..10_000, lambda in 0.1f64..5.0) {
            use rand::{Rng, SeedableRng};
            let g = dirichlet(100);
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let f: Vec<f64> = (0..g.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = BernsteinSymbol::stable(0.5).unwrap();
            prop_assert!(residual_check(&g, &s, &f, &[lambda]).unwrap() < 1e-8);
        }
    }
}
