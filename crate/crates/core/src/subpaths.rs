//! Subordinator paths `H` on an operational-time grid and their inverses
//! `L_t = inf { s : H_s > t }`.
//!
//! Increments over a step `ds` are drawn exactly from the law of `H_ds`:
//!
//! * stable: Kanter's representation of the one-sided stable law;
//! * generalized stable: stable proposal accepted with probability `e^{-gamma x}`;
//! * gamma: gamma variates with shape `a ds`, rate `b`;
//! * inverse Gaussian: Michael-Schucany-Haas (via `rand_distr`);
//! * triplet: drift plus compound Poisson jumps above a cutoff `delta`, with
//!   the mean of the jumps below `delta` folded into the drift.
//!
//! First passage is resolved to the grid: `L_t` is the first grid time at
//! which `H` exceeds `t`.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, InverseGaussian, Poisson};
use serde::{Deserialize, Serialize};

use crate::bernstein::{BernsteinSymbol, LevyTriplet, SymbolKind};
use crate::error::{check_positive, Error, Result};
use crate::rng::{map_paths, path_rng, Ensemble};

/// Default small-jump cutoff for triplet samplers.
pub const DEFAULT_SMALL_JUMP_CUTOFF: f64 = 1e-4;

/// Tabulated inverse of the jump tail `z -> Pi([z, inf))` on `[delta, z_max]`.
#[derive(Debug, Clone)]
struct JumpTable {
    log_z: Vec<f64>,
    /// Decreasing tail masses, `tail[0]` is the total rate.
    tail: Vec<f64>,
}

impl JumpTable {
    fn build(triplet: &LevyTriplet, delta: f64) -> Result<Self> {
        let rate = triplet.jump_rate(delta)?;
        if !rate.is_finite() {
            return Err(Error::Integrability(format!(
                "jump rate above cutoff {delta} is infinite"
            )));
        }
        let mut log_z = vec![delta.ln()];
        let mut tail = vec![rate];
        let mut z = delta;
        let floor = 1e-13 * rate;
        // Geometric grid, 40 points per decade, until the remaining mass is negligible.
        let factor = 10f64.powf(1.0 / 40.0);
        while *tail.last().unwrap() > floor && log_z.len() < 4000 {
            z *= factor;
            log_z.push(z.ln());
            tail.push(triplet.jump_rate(z)?);
        }
        Ok(Self { log_z, tail })
    }

    fn rate(&self) -> f64 {
        self.tail[0]
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let target = u * self.rate();
        // tail is decreasing: find the first index with tail < target.
        let k = self.tail.partition_point(|&t| t >= target);
        if k == 0 {
            return self.log_z[0].exp();
        }
        if k >= self.tail.len() {
            return self.log_z.last().unwrap().exp();
        }
        let (t0, t1) = (self.tail[k - 1], self.tail[k]);
        let w = if t0 > t1 && t1 > 0.0 {
            (t0.ln() - target.ln()) / (t0.ln() - t1.ln())
        } else if t0 > t1 {
            (t0 - target) / (t0 - t1)
        } else {
            0.0
        };
        (self.log_z[k - 1] + w * (self.log_z[k] - self.log_z[k - 1])).exp()
    }
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Identity,
    Stable {
        beta: f64,
    },
    Tempered {
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
    Compound {
        drift: f64,
        jumps: Option<JumpTable>,
    },
}

/// Draws increments `H_{s + ds} - H_s` for a given symbol.
#[derive(Debug, Clone)]
pub struct SubordinatorSampler {
    kind: SamplerKind,
}

/// One-sided stable variate with `E[e^{-lambda S}] = e^{-lambda^beta}` (Kanter).
pub fn positive_stable<R: Rng + ?Sized>(beta: f64, rng: &mut R) -> f64 {
    use std::f64::consts::PI;
    let u: f64 = loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            break u;
        }
    };
    let e: f64 = Exp1.sample(rng);
    let a = (beta * PI * u).sin() / (PI * u).sin().powf(1.0 / beta);
    let b = ((1.0 - beta) * PI * u).sin() / e;
    a * b.powf((1.0 - beta) / beta)
}

impl SubordinatorSampler {
    pub fn new(sym: &BernsteinSymbol) -> Result<Self> {
        Self::with_cutoff(sym, Some(DEFAULT_SMALL_JUMP_CUTOFF))
    }

    /// As [`SubordinatorSampler::new`] with an explicit small-jump cutoff for
    /// triplet symbols; `None` is only accepted for closed forms.
    pub fn with_cutoff(sym: &BernsteinSymbol, cutoff: Option<f64>) -> Result<Self> {
        let kind = match sym.kind() {
            SymbolKind::Identity => SamplerKind::Identity,
            SymbolKind::Stable { beta } => SamplerKind::Stable { beta: *beta },
            SymbolKind::GeneralizedStable { alpha, gamma } => SamplerKind::Tempered {
                alpha: *alpha,
                gamma: *gamma,
            },
            SymbolKind::Gamma { a, b } => SamplerKind::Gamma { a: *a, b: *b },
            SymbolKind::InverseGaussian { sigma, mu } => SamplerKind::InverseGaussian {
                sigma: *sigma,
                mu: *mu,
            },
            SymbolKind::Triplet(t) => {
                if t.killing() > 0.0 {
                    return Err(Error::Unsupported(
                        "killed subordinators are not sampled as paths".into(),
                    ));
                }
                match t.density() {
                    None => SamplerKind::Compound {
                        drift: t.drift(),
                        jumps: None,
                    },
                    Some(_) => {
                        let delta = cutoff.ok_or_else(|| {
                            Error::Unsupported("triplet sampler needs a small-jump cutoff".into())
                        })?;
                        check_positive("cutoff", delta)?;
                        let drift = t.drift() + t.small_jump_mean(delta)?;
                        SamplerKind::Compound {
                            drift,
                            jumps: Some(JumpTable::build(t, delta)?),
                        }
                    }
                }
            }
        };
        Ok(Self { kind })
    }

    /// One increment over an operational-time step of length `ds`.
    pub fn increment<R: Rng + ?Sized>(&self, ds: f64, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Identity => ds,
            SamplerKind::Stable { beta } => ds.powf(1.0 / beta) * positive_stable(*beta, rng),
            SamplerKind::Tempered { alpha, gamma } => {
                let scale = ds.powf(1.0 / alpha);
                loop {
                    let x = scale * positive_stable(*alpha, rng);
                    let u: f64 = rng.random();
                    if u <= (-gamma * x).exp() {
                        break x;
                    }
                }
            }
            SamplerKind::Gamma { a, b } => Gamma::new(a * ds, 1.0 / b)
                .expect("positive gamma parameters")
                .sample(rng),
            SamplerKind::InverseGaussian { sigma, mu } => {
                InverseGaussian::new(ds / mu, ds * ds / (sigma * sigma))
                    .expect("positive inverse Gaussian parameters")
                    .sample(rng)
            }
            SamplerKind::Compound { drift, jumps } => {
                let mut h = drift * ds;
                if let Some(table) = jumps {
                    let mean = table.rate() * ds;
                    if mean > 0.0 {
                        let n = Poisson::new(mean).expect("positive rate").sample(rng) as u64;
                        for _ in 0..n {
                            h += table.sample(rng);
                        }
                    }
                }
                h
            }
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, SamplerKind::Identity)
    }
}

/// Walks a subordinator path step by step on the grid `s_i = i ds`.
#[derive(Debug)]
pub struct SubordinatorWalk<'a> {
    sampler: &'a SubordinatorSampler,
    ds: f64,
    steps: u64,
    h: f64,
}

impl<'a> SubordinatorWalk<'a> {
    pub fn new(sampler: &'a SubordinatorSampler, ds: f64) -> Self {
        Self {
            sampler,
            ds,
            steps: 0,
            h: 0.0,
        }
    }

    /// Advances one grid step and returns `(H_{s_{i-1}}, H_{s_i})`.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (f64, f64) {
        let prev = self.h;
        self.h += self.sampler.increment(self.ds, rng);
        self.steps += 1;
        (prev, self.h)
    }

    /// Current operational time `s_i`.
    pub fn s(&self) -> f64 {
        self.steps as f64 * self.ds
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Steps until `H > t` and returns the grid first-passage time `L_t`.
    /// Gives up (returning `None`) after `max_steps`.
    pub fn first_passage<R: Rng + ?Sized>(
        &mut self,
        t: f64,
        max_steps: u64,
        rng: &mut R,
    ) -> Option<f64> {
        while self.h <= t {
            if self.steps >= max_steps {
                return None;
            }
            self.step(rng);
        }
        Some(self.s())
    }
}

/// `L_t` sampled on the grid of step `ds`. The identity symbol yields `t`
/// exactly.
pub fn sample_inverse_at<R: Rng + ?Sized>(
    sampler: &SubordinatorSampler,
    t: f64,
    ds: f64,
    max_steps: u64,
    rng: &mut R,
) -> Result<f64> {
    if sampler.is_identity() {
        return Ok(t);
    }
    let mut walk = SubordinatorWalk::new(sampler, ds);
    walk.first_passage(t, max_steps, rng)
        .ok_or(Error::PathExhausted {
            requested: t,
            max_h: walk.h(),
        })
}

/// A sampled path `(s_i, H_{s_i})` with `s_0 = 0`, `H_0 = 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubordinatorPath {
    pub s_grid: Vec<f64>,
    pub h_values: Vec<f64>,
    pub symbol: String,
    pub seed: u64,
}

/// `L_t` read off a stored path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversePathView {
    pub t_query: f64,
    pub l_value: f64,
    /// Grid index of `l_value`.
    pub index: usize,
}

/// Samples one path on `[0, s_max]` with step `ds`; path index 0 of the
/// subordinator ensemble for `seed`.
pub fn sample_path(
    sym: &BernsteinSymbol,
    s_max: f64,
    ds: f64,
    seed: u64,
) -> Result<SubordinatorPath> {
    sample_path_indexed(sym, s_max, ds, seed, 0)
}

pub fn sample_path_indexed(
    sym: &BernsteinSymbol,
    s_max: f64,
    ds: f64,
    seed: u64,
    index: u64,
) -> Result<SubordinatorPath> {
    check_positive("ds", ds)?;
    if !(s_max >= ds) {
        return Err(Error::InvalidParameter {
            name: "s_max",
            reason: format!("must be at least ds = {ds}, got {s_max}"),
        });
    }
    let sampler = SubordinatorSampler::new(sym)?;
    let n = (s_max / ds).round() as usize;
    let mut rng = path_rng(seed, Ensemble::SUBORDINATOR, index);
    let mut s_grid = Vec::with_capacity(n + 1);
    let mut h_values = Vec::with_capacity(n + 1);
    s_grid.push(0.0);
    h_values.push(0.0);
    let mut walk = SubordinatorWalk::new(&sampler, ds);
    for _ in 0..n {
        walk.step(&mut rng);
        s_grid.push(walk.s());
        h_values.push(walk.h());
    }
    Ok(SubordinatorPath {
        s_grid,
        h_values,
        symbol: sym.label(),
        seed,
    })
}

/// `L_t = inf { s_i : H_{s_i} > t }` by binary search.
pub fn invert_path(path: &SubordinatorPath, t: f64) -> Result<InversePathView> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain {
            name: "t",
            value: t,
            domain: "[0, inf)",
        });
    }
    let index = path.h_values.partition_point(|&h| h <= t);
    if index >= path.h_values.len() {
        return Err(Error::PathExhausted {
            requested: t,
            max_h: path.h_values.last().copied().unwrap_or(0.0),
        });
    }
    Ok(InversePathView {
        t_query: t,
        l_value: path.s_grid[index],
        index,
    })
}

/// Writes the path as CSV with header `s,H_s`.
pub fn write_path_csv<W: Write>(path: &SubordinatorPath, mut out: W) -> std::io::Result<()> {
    writeln!(out, "s,H_s")?;
    for (s, h) in path.s_grid.iter().zip(&path.h_values) {
        writeln!(out, "{s},{h}")?;
    }
    Ok(())
}

/// Two-sided check of `P(L_t < s) = P(H_s > t)` on independent ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CdfCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub z_score: f64,
    pub n_paths: usize,
}

/// Estimates `P(L_t < s)` from grid first passages (step `ds`) and
/// `P(H_s > t)` from exact draws of `H_s`, on independent stream families.
pub fn empirical_cdf_check(
    sym: &BernsteinSymbol,
    t: f64,
    s: f64,
    n_paths: usize,
    seed: u64,
    ds: f64,
) -> Result<CdfCheck> {
    if n_paths < 1000 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            reason: format!("need at least 1000 paths, got {n_paths}"),
        });
    }
    check_positive("s", s)?;
    check_positive("ds", ds)?;
    let sampler = SubordinatorSampler::new(sym)?;
    let lhs_hits = map_paths(n_paths, |i| {
        let mut rng: ChaCha8Rng = path_rng(seed, Ensemble::SUBORDINATOR, i);
        let mut walk = SubordinatorWalk::new(&sampler, ds);
        // L_t < s iff some grid time below s already has H > t.
        loop {
            if walk.h() > t {
                return walk.s() < s;
            }
            if walk.s() + ds >= s * (1.0 + 1e-12) {
                return false;
            }
            walk.step(&mut rng);
        }
    });
    let rhs_hits = map_paths(n_paths, |i| {
        let mut rng = path_rng(seed, Ensemble::SUBORDINATOR_ALT, i);
        sampler.increment(s, &mut rng) > t
    });
    let n = n_paths as f64;
    let lhs = lhs_hits.iter().filter(|&&b| b).count() as f64 / n;
    let rhs = rhs_hits.iter().filter(|&&b| b).count() as f64 / n;
    Ok(CdfCheck {
        lhs,
        rhs,
        z_score: crate::stats::two_proportion_z(lhs, n_paths, rhs, n_paths),
        n_paths,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::mean_and_se;

    fn laplace_functional(
        sym: &BernsteinSymbol,
        lambda: f64,
        ds: f64,
        n: usize,
        seed: u64,
    ) -> (f64, f64) {
        let sampler = SubordinatorSampler::new(sym).unwrap();
        let steps = (1.0 / ds).round() as usize;
        let vals = map_paths(n, |i| {
            let mut rng = path_rng(seed, Ensemble::SUBORDINATOR, i);
            let mut walk = SubordinatorWalk::new(&sampler, ds);
            for _ in 0..steps {
                walk.step(&mut rng);
            }
            (-lambda * walk.h()).exp()
        });
        mean_and_se(&vals)
    }

    #[test]
    fn identity_path_is_the_grid() {
        let p = sample_path(&BernsteinSymbol::identity(), 1.0, 0.01, 3).unwrap();
        assert_eq!(p.h_values.len(), 101);
        for (s, h) in p.s_grid.iter().zip(&p.h_values) {
            assert!((s - h).abs() < 1e-12);
        }
        let v = invert_path(&p, 0.7).unwrap();
        assert!((v.l_value - 0.7).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn laplace_functionals_match_symbols() {
        let cases = [
            (BernsteinSymbol::stable(0.5).unwrap(), vec![0.5, 1.0, 2.0]),
            (
                BernsteinSymbol::gamma(1.0, 1.0).unwrap(),
                vec![0.5, 1.0, 2.0],
            ),
            (
                BernsteinSymbol::inverse_gaussian(1.0, 1.0).unwrap(),
                vec![0.5, 1.0, 2.0],
            ),
            (
                BernsteinSymbol::generalized_stable(0.5, 1.0).unwrap(),
                vec![1.0],
            ),
        ];
        for (k, (sym, lambdas)) in cases.iter().enumerate() {
            for &lambda in lambdas {
                let (m, se) = laplace_functional(sym, lambda, 0.02, 100_000, 11 + k as u64);
                let exact = (-sym.eval(lambda).unwrap()).exp();
                assert!(
                    (m - exact).abs() < 3.0 * se,
                    "{} lambda={lambda}: {m} vs {exact} (se {se})",
                    sym.label()
                );
            }
        }
    }

    #[test]
    fn triplet_sampler_matches_symbol() {
        let g = BernsteinSymbol::gamma(1.0, 1.0).unwrap();
        let t = BernsteinSymbol::from_triplet(g.to_triplet().unwrap()).unwrap();
        let (m, se) = laplace_functional(&t, 2.0, 0.05, 40_000, 5);
        let exact = 1.0 / 3.0;
        assert!((m - exact).abs() < 3.0 * se + 1e-4, "{m} vs {exact}");
    }

    #[test]
    fn triplet_without_cutoff_is_unsupported() {
        let t = BernsteinSymbol::from_triplet(
            BernsteinSymbol::stable(0.5).unwrap().to_triplet().unwrap(),
        )
        .unwrap();
        assert!(matches!(
            SubordinatorSampler::with_cutoff(&t, None),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn inverse_is_constant_across_a_jump() {
        let path = SubordinatorPath {
            s_grid: vec![0.0, 0.1, 0.2, 0.3],
            h_values: vec![0.0, 0.05, 0.9, 1.0],
            symbol: "manual".into(),
            seed: 0,
        };
        for t in [0.05, 0.3, 0.6, 0.8999] {
            assert_eq!(invert_path(&path, t).unwrap().l_value, 0.2);
        }
        assert!(matches!(
            invert_path(&path, 1.0),
            Err(Error::PathExhausted { max_h, .. }) if max_h == 1.0
        ));
    }

    #[test]
    fn inverse_monotone_and_continuous_on_grid() {
        let ds = 1e-3;
        let p = sample_path(&BernsteinSymbol::stable(0.7).unwrap(), 2.0, ds, 9).unwrap();
        let max_h = *p.h_values.last().unwrap();
        let mut prev = 0.0;
        let mut t = 0.0;
        while t < max_h * 0.999 {
            let l = invert_path(&p, t).unwrap().l_value;
            assert!(l >= prev);
            prev = l;
            t += max_h / 5000.0;
        }
        // Between consecutive distinct H values L moves by exactly one step.
        for w in p.h_values.windows(2).take(500) {
            if w[1] > w[0] {
                let a = invert_path(&p, w[0]).unwrap().l_value;
                let b = invert_path(&p, w[1]).unwrap().l_value;
                assert!(b - a <= ds * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn cdf_check_degenerate_cases() {
        let id = BernsteinSymbol::identity();
        let c = empirical_cdf_check(&id, 0.5, 0.7, 1000, 1, 0.01).unwrap();
        assert_eq!((c.lhs, c.rhs, c.z_score), (1.0, 1.0, 0.0));
        let c = empirical_cdf_check(&id, 0.7, 0.5, 1000, 1, 0.01).unwrap();
        assert_eq!((c.lhs, c.rhs, c.z_score), (0.0, 0.0, 0.0));
        assert!(empirical_cdf_check(&id, 0.7, 0.5, 999, 1, 0.01).is_err());
    }

    #[test]
    fn path_csv() {
        let p = sample_path(&BernsteinSymbol::identity(), 0.02, 0.01, 0).unwrap();
        let mut buf = Vec::new();
        write_path_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some("s,H_s"));
        assert_eq!(text.lines().count(), 4);
    }
}
