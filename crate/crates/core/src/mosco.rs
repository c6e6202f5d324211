//! Convergence harness for sequences of skew-interface forms.
//!
//! A [`FormSequence`] holds skew generators on `(0, ell) + (ell, ell + eps_n)`
//! sharing the inner mesh of their limit generator on `(0, ell)`. Grid
//! functions are compared in `L^2(dx)` on the sequence generator's nodes,
//! with the limit extended by zero to the layer. Test functions are taken
//! from a fixed dictionary: the first eight limit eigenfunctions, two bumps
//! and an indicator, each normalised to unit norm.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinSymbol;
use crate::error::{check_positive, Error, Result};
use crate::generators::{
    build_limit_generator, build_skew_generator_graded, DiscreteGenerator, Regime,
};
use crate::invlap::l_laplace_weight;
use crate::montecarlo::{sample_timechanged, DiffusionSpec, EndCondition, Geometry};
use crate::rng::Ensemble;
use crate::stats::{ks_distance, ks_null_band_95, two_proportion_z};
use crate::timefrac;

/// `coef * n^(-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLaw {
    pub coef: f64,
    pub exponent: f64,
}

impl PowerLaw {
    pub fn new(coef: f64, exponent: f64) -> Self {
        Self { coef, exponent }
    }

    pub fn at(&self, n: f64) -> f64 {
        self.coef * n.powf(-self.exponent)
    }
}

/// Schedule of the interface weight `alpha_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaSchedule {
    Power {
        coef: f64,
        exponent: f64,
    },
    /// `alpha = c eps / (1 + c eps)`, so that `alpha / ((1 - alpha) eps) = c`.
    RobinMatched {
        c: f64,
    },
}

/// Parameters of one skew generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkewParams {
    pub n: usize,
    pub alpha: f64,
    pub eta: f64,
    pub epsilon: f64,
}

/// Schedules `alpha_n, eps_n, eta_n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewSchedule {
    pub alpha: AlphaSchedule,
    pub epsilon: PowerLaw,
    pub eta: PowerLaw,
}

impl SkewSchedule {
    /// `alpha = n^{-1/2}`, `eps = 1/n`, `eta = n^{-1.4}`: `alpha/eps -> inf`.
    pub fn dirichlet() -> Self {
        Self {
            alpha: AlphaSchedule::Power {
                coef: 1.0,
                exponent: 0.5,
            },
            epsilon: PowerLaw::new(1.0, 1.0),
            eta: PowerLaw::new(1.0, 1.4),
        }
    }

    /// `alpha = n^{-2}`, `eps = 1/n`, `eta = n^{-1.4}`: `alpha/eps -> 0`.
    pub fn neumann() -> Self {
        Self {
            alpha: AlphaSchedule::Power {
                coef: 1.0,
                exponent: 2.0,
            },
            epsilon: PowerLaw::new(1.0, 1.0),
            eta: PowerLaw::new(1.0, 1.4),
        }
    }

    /// `alpha/((1 - alpha) eps) = c`, `eps = 1/n`, `eta = n^{-1.4}`.
    pub fn robin(c: f64) -> Self {
        Self {
            alpha: AlphaSchedule::RobinMatched { c },
            epsilon: PowerLaw::new(1.0, 1.0),
            eta: PowerLaw::new(1.0, 1.4),
        }
    }

    pub fn params(&self, n: usize) -> SkewParams {
        let nf = n as f64;
        let epsilon = self.epsilon.at(nf);
        let alpha = match self.alpha {
            AlphaSchedule::Power { coef, exponent } => coef * nf.powf(-exponent),
            AlphaSchedule::RobinMatched { c } => c * epsilon / (1.0 + c * epsilon),
        };
        SkewParams {
            n,
            alpha,
            eta: self.eta.at(nf),
            epsilon,
        }
    }

    /// Checks `alpha, eps, eta -> 0` and `alpha eps / eta -> 0`, and returns
    /// the limit regime fixed by `alpha / eps`.
    pub fn regime(&self) -> Result<Regime> {
        let PowerLaw {
            coef: ce,
            exponent: e,
        } = self.epsilon;
        let h = self.eta.exponent;
        check_positive("epsilon.coef", ce)?;
        check_positive("eta.coef", self.eta.coef)?;
        check_positive("epsilon.exponent", e)?;
        check_positive("eta.exponent", h)?;
        let (a, regime) = match self.alpha {
            AlphaSchedule::Power { coef, exponent } => {
                check_positive("alpha.coef", coef)?;
                check_positive("alpha.exponent", exponent)?;
                let regime = if exponent < e {
                    Regime::Dirichlet
                } else if exponent > e {
                    Regime::Neumann
                } else {
                    Regime::Robin { c: coef / ce }
                };
                (exponent, regime)
            }
            AlphaSchedule::RobinMatched { c } => {
                check_positive("c", c)?;
                (e, Regime::Robin { c })
            }
        };
        if !(a + e > h) {
            return Err(Error::InvalidParameter {
                name: "eta",
                reason: format!(
                    "alpha eps / eta must vanish: exponents alpha {a} + eps {e} <= eta {h}"
                ),
            });
        }
        Ok(regime)
    }
}

/// Generators indexed by `n` with their limit.
#[derive(Debug, Clone)]
pub struct FormSequence {
    pub label: String,
    pub ns: Vec<usize>,
    /// `None` for members that are not skew generators.
    pub params: Vec<Option<SkewParams>>,
    pub generators: Vec<DiscreteGenerator>,
    pub limit: DiscreteGenerator,
    pub regime: Regime,
}

/// Layout of the skew sequence: interface position and mesh sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkewMesh {
    pub ell: f64,
    pub inner_cells: usize,
    pub layer_cells: usize,
}

impl Default for SkewMesh {
    fn default() -> Self {
        Self {
            ell: PI,
            inner_cells: 400,
            layer_cells: 16,
        }
    }
}

/// Geometric sequence `4, 6, 8, 11, 16, 23, 32, 45, 64`.
pub fn default_ns() -> Vec<usize> {
    vec![4, 6, 8, 11, 16, 23, 32, 45, 64]
}

impl FormSequence {
    /// Skew generators on `(0, ell + eps_n)` following `schedule`, with the
    /// limit regime it declares.
    pub fn skew(schedule: &SkewSchedule, ns: &[usize], mesh: SkewMesh) -> Result<Self> {
        let regime = schedule.regime()?;
        let limit = build_limit_generator(0.0, mesh.ell, regime, mesh.inner_cells)?;
        let mut params = Vec::with_capacity(ns.len());
        let mut generators = Vec::with_capacity(ns.len());
        for &n in ns {
            let p = schedule.params(n);
            if !(p.alpha > 0.0 && p.alpha < 1.0) {
                return Err(Error::Domain {
                    name: "alpha",
                    value: p.alpha,
                    domain: "(0, 1)",
                });
            }
            generators.push(build_skew_generator_graded(
                0.0,
                mesh.ell,
                mesh.ell + p.epsilon,
                p.alpha,
                p.eta,
                mesh.inner_cells,
                mesh.layer_cells,
            )?);
            params.push(Some(p));
        }
        Ok(Self {
            label: format!("skew -> {}", regime_label(regime)),
            ns: ns.to_vec(),
            params,
            generators,
            limit,
            regime,
        })
    }

    /// The limit repeated for every `n`.
    pub fn constant(limit: DiscreteGenerator, regime: Regime, ns: &[usize]) -> Self {
        Self {
            label: format!("constant {}", regime_label(regime)),
            ns: ns.to_vec(),
            params: vec![None; ns.len()],
            generators: vec![limit.clone(); ns.len()],
            limit,
            regime,
        }
    }
}

pub fn regime_label(r: Regime) -> String {
    match r {
        Regime::Dirichlet => "dirichlet".into(),
        Regime::Neumann => "neumann".into(),
        Regime::Robin { c } => format!("robin(c={c})"),
    }
}

/// A named test function sampled on the limit grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestFunction {
    pub name: String,
    /// Values at the limit generator's nodes, unit `L^2(dx)` norm.
    pub values: Vec<f64>,
}

/// Limit eigenfunctions `phi_1..phi_8`, bumps centred at `ell/3` and
/// `2 ell/3`, and the indicator of `[ell/4, ell/2]`.
pub fn default_dictionary(limit: &DiscreteGenerator) -> Result<Vec<TestFunction>> {
    let spec = limit.spectral_decompose()?;
    let mesh = limit.mesh();
    let (left, right) = (mesh[0], mesh[mesh.len() - 1]);
    let mut out = Vec::new();
    for k in 0..8.min(spec.len()) {
        out.push(TestFunction {
            name: format!("phi_{}", k + 1),
            values: spec.mode(k),
        });
    }
    let bump = |c: f64, w: f64| {
        move |x: f64| {
            let s = (x - c) / w;
            if s.abs() < 1.0 {
                (-1.0 / (1.0 - s * s)).exp()
            } else {
                0.0
            }
        }
    };
    let span = right - left;
    out.push(TestFunction {
        name: "bump_1".into(),
        values: limit.sample(bump(left + span / 3.0, span / 6.0)),
    });
    out.push(TestFunction {
        name: "bump_2".into(),
        values: limit.sample(bump(left + 2.0 * span / 3.0, span / 6.0)),
    });
    out.push(TestFunction {
        name: "indicator".into(),
        values: limit.sample(|x| {
            if x >= left + span / 4.0 && x <= left + span / 2.0 {
                1.0
            } else {
                0.0
            }
        }),
    });
    for f in &mut out {
        let norm = limit.norm(&f.values);
        if norm > 0.0 {
            f.values.iter_mut().for_each(|v| *v /= norm);
        }
    }
    Ok(out)
}

/// Maps a sequence generator's nodes onto the limit grid.
struct Embedding {
    /// Limit index for each node, `None` where the limit is zero.
    index: Vec<Option<usize>>,
    /// `dx` width of each node of the sequence generator.
    dx: Vec<f64>,
}

impl Embedding {
    fn new(g: &DiscreteGenerator, limit: &DiscreteGenerator) -> Result<Self> {
        let lg = limit.grid();
        let top = lg[lg.len() - 1] + 1e-9;
        let mut index = Vec::with_capacity(g.len());
        let mut hits = 0;
        for &x in g.grid() {
            let j = limit.node_index(x);
            if j.is_some() {
                hits += 1;
            } else if x < top {
                return Err(Error::GridMismatch(format!(
                    "node {x} inside the limit domain is not a limit node"
                )));
            }
            index.push(j);
        }
        if hits != limit.len() {
            return Err(Error::GridMismatch(format!(
                "{} of {} limit nodes present",
                hits,
                limit.len()
            )));
        }
        let mesh = g.mesh();
        let first = mesh.partition_point(|&x| x < g.grid()[0] - 1e-12);
        let dx = (0..g.len())
            .map(|i| {
                let k = first + i;
                let lo = mesh[k.saturating_sub(1)];
                let hi = mesh[(k + 1).min(mesh.len() - 1)];
                0.5 * (hi - lo)
            })
            .collect();
        Ok(Self { index, dx })
    }

    fn lift(&self, limit_values: &[f64]) -> Vec<f64> {
        self.index
            .iter()
            .map(|j| j.map_or(0.0, |j| limit_values[j]))
            .collect()
    }

    fn distance(&self, u: &[f64], limit_values: &[f64]) -> f64 {
        u.iter()
            .zip(&self.index)
            .zip(&self.dx)
            .map(|((v, j), w)| {
                let d = v - j.map_or(0.0, |j| limit_values[j]);
                w * d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

/// One row of a convergence report; metrics not computed are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub resolvent_err: Option<f64>,
    pub semigroup_err: Option<f64>,
    pub tc_resolvent_err: Option<f64>,
    pub tc_semigroup_err: Option<f64>,
    pub ks_distance: Option<f64>,
}

/// Per-`n` errors against the limit with verdicts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub sequence: String,
    pub symbol: Option<String>,
    pub dictionary: Vec<String>,
    pub lambda_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub threshold: f64,
    pub rows: Vec<ConvergenceRow>,
    /// Verdict on the resolvent and semigroup errors.
    pub plain_verdict: Option<bool>,
    /// Verdict on the time-changed errors.
    pub timechanged_verdict: Option<bool>,
}

/// Metric names in CSV order.
pub const METRICS: [&str; 5] = [
    "resolvent_err",
    "semigroup_err",
    "tc_resolvent_err",
    "tc_semigroup_err",
    "ks_distance",
];

impl ConvergenceRow {
    fn empty(n: usize) -> Self {
        Self {
            n,
            resolvent_err: None,
            semigroup_err: None,
            tc_resolvent_err: None,
            tc_semigroup_err: None,
            ks_distance: None,
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "resolvent_err" => self.resolvent_err,
            "semigroup_err" => self.semigroup_err,
            "tc_resolvent_err" => self.tc_resolvent_err,
            "tc_semigroup_err" => self.tc_semigroup_err,
            "ks_distance" => self.ks_distance,
            _ => None,
        }
    }
}

/// Whether a metric is nonincreasing over the last quarter of the rows
/// (at least two rows) and ends below `threshold`.
pub fn tail_verdict(values: &[f64], threshold: f64) -> bool {
    if values.is_empty() {
        return false;
    }
    let q = values.len().div_ceil(4).max(2).min(values.len());
    let tail = &values[values.len() - q..];
    let monotone = tail
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
    monotone && tail[tail.len() - 1] < threshold
}

impl ConvergenceReport {
    fn column(&self, name: &str) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.metric(name)).collect()
    }

    fn verdict_over(&self, names: &[&str]) -> Option<bool> {
        let cols: Vec<Vec<f64>> = names.iter().filter_map(|n| self.column(n)).collect();
        if cols.is_empty() {
            None
        } else {
            Some(cols.iter().all(|c| tail_verdict(c, self.threshold)))
        }
    }

    fn refresh_verdicts(&mut self) {
        self.plain_verdict = self.verdict_over(&["resolvent_err", "semigroup_err"]);
        self.timechanged_verdict = self.verdict_over(&["tc_resolvent_err", "tc_semigroup_err"]);
    }

    /// Long-format CSV `n,metric,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "n,metric,value")?;
        for row in &self.rows {
            for m in METRICS {
                if let Some(v) = row.metric(m) {
                    writeln!(out, "{},{},{:.12e}", row.n, m, v)?;
                }
            }
        }
        Ok(())
    }

    /// Two-column `n value` data for one metric.
    pub fn write_metric<W: Write>(&self, metric: &str, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# n {metric}")?;
        for row in &self.rows {
            if let Some(v) = row.metric(metric) {
                writeln!(out, "{} {:.12e}", row.n, v)?;
            }
        }
        Ok(())
    }

    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "sequence": self.sequence,
            "symbol": self.symbol,
            "dictionary": self.dictionary,
            "lambda_grid": self.lambda_grid,
            "t_grid": self.t_grid,
            "threshold": self.threshold,
            "plain_verdict": self.plain_verdict,
            "timechanged_verdict": self.timechanged_verdict,
        })
    }
}

/// Which errors to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Metrics {
    resolvent: bool,
    semigroup: bool,
    timechanged: bool,
}

/// `h(t; mu)`, with the identity symbol giving `e^{-mu t}`.
fn mode_weight(sym: &BernsteinSymbol, mu: f64, t: f64) -> Result<f64> {
    if sym.is_identity() {
        Ok((-mu * t).exp())
    } else {
        l_laplace_weight(sym, mu.max(0.0), t)
    }
}

fn semigroup_values(
    g: &DiscreteGenerator,
    sym: &BernsteinSymbol,
    t: f64,
    f: &[f64],
) -> Result<Vec<f64>> {
    let c = g.coefficients(f)?;
    let spec = g.spectral_decompose()?;
    let w = spec
        .values
        .iter()
        .map(|&mu| mode_weight(sym, mu, t))
        .collect::<Result<Vec<f64>>>()?;
    g.synthesize(&c, &w)
}

/// `max_{f, lambda} ||R^Phi_lambda (g) f - R^Phi_lambda (limit) f||`.
fn potential_error(
    g: &DiscreteGenerator,
    emb: &Embedding,
    limit_values: &[Vec<Vec<f64>>],
    dict: &[TestFunction],
    sym: &BernsteinSymbol,
    lambda_grid: &[f64],
) -> Result<f64> {
    let mut err = 0.0f64;
    for (f, lim) in dict.iter().zip(limit_values) {
        let fg = emb.lift(&f.values);
        for (&lambda, l) in lambda_grid.iter().zip(lim) {
            let u = timefrac::potential(g, sym, &fg, lambda)?;
            err = err.max(emb.distance(&u, l));
        }
    }
    Ok(err)
}

fn evolution_error(
    g: &DiscreteGenerator,
    emb: &Embedding,
    limit_values: &[Vec<Vec<f64>>],
    dict: &[TestFunction],
    sym: &BernsteinSymbol,
    t_grid: &[f64],
) -> Result<f64> {
    let mut err = 0.0f64;
    for (f, lim) in dict.iter().zip(limit_values) {
        let fg = emb.lift(&f.values);
        for (&t, l) in t_grid.iter().zip(lim) {
            let u = semigroup_values(g, sym, t, &fg)?;
            err = err.max(emb.distance(&u, l));
        }
    }
    Ok(err)
}

/// Harness inputs shared by all reports.
#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub lambda_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub threshold: f64,
}

impl HarnessConfig {
    /// `lambda in {0.5, 1, 2}`, `t in t1 {1/100, 1/10, 1/4, 1/2, 1}` with `t1 = 1`.
    pub fn default_for(threshold: f64) -> Self {
        Self {
            lambda_grid: vec![0.5, 1.0, 2.0],
            t_grid: vec![0.01, 0.1, 0.25, 0.5, 1.0],
            threshold,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.t_grid.is_empty() {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "lambda and t grids must be nonempty".into(),
            });
        }
        for &l in &self.lambda_grid {
            check_positive("lambda", l)?;
        }
        for &t in &self.t_grid {
            check_positive("t", t)?;
        }
        check_positive("threshold", self.threshold)
    }
}

fn run(
    seq: &FormSequence,
    sym: &BernsteinSymbol,
    dict: &[TestFunction],
    cfg: &HarnessConfig,
    metrics: Metrics,
) -> Result<ConvergenceReport> {
    cfg.validate()?;
    if metrics.timechanged && !sym.is_identity() {
        sym.require_pure_jump()?;
    }
    let id = BernsteinSymbol::identity();
    let limit = &seq.limit;
    let limit_potentials = |s: &BernsteinSymbol| -> Result<Vec<Vec<Vec<f64>>>> {
        dict.iter()
            .map(|f| {
                cfg.lambda_grid
                    .iter()
                    .map(|&l| timefrac::potential(limit, s, &f.values, l))
                    .collect()
            })
            .collect()
    };
    let limit_evolutions = |s: &BernsteinSymbol| -> Result<Vec<Vec<Vec<f64>>>> {
        dict.iter()
            .map(|f| {
                cfg.t_grid
                    .iter()
                    .map(|&t| semigroup_values(limit, s, t, &f.values))
                    .collect()
            })
            .collect()
    };
    let res_lim = if metrics.resolvent {
        Some(limit_potentials(&id)?)
    } else {
        None
    };
    let sg_lim = if metrics.semigroup {
        Some(limit_evolutions(&id)?)
    } else {
        None
    };
    let (tcr_lim, tcs_lim) = if metrics.timechanged {
        (Some(limit_potentials(sym)?), Some(limit_evolutions(sym)?))
    } else {
        (None, None)
    };
    let rows = seq
        .ns
        .iter()
        .zip(&seq.generators)
        .map(|(&n, g)| -> Result<ConvergenceRow> {
            let emb = Embedding::new(g, limit)?;
            let mut row = ConvergenceRow::empty(n);
            if let Some(l) = &res_lim {
                row.resolvent_err = Some(potential_error(g, &emb, l, dict, &id, &cfg.lambda_grid)?);
            }
            if let Some(l) = &sg_lim {
                row.semigroup_err = Some(evolution_error(g, &emb, l, dict, &id, &cfg.t_grid)?);
            }
            if let (Some(r), Some(s)) = (&tcr_lim, &tcs_lim) {
                row.tc_resolvent_err =
                    Some(potential_error(g, &emb, r, dict, sym, &cfg.lambda_grid)?);
                row.tc_semigroup_err = Some(evolution_error(g, &emb, s, dict, sym, &cfg.t_grid)?);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ConvergenceReport {
        sequence: seq.label.clone(),
        symbol: metrics.timechanged.then(|| sym.label()),
        dictionary: dict.iter().map(|f| f.name.clone()).collect(),
        lambda_grid: cfg.lambda_grid.clone(),
        t_grid: cfg.t_grid.clone(),
        threshold: cfg.threshold,
        rows,
        plain_verdict: None,
        timechanged_verdict: None,
    };
    report.refresh_verdicts();
    Ok(report)
}

/// `err(n) = max_{f, lambda} ||G^n_lambda f - G_lambda f||`.
pub fn resolvent_convergence(
    seq: &FormSequence,
    dict: &[TestFunction],
    cfg: &HarnessConfig,
) -> Result<ConvergenceReport> {
    let metrics = Metrics {
        resolvent: true,
        semigroup: false,
        timechanged: false,
    };
    run(seq, &BernsteinSymbol::identity(), dict, cfg, metrics)
}

/// `err(n) = max_{f, t} ||T^n_t f - T_t f||` over the `t` grid.
pub fn semigroup_convergence(
    seq: &FormSequence,
    dict: &[TestFunction],
    cfg: &HarnessConfig,
) -> Result<ConvergenceReport> {
    let metrics = Metrics {
        resolvent: false,
        semigroup: true,
        timechanged: false,
    };
    run(seq, &BernsteinSymbol::identity(), dict, cfg, metrics)
}

/// Time-changed resolvent errors, computed as
/// `(Phi(lambda)/lambda) (R^n_{Phi(lambda)} - R_{Phi(lambda)}) f`, and
/// time-changed semigroup errors from the spectral solutions.
pub fn timechanged_convergence(
    seq: &FormSequence,
    sym: &BernsteinSymbol,
    dict: &[TestFunction],
    cfg: &HarnessConfig,
) -> Result<ConvergenceReport> {
    let metrics = Metrics {
        resolvent: false,
        semigroup: false,
        timechanged: true,
    };
    run(seq, sym, dict, cfg, metrics)
}

/// All four operator metrics in one report.
pub fn full_convergence(
    seq: &FormSequence,
    sym: &BernsteinSymbol,
    dict: &[TestFunction],
    cfg: &HarnessConfig,
) -> Result<ConvergenceReport> {
    let metrics = Metrics {
        resolvent: true,
        semigroup: true,
        timechanged: true,
    };
    run(seq, sym, dict, cfg, metrics)
}

/// KS comparison of `X^{Phi,n}_t` with `X^Phi_t` at one `(n, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DistributionRow {
    pub n: usize,
    pub t: f64,
    /// KS distance between the surviving positions.
    pub ks_distance: f64,
    /// Two-sample 95% null band for the surviving sample sizes.
    pub null_band: f64,
    pub killed_sequence: f64,
    pub killed_limit: f64,
    /// Two-proportion z-score of the killed fractions.
    pub killed_z: f64,
}

impl DistributionRow {
    /// KS within `factor` null bands and killed fractions consistent at 95%.
    pub fn consistent(&self, factor: f64) -> bool {
        self.ks_distance <= factor * self.null_band && self.killed_z.abs() < 1.96
    }
}

/// Samples `X^{Phi,n}_t` under each sequence spec and `X^Phi_t` under
/// `limit_spec`, all sharing the subordinator ensemble. The sequence member
/// `k` uses base stream `BASE.indexed(k)`; the limit uses `LIMIT_BASE`.
pub fn distributional_check(
    seq: &[(usize, DiffusionSpec)],
    limit_spec: &DiffusionSpec,
    sym: &BernsteinSymbol,
    t_points: &[f64],
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<DistributionRow>> {
    let mut rows = Vec::new();
    for &t in t_points {
        check_positive("t", t)?;
        let lim = sample_timechanged(limit_spec, sym, t, x0, n_paths, seed, Ensemble::LIMIT_BASE)?;
        let (lim_alive, lim_killed) = split(&lim);
        for (k, (n, spec)) in seq.iter().enumerate() {
            let s = sample_timechanged(
                spec,
                sym,
                t,
                x0,
                n_paths,
                seed,
                Ensemble::BASE.indexed(k as u64),
            )?;
            let (alive, killed) = split(&s);
            let p1 = killed as f64 / n_paths as f64;
            let p2 = lim_killed as f64 / n_paths as f64;
            rows.push(DistributionRow {
                n: *n,
                t,
                ks_distance: ks_distance(&alive, &lim_alive),
                null_band: ks_null_band_95(alive.len().max(1), lim_alive.len().max(1)),
                killed_sequence: p1,
                killed_limit: p2,
                killed_z: two_proportion_z(p1, n_paths, p2, n_paths),
            });
        }
    }
    Ok(rows)
}

/// Monte Carlo specs of the skew diffusions of `schedule` on
/// `(0, ell + eps_n)` with time step `dt`.
pub fn skew_diffusion_specs(
    schedule: &SkewSchedule,
    ns: &[usize],
    ell: f64,
    dt: f64,
) -> Result<Vec<(usize, DiffusionSpec)>> {
    schedule.regime()?;
    ns.iter()
        .map(|&n| {
            let p = schedule.params(n);
            let geometry = Geometry::Skew {
                left: 0.0,
                interface: ell,
                width: p.epsilon,
                alpha: p.alpha,
                eta: p.eta,
            };
            Ok((n, DiffusionSpec::new(geometry, dt)?))
        })
        .collect()
}

/// Monte Carlo spec of the limit diffusion on `(0, ell)`.
pub fn limit_diffusion_spec(regime: Regime, ell: f64, dt: f64) -> Result<DiffusionSpec> {
    let right_end = match regime {
        Regime::Dirichlet => EndCondition::Dirichlet,
        Regime::Neumann => EndCondition::Neumann,
        Regime::Robin { c } => EndCondition::Robin { c },
    };
    DiffusionSpec::new(
        Geometry::Interval {
            left: 0.0,
            right: ell,
            right_end,
        },
        dt,
    )
}

fn split(samples: &[Option<f64>]) -> (Vec<f64>, usize) {
    let alive: Vec<f64> = samples.iter().flatten().copied().collect();
    let killed = samples.len() - alive.len();
    (alive, killed)
}

/// Writes distribution rows as CSV.
pub fn write_distribution_csv<W: Write>(
    rows: &[DistributionRow],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(
        out,
        "n,t,ks_distance,null_band,killed_sequence,killed_limit,killed_z"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{:.12e},{:.12e},{:.12e},{:.12e},{:.6}",
            r.n, r.t, r.ks_distance, r.null_band, r.killed_sequence, r.killed_limit, r.killed_z
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> HarnessConfig {
        HarnessConfig::default_for(0.05)
    }

    #[test]
    fn constant_sequence_has_zero_error() {
        let limit = build_limit_generator(0.0, PI, Regime::Neumann, 100).unwrap();
        let seq = FormSequence::constant(limit, Regime::Neumann, &[4, 8, 16]);
        let dict = default_dictionary(&seq.limit).unwrap();
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let r = full_convergence(&seq, &s, &dict, &cfg()).unwrap();
        for row in &r.rows {
            for m in &METRICS[..4] {
                assert_eq!(row.metric(m), Some(0.0), "{m}");
            }
        }
        assert_eq!(r.plain_verdict, Some(true));
    }

    #[test]
    fn dictionary_is_normalised() {
        let limit = build_limit_generator(0.0, PI, Regime::Dirichlet, 200).unwrap();
        let dict = default_dictionary(&limit).unwrap();
        assert_eq!(dict.len(), 11);
        for f in &dict {
            assert!((limit.norm(&f.values) - 1.0).abs() < 1e-12, "{}", f.name);
        }
    }

    #[test]
    fn schedules_declare_their_regimes() {
        assert_eq!(
            SkewSchedule::dirichlet().regime().unwrap(),
            Regime::Dirichlet
        );
        assert_eq!(SkewSchedule::neumann().regime().unwrap(), Regime::Neumann);
        assert_eq!(
            SkewSchedule::robin(1.0).regime().unwrap(),
            Regime::Robin { c: 1.0 }
        );
        let p = SkewSchedule::robin(2.0).params(10);
        assert!((p.alpha / ((1.0 - p.alpha) * p.epsilon) - 2.0).abs() < 1e-12);
        let mut bad = SkewSchedule::dirichlet();
        bad.eta = PowerLaw::new(1.0, 3.0);
        assert!(bad.regime().is_err());
    }

    #[test]
    fn embedding_rejects_foreign_grids() {
        let limit = build_limit_generator(0.0, PI, Regime::Dirichlet, 100).unwrap();
        let other = build_limit_generator(0.0, PI, Regime::Dirichlet, 90).unwrap();
        assert!(matches!(
            Embedding::new(&other, &limit),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn identity_symbol_reproduces_plain_errors() {
        let seq =
            FormSequence::skew(&SkewSchedule::robin(1.0), &[4, 16], SkewMesh::default()).unwrap();
        let dict = default_dictionary(&seq.limit).unwrap();
        let r = full_convergence(&seq, &BernsteinSymbol::identity(), &dict, &cfg()).unwrap();
        for row in &r.rows {
            assert_eq!(row.resolvent_err, row.tc_resolvent_err);
            assert_eq!(row.semigroup_err, row.tc_semigroup_err);
        }
        assert_eq!(r.plain_verdict, r.timechanged_verdict);
    }

    #[test]
    fn potential_identity_is_exact_on_sequence_members() {
        let seq =
            FormSequence::skew(&SkewSchedule::dirichlet(), &[8], SkewMesh::default()).unwrap();
        let g = &seq.generators[0];
        let f = g.sample(|x| x.sin().max(0.0));
        let s = BernsteinSymbol::stable(0.5).unwrap();
        for lambda in [0.5, 1.0, 2.0] {
            let p = timefrac::potential(g, &s, &f, lambda).unwrap();
            let phi = s.eval(lambda).unwrap();
            let r = g.resolvent_apply(phi, &f).unwrap();
            let d: Vec<f64> = p
                .iter()
                .zip(&r)
                .map(|(a, b)| lambda * a - phi * b)
                .collect();
            assert!(g.norm(&d) < 1e-12);
        }
    }

    #[test]
    fn timechanged_error_is_the_mapped_plain_error() {
        let seq =
            FormSequence::skew(&SkewSchedule::robin(1.0), &[6, 23], SkewMesh::default()).unwrap();
        let dict = default_dictionary(&seq.limit).unwrap();
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let tc = timechanged_convergence(&seq, &s, &dict, &cfg()).unwrap();
        for &lambda in &cfg().lambda_grid {
            let phi = s.eval(lambda).unwrap();
            let mapped = HarnessConfig {
                lambda_grid: vec![phi],
                ..cfg()
            };
            let plain = resolvent_convergence(&seq, &dict, &mapped).unwrap();
            // Each lambda's contribution is bounded by the full row.
            for (a, b) in tc.rows.iter().zip(&plain.rows) {
                let bound = phi / lambda * b.resolvent_err.unwrap();
                assert!(bound <= a.tc_resolvent_err.unwrap() * (1.0 + 1e-12));
            }
        }
        // And the row is the maximum of the mapped errors.
        for (k, row) in tc.rows.iter().enumerate() {
            let max = cfg()
                .lambda_grid
                .iter()
                .map(|&lambda| {
                    let phi = s.eval(lambda).unwrap();
                    let mapped = HarnessConfig {
                        lambda_grid: vec![phi],
                        ..cfg()
                    };
                    let r = resolvent_convergence(&seq, &dict, &mapped).unwrap();
                    phi / lambda * r.rows[k].resolvent_err.unwrap()
                })
                .fold(0.0f64, f64::max);
            assert!(row.tc_resolvent_err.unwrap() <= max * (1.0 + 1e-12));
        }
    }

    #[test]
    fn single_mode_tracks_eigenvalue_gap() {
        let seq =
            FormSequence::skew(&SkewSchedule::robin(1.0), &[16, 64], SkewMesh::default()).unwrap();
        let dict = default_dictionary(&seq.limit).unwrap();
        let phi1 = vec![dict[0].clone()];
        let t = 1.0;
        let c = HarnessConfig {
            t_grid: vec![t],
            ..cfg()
        };
        let r = semigroup_convergence(&seq, &phi1, &c).unwrap();
        let mu = seq.limit.spectral_decompose().unwrap().values[0];
        let gaps: Vec<f64> = seq
            .generators
            .iter()
            .map(|g| {
                let mun = g.spectral_decompose().unwrap().values[0];
                ((-mun * t).exp() - (-mu * t).exp()).abs()
            })
            .collect();
        let errs: Vec<f64> = r
            .rows
            .iter()
            .map(|row| row.semigroup_err.unwrap())
            .collect();
        // The first-mode component alone is at least the eigenvalue gap.
        for (e, g) in errs.iter().zip(&gaps) {
            assert!(*e >= 0.9 * g, "{e} vs {g}");
        }
        assert!(gaps[1] < gaps[0] && errs[1] < errs[0]);
    }

    #[test]
    fn tail_verdict_rules() {
        assert!(tail_verdict(&[0.5, 0.4, 0.3, 0.2, 0.1], 0.2));
        assert!(!tail_verdict(&[0.5, 0.4, 0.3, 0.1, 0.15], 0.2));
        assert!(!tail_verdict(&[0.5, 0.4, 0.3, 0.2, 0.19], 0.1));
    }

    #[test]
    fn csv_layout() {
        let limit = build_limit_generator(0.0, PI, Regime::Dirichlet, 50).unwrap();
        let seq = FormSequence::constant(limit, Regime::Dirichlet, &[4]);
        let dict = default_dictionary(&seq.limit).unwrap();
        let r = resolvent_convergence(&seq, &dict, &cfg()).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().next(), Some("n,metric,value"));
        assert_eq!(s.lines().count(), 2);
    }

    #[test]
    fn constant_sequence_is_within_null_band() {
        let lim = limit_diffusion_spec(Regime::Robin { c: 1.0 }, PI, 2e-3).unwrap();
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let rows =
            distributional_check(&[(1, lim), (2, lim)], &lim, &s, &[0.5], 2.0, 10_000, 3).unwrap();
        for r in &rows {
            assert!(r.consistent(1.0), "{r:?}");
        }
    }

    #[test]
    fn dirichlet_regime_distributions_converge() {
        let seq = skew_diffusion_specs(&SkewSchedule::dirichlet(), &[4, 16, 64], PI, 1e-3).unwrap();
        let lim = limit_diffusion_spec(Regime::Dirichlet, PI, 1e-3).unwrap();
        let id = BernsteinSymbol::identity();
        let rows = distributional_check(&seq, &lim, &id, &[2.0], 3.0, 4000, 1).unwrap();
        assert!(
            rows.windows(2).all(|w| w[1].ks_distance < w[0].ks_distance),
            "{rows:?}"
        );
        assert!(rows
            .windows(2)
            .all(|w| w[1].killed_z.abs() < w[0].killed_z.abs()));
    }
}
