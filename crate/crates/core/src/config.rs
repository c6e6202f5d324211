//! Experiment configuration files.
//!
//! One experiment per TOML file. Every key is documented in the built-in
//! suites under `configs/`. Parsing collects all unknown keys and all value
//! violations instead of stopping at the first one.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bernstein::{BernsteinSymbol, SymbolSpec};
use crate::error::Error;
use crate::generators::{
    build_limit_generator, build_skew_generator_graded, DiscreteGenerator, Regime,
};
use crate::montecarlo::{DiffusionSpec, EndCondition, Geometry};
use crate::mosco::{default_ns, PowerLaw, SkewMesh, SkewSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SymbolTable,
    Simulate,
    Solve,
    PotentialCheck,
    Lifetime,
    LocalTime,
    Converge,
    Distribution,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SymbolTable => "symbol-table",
            Self::Simulate => "simulate",
            Self::Solve => "solve",
            Self::PotentialCheck => "potential-check",
            Self::Lifetime => "lifetime",
            Self::LocalTime => "local-time",
            Self::Converge => "converge",
            Self::Distribution => "distribution",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Dirichlet,
    Neumann,
    Robin,
    Skew,
}

fn zero() -> f64 {
    0.0
}
fn pi() -> f64 {
    PI
}
fn cells() -> usize {
    400
}
fn layer_cells() -> usize {
    16
}

/// `1/2 Delta` on `(left, right)` killed at `left`, with the kind's
/// condition at `right`; for `skew`, `right` is the interface and a layer of
/// `width` follows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    #[serde(default = "zero")]
    pub left: f64,
    #[serde(default = "pi")]
    pub right: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    #[serde(default = "cells")]
    pub cells: usize,
    #[serde(default = "layer_cells")]
    pub layer_cells: usize,
}

impl GeneratorConfig {
    pub fn regime(&self) -> Option<Regime> {
        match self.kind {
            GeneratorKind::Dirichlet => Some(Regime::Dirichlet),
            GeneratorKind::Neumann => Some(Regime::Neumann),
            GeneratorKind::Robin => Some(Regime::Robin {
                c: self.c.unwrap_or(f64::NAN),
            }),
            GeneratorKind::Skew => None,
        }
    }

    pub fn build(&self) -> crate::Result<DiscreteGenerator> {
        match self.regime() {
            Some(r) => build_limit_generator(self.left, self.right, r, self.cells),
            None => build_skew_generator_graded(
                self.left,
                self.right,
                self.right + self.width.unwrap_or(f64::NAN),
                self.alpha.unwrap_or(f64::NAN),
                self.eta.unwrap_or(f64::NAN),
                self.cells,
                self.layer_cells,
            ),
        }
    }

    /// The matching Monte Carlo diffusion with time step `dt`.
    pub fn diffusion(&self, dt: f64) -> crate::Result<DiffusionSpec> {
        let geometry = match self.kind {
            GeneratorKind::Skew => Geometry::Skew {
                left: self.left,
                interface: self.right,
                width: self.width.unwrap_or(f64::NAN),
                alpha: self.alpha.unwrap_or(f64::NAN),
                eta: self.eta.unwrap_or(f64::NAN),
            },
            kind => Geometry::Interval {
                left: self.left,
                right: self.right,
                right_end: match kind {
                    GeneratorKind::Dirichlet => EndCondition::Dirichlet,
                    GeneratorKind::Neumann => EndCondition::Neumann,
                    _ => EndCondition::Robin {
                        c: self.c.unwrap_or(f64::NAN),
                    },
                },
            },
        };
        DiffusionSpec::new(geometry, dt)
    }

    /// Right end of the state space.
    pub fn outer(&self) -> f64 {
        self.right + self.width.unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceRegime {
    Dirichlet,
    Neumann,
    Robin,
}

fn eta_exponent() -> f64 {
    1.4
}

/// Skew sequence with `eps = 1/n`, `eta = n^{-eta_exponent}` and `alpha`
/// chosen by the regime: `n^{-1/2}` (dirichlet), `n^{-2}` (neumann) or
/// `c eps / (1 + c eps)` (robin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceConfig {
    pub regime: SequenceRegime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default = "default_ns")]
    pub ns: Vec<usize>,
    #[serde(default = "eta_exponent")]
    pub eta_exponent: f64,
    #[serde(default = "pi")]
    pub ell: f64,
    #[serde(default = "cells")]
    pub inner_cells: usize,
    #[serde(default = "layer_cells")]
    pub layer_cells: usize,
}

impl SequenceConfig {
    pub fn schedule(&self) -> SkewSchedule {
        let mut s = match self.regime {
            SequenceRegime::Dirichlet => SkewSchedule::dirichlet(),
            SequenceRegime::Neumann => SkewSchedule::neumann(),
            SequenceRegime::Robin => SkewSchedule::robin(self.c.unwrap_or(f64::NAN)),
        };
        s.eta = PowerLaw::new(1.0, self.eta_exponent);
        s
    }

    pub fn mesh(&self) -> SkewMesh {
        SkewMesh {
            ell: self.ell,
            inner_cells: self.inner_cells,
            layer_cells: self.layer_cells,
        }
    }
}

fn n_paths() -> usize {
    10_000
}
fn dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    #[serde(default = "n_paths")]
    pub n_paths: usize,
    /// Base time step, also the operational step for subordinators.
    #[serde(default = "dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
    /// Operational horizon for recorded subordinator paths.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_max: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub c: Vec<f64>,
}

fn convergence() -> f64 {
    0.1
}
fn z_max() -> f64 {
    3.0
}
fn ks_factor() -> f64 {
    1.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// Final error below which a convergence verdict holds.
    #[serde(default = "convergence")]
    pub convergence: f64,
    /// Largest accepted |z| in Monte Carlo comparisons.
    #[serde(default = "z_max")]
    pub z: f64,
    /// KS distances are accepted within this many null bands.
    #[serde(default = "ks_factor")]
    pub ks_factor: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            convergence: convergence(),
            z: z_max(),
            ks_factor: ks_factor(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatumKind {
    /// `sqrt(2/L) sin(k pi (x - left) / L)`.
    Sine,
    /// `(x - left)(right - x)`.
    Parabola,
    /// Smooth bump supported on `[a, b]`.
    Bump,
    /// Indicator of `[a, b]`.
    Indicator,
    Constant,
}

fn one_usize() -> usize {
    1
}

/// Initial datum or test function on the generator's domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatumConfig {
    pub kind: DatumKind,
    #[serde(default = "one_usize")]
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
}

impl DatumConfig {
    /// The datum as a function on `(left, right)`.
    pub fn function(&self, left: f64, right: f64) -> impl Fn(f64) -> f64 + Sync + Send {
        let kind = self.kind;
        let k = self.k as f64;
        let len = right - left;
        let a = self.a.unwrap_or(left + len / 4.0);
        let b = self.b.unwrap_or(left + len / 2.0);
        move |x: f64| match kind {
            DatumKind::Sine => (2.0 / len).sqrt() * (k * PI * (x - left) / len).sin(),
            DatumKind::Parabola => (x - left) * (right - x),
            DatumKind::Bump => {
                let s = (2.0 * x - a - b) / (b - a);
                if s.abs() < 1.0 {
                    (-1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }
            DatumKind::Indicator => {
                if (a..=b).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            DatumKind::Constant => 1.0,
        }
    }
}

fn default_seed() -> u64 {
    1
}

/// One experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    /// Single source of randomness; all streams derive from it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Output subdirectory under the output root (default: `name`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub symbols: Vec<SymbolSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequence: Option<SequenceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<MonteCarloConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub datum: Option<DatumConfig>,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub thresholds: Thresholds,
}

/// One offending key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "`{}`: {}", self.key, self.message)
    }
}

/// All problems found in a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} problem(s) in config:", self.issues.len())?;
        for i in &self.issues {
            writeln!(f, "  {i}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

struct Issues(Vec<Issue>);

impl Issues {
    fn push(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.0.push(Issue {
            key: key.into(),
            message: message.into(),
        });
    }

    fn positive(&mut self, key: &str, v: f64) {
        if !(v.is_finite() && v > 0.0) {
            self.push(key, format!("must be positive and finite, got {v}"));
        }
    }

    fn nonnegative(&mut self, key: &str, v: f64) {
        if !(v >= 0.0) {
            self.push(key, format!("must be nonnegative, got {v}"));
        }
    }

    fn require<T>(&mut self, key: &str, v: &Option<T>, why: &str) {
        if v.is_none() {
            self.push(key, format!("required {why}"));
        }
    }

    fn nonempty<T>(&mut self, key: &str, v: &[T], kind: ExperimentKind) {
        if v.is_empty() {
            self.push(key, format!("required for {} experiments", kind.as_str()));
        }
    }

    /// Records a library error against `prefix.<parameter>`.
    fn error(&mut self, prefix: &str, e: &Error) {
        let key = match e {
            Error::Domain { name, .. } | Error::InvalidParameter { name, .. } => {
                format!("{prefix}.{name}")
            }
            Error::TimeStep { .. } => format!("{prefix}.dt"),
            _ => prefix.to_string(),
        };
        self.push(key, e.to_string());
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML document.
    pub fn from_toml(text: &str) -> std::result::Result<Self, ValidationError> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::parse(text).map_err(|e| ValidationError {
            issues: vec![Issue {
                key: "<document>".into(),
                message: e.to_string(),
            }],
        })?;
        let cfg: Self =
            serde_ignored::deserialize(de, |path| unknown.push(path.to_string().replace(".?", "")))
                .map_err(|e: toml::de::Error| ValidationError {
                    issues: vec![Issue {
                        key: e
                            .message()
                            .split('`')
                            .nth(1)
                            .unwrap_or("<document>")
                            .to_string(),
                        message: e.to_string().trim().to_string(),
                    }],
                })?;
        let mut issues = Issues(
            unknown
                .into_iter()
                .map(|k| Issue {
                    key: k,
                    message: "unknown key".into(),
                })
                .collect(),
        );
        cfg.check(&mut issues);
        if issues.0.is_empty() {
            Ok(cfg)
        } else {
            Err(ValidationError { issues: issues.0 })
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Re-runs validation on an already constructed config.
    pub fn validate(&self) -> std::result::Result<(), ValidationError> {
        let mut issues = Issues(Vec::new());
        self.check(&mut issues);
        if issues.0.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { issues: issues.0 })
        }
    }

    pub fn output_dir(&self) -> &str {
        self.output.as_deref().unwrap_or(&self.name)
    }

    pub fn built_symbols(&self) -> crate::Result<Vec<BernsteinSymbol>> {
        self.symbols
            .iter()
            .map(BernsteinSymbol::from_spec)
            .collect()
    }

    fn check(&self, is: &mut Issues) {
        use ExperimentKind as K;
        let kind = self.kind;
        if self.name.trim().is_empty() {
            is.push("name", "must be nonempty");
        }
        if self.name.contains(['/', '\\']) {
            is.push("name", "must not contain path separators");
        }
        for (i, s) in self.symbols.iter().enumerate() {
            if let Err(e) = BernsteinSymbol::from_spec(s) {
                is.error(&format!("symbols[{i}]"), &e);
            }
        }
        for (key, grid) in [
            ("grids.lambda", &self.grids.lambda),
            ("grids.t", &self.grids.t),
        ] {
            for v in grid.iter() {
                is.positive(key, *v);
            }
        }
        for v in &self.grids.c {
            is.nonnegative("grids.c", *v);
        }
        is.positive("thresholds.convergence", self.thresholds.convergence);
        is.positive("thresholds.z", self.thresholds.z);
        is.positive("thresholds.ks_factor", self.thresholds.ks_factor);
        if kind != K::Converge && kind != K::Distribution || self.generator.is_some() {
            self.check_generator(is);
        }
        if let Some(mc) = &self.monte_carlo {
            if mc.n_paths < 2 {
                is.push(
                    "monte_carlo.n_paths",
                    format!("need at least 2 paths, got {}", mc.n_paths),
                );
            }
            is.positive("monte_carlo.dt", mc.dt);
            if let Some(s) = mc.s_max {
                is.positive("monte_carlo.s_max", s);
            }
        }
        if let Some(seq) = &self.sequence {
            self.check_sequence(seq, is);
        }
        if let Some(d) = &self.datum {
            if d.k == 0 {
                is.push("datum.k", "must be at least 1");
            }
            if let (Some(a), Some(b)) = (d.a, d.b) {
                if !(a < b) {
                    is.push("datum.b", format!("need a < b, got {a} and {b}"));
                }
            }
        }
        match kind {
            K::SymbolTable => {
                is.nonempty("symbols", &self.symbols, kind);
                is.nonempty("grids.lambda", &self.grids.lambda, kind);
            }
            K::Simulate => {
                is.nonempty("symbols", &self.symbols, kind);
                is.nonempty("grids.t", &self.grids.t, kind);
                is.require("monte_carlo", &self.monte_carlo, "for simulate experiments");
            }
            K::Solve => {
                is.nonempty("symbols", &self.symbols, kind);
                is.nonempty("grids.t", &self.grids.t, kind);
                is.require("datum", &self.datum, "for solve experiments");
            }
            K::PotentialCheck => {
                is.nonempty("symbols", &self.symbols, kind);
                is.nonempty("grids.lambda", &self.grids.lambda, kind);
                is.require("datum", &self.datum, "for potential-check experiments");
                is.require(
                    "monte_carlo",
                    &self.monte_carlo,
                    "for potential-check experiments",
                );
            }
            K::Lifetime => {
                is.nonempty("symbols", &self.symbols, kind);
                is.nonempty("grids.x", &self.grids.x, kind);
                is.require("monte_carlo", &self.monte_carlo, "for lifetime experiments");
            }
            K::LocalTime => {
                is.nonempty("symbols", &self.symbols, kind);
                is.nonempty("grids.c", &self.grids.c, kind);
                is.require(
                    "monte_carlo",
                    &self.monte_carlo,
                    "for local-time experiments",
                );
                if let Some(g) = &self.generator {
                    if g.kind != GeneratorKind::Neumann {
                        is.push(
                            "generator.kind",
                            "local-time experiments need a neumann generator",
                        );
                    }
                }
            }
            K::Converge => {
                is.nonempty("symbols", &self.symbols, kind);
                is.nonempty("grids.lambda", &self.grids.lambda, kind);
                is.nonempty("grids.t", &self.grids.t, kind);
                is.require("sequence", &self.sequence, "for converge experiments");
            }
            K::Distribution => {
                is.nonempty("symbols", &self.symbols, kind);
                is.nonempty("grids.t", &self.grids.t, kind);
                is.require("sequence", &self.sequence, "for distribution experiments");
                is.require(
                    "monte_carlo",
                    &self.monte_carlo,
                    "for distribution experiments",
                );
            }
        }
        if matches!(kind, K::Converge | K::Distribution) && self.symbols.len() > 1 {
            is.push(
                "symbols",
                "converge and distribution experiments take one symbol",
            );
        }
        if let (Some(g), Some(mc)) = (&self.generator, &self.monte_carlo) {
            if kind != K::Simulate {
                if let Err(e) = g.diffusion(mc.dt) {
                    if matches!(e, Error::TimeStep { .. }) {
                        is.error("monte_carlo", &e);
                    }
                }
                if let Some(x0) = mc.x0 {
                    if !(g.left < x0 && x0 <= g.outer()) {
                        is.push("monte_carlo.x0", format!("{x0} outside the domain"));
                    }
                }
            }
        }
    }

    fn check_generator(&self, is: &mut Issues) {
        let Some(g) = &self.generator else {
            if matches!(
                self.kind,
                ExperimentKind::Solve
                    | ExperimentKind::PotentialCheck
                    | ExperimentKind::Lifetime
                    | ExperimentKind::LocalTime
            ) {
                is.push(
                    "generator",
                    format!("required for {} experiments", self.kind.as_str()),
                );
            }
            return;
        };
        if !(g.left < g.right) {
            is.push(
                "generator.right",
                format!("need left < right, got {} and {}", g.left, g.right),
            );
        }
        if g.cells < 2 {
            is.push("generator.cells", "need at least 2 cells");
        }
        match g.kind {
            GeneratorKind::Robin => match g.c {
                None => is.push("generator.c", "required for robin generators"),
                Some(c) => is.nonnegative("generator.c", c),
            },
            GeneratorKind::Skew => {
                match g.alpha {
                    None => is.push("generator.alpha", "required for skew generators"),
                    Some(a) if !(a > 0.0 && a < 1.0) => {
                        is.push("generator.alpha", format!("must lie in (0, 1), got {a}"))
                    }
                    _ => {}
                }
                match g.eta {
                    None => is.push("generator.eta", "required for skew generators"),
                    Some(e) => is.positive("generator.eta", e),
                }
                match g.width {
                    None => is.push("generator.width", "required for skew generators"),
                    Some(w) => is.positive("generator.width", w),
                }
                if g.layer_cells < crate::generators::MIN_LAYER_CELLS {
                    is.push(
                        "generator.layer_cells",
                        format!("need at least {}", crate::generators::MIN_LAYER_CELLS),
                    );
                }
            }
            _ => {}
        }
        for k in ["c", "alpha", "eta", "width"] {
            let set = match k {
                "c" => g.c.is_some() && g.kind != GeneratorKind::Robin,
                _ => {
                    g.kind != GeneratorKind::Skew
                        && match k {
                            "alpha" => g.alpha.is_some(),
                            "eta" => g.eta.is_some(),
                            _ => g.width.is_some(),
                        }
                }
            };
            if set {
                is.push(format!("generator.{k}"), "not used by this generator kind");
            }
        }
    }

    fn check_sequence(&self, seq: &SequenceConfig, is: &mut Issues) {
        match (seq.regime, seq.c) {
            (SequenceRegime::Robin, None) => is.push("sequence.c", "required for the robin regime"),
            (SequenceRegime::Robin, Some(c)) => is.positive("sequence.c", c),
            (_, Some(_)) => is.push("sequence.c", "only used by the robin regime"),
            _ => {}
        }
        if seq.ns.is_empty() || seq.ns.contains(&0) {
            is.push("sequence.ns", "need a nonempty list of positive integers");
        }
        if !seq.ns.windows(2).all(|w| w[0] < w[1]) {
            is.push("sequence.ns", "must be strictly increasing");
        }
        is.positive("sequence.ell", seq.ell);
        if seq.inner_cells < 2 {
            is.push("sequence.inner_cells", "need at least 2 cells");
        }
        if seq.layer_cells < crate::generators::MIN_LAYER_CELLS {
            is.push(
                "sequence.layer_cells",
                format!("need at least {}", crate::generators::MIN_LAYER_CELLS),
            );
        }
        if let Err(e) = seq.schedule().regime() {
            let key = if matches!(e, Error::InvalidParameter { name: "eta", .. }) {
                "sequence.eta_exponent".to_string()
            } else {
                "sequence".to_string()
            };
            is.push(key, e.to_string());
        }
        if let Some(p) = seq.ns.first().map(|&n| seq.schedule().params(n)) {
            if !(p.alpha > 0.0 && p.alpha < 1.0) {
                is.push(
                    "sequence.c",
                    format!("alpha = {} at n = {} leaves (0, 1)", p.alpha, p.n),
                );
            }
        }
        if let Some(mc) = &self.monte_carlo {
            for &n in &seq.ns {
                let p = seq.schedule().params(n);
                let limit = (p.epsilon / 4.0).powi(2) / p.eta;
                if mc.dt.is_finite() && !(mc.dt < limit) {
                    is.push(
                        "monte_carlo.dt",
                        format!("too coarse for the layer at n = {n} (need dt < {limit:.3e})"),
                    );
                    break;
                }
            }
        }
    }
}
