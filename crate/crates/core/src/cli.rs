//! Experiment runner behind the `timechange` binary.
//!
//! `run <config>` executes one experiment and writes `results.csv` and
//! `metadata.json` to `$TIMECHANGE_OUTPUT/<output>` (default output root
//! `results`). `<config>` is a TOML file or the name of a built-in suite.
//! Exit codes: 0 success, 1 validation or runtime error, 2 flagged
//! numerical instability.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ExperimentConfig, ExperimentKind, GeneratorConfig, ValidationError};
use crate::generators::DiscreteGenerator;
use crate::invlap::{l_laplace_weight_estimate, InversionConfig};
use crate::montecarlo::{
    estimate_lifetime, estimate_potential, inverse_identity_check, local_time_functional,
};
use crate::mosco::{
    default_dictionary, distributional_check, full_convergence, limit_diffusion_spec,
    skew_diffusion_specs, write_distribution_csv, FormSequence, HarnessConfig, METRICS,
};
use crate::rng::{map_paths, path_rng, Ensemble};
use crate::subpaths::{SubordinatorSampler, SubordinatorWalk};
use crate::timefrac;

/// Environment variable naming the output root.
pub const OUTPUT_ENV: &str = "TIMECHANGE_OUTPUT";

const COLUMNS: &str = "\
Columns of results.csv by experiment kind:
  symbol-table     symbol,lambda,phi
  simulate         symbol,path,t,l_t
  solve            symbol,t,x,u
  potential-check  check,symbol,lambda,c,reference,estimate,std_error,z
  lifetime         symbol,x,spectral,estimate,std_error,z
  local-time       symbol,c,timechanged,timechanged_se,scaled_base,scaled_base_se,reference
  converge         n,metric,value
  distribution     n,t,ks_distance,null_band,killed_sequence,killed_limit,killed_z

Exit codes: 0 success, 1 validation or runtime error, 2 flagged numerical instability.
Output root: $TIMECHANGE_OUTPUT (default ./results).";

#[derive(Debug, Parser)]
#[command(name = "timechange", version, about = "Time-fractional evolution and time-changed process experiments", after_help = COLUMNS)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment from a config file or built-in suite name.
    Run { config: String },
    /// List built-in suites.
    List {
        /// Print a JSON array.
        #[arg(long)]
        json: bool,
    },
    /// Validate a config without running it.
    Validate { config: String },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Numerics(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no config file or built-in suite named `{0}`")]
    NotFound(String),
}

/// A built-in suite shipped with the crate.
#[derive(Debug, Clone, Serialize)]
pub struct Suite {
    pub name: &'static str,
    pub kind: &'static str,
    pub description: &'static str,
    pub runtime: &'static str,
    #[serde(skip)]
    pub config: &'static str,
}

macro_rules! suite {
    ($name:literal, $kind:literal, $runtime:literal, $desc:literal) => {
        Suite {
            name: $name,
            kind: $kind,
            description: $desc,
            runtime: $runtime,
            config: include_str!(concat!("../configs/", $name, ".toml")),
        }
    };
}

pub fn suites() -> Vec<Suite> {
    vec![
        suite!(
            "symbol-table",
            "symbol-table",
            "<1 s",
            "Bernstein symbols of stable, gamma and inverse Gaussian subordinators"
        ),
        suite!(
            "inverse-paths",
            "simulate",
            "~1 s",
            "First-passage times L_t of stable and gamma subordinators"
        ),
        suite!(
            "fractional-heat",
            "solve",
            "~1 s",
            "Time-fractional heat equation on (0, pi) from a sine mode"
        ),
        suite!(
            "potential-identity",
            "potential-check",
            "~1 min",
            "Monte Carlo potentials of X(L_t) against spectral values"
        ),
        suite!(
            "lifetime",
            "lifetime",
            "~30 s",
            "Mean lifetimes of time-changed killed Brownian motion"
        ),
        suite!(
            "local-time",
            "local-time",
            "~1 min",
            "Elastic boundary local-time functional across c"
        ),
        suite!(
            "converge-dirichlet",
            "converge",
            "~5 s",
            "Skew forms with alpha/eps -> inf converging to Dirichlet"
        ),
        suite!(
            "converge-neumann",
            "converge",
            "~5 s",
            "Skew forms with alpha/eps -> 0 converging to Neumann"
        ),
        suite!(
            "converge-robin",
            "converge",
            "~5 s",
            "Skew forms with alpha/eps -> 1 converging to Robin(1)"
        ),
        suite!(
            "distribution-robin",
            "distribution",
            "~30 s",
            "KS distances of time-changed skew diffusions to the Robin limit"
        ),
    ]
}

/// Loads a config from a path, falling back to a built-in suite name.
pub fn load_config(arg: &str) -> Result<ExperimentConfig, CliError> {
    let path = Path::new(arg);
    let text = if path.exists() {
        fs::read_to_string(path)?
    } else if let Some(s) = suites().into_iter().find(|s| s.name == arg) {
        s.config.to_string()
    } else {
        return Err(CliError::NotFound(arg.to_string()));
    };
    Ok(ExperimentConfig::from_toml(&text)?)
}

/// Result of one experiment.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub flagged: bool,
    pub csv: String,
    pub details: serde_json::Value,
}

struct Output {
    csv: String,
    flagged: bool,
    details: serde_json::Value,
    extra: Vec<(String, String)>,
}

impl Output {
    fn new(header: &str) -> Self {
        Self {
            csv: format!("{header}\n"),
            flagged: false,
            details: serde_json::Value::Null,
            extra: Vec::new(),
        }
    }

    fn row(&mut self, fields: std::fmt::Arguments<'_>) {
        self.csv.write_fmt(fields).expect("string write");
        self.csv.push('\n');
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Runs `cfg` and writes its artifacts under `root`.
pub fn run_experiment(cfg: &ExperimentConfig, root: &Path) -> Result<RunOutcome, CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let out = match cfg.kind {
        ExperimentKind::SymbolTable => symbol_table(cfg)?,
        ExperimentKind::Simulate => simulate(cfg)?,
        ExperimentKind::Solve => solve(cfg)?,
        ExperimentKind::PotentialCheck => potential_check(cfg)?,
        ExperimentKind::Lifetime => lifetime(cfg)?,
        ExperimentKind::LocalTime => local_time(cfg)?,
        ExperimentKind::Converge => converge(cfg)?,
        ExperimentKind::Distribution => distribution(cfg)?,
    };
    let wall = start.elapsed().as_secs_f64();
    let dir = root.join(cfg.output_dir());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("results.csv"), &out.csv)?;
    for (name, body) in &out.extra {
        fs::write(dir.join(name), body)?;
    }
    let metadata = serde_json::json!({
        "name": cfg.name,
        "kind": cfg.kind.as_str(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "streams": {
            "subordinator": "ChaCha8(seed), stream (1, path)",
            "base": "ChaCha8(seed), stream (2, path); sequence member k uses ensemble 2 + 256 k",
            "subordinator_alt": "ChaCha8(seed), stream (3, path)",
            "limit_base": "ChaCha8(seed), stream (4, path)",
        },
        "wall_time_s": wall,
        "version": env!("CARGO_PKG_VERSION"),
        "flagged": out.flagged,
        "details": out.details,
        "config": cfg,
    });
    fs::write(
        dir.join("metadata.json"),
        serde_json::to_string_pretty(&metadata).expect("json") + "\n",
    )?;
    Ok(RunOutcome {
        dir,
        flagged: out.flagged,
        csv: out.csv,
        details: out.details,
    })
}

fn generator(cfg: &ExperimentConfig) -> &GeneratorConfig {
    cfg.generator.as_ref().expect("validated")
}

fn x0(cfg: &ExperimentConfig) -> f64 {
    let g = generator(cfg);
    cfg.monte_carlo
        .as_ref()
        .and_then(|m| m.x0)
        .unwrap_or(0.5 * (g.left + g.right))
}

/// Linear interpolation of a grid function, zero at eliminated endpoints.
fn value_at(g: &DiscreteGenerator, u: &[f64], x: f64) -> f64 {
    let mesh = g.mesh();
    let full: Vec<f64> = mesh
        .iter()
        .map(|&m| g.node_index(m).map_or(0.0, |i| u[i]))
        .collect();
    let k = mesh.partition_point(|&m| m < x);
    if k == 0 {
        return full[0];
    }
    if k >= mesh.len() {
        return full[mesh.len() - 1];
    }
    let w = (x - mesh[k - 1]) / (mesh[k] - mesh[k - 1]);
    (1.0 - w) * full[k - 1] + w * full[k]
}

fn symbol_table(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mut out = Output::new("symbol,lambda,phi");
    for s in cfg.built_symbols()? {
        for &l in &cfg.grids.lambda {
            out.row(format_args!("{},{},{:.15e}", s.label(), l, s.eval(l)?));
        }
    }
    Ok(out)
}

fn simulate(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let mc = cfg.monte_carlo.as_ref().expect("validated");
    let mut ts = cfg.grids.t.clone();
    ts.sort_by(f64::total_cmp);
    let mut out = Output::new("symbol,path,t,l_t");
    for s in cfg.built_symbols()? {
        let sampler = SubordinatorSampler::new(&s)?;
        let max_steps = mc.s_max.map_or(u64::MAX, |m| (m / mc.dt).ceil() as u64);
        let paths = map_paths(mc.n_paths, |i| {
            let mut rng = path_rng(cfg.seed, Ensemble::SUBORDINATOR, i);
            let mut walk = SubordinatorWalk::new(&sampler, mc.dt);
            ts.iter()
                .map(|&t| {
                    if sampler.is_identity() {
                        Some(t)
                    } else {
                        walk.first_passage(t, max_steps, &mut rng)
                    }
                })
                .collect::<Vec<_>>()
        });
        for (i, row) in paths.iter().enumerate() {
            for (&t, l) in ts.iter().zip(row) {
                match l {
                    Some(l) => out.row(format_args!("{},{},{},{:.12e}", s.label(), i, t, l)),
                    None => {
                        out.flagged = true;
                        out.row(format_args!("{},{},{},NaN", s.label(), i, t));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn solve(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let gc = generator(cfg);
    let g = gc.build()?;
    let datum = cfg.datum.as_ref().expect("validated");
    let f = g.sample(datum.function(gc.left, gc.outer()));
    let mut out = Output::new("symbol,t,x,u");
    let mut modes = Vec::new();
    for s in cfg.built_symbols()? {
        let sol = if s.is_identity() {
            let values = cfg
                .grids
                .t
                .iter()
                .map(|&t| g.semigroup_apply(t, &f))
                .collect::<crate::Result<Vec<_>>>()?;
            modes.push(serde_json::json!({"symbol": s.label(), "n_modes": g.len()}));
            values
        } else {
            let sol = timefrac::solve(&g, &s, &f, &cfg.grids.t, None)?;
            out.flagged |= sol.flagged;
            modes.push(serde_json::json!({
                "symbol": s.label(),
                "n_modes": sol.n_modes,
                "truncation_energy": sol.truncation_energy,
            }));
            sol.values
        };
        for (&t, u) in cfg.grids.t.iter().zip(&sol) {
            for (x, v) in g.grid().iter().zip(u) {
                out.row(format_args!("{},{},{:.12e},{:.12e}", s.label(), t, x, v));
            }
        }
    }
    out.details = serde_json::json!({ "modes": modes });
    Ok(out)
}

fn potential_check(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let gc = generator(cfg);
    let mc = cfg.monte_carlo.as_ref().expect("validated");
    let g = gc.build()?;
    let spec = gc.diffusion(mc.dt)?;
    let datum = cfg.datum.as_ref().expect("validated");
    let func = datum.function(gc.left, gc.outer());
    let f = g.sample(&func);
    let x = x0(cfg);
    let mut out = Output::new("check,symbol,lambda,c,reference,estimate,std_error,z");
    let mut worst = 0.0f64;
    for s in cfg.built_symbols()? {
        for &l in &cfg.grids.lambda {
            let exact = value_at(&g, &timefrac::potential(&g, &s, &f, l)?, x);
            let r = estimate_potential(&spec, &s, &func, l, x, mc.n_paths, cfg.seed)?;
            out.flagged |= r.flagged;
            worst = worst.max(r.z_score(exact).abs());
            out.row(format_args!(
                "potential,{},{},,{:.12e},{:.12e},{:.6e},{:.4}",
                s.label(),
                l,
                exact,
                r.value,
                r.std_error,
                r.z_score(exact)
            ));
            for &c in &cfg.grids.c {
                let chk = inverse_identity_check(&s, c, l, mc.n_paths, cfg.seed, mc.dt)?;
                worst = worst.max(chk.z_score.abs());
                for (name, e) in [
                    ("inverse_identity_lhs", chk.lhs),
                    ("inverse_identity_rhs", chk.rhs),
                ] {
                    out.row(format_args!(
                        "{name},{},{},{},{:.12e},{:.12e},{:.6e},{:.4}",
                        s.label(),
                        l,
                        c,
                        chk.closed_form,
                        e.value,
                        e.std_error,
                        e.z_score(chk.closed_form)
                    ));
                }
            }
        }
    }
    out.details = serde_json::json!({
        "max_abs_z": worst,
        "within_threshold": worst <= cfg.thresholds.z,
    });
    Ok(out)
}

fn lifetime(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let gc = generator(cfg);
    let mc = cfg.monte_carlo.as_ref().expect("validated");
    let g = gc.build()?;
    let spec = gc.diffusion(mc.dt)?;
    let mut out = Output::new("symbol,x,spectral,estimate,std_error,z");
    for s in cfg.built_symbols()? {
        for &x in &cfg.grids.x {
            let exact = match g.node_index(x) {
                Some(_) => timefrac::lifetime_mean(&g, &s, x)?,
                None => {
                    let ones = vec![1.0; g.len()];
                    s.mean() * value_at(&g, &g.shifted_solve(0.0, &ones)?, x)
                }
            };
            let r = estimate_lifetime(&spec, &s, x, mc.n_paths, cfg.seed)?;
            out.flagged |= r.flagged;
            out.row(format_args!(
                "{},{},{:.12e},{:.12e},{:.6e},{:.4}",
                s.label(),
                x,
                exact,
                r.value,
                r.std_error,
                r.z_score(exact)
            ));
        }
    }
    Ok(out)
}

/// `E_x int_0^tau e^{-c gamma} ds` for reflecting Brownian motion on
/// `(left, right)` killed at `left`: solves `u''/2 = -1`, `u(left) = 0`,
/// `u'(right) + c u(right) = 0`.
fn local_time_reference(left: f64, right: f64, c: f64, x: f64) -> f64 {
    let (y, len) = (x - left, right - left);
    if c.is_infinite() {
        return y * (len - y);
    }
    let a = (2.0 * len + c * len * len) / (1.0 + c * len);
    -y * y + a * y
}

fn local_time(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let gc = generator(cfg);
    let mc = cfg.monte_carlo.as_ref().expect("validated");
    let spec = gc.diffusion(mc.dt)?;
    let x = x0(cfg);
    let mut out =
        Output::new("symbol,c,timechanged,timechanged_se,scaled_base,scaled_base_se,reference");
    for s in cfg.built_symbols()? {
        for &c in &cfg.grids.c {
            let r = local_time_functional(&spec, &s, c, x, mc.n_paths, cfg.seed)?;
            out.flagged |= r.timechanged.flagged || r.scaled_base.flagged;
            out.row(format_args!(
                "{},{},{:.12e},{:.6e},{:.12e},{:.6e},{:.12e}",
                s.label(),
                c,
                r.timechanged.value,
                r.timechanged.std_error,
                r.scaled_base.value,
                r.scaled_base.std_error,
                s.mean() * local_time_reference(gc.left, gc.right, c, x)
            ));
        }
    }
    Ok(out)
}

fn converge(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq_cfg = cfg.sequence.as_ref().expect("validated");
    let sym = &cfg.built_symbols()?[0];
    let seq = FormSequence::skew(&seq_cfg.schedule(), &seq_cfg.ns, seq_cfg.mesh())?;
    let dict = default_dictionary(&seq.limit)?;
    let harness = HarnessConfig {
        lambda_grid: cfg.grids.lambda.clone(),
        t_grid: cfg.grids.t.clone(),
        threshold: cfg.thresholds.convergence,
    };
    // Unstable inversions surface as errors from the weight evaluation; probe
    // the limit spectrum first so they are reported as flags.
    let mut flagged = false;
    if !sym.is_identity() {
        let spec = seq.limit.spectral_decompose()?;
        for &t in &cfg.grids.t {
            for &mu in &spec.values {
                flagged |=
                    l_laplace_weight_estimate(sym, mu.max(0.0), t, &InversionConfig::default())?
                        .flagged;
            }
        }
    }
    if flagged {
        let mut out = Output::new("n,metric,value");
        out.flagged = true;
        out.details =
            serde_json::json!({"error": "unstable Laplace inversion on the limit spectrum"});
        return Ok(out);
    }
    let report = full_convergence(&seq, sym, &dict, &harness)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let mut out = Output::new("");
    out.csv = String::from_utf8(csv).expect("utf8");
    for m in METRICS {
        let mut buf = Vec::new();
        report.write_metric(m, &mut buf)?;
        if buf.iter().filter(|&&b| b == b'\n').count() > 1 {
            out.extra
                .push((format!("{m}.dat"), String::from_utf8(buf).expect("utf8")));
        }
    }
    let params: Vec<_> = seq.params.iter().flatten().collect();
    out.details = serde_json::json!({
        "report": report.metadata(),
        "schedule": params,
        "verdicts_agree": report.plain_verdict == report.timechanged_verdict,
    });
    Ok(out)
}

fn distribution(cfg: &ExperimentConfig) -> Result<Output, CliError> {
    let seq_cfg = cfg.sequence.as_ref().expect("validated");
    let mc = cfg.monte_carlo.as_ref().expect("validated");
    let sym = &cfg.built_symbols()?[0];
    let schedule = seq_cfg.schedule();
    let regime = schedule.regime()?;
    let specs = skew_diffusion_specs(&schedule, &seq_cfg.ns, seq_cfg.ell, mc.dt)?;
    let limit = limit_diffusion_spec(regime, seq_cfg.ell, mc.dt)?;
    let x = mc.x0.unwrap_or(0.5 * seq_cfg.ell);
    let rows = distributional_check(&specs, &limit, sym, &cfg.grids.t, x, mc.n_paths, cfg.seed)?;
    let mut csv = Vec::new();
    write_distribution_csv(&rows, &mut csv)?;
    let mut out = Output::new("");
    out.csv = String::from_utf8(csv).expect("utf8");
    let last = seq_cfg.ns.last().copied().unwrap_or(0);
    let final_ok = rows
        .iter()
        .filter(|r| r.n == last)
        .all(|r| r.consistent(cfg.thresholds.ks_factor));
    out.details = serde_json::json!({
        "largest_n_consistent": final_ok,
        "ks_factor": cfg.thresholds.ks_factor,
    });
    Ok(out)
}

fn list_text() -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<20} {:<16} {:<8} description",
        "suite", "kind", "runtime"
    );
    for suite in suites() {
        let _ = writeln!(
            s,
            "{:<20} {:<16} {:<8} {}",
            suite.name, suite.kind, suite.runtime, suite.description
        );
    }
    s
}

/// Runs the command line and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match cli.command {
        Command::List { json } => {
            if json {
                println!("{}", serde_json::to_string_pretty(&suites()).expect("json"));
            } else {
                print!("{}", list_text());
            }
            0
        }
        Command::Validate { config } => match load_config(&config) {
            Ok(cfg) => {
                println!(
                    "{}: valid {} experiment `{}`",
                    config,
                    cfg.kind.as_str(),
                    cfg.name
                );
                0
            }
            Err(e) => {
                eprint!("{e}");
                eprintln!();
                1
            }
        },
        Command::Run { config } => {
            let cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("{e}");
                    return 1;
                }
            };
            match run_experiment(&cfg, &output_root()) {
                Ok(o) => {
                    println!("wrote {}", o.dir.display());
                    if o.flagged {
                        eprintln!("numerical instability flagged; see metadata.json");
                        2
                    } else {
                        0
                    }
                }
                Err(e) => {
                    eprintln!("{e}");
                    1
                }
            }
        }
    }
}
