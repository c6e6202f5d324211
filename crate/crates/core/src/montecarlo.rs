//! Monte Carlo for base diffusions and their time changes `X_{L_t}`.
//!
//! Base processes are one-dimensional Brownian motions on a line, on an
//! interval `(l, r)` killed at `l` with a Dirichlet, reflecting or elastic
//! (Robin) end at `r`, or the skew-interface diffusion: `1/2 Delta` on
//! `(l, ell)`, `eta/2 Delta` on the layer `(ell, ell + eps)`, killed at both
//! ends, with flux condition `(1 - alpha) u'(ell-) = alpha u'(ell+)`.
//!
//! All steps are exact in law away from killing boundaries. The skew
//! diffusion is stepped in the coordinate `z = x - ell` (inner) and
//! `z = (x - ell) / sqrt(eta)` (layer), where it is a skew Brownian motion
//! with probability `p = alpha / (alpha + (1 - alpha) sqrt(eta))` of
//! leaving the interface towards the layer; the reflected modulus is
//! advanced exactly and the side is redrawn when the Brownian bridge of the
//! modulus touches zero. Killing at absorbing ends uses the Brownian-bridge
//! crossing probability, and reflecting ends use the exact joint law of a
//! reflected step and its boundary local time.
//!
//! Each path `i` draws base randomness from stream `(seed, BASE, i)` and
//! subordinator randomness from `(seed, SUBORDINATOR, i)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinSymbol;
use crate::error::{check_nonnegative, check_positive, check_unit_open, Error, Result};
use crate::rng::{map_paths, path_rng, Ensemble};
use crate::stats::mean_and_se;
use crate::subpaths::SubordinatorSampler;

/// Cap on operational-time steps per path.
pub const MAX_OPERATIONAL_STEPS: u64 = 20_000_000;
/// Base-time horizon for lifetime estimates.
pub const LIFETIME_HORIZON: f64 = 500.0;
/// Potential estimates stop once `e^{-lambda H}` drops below this level.
pub const POTENTIAL_CUTOFF: f64 = 1e-6;

/// Condition at the right end of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EndCondition {
    /// Killed on hitting the end.
    Dirichlet,
    /// Reflected.
    Neumann,
    /// Reflected and killed at rate `c` per unit of boundary local time.
    Robin { c: f64 },
}

/// State space and boundary behaviour of a base diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// Brownian motion on the real line.
    Line,
    /// `1/2 Delta` on `(left, right)`, killed at `left`.
    Interval {
        left: f64,
        right: f64,
        right_end: EndCondition,
    },
    /// Skew-interface diffusion on `(left, interface + width)`.
    Skew {
        left: f64,
        interface: f64,
        width: f64,
        alpha: f64,
        eta: f64,
    },
}

/// A base diffusion with its time step and an optional killing rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    pub geometry: Geometry,
    pub dt: f64,
    /// Rate of an independent exponential killing clock (0 for none).
    #[serde(default)]
    pub kill_rate: f64,
}

impl DiffusionSpec {
    pub fn new(geometry: Geometry, dt: f64) -> Result<Self> {
        let spec = Self {
            geometry,
            dt,
            kill_rate: 0.0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_kill_rate(mut self, rate: f64) -> Result<Self> {
        self.kill_rate = rate;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("dt", self.dt)?;
        check_nonnegative("kill_rate", self.kill_rate)?;
        match self.geometry {
            Geometry::Line => {}
            Geometry::Interval {
                left,
                right,
                right_end,
            } => {
                if !(left < right) {
                    return Err(Error::InvalidParameter {
                        name: "right",
                        reason: format!("need left < right, got {left} and {right}"),
                    });
                }
                if let EndCondition::Robin { c } = right_end {
                    check_nonnegative("c", c)?;
                }
            }
            Geometry::Skew {
                left,
                interface,
                width,
                alpha,
                eta,
            } => {
                if !(left < interface) {
                    return Err(Error::InvalidParameter {
                        name: "interface",
                        reason: format!("need left < interface, got {left} and {interface}"),
                    });
                }
                check_positive("width", width)?;
                check_unit_open("alpha", alpha)?;
                check_positive("eta", eta)?;
                // The layer must be resolved: sqrt(eta dt) < width / 4.
                let limit = (width / 4.0).powi(2) / eta;
                if !((eta * self.dt).sqrt() < width / 4.0) {
                    return Err(Error::TimeStep { dt: self.dt, limit });
                }
            }
        }
        Ok(())
    }

    /// Whether `x` lies strictly inside the state space.
    pub fn contains(&self, x: f64) -> bool {
        match self.geometry {
            Geometry::Line => x.is_finite(),
            Geometry::Interval {
                left,
                right,
                right_end,
            } => {
                left < x
                    && match right_end {
                        EndCondition::Dirichlet => x < right,
                        _ => x <= right,
                    }
            }
            Geometry::Skew {
                left,
                interface,
                width,
                ..
            } => left < x && x < interface + width,
        }
    }
}

/// How a path left the state space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Exit {
    Left,
    Right,
    /// Elastic killing at a Robin end.
    Boundary,
    /// Exponential killing clock.
    Clock,
}

/// Steps one base path.
#[derive(Debug, Clone)]
pub struct BaseWalker<'a> {
    spec: &'a DiffusionSpec,
    /// `x` for line and interval, `z` for the skew geometry.
    coord: f64,
    time: f64,
    death_time: f64,
    exit: Option<Exit>,
    local_time: f64,
    robin_threshold: f64,
    clock: f64,
    touched: bool,
}

/// Probability that a Brownian bridge over time `h` between points at
/// distances `d0, d1 >= 0` from a barrier crosses it.
fn bridge_cross(d0: f64, d1: f64, h: f64) -> f64 {
    if d0 <= 0.0 || d1 <= 0.0 {
        1.0
    } else {
        (-2.0 * d0 * d1 / h).exp()
    }
}

fn uniform_open<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

impl<'a> BaseWalker<'a> {
    pub fn new<R: Rng + ?Sized>(spec: &'a DiffusionSpec, x0: f64, rng: &mut R) -> Result<Self> {
        if !spec.contains(x0) {
            return Err(Error::Domain {
                name: "x0",
                value: x0,
                domain: "interior of the state space",
            });
        }
        let e1: f64 = Exp1.sample(rng);
        let e2: f64 = Exp1.sample(rng);
        let clock = if spec.kill_rate > 0.0 {
            e1 / spec.kill_rate
        } else {
            f64::INFINITY
        };
        let robin_threshold = match spec.geometry {
            Geometry::Interval {
                right_end: EndCondition::Robin { c },
                ..
            } if c > 0.0 => e2 / c,
            _ => f64::INFINITY,
        };
        let coord = match spec.geometry {
            Geometry::Skew { interface, eta, .. } => {
                if x0 >= interface {
                    (x0 - interface) / eta.sqrt()
                } else {
                    x0 - interface
                }
            }
            _ => x0,
        };
        Ok(Self {
            spec,
            coord,
            time: 0.0,
            death_time: f64::INFINITY,
            exit: None,
            local_time: 0.0,
            robin_threshold,
            clock,
            touched: false,
        })
    }

    pub fn alive(&self) -> bool {
        self.exit.is_none()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Killing time, `+inf` while alive.
    pub fn death_time(&self) -> f64 {
        self.death_time
    }

    pub fn exit(&self) -> Option<Exit> {
        self.exit
    }

    /// Boundary local time accumulated at a reflecting or Robin end.
    pub fn local_time(&self) -> f64 {
        self.local_time
    }

    /// Whether the path has touched a reflecting end.
    pub fn touched_boundary(&self) -> bool {
        self.touched
    }

    /// Current position in the original coordinate.
    pub fn position(&self) -> f64 {
        match self.spec.geometry {
            Geometry::Skew { interface, eta, .. } => {
                if self.coord >= 0.0 {
                    interface + eta.sqrt() * self.coord
                } else {
                    interface + self.coord
                }
            }
            _ => self.coord,
        }
    }

    fn kill(&mut self, exit: Exit, at: f64) {
        self.exit = Some(exit);
        self.death_time = at;
    }

    /// Advances by `h` (at most the spec's `dt` for the accuracy guarantees).
    pub fn step<R: Rng + ?Sized>(&mut self, h: f64, rng: &mut R) {
        if !self.alive() {
            return;
        }
        let t0 = self.time;
        let sqrt_h = h.sqrt();
        let n: f64 = StandardNormal.sample(rng);
        let u: f64 = uniform_open(rng);
        let v: f64 = uniform_open(rng);
        match self.spec.geometry {
            Geometry::Line => self.coord += sqrt_h * n,
            Geometry::Interval {
                left,
                right,
                right_end,
            } => {
                let x0 = self.coord;
                match right_end {
                    EndCondition::Dirichlet => {
                        let x1 = x0 + sqrt_h * n;
                        self.coord = x1;
                        if u < bridge_cross(right - x0, right - x1, h) {
                            self.kill(Exit::Right, t0 + 0.5 * h);
                        }
                    }
                    EndCondition::Neumann | EndCondition::Robin { .. } => {
                        // Distance to the reflecting end with its Skorokhod regulator.
                        let d0 = right - x0;
                        let w1 = d0 - sqrt_h * n;
                        let disc = (w1 - d0).powi(2) - 2.0 * h * u.ln();
                        let min = 0.5 * (d0 + w1 - disc.sqrt());
                        let dl = (-min).max(0.0);
                        if dl > 0.0 {
                            self.touched = true;
                            self.local_time += dl;
                        }
                        self.coord = right - (w1 + dl);
                        if self.local_time > self.robin_threshold {
                            self.kill(Exit::Boundary, t0 + 0.5 * h);
                        }
                    }
                }
                if self.alive() && v < bridge_cross(x0 - left, self.coord - left, h) {
                    self.kill(Exit::Left, t0 + 0.5 * h);
                }
            }
            Geometry::Skew {
                left,
                interface,
                width,
                alpha,
                eta,
            } => {
                let z0 = self.coord;
                let a = z0.abs();
                let w = a + sqrt_h * n;
                let hit = w <= 0.0 || u < (-2.0 * a * w / h).exp();
                let y = w.abs();
                let p = alpha / (alpha + (1.0 - alpha) * eta.sqrt());
                let inner_wall = interface - left;
                let outer_wall = width / eta.sqrt();
                let wall = |z: f64| if z >= 0.0 { outer_wall } else { inner_wall };
                let z1 = if hit {
                    let c: f64 = rng.random();
                    if c < p {
                        y
                    } else {
                        -y
                    }
                } else if z0 >= 0.0 {
                    y
                } else {
                    -y
                };
                self.coord = z1;
                let cross = if !hit {
                    bridge_cross(wall(z0) - a, wall(z1) - y, h)
                } else {
                    let p0 = bridge_cross(wall(z0) - a, wall(z0), h);
                    let p1 = bridge_cross(wall(z1), wall(z1) - y, h);
                    1.0 - (1.0 - p0) * (1.0 - p1)
                };
                if v < cross {
                    let exit = if z1 >= 0.0 { Exit::Right } else { Exit::Left };
                    self.kill(exit, t0 + 0.5 * h);
                }
            }
        }
        self.time = t0 + h;
        if self.clock <= self.time && self.clock < self.death_time {
            self.exit = Some(Exit::Clock);
            self.death_time = self.clock;
        }
    }

    /// Advances to absolute time `target` with full steps of `dt` and a
    /// final partial step.
    pub fn advance_to<R: Rng + ?Sized>(&mut self, target: f64, rng: &mut R) {
        let dt = self.spec.dt;
        let remaining = target - self.time;
        if remaining <= 0.0 {
            return;
        }
        let full = (remaining / dt + 1e-9).floor() as u64;
        for _ in 0..full {
            if !self.alive() {
                return;
            }
            self.step(dt, rng);
        }
        let rest = target - self.time;
        if rest > 1e-12 * target.max(1.0) && self.alive() {
            self.step(rest, rng);
        }
    }
}

/// A recorded base path.
#[derive(Debug, Clone, Serialize)]
pub struct BasePath {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// Killing time, if the path was killed before `t_max`.
    pub zeta: Option<f64>,
    pub exit: Option<Exit>,
}

/// Simulates and records one base path (path index 0 of the base ensemble).
pub fn simulate_base_path(
    spec: &DiffusionSpec,
    x0: f64,
    t_max: f64,
    seed: u64,
) -> Result<BasePath> {
    spec.validate()?;
    check_positive("t_max", t_max)?;
    let mut rng = path_rng(seed, Ensemble::BASE, 0);
    let mut w = BaseWalker::new(spec, x0, &mut rng)?;
    let mut times = vec![0.0];
    let mut positions = vec![x0];
    let steps = (t_max / spec.dt).ceil() as u64;
    for _ in 0..steps {
        w.step(spec.dt, &mut rng);
        if !w.alive() {
            break;
        }
        times.push(w.time());
        positions.push(w.position());
    }
    Ok(BasePath {
        times,
        positions,
        zeta: (!w.alive()).then(|| w.death_time()),
        exit: w.exit(),
    })
}

/// Mean and standard error of a path functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub value: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub seed: u64,
    /// Set when the estimate is known to be biased (horizon truncation,
    /// censoring, divergence).
    pub flagged: bool,
}

impl EstimatorResult {
    pub fn from_samples(samples: &[f64], seed: u64, flagged: bool) -> Self {
        let (value, std_error) = mean_and_se(samples);
        Self {
            value,
            std_error,
            n_paths: samples.len(),
            seed,
            flagged,
        }
    }

    /// `(value - reference) / std_error`, zero if both agree exactly.
    pub fn z_score(&self, reference: f64) -> f64 {
        let d = self.value - reference;
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

type TestFn<'f> = &'f (dyn Fn(f64) -> f64 + Sync);

fn check_paths(n_paths: usize) -> Result<()> {
    if n_paths < 2 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            reason: format!("need at least 2 paths, got {n_paths}"),
        });
    }
    Ok(())
}

/// `E_x[f(X_t); t < zeta]`.
pub fn estimate_base(
    spec: &DiffusionSpec,
    f: TestFn<'_>,
    t: f64,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<EstimatorResult> {
    spec.validate()?;
    check_nonnegative("t", t)?;
    check_paths(n_paths)?;
    BaseWalker::new(spec, x0, &mut path_rng(seed, Ensemble::BASE, 0))?;
    let samples = map_paths(n_paths, |i| {
        let mut rng = path_rng(seed, Ensemble::BASE, i);
        let mut w = BaseWalker::new(spec, x0, &mut rng).expect("validated start");
        w.advance_to(t, &mut rng);
        if w.alive() {
            f(w.position())
        } else {
            0.0
        }
    });
    Ok(EstimatorResult::from_samples(&samples, seed, false))
}

/// `L_t` for one path, located within the grid step of `ds` that contains
/// the first passage; the midpoint of that step is returned. The identity
/// symbol returns `t` exactly.
fn inverse_time(
    sampler: &SubordinatorSampler,
    t: f64,
    ds: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if sampler.is_identity() {
        return Ok(t);
    }
    let mut h = 0.0;
    let mut steps = 0u64;
    while h <= t {
        if steps >= MAX_OPERATIONAL_STEPS {
            return Err(Error::PathExhausted {
                requested: t,
                max_h: h,
            });
        }
        h += sampler.increment(ds, rng);
        steps += 1;
    }
    Ok((steps as f64 - 0.5) * ds)
}

/// `E_x[f(X_{L_t}); L_t < zeta]` with independent `X` and `L`.
pub fn estimate_timechanged(
    spec: &DiffusionSpec,
    sym: &BernsteinSymbol,
    f: TestFn<'_>,
    t: f64,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<EstimatorResult> {
    spec.validate()?;
    check_nonnegative("t", t)?;
    check_paths(n_paths)?;
    let sampler = SubordinatorSampler::new(sym)?;
    BaseWalker::new(spec, x0, &mut path_rng(seed, Ensemble::BASE, 0))?;
    let samples = map_paths(n_paths, |i| -> Result<f64> {
        let mut srng = path_rng(seed, Ensemble::SUBORDINATOR, i);
        let l = inverse_time(&sampler, t, spec.dt, &mut srng)?;
        let mut rng = path_rng(seed, Ensemble::BASE, i);
        let mut w = BaseWalker::new(spec, x0, &mut rng).expect("validated start");
        w.advance_to(l, &mut rng);
        Ok(if w.alive() { f(w.position()) } else { 0.0 })
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(EstimatorResult::from_samples(&samples, seed, false))
}

/// Samples `X_{L_t}` for paths `0..n_paths`; `None` marks the cemetery.
pub fn sample_timechanged(
    spec: &DiffusionSpec,
    sym: &BernsteinSymbol,
    t: f64,
    x0: f64,
    n_paths: usize,
    seed: u64,
    base_ensemble: Ensemble,
) -> Result<Vec<Option<f64>>> {
    spec.validate()?;
    let sampler = SubordinatorSampler::new(sym)?;
    BaseWalker::new(spec, x0, &mut path_rng(seed, base_ensemble, 0))?;
    map_paths(n_paths, |i| -> Result<Option<f64>> {
        let mut srng = path_rng(seed, Ensemble::SUBORDINATOR, i);
        let l = inverse_time(&sampler, t, spec.dt, &mut srng)?;
        let mut rng = path_rng(seed, base_ensemble, i);
        let mut w = BaseWalker::new(spec, x0, &mut rng).expect("validated start");
        w.advance_to(l, &mut rng);
        Ok(w.alive().then(|| w.position()))
    })
    .into_iter()
    .collect()
}

/// `R^Phi_lambda f(x) = E_x[int_0^inf e^{-lambda t} f(X_{L_t}) dt]`.
///
/// On the operational grid `s_i = i dt`, the time spent by `L` at level
/// `s in (s_i, s_{i+1}]` contributes `(e^{-lambda H_{s_i}} - e^{-lambda H_{s_{i+1}}}) / lambda`;
/// `f(X)` is averaged over the two grid ends. Paths stop when killed or
/// once `e^{-lambda H} < 1e-6`; hitting the step cap flags the result.
pub fn estimate_potential(
    spec: &DiffusionSpec,
    sym: &BernsteinSymbol,
    f: TestFn<'_>,
    lambda: f64,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<EstimatorResult> {
    spec.validate()?;
    check_positive("lambda", lambda)?;
    check_paths(n_paths)?;
    let sampler = SubordinatorSampler::new(sym)?;
    BaseWalker::new(spec, x0, &mut path_rng(seed, Ensemble::BASE, 0))?;
    let dt = spec.dt;
    let out = map_paths(n_paths, |i| {
        let mut srng = path_rng(seed, Ensemble::SUBORDINATOR, i);
        let mut rng = path_rng(seed, Ensemble::BASE, i);
        let mut w = BaseWalker::new(spec, x0, &mut rng).expect("validated start");
        let mut h = 0.0;
        let mut decay = 1.0;
        let mut f_prev = f(x0);
        let mut acc = 0.0;
        let mut steps = 0u64;
        while decay >= POTENTIAL_CUTOFF {
            if steps >= MAX_OPERATIONAL_STEPS {
                return (acc, true);
            }
            h += sampler.increment(dt, &mut srng);
            let next = (-lambda * h).exp();
            w.step(dt, &mut rng);
            let f_next = if w.alive() { f(w.position()) } else { 0.0 };
            acc += 0.5 * (f_prev + f_next) * (decay - next) / lambda;
            decay = next;
            f_prev = f_next;
            steps += 1;
            if !w.alive() {
                break;
            }
        }
        (acc, false)
    });
    let flagged = out.iter().any(|o| o.1);
    let samples: Vec<f64> = out.into_iter().map(|o| o.0).collect();
    Ok(EstimatorResult::from_samples(&samples, seed, flagged))
}

/// `E_x[zeta^Phi]` with `zeta^Phi = H_zeta`: the base lifetime `zeta` is
/// simulated, then `H` is drawn over `[0, zeta]` in one exact increment.
/// Paths alive at the horizon are censored at `H_horizon`; more than 1%
/// censoring, or an infinite `Phi'(0)`, flags the result.
pub fn estimate_lifetime(
    spec: &DiffusionSpec,
    sym: &BernsteinSymbol,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<EstimatorResult> {
    spec.validate()?;
    check_paths(n_paths)?;
    let sampler = SubordinatorSampler::new(sym)?;
    BaseWalker::new(spec, x0, &mut path_rng(seed, Ensemble::BASE, 0))?;
    if !sym.mean().is_finite() {
        return Ok(EstimatorResult {
            value: f64::INFINITY,
            std_error: f64::INFINITY,
            n_paths,
            seed,
            flagged: true,
        });
    }
    let out = map_paths(n_paths, |i| {
        let mut rng = path_rng(seed, Ensemble::BASE, i);
        let mut w = BaseWalker::new(spec, x0, &mut rng).expect("validated start");
        w.advance_to(LIFETIME_HORIZON, &mut rng);
        let (zeta, censored) = if w.alive() {
            (LIFETIME_HORIZON, true)
        } else {
            (w.death_time(), false)
        };
        let mut srng = path_rng(seed, Ensemble::SUBORDINATOR, i);
        (sampler.increment(zeta, &mut srng), censored)
    });
    let censored = out.iter().filter(|o| o.1).count();
    let samples: Vec<f64> = out.into_iter().map(|o| o.0).collect();
    Ok(EstimatorResult::from_samples(
        &samples,
        seed,
        censored as f64 > 0.01 * n_paths as f64,
    ))
}

/// Both sides of `int e^{-lambda t} f(L_t) dt = (Phi(lambda)/lambda) int e^{-lambda H_t} f(t) dt`
/// in expectation, for `f(s) = e^{-c s}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InverseIdentityCheck {
    /// MC of `int e^{-lambda t} e^{-c L_t} dt`.
    pub lhs: EstimatorResult,
    /// `Phi(lambda)/lambda` times MC of `int e^{-lambda H_t} e^{-c t} dt`.
    pub rhs: EstimatorResult,
    /// `(1/lambda) Phi(lambda) / (c + Phi(lambda))`.
    pub closed_form: f64,
    pub z_score: f64,
}

/// Checks the inverse-subordinator potential identity for `f(s) = e^{-c s}`
/// on independent subordinator ensembles with operational step `ds`.
pub fn inverse_identity_check(
    sym: &BernsteinSymbol,
    c: f64,
    lambda: f64,
    n_paths: usize,
    seed: u64,
    ds: f64,
) -> Result<InverseIdentityCheck> {
    check_nonnegative("c", c)?;
    check_positive("lambda", lambda)?;
    check_positive("ds", ds)?;
    check_paths(n_paths)?;
    let sampler = SubordinatorSampler::new(sym)?;
    let phi = sym.eval(lambda)?;
    let scale = phi / lambda;
    let cutoff = 1e-9;
    let lhs = map_paths(n_paths, |i| {
        let mut rng = path_rng(seed, Ensemble::SUBORDINATOR, i);
        let (mut h, mut decay, mut acc, mut s) = (0.0, 1.0, 0.0, 0.0);
        // Jumps fall uniformly within a step in expectation: weight f at the midpoint.
        while decay * (-c * s).exp() > cutoff {
            h += sampler.increment(ds, &mut rng);
            let next = (-lambda * h).exp();
            acc += (-c * (s + 0.5 * ds)).exp() * (decay - next) / lambda;
            decay = next;
            s += ds;
        }
        acc
    });
    let rhs = map_paths(n_paths, |i| {
        let mut rng = path_rng(seed, Ensemble::SUBORDINATOR_ALT, i);
        let (mut h, mut s) = (0.0, 0.0);
        let mut g_prev = 1.0;
        let mut acc = 0.0;
        while g_prev > cutoff {
            h += sampler.increment(ds, &mut rng);
            s += ds;
            let g = (-lambda * h - c * s).exp();
            acc += 0.5 * ds * (g_prev + g);
            g_prev = g;
        }
        scale * acc
    });
    let lhs = EstimatorResult::from_samples(&lhs, seed, false);
    let rhs = EstimatorResult::from_samples(&rhs, seed, false);
    let se = (lhs.std_error.powi(2) + rhs.std_error.powi(2)).sqrt();
    let d = lhs.value - rhs.value;
    Ok(InverseIdentityCheck {
        lhs,
        rhs,
        closed_form: phi / (lambda * (c + phi)),
        z_score: if d == 0.0 { 0.0 } else { d / se },
    })
}

/// Result of the boundary local-time functional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalTimeResult {
    /// `E_x[int_0^inf e^{-c gamma_{L_t}} 1(L_t < tau_l) dt]`.
    pub timechanged: EstimatorResult,
    /// `Phi'(0) E_x[int_0^{tau_l} e^{-c gamma_s} ds]`.
    pub scaled_base: EstimatorResult,
    /// Shell half-width used for the local time.
    pub delta: f64,
}

/// Local-time functional for a reflecting interval with the default shell
/// width `delta = 4 sqrt(dt)`.
pub fn local_time_functional(
    spec: &DiffusionSpec,
    sym: &BernsteinSymbol,
    c: f64,
    x0: f64,
    n_paths: usize,
    seed: u64,
) -> Result<LocalTimeResult> {
    local_time_functional_with_shell(spec, sym, c, x0, n_paths, seed, 4.0 * spec.dt.sqrt())
}

/// Boundary local time at the reflecting end is estimated by the shell
/// occupation `gamma ~ occupation{dist < delta} / (2 delta)`; the shells
/// `delta` and `2 delta` are combined by Richardson extrapolation. `c = inf`
/// is absorption at the reflecting end.
pub fn local_time_functional_with_shell(
    spec: &DiffusionSpec,
    sym: &BernsteinSymbol,
    c: f64,
    x0: f64,
    n_paths: usize,
    seed: u64,
    delta: f64,
) -> Result<LocalTimeResult> {
    spec.validate()?;
    check_paths(n_paths)?;
    if c.is_nan() || c < 0.0 {
        return Err(Error::Domain {
            name: "c",
            value: c,
            domain: "[0, inf]",
        });
    }
    let right = match spec.geometry {
        Geometry::Interval {
            right,
            right_end: EndCondition::Neumann,
            ..
        } => right,
        _ => {
            return Err(Error::InvalidParameter {
                name: "geometry",
                reason: "the local-time functional needs an interval with a reflecting right end"
                    .into(),
            })
        }
    };
    let dt = spec.dt;
    if !(delta > 3.0 * dt.sqrt()) {
        return Err(Error::ShellWidth { delta, dt });
    }
    let mean = sym.mean();
    if !mean.is_finite() {
        return Err(Error::Unsupported(format!(
            "Phi'(0) is infinite for {}",
            sym.label()
        )));
    }
    let sampler = SubordinatorSampler::new(sym)?;
    BaseWalker::new(spec, x0, &mut path_rng(seed, Ensemble::BASE, 0))?;
    let out = map_paths(n_paths, |i| {
        let mut rng = path_rng(seed, Ensemble::BASE, i);
        let mut srng = path_rng(seed, Ensemble::SUBORDINATOR, i);
        let mut w = BaseWalker::new(spec, x0, &mut rng).expect("validated start");
        let weight = |gamma: f64, touched: bool| {
            if c.is_infinite() {
                if touched {
                    0.0
                } else {
                    1.0
                }
            } else if c == 0.0 {
                1.0
            } else {
                (-c * gamma).exp()
            }
        };
        // (shell delta, shell 2 delta) occupations and accumulators.
        let mut occ = [0.0f64; 2];
        let mut in_prev = [(right - x0) < delta, (right - x0) < 2.0 * delta];
        let mut wprev = [1.0f64; 2];
        let mut tc = [0.0f64; 2];
        let mut base = [0.0f64; 2];
        let mut steps = 0u64;
        while w.alive() && w.time() < LIFETIME_HORIZON && steps < MAX_OPERATIONAL_STEPS {
            w.step(dt, &mut rng);
            let dh = sampler.increment(dt, &mut srng);
            steps += 1;
            let dist = right - w.position();
            for k in 0..2 {
                let width = delta * (k + 1) as f64;
                let inside = dist < width;
                occ[k] +=
                    0.5 * dt * (f64::from(u8::from(in_prev[k])) + f64::from(u8::from(inside)));
                in_prev[k] = inside;
                let wnext = if w.alive() {
                    weight(occ[k] / (2.0 * width), w.touched_boundary())
                } else {
                    0.0
                };
                let avg = 0.5 * (wprev[k] + wnext);
                tc[k] += dh * avg;
                base[k] += dt * avg;
                wprev[k] = wnext;
            }
        }
        (
            2.0 * tc[0] - tc[1],
            mean * (2.0 * base[0] - base[1]),
            w.alive(),
        )
    });
    let censored = out.iter().filter(|o| o.2).count() as f64 > 0.01 * n_paths as f64;
    let tc: Vec<f64> = out.iter().map(|o| o.0).collect();
    let base: Vec<f64> = out.iter().map(|o| o.1).collect();
    Ok(LocalTimeResult {
        timechanged: EstimatorResult::from_samples(&tc, seed, censored),
        scaled_base: EstimatorResult::from_samples(&base, seed, censored),
        delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{build_limit_generator, Regime};
    use crate::timefrac;
    use std::f64::consts::PI;

    fn dirichlet_interval(dt: f64) -> DiffusionSpec {
        DiffusionSpec::new(
            Geometry::Interval {
                left: 0.0,
                right: PI,
                right_end: EndCondition::Dirichlet,
            },
            dt,
        )
        .unwrap()
    }

    fn exit_right_fraction(spec: &DiffusionSpec, n: usize, seed: u64) -> (f64, f64) {
        let out = map_paths(n, |i| {
            let mut rng = path_rng(seed, Ensemble::BASE, i);
            let mut w = BaseWalker::new(spec, PI / 2.0, &mut rng).unwrap();
            while w.alive() {
                w.step(spec.dt, &mut rng);
            }
            f64::from(u8::from(w.exit() == Some(Exit::Right)))
        });
        mean_and_se(&out)
    }

    #[test]
    fn symmetric_exit() {
        let spec = dirichlet_interval(1e-3);
        let (p, se) = exit_right_fraction(&spec, 20_000, 1);
        assert!((p - 0.5).abs() < 3.0 * se, "{p} ± {se}");
    }

    #[test]
    fn unit_skew_matches_plain_brownian_motion() {
        // alpha = 1/2, eta = 1: no interface at all.
        let spec = DiffusionSpec::new(
            Geometry::Skew {
                left: 0.0,
                interface: 2.0,
                width: PI - 2.0,
                alpha: 0.5,
                eta: 1.0,
            },
            1e-3,
        )
        .unwrap();
        let (p, se) = exit_right_fraction(&spec, 20_000, 2);
        assert!((p - 0.5).abs() < 3.0 * se, "{p} ± {se}");
        let r =
            estimate_lifetime(&spec, &BernsteinSymbol::identity(), PI / 2.0, 20_000, 3).unwrap();
        let exact = PI * PI / 4.0;
        assert!((r.value - exact).abs() < 3.0 * r.std_error + 5e-3, "{r:?}");
    }

    #[test]
    fn skew_exit_probability_matches_scale_function() {
        // Harmonic u with u(l) = 0, u(r) = 1 and flux (1 - alpha) u'(ell-) = alpha u'(ell+).
        let (alpha, eta, ell, width) = (0.3, 0.25, 1.0, 0.5);
        let spec = DiffusionSpec::new(
            Geometry::Skew {
                left: 0.0,
                interface: ell,
                width,
                alpha,
                eta,
            },
            1e-4,
        )
        .unwrap();
        // u = s x on (0, ell), u = s ell + s (1 - alpha)/alpha (x - ell) on the layer.
        let slope = 1.0 / (ell + (1.0 - alpha) / alpha * width);
        let x0 = 0.8;
        let exact = slope * x0;
        let out = map_paths(20_000, |i| {
            let mut rng = path_rng(4, Ensemble::BASE, i);
            let mut w = BaseWalker::new(&spec, x0, &mut rng).unwrap();
            while w.alive() {
                w.step(spec.dt, &mut rng);
            }
            f64::from(u8::from(w.exit() == Some(Exit::Right)))
        });
        let (p, se) = mean_and_se(&out);
        assert!((p - exact).abs() < 3.0 * se + 5e-3, "{p} ± {se} vs {exact}");
    }

    #[test]
    fn skew_time_step_invariant() {
        let g = Geometry::Skew {
            left: 0.0,
            interface: 1.0,
            width: 0.01,
            alpha: 0.5,
            eta: 1.0,
        };
        assert!(matches!(
            DiffusionSpec::new(g, 1e-4),
            Err(Error::TimeStep { .. })
        ));
        assert!(DiffusionSpec::new(g, 1e-6).is_ok());
    }

    #[test]
    fn identity_timechange_is_bit_identical() {
        let spec = dirichlet_interval(1e-3);
        let f = |x: f64| x.sin();
        let a = estimate_base(&spec, &f, 0.7, 1.0, 4000, 9).unwrap();
        let b = estimate_timechanged(&spec, &BernsteinSymbol::identity(), &f, 0.7, 1.0, 4000, 9)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeds_are_thread_independent() {
        let spec = dirichlet_interval(1e-3);
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let f = |x: f64| x.sin();
        let a = estimate_timechanged(&spec, &s, &f, 0.5, 1.0, 2000, 5).unwrap();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap();
        let b = pool
            .install(|| estimate_timechanged(&spec, &s, &f, 0.5, 1.0, 2000, 5))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn timechanged_matches_spectral_solution() {
        let g = build_limit_generator(0.0, PI, Regime::Dirichlet, 400).unwrap();
        let spec = dirichlet_interval(1e-3);
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let phi1 = |x: f64| (2.0 / PI).sqrt() * x.sin();
        let f = g.sample(phi1);
        let sol = timefrac::solve(&g, &s, &f, &[1.0], None).unwrap();
        let exact = sol.at(0)[199];
        let r = estimate_timechanged(&spec, &s, &phi1, 1.0, PI / 2.0, 40_000, 21).unwrap();
        assert!(
            (r.value - exact).abs() < 3.0 * r.std_error,
            "{r:?} vs {exact}"
        );
    }

    #[test]
    fn potential_identity_and_exponential_lifetime() {
        let spec = dirichlet_interval(2e-3);
        let phi1 = |x: f64| (2.0 / PI).sqrt() * x.sin();
        let r = estimate_potential(
            &spec,
            &BernsteinSymbol::identity(),
            &phi1,
            1.0,
            PI / 2.0,
            20_000,
            3,
        )
        .unwrap();
        let exact = phi1(PI / 2.0) / 1.5;
        assert!(
            (r.value - exact).abs() < 3.0 * r.std_error + 2e-3,
            "{r:?} vs {exact}"
        );

        let line = DiffusionSpec::new(Geometry::Line, 1e-2)
            .unwrap()
            .with_kill_rate(1.0)
            .unwrap();
        let s = BernsteinSymbol::stable(0.5).unwrap();
        let one = |_: f64| 1.0;
        let r = estimate_potential(&line, &s, &one, 4.0, 0.0, 20_000, 8).unwrap();
        let exact = timefrac::exp_lifetime_potential(&s, 1.0, 4.0).unwrap();
        assert!(
            (r.value - exact).abs() < 3.0 * r.std_error + 1e-3,
            "{r:?} vs {exact}"
        );
    }

    #[test]
    fn lifetimes() {
        let spec = dirichlet_interval(1e-3);
        let x0 = PI / 2.0;
        let base = x0 * (PI - x0);
        let g = BernsteinSymbol::gamma(1.0, 2.0).unwrap();
        let r = estimate_lifetime(&spec, &g, x0, 20_000, 4).unwrap();
        assert!(!r.flagged);
        assert!(
            (r.value - 0.5 * base).abs() < 3.0 * r.std_error + 5e-3,
            "{r:?}"
        );
        let st =
            estimate_lifetime(&spec, &BernsteinSymbol::stable(0.5).unwrap(), x0, 100, 4).unwrap();
        assert!(st.value.is_infinite() && st.flagged);
    }

    #[test]
    fn inverse_identity_small() {
        let s = BernsteinSymbol::gamma(1.0, 1.0).unwrap();
        let r = inverse_identity_check(&s, 1.0, 2.0, 20_000, 1, 2e-3).unwrap();
        assert!(r.z_score.abs() < 4.0, "{r:?}");
        assert!((r.lhs.value - r.closed_form).abs() < 1e-2 * r.closed_form);
    }

    #[test]
    fn robin_end_matches_ode() {
        // E_x[zeta] for 1/2 Delta on (0, pi), Dirichlet at 0, u' + c u = 0 at pi.
        let c = 1.0;
        let spec = DiffusionSpec::new(
            Geometry::Interval {
                left: 0.0,
                right: PI,
                right_end: EndCondition::Robin { c },
            },
            1e-3,
        )
        .unwrap();
        let a = (2.0 * PI + c * PI * PI) / (1.0 + c * PI);
        let x0 = PI / 2.0;
        let exact = -x0 * x0 + a * x0;
        let r = estimate_lifetime(&spec, &BernsteinSymbol::identity(), x0, 20_000, 6).unwrap();
        assert!(
            (r.value - exact).abs() < 3.0 * r.std_error + 1e-2,
            "{r:?} vs {exact}"
        );
    }

    #[test]
    fn local_time_functional_limits() {
        let spec = DiffusionSpec::new(
            Geometry::Interval {
                left: 0.0,
                right: PI,
                right_end: EndCondition::Neumann,
            },
            1e-3,
        )
        .unwrap();
        let s = BernsteinSymbol::gamma(1.0, 1.0).unwrap();
        let x0 = PI / 2.0;
        let n = 2000;
        let r0 = local_time_functional(&spec, &s, 0.0, x0, n, 2).unwrap();
        let exact0 = 3.0 * PI * PI / 4.0;
        assert!((r0.scaled_base.value - exact0).abs() < 3.0 * r0.scaled_base.std_error + 0.02);
        assert!((r0.timechanged.value - exact0).abs() < 3.0 * r0.timechanged.std_error + 0.02);
        let rinf = local_time_functional(&spec, &s, f64::INFINITY, x0, n, 2).unwrap();
        let exact_inf = x0 * (PI - x0);
        assert!(
            (rinf.scaled_base.value - exact_inf).abs() < 3.0 * rinf.scaled_base.std_error + 0.02
        );
        let mut prev = r0.timechanged.value;
        for c in [0.5, 1.0, 2.0] {
            let r = local_time_functional(&spec, &s, c, x0, n, 2).unwrap();
            let a = (2.0 * PI + c * PI * PI) / (1.0 + c * PI);
            let exact = -x0 * x0 + a * x0;
            assert!(
                (r.scaled_base.value - exact).abs() < 3.0 * r.scaled_base.std_error + 0.1,
                "c={c}: {:?} vs {exact}",
                r.scaled_base
            );
            assert!(r.timechanged.value < prev && r.timechanged.value > rinf.timechanged.value);
            prev = r.timechanged.value;
        }
        assert!(matches!(
            local_time_functional_with_shell(&spec, &s, 1.0, x0, n, 2, 0.05),
            Err(Error::ShellWidth { .. })
        ));
    }
}
