//! Adaptive Gauss-Kronrod (7/15) quadrature with global bisection.
//!
//! The Levy-measure integrals in [`crate::bernstein`] have integrable
//! singularities at the origin and slowly decaying tails, so every caller
//! maps them onto a finite or semi-infinite interval first; this module only
//! handles the adaptive refinement.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and subdivision budget for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-12,
            max_intervals: 4000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK[..7].iter().zip(WGK[..7].iter()).enumerate() {
        let dx = half * x;
        let s = f(center - dx) + f(center + dx);
        kronrod += w * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Segment { a, b, value, error }
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let first = kronrod(&f, a, b);
    let mut total = first.value;
    let mut err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    while err > cfg.abs_tol.max(cfg.rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(Error::Quadrature {
                at: 0.5 * (a + b),
                estimate: err,
            });
        }
        if heap.len() >= cfg.max_intervals {
            let worst = heap.peek().map(|s| 0.5 * (s.a + s.b)).unwrap_or(a);
            return Err(Error::Quadrature {
                at: worst,
                estimate: err,
            });
        }
        let worst = heap.pop().expect("heap is never empty here");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval collapsed to machine resolution; accept what we have.
            heap.push(worst);
            break;
        }
        let left = kronrod(&f, worst.a, mid);
        let right = kronrod(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed accumulated cancellation from the running updates.
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(Estimate { value, error })
}

/// Integrates `f` over `[a, inf)` through the map `x = a + u / (1 - u)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    cfg: &QuadConfig,
) -> Result<Estimate> {
    let mapped = |u: f64| {
        if u >= 1.0 {
            return 0.0;
        }
        let one_minus = 1.0 - u;
        let x = a + u / one_minus;
        let v = f(x) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(mapped, 0.0, 1.0, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let est = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, &QuadConfig::default()).unwrap();
        assert!((est.value - (64.0 / 6.0 - 4.0)).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        // int_0^1 x^{-1/2} dx = 2
        let est = integrate(|x| x.powf(-0.5), 0.0, 1.0, &QuadConfig::default()).unwrap();
        assert!((est.value - 2.0).abs() < 1e-8, "{}", est.value);
    }

    #[test]
    fn semi_infinite_exponential() {
        let est = integrate_semi_infinite(|x| (-x).exp(), 0.0, &QuadConfig::default()).unwrap();
        assert!((est.value - 1.0).abs() < 1e-11);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let cfg = QuadConfig {
            abs_tol: 1e-15,
            rel_tol: 0.0,
            max_intervals: 3,
        };
        let r = integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &cfg);
        assert!(matches!(r, Err(Error::Quadrature { .. })));
    }
}
