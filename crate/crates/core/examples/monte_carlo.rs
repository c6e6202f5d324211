//! Monte Carlo of the time-changed killed Brownian motion X(L_t) against the
//! spectral solution: transition expectation, potential and mean lifetime.

use std::f64::consts::PI;

use timechange::bernstein::BernsteinSymbol;
use timechange::generators::{build_limit_generator, Regime};
use timechange::montecarlo::{
    estimate_lifetime, estimate_potential, estimate_timechanged, DiffusionSpec, EndCondition,
    Geometry,
};
use timechange::timefrac::{lifetime_mean, potential, solve};

fn main() -> timechange::Result<()> {
    let spec = DiffusionSpec::new(
        Geometry::Interval {
            left: 0.0,
            right: PI,
            right_end: EndCondition::Dirichlet,
        },
        2e-3,
    )?;
    let g = build_limit_generator(0.0, PI, Regime::Dirichlet, 400)?;
    let sym = BernsteinSymbol::gamma(1.0, 1.0)?;
    let x = PI / 2.0;
    let k = g.node_index(x).expect("node");
    let f = g.sample(f64::sin);

    let u = solve(&g, &sym, &f, &[1.0], None)?.at(0)[k];
    let mc = estimate_timechanged(&spec, &sym, &f64::sin, 1.0, x, 20_000, 1)?;
    println!(
        "E sin X(L_1):   spectral {u:.5}, MC {:.5} +- {:.5}",
        mc.value, mc.std_error
    );

    let p = potential(&g, &sym, &f, 1.0)?[k];
    let mc = estimate_potential(&spec, &sym, &f64::sin, 1.0, x, 20_000, 2)?;
    println!(
        "1-potential:    spectral {p:.5}, MC {:.5} +- {:.5}",
        mc.value, mc.std_error
    );

    let m = lifetime_mean(&g, &sym, x)?;
    let mc = estimate_lifetime(&spec, &sym, x, 20_000, 3)?;
    println!(
        "mean lifetime:  spectral {m:.5}, MC {:.5} +- {:.5}",
        mc.value, mc.std_error
    );
    Ok(())
}
