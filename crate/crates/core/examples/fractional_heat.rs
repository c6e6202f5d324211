//! Time-fractional heat equation on (0, pi) with Dirichlet ends: the first
//! sine mode decays like E[exp(-L_t / 2)] instead of exp(-t / 2).

use std::f64::consts::PI;

use timechange::bernstein::BernsteinSymbol;
use timechange::generators::{build_limit_generator, Regime};
use timechange::timefrac::{residual_check, solve};

fn main() -> timechange::Result<()> {
    let g = build_limit_generator(0.0, PI, Regime::Dirichlet, 400)?;
    let f = g.sample(f64::sin);
    let mid = g.node_index(PI / 2.0).expect("node at pi/2");
    let ts = [0.1, 0.5, 1.0, 2.0, 5.0];
    let classical = solve(&g, &BernsteinSymbol::identity(), &f, &ts, None)?;
    let stable = solve(&g, &BernsteinSymbol::stable(0.5)?, &f, &ts, None)?;
    println!("{:>5} {:>12} {:>12}", "t", "classical", "stable 1/2");
    for (i, t) in ts.iter().enumerate() {
        println!(
            "{t:>5} {:>12.6} {:>12.6}",
            classical.at(i)[mid],
            stable.at(i)[mid]
        );
    }
    let res = residual_check(&g, &BernsteinSymbol::gamma(1.0, 1.0)?, &f, &[0.5, 1.0, 2.0])?;
    println!("potential residual for gamma(1,1): {res:.1e}");
    Ok(())
}
