//! Laplace exponents of common subordinators, their means, and the agreement
//! between closed forms and Levy-triplet quadrature.

use timechange::bernstein::{eval_triplet_vs_closed, BernsteinSymbol, LevyTriplet};

fn main() -> timechange::Result<()> {
    let symbols = [
        BernsteinSymbol::stable(0.5)?,
        BernsteinSymbol::gamma(1.0, 1.0)?,
        BernsteinSymbol::inverse_gaussian(1.0, 1.0)?,
        BernsteinSymbol::generalized_stable(0.5, 1.0)?,
    ];
    let grid = [0.1, 1.0, 10.0];
    println!(
        "{:<36} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "symbol", "0.1", "1", "10", "mean", "quad err"
    );
    for s in &symbols {
        let vals: Vec<f64> = grid
            .iter()
            .map(|&l| s.eval(l))
            .collect::<timechange::Result<_>>()?;
        println!(
            "{:<36} {:>10.6} {:>10.6} {:>10.6} {:>10.4} {:>10.1e}",
            s.label(),
            vals[0],
            vals[1],
            vals[2],
            s.mean(),
            eval_triplet_vs_closed(s, &grid)?
        );
    }

    // A user-supplied Levy density: tempered stable with drift 0.1.
    let density = std::sync::Arc::new(|z: f64| z.powf(-1.5) * (-z).exp());
    let custom = BernsteinSymbol::from_triplet(LevyTriplet::new(0.0, 0.1, Some(density))?)?;
    println!(
        "{:<36} {:>10.6} {:>10.6} {:>10.6}",
        custom.label(),
        custom.eval(0.1)?,
        custom.eval(1.0)?,
        custom.eval(10.0)?
    );
    Ok(())
}
