//! Finite-volume generators: a Robin limit on (0, pi) and a skew-interface
//! generator with a thin layer, with their spectra and energy identity.

use std::f64::consts::PI;

use timechange::generators::{build_limit_generator, build_skew_generator_graded, Regime};

fn main() -> timechange::Result<()> {
    let robin = build_limit_generator(0.0, PI, Regime::Robin { c: 1.0 }, 400)?;
    let spec = robin.spectral_decompose()?;
    println!("robin(1) leading eigenvalues: {:.5?}", &spec.values[..4]);

    let skew = build_skew_generator_graded(0.0, PI, PI + 0.05, 0.05 / 1.05, 0.02, 400, 16)?;
    let u = skew.sample(|x| x.sin().abs());
    let au = skew.apply(&u);
    println!(
        "skew: {} unknowns, symmetry residual {:.1e}, -<Au,u> = {:.6}, energy = {:.6}",
        skew.len(),
        skew.symmetry_residual(),
        -skew.inner(&au, &u),
        skew.energy(&u)
    );
    let r = skew.resolvent_apply(1.0, &skew.sample(|_| 1.0))?;
    println!("skew resolvent of 1 at pi/2: {:.6}", r[skew.len() / 2]);
    Ok(())
}
