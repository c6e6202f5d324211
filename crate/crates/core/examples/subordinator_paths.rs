//! Samples subordinator paths and reads off the inverse L_t, then compares
//! the empirical law of L_t with the Laplace-inversion value.

use timechange::bernstein::BernsteinSymbol;
use timechange::invlap::l_laplace_weight;
use timechange::rng::{map_paths, path_rng, Ensemble};
use timechange::subpaths::{invert_path, sample_inverse_at, sample_path, SubordinatorSampler};

fn main() -> timechange::Result<()> {
    let sym = BernsteinSymbol::stable(0.5)?;
    let path = sample_path(&sym, 10.0, 1e-3, 42)?;
    for t in [0.25, 1.0, 4.0] {
        let v = invert_path(&path, t)?;
        println!("single path: L_{t} = {:.4}", v.l_value);
    }

    // E[exp(-mu L_t)] by Monte Carlo against the inverted transform.
    let sampler = SubordinatorSampler::new(&sym)?;
    let (t, mu, n) = (1.0, 1.0, 20_000);
    let samples = map_paths(n, |i| {
        let mut rng = path_rng(7, Ensemble::SUBORDINATOR, i);
        sample_inverse_at(&sampler, t, 1e-3, 10_000_000, &mut rng)
    });
    let samples = samples
        .into_iter()
        .collect::<timechange::Result<Vec<f64>>>()?;
    let mc = samples.iter().map(|l| (-mu * l).exp()).sum::<f64>() / n as f64;
    println!(
        "E exp(-L_1): Monte Carlo {mc:.4}, inversion {:.4}",
        l_laplace_weight(&sym, mu, t)?
    );
    Ok(())
}
