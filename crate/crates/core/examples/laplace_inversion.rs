//! Inverts E[exp(-mu L_t)] = L^{-1}[Phi(lambda) / (lambda (Phi(lambda) + mu))]
//! with Gaver-Stehfest and Talbot, and checks the stable-1/2 case against
//! exp(mu^2 t) erfc(mu sqrt t).

use statrs::function::erf::erfc;
use timechange::bernstein::BernsteinSymbol;
use timechange::invlap::{l_laplace_weight_estimate, InversionConfig};

fn main() -> timechange::Result<()> {
    let sym = BernsteinSymbol::stable(0.5)?;
    let cfg = InversionConfig::default();
    println!(
        "{:>5} {:>5} {:>14} {:>14} {:>14} {:>9}",
        "mu", "t", "stehfest", "talbot", "exact", "flagged"
    );
    for mu in [0.5f64, 2.0] {
        for t in [0.1f64, 1.0, 2.0] {
            let w = l_laplace_weight_estimate(&sym, mu, t, &cfg)?;
            let exact = (mu * mu * t).exp() * erfc(mu * t.sqrt());
            println!(
                "{mu:>5} {t:>5} {:>14.10} {:>14.10} {exact:>14.10} {:>9}",
                w.stehfest.unwrap_or(f64::NAN),
                w.talbot.unwrap_or(f64::NAN),
                w.flagged
            );
        }
    }
    Ok(())
}
