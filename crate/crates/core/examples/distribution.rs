//! Two-sample KS distance between the time-changed skew diffusion and its
//! Robin limit, with killed-mass z-scores.

use std::f64::consts::PI;

use timechange::bernstein::BernsteinSymbol;
use timechange::mosco::{
    distributional_check, limit_diffusion_spec, skew_diffusion_specs, SkewSchedule,
};

fn main() -> timechange::Result<()> {
    let sym = BernsteinSymbol::stable(0.5)?;
    let schedule = SkewSchedule::robin(1.0);
    let specs = skew_diffusion_specs(&schedule, &[4, 16, 64], PI, 1e-3)?;
    let limit = limit_diffusion_spec(schedule.regime()?, PI, 1e-3)?;
    let rows = distributional_check(&specs, &limit, &sym, &[0.25, 1.0], PI / 2.0, 4000, 1)?;
    println!(
        "{:>4} {:>5} {:>8} {:>8} {:>8} {:>8} {:>7}",
        "n", "t", "KS", "band", "killed", "limit", "z"
    );
    for r in rows {
        println!(
            "{:>4} {:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>7.2}",
            r.n, r.t, r.ks_distance, r.null_band, r.killed_sequence, r.killed_limit, r.killed_z
        );
    }
    Ok(())
}
