//! Skew-interface forms converging to Neumann, Robin and Dirichlet limits:
//! plain and time-changed resolvent and semigroup errors over n.

use timechange::bernstein::BernsteinSymbol;
use timechange::mosco::{
    default_dictionary, default_ns, full_convergence, FormSequence, HarnessConfig, SkewMesh,
    SkewSchedule,
};

fn main() -> timechange::Result<()> {
    let sym = BernsteinSymbol::stable(0.5)?;
    let cfg = HarnessConfig::default_for(0.1);
    for (name, schedule) in [
        ("neumann", SkewSchedule::neumann()),
        ("robin(1)", SkewSchedule::robin(1.0)),
        ("dirichlet", SkewSchedule::dirichlet()),
    ] {
        let seq = FormSequence::skew(&schedule, &default_ns(), SkewMesh::default())?;
        let dict = default_dictionary(&seq.limit)?;
        let report = full_convergence(&seq, &sym, &dict, &cfg)?;
        println!("{name}");
        println!(
            "  {:>4} {:>10} {:>10} {:>10} {:>10}",
            "n", "resolvent", "semigroup", "tc resolv", "tc semigr"
        );
        for r in &report.rows {
            println!(
                "  {:>4} {:>10.5} {:>10.5} {:>10.5} {:>10.5}",
                r.n,
                r.resolvent_err.unwrap_or(f64::NAN),
                r.semigroup_err.unwrap_or(f64::NAN),
                r.tc_resolvent_err.unwrap_or(f64::NAN),
                r.tc_semigroup_err.unwrap_or(f64::NAN)
            );
        }
        println!(
            "  verdicts: plain {:?}, time-changed {:?}",
            report.plain_verdict, report.timechanged_verdict
        );
    }
    Ok(())
}
