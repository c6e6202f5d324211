//! Elastic boundary functional E_x int e^{-c gamma(L_t)} dt for reflecting
//! Brownian motion on (0, pi), compared with Phi'(0) times the ODE solution.

use std::f64::consts::PI;

use timechange::bernstein::BernsteinSymbol;
use timechange::montecarlo::{local_time_functional, DiffusionSpec, EndCondition, Geometry};

fn main() -> timechange::Result<()> {
    let spec = DiffusionSpec::new(
        Geometry::Interval {
            left: 0.0,
            right: PI,
            right_end: EndCondition::Neumann,
        },
        1e-3,
    )?;
    let sym = BernsteinSymbol::gamma(1.0, 1.0)?;
    let x = PI / 2.0;
    for c in [0.0, 1.0, f64::INFINITY] {
        let r = local_time_functional(&spec, &sym, c, x, 2000, 1)?;
        // u''/2 = -1, u(0) = 0, u'(pi) + c u(pi) = 0.
        let exact = if c.is_infinite() {
            x * (PI - x)
        } else {
            -x * x + x * (2.0 * PI + c * PI * PI) / (1.0 + c * PI)
        };
        println!(
            "c = {c:>4}: time-changed {:.3} +- {:.3}, scaled base {:.3} +- {:.3}, ode {:.3}",
            r.timechanged.value,
            r.timechanged.std_error,
            r.scaled_base.value,
            r.scaled_base.std_error,
            sym.mean() * exact
        );
    }
    Ok(())
}
