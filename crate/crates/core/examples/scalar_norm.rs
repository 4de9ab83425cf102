//! Norm of dx = (ax + bu)dt + nx dw, y = cx, against its closed form.

use stochinf::{stoch_hinf_norm, NormOptions, StochasticSystem};

fn main() {
    let (a, n, b, c): (f64, f64, f64, f64) = (-1.0, 1.0, 1.0, 1.0);
    let sys = StochasticSystem::scalar(a, n, b, c, 0.0);
    let rep = stoch_hinf_norm(&sys, &NormOptions::with_tol(1e-8)).expect("norm");

    let exact = 2.0 * (b * c).abs() / (-2.0 * a - n * n);
    println!("deterministic H-inf norm  {:.10}", rep.det_hinf);
    println!("stochastic H-inf norm     {:.10}", rep.norm);
    println!("closed form               {exact:.10}");
    println!("bracket                   [{:.12}, {:.12}]", rep.gamma_lo, rep.gamma_hi);
    for e in &rep.bracket_history {
        println!("  gamma {:.10}  {:<13} {:>2} Newton steps", e.gamma, e.status.as_str(), e.newton_iters);
    }
}
