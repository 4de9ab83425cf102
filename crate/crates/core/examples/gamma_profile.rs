//! Spectral radius and abscissa of the Riccati derivative at the
//! stabilizing solution, for gamma from just above the norm up to 6x.
//! Prints CSV.

use stochinf::hinf::gamma_grid;
use stochinf::{heat_system, profile, stoch_hinf_norm, NewtonOptions, NormOptions};

fn main() {
    let sys = heat_system(5).expect("heat system");
    let norm = stoch_hinf_norm(&sys, &NormOptions::with_tol(1e-6)).expect("norm").norm;
    eprintln!("norm = {norm:.6}");
    let pts = profile(&sys, &gamma_grid(norm + 1e-3, 6.0 * norm, 30), &NewtonOptions::default()).expect("profile");
    println!("gamma,rho,alpha,status");
    for p in pts {
        println!("{:.6},{:.6},{:.6},{}", p.gamma, p.rho, p.alpha, p.status);
    }
}
