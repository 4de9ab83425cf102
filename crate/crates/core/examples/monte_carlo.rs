//! Simulated gain of a few inputs vs the computed norm.

use nalgebra::DVector;
use stochinf::{mc_norm_lower_bound, stoch_hinf_norm, NormOptions, StochasticSystem};

fn main() {
    let sys = StochasticSystem::scalar(-1.0, 1.0, 1.0, 1.0, 0.0);
    let norm = stoch_hinf_norm(&sys, &NormOptions::default()).expect("norm").norm;
    println!("norm {norm:.4}");
    for (name, width) in [("pulse", 1.0), ("step 10", 10.0), ("step 40", 40.0)] {
        let est = mc_norm_lower_bound(
            &sys,
            |t| DVector::from_element(1, if t < width { 1.0 } else { 0.0 }),
            width + 15.0,
            0.005,
            4000,
            1,
        )
        .expect("simulation");
        println!("{name:<8} gain {:.4} +- {:.4}", est.estimate, est.std_error);
    }
}
