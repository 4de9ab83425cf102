//! Random systems: deterministic lower bound, stochastic norm and the
//! noise-free comparison.

use stochinf::linalg::Matrix;
use stochinf::{random_system, stoch_hinf_norm, NormOptions, StochasticSystem};

fn main() {
    println!("{:>4} {:>3} {:>10} {:>10} {:>10}", "seed", "n", "det", "norm", "N = 0");
    for seed in 0..10u64 {
        let n = 3 + seed as usize % 6;
        let sys = random_system(n, 2, 2, seed).expect("system");
        let rep = stoch_hinf_norm(&sys, &NormOptions::default()).expect("norm");
        let quiet = StochasticSystem::basic(sys.a.clone(), Matrix::zeros(n, n), sys.b.clone(), sys.c.clone(), sys.d.clone())
            .expect("system");
        let quiet_norm = stoch_hinf_norm(&quiet, &NormOptions::default()).expect("norm").norm;
        println!("{seed:>4} {n:>3} {:>10.5} {:>10.5} {quiet_norm:>10.5}", rep.det_hinf, rep.norm);
    }
}
