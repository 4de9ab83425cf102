//! Mean-square stability: power-method test vs the Kronecker abscissa, as
//! the noise intensity sweeps through the stability boundary.

use stochinf::linalg::Matrix;
use stochinf::operators::{ms_stable_oracle, stability_report, GLyapOperator, POWER_MAXIT, POWER_TOL};
use stochinf::random_system;

fn main() {
    let sys = random_system(6, 1, 1, 3).expect("system");
    println!("{:>6} {:>10} {:>12} {:>7} {:>7}", "scale", "rho", "kron alpha", "fast", "oracle");
    for i in 0..=12 {
        let s = 0.5 + 0.25 * i as f64;
        let nx: Vec<Matrix> = sys.nx.iter().map(|n| n * s).collect();
        let rep = stability_report(&sys.a, &nx, POWER_TOL, POWER_MAXIT).expect("report");
        let alpha = GLyapOperator::new(sys.a.clone(), nx.clone())
            .and_then(|op| op.kron_abscissa())
            .expect("abscissa");
        println!(
            "{s:>6.2} {:>10.6} {alpha:>12.5} {:>7} {:>7}",
            rep.power.map_or(f64::NAN, |p| p.rho),
            rep.stable,
            ms_stable_oracle(&sys.a, &nx).expect("oracle")
        );
    }
}
