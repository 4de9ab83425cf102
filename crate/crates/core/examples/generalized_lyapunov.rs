//! A'X + XA + N'XN = Q by fixed-point sweeps and by GMRES, for noise
//! levels approaching the stability limit.

use stochinf::glyap::{solve_accelerated, solve_fixed_point};
use stochinf::linalg::SymMatrix;
use stochinf::operators::{spectral_radius_power, GLyapOperator, POWER_MAXIT, POWER_TOL};
use stochinf::random_system;

fn main() {
    let sys = random_system(10, 1, 1, 5).expect("system");
    let q = SymMatrix::identity(10);
    println!("{:>8} {:>14} {:>14}", "rho", "fixed point", "gmres");
    for s in [1.0, 1.3, 1.4, 1.414] {
        let nx: Vec<_> = sys.nx.iter().map(|n| n * s).collect();
        let rho = spectral_radius_power(&sys.a, &nx, POWER_TOL, POWER_MAXIT).expect("power").rho;
        let op = GLyapOperator::new(sys.a.clone(), nx).expect("operator");
        let fp = solve_fixed_point(&op, &q, 1e-11, 5000)
            .map(|s| format!("{} sweeps", s.iterations))
            .unwrap_or_else(|e| format!("{e}").chars().take(14).collect());
        let kr = solve_accelerated(&op, &q, 1e-11, 5000).map(|s| format!("{} steps", s.iterations)).expect("gmres");
        println!("{rho:>8.4} {fp:>14} {kr:>14}");
    }
}
