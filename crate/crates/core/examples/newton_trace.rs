//! Newton iterates at fixed gamma: residuals, monotone decrease, and the
//! comparison with the smallest deterministic solution.

use stochinf::riccati::deterministic_smallest_solution;
use stochinf::{newton_solve, random_system, stoch_hinf_norm, NewtonOptions, NormOptions, RiccatiProblem};

fn main() {
    let sys = random_system(8, 2, 1, 21).expect("system");
    let norm = stoch_hinf_norm(&sys, &NormOptions::default()).expect("norm").norm;
    for factor in [1.001, 1.1, 2.0, 0.99] {
        let gamma = factor * norm;
        let prob = RiccatiProblem::new(&sys, gamma).expect("problem");
        let opts = NewtonOptions { bound_checks: true, ..NewtonOptions::default() };
        let out = newton_solve(&prob, &opts).expect("newton");
        println!("gamma = {factor} x norm: {} in {} steps{}", out.status, out.iterations,
            out.note.as_deref().map(|n| format!(" ({n})")).unwrap_or_default());
        for st in &out.steps {
            println!(
                "  k {:>2}  |R(X_k)| {:.3e}  max eig R {:+.2e}  max eig (X_k+1 - X_k) {:+.2e}",
                st.k, st.residual, st.riccati_max_eig, st.increment_max_eig
            );
        }
        if out.converged() {
            let xm = deterministic_smallest_solution(&sys, gamma).expect("smallest solution");
            println!("  min eig (X+ - X-) {:.3e}", (&out.x - &xm).min_eigenvalue().expect("eig"));
        }
    }
}
