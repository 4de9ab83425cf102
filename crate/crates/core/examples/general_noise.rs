//! Two noise channels acting on state and input, with feedthrough.

use stochinf::problems::random_general_system;
use stochinf::{newton_solve, stoch_hinf_norm, NewtonOptions, NormOptions, RiccatiProblem};

fn main() {
    let sys = random_general_system(5, 2, 2, 2, 11).expect("system");
    let rep = stoch_hinf_norm(&sys, &NormOptions::with_tol(1e-6)).expect("norm");
    println!("norm {:.6}  (deterministic bound {:.6})", rep.norm, rep.det_hinf);

    let prob = RiccatiProblem::new(&sys, 1.2 * rep.norm).expect("problem");
    let out = newton_solve(&prob, &NewtonOptions::default()).expect("newton");
    println!("Newton at 1.2 x norm: {} after {} steps", out.status, out.iterations);
    for st in &out.steps {
        println!("  k {:>2}  |R| {:.3e}  rho {:.4}  inner {}", st.k, st.residual, st.rho, st.inner_iterations);
    }
    let q = prob.q_gamma(&out.x);
    println!("min eig Q_gamma(X+) {:.4}", q.min_eigenvalue().expect("eig"));
}
