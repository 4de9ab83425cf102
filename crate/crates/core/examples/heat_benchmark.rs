//! Norms of the stochastically forced heat equation for growing grids.
//!
//! `cargo run --release --example heat_benchmark -- 10`

use std::time::Instant;

use stochinf::{heat_system, stoch_hinf_norm, NormOptions};

fn main() {
    let kmax: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(8);
    println!("{:>3} {:>5} {:>9} {:>9} {:>6} {:>8}", "k", "n", "norm", "det", "runs", "seconds");
    for k in 5..=kmax {
        let sys = heat_system(k).expect("heat system");
        let t = Instant::now();
        let rep = stoch_hinf_norm(&sys, &NormOptions::default()).expect("norm");
        println!(
            "{k:>3} {:>5} {:>9.4} {:>9.4} {:>6} {:>8.2}",
            sys.n(),
            rep.norm,
            rep.det_hinf,
            rep.bracket_history.len(),
            t.elapsed().as_secs_f64()
        );
    }
}
