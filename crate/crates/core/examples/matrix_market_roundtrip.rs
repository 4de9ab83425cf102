//! Writes a system as MatrixMarket files with a JSON manifest, reads it
//! back and compares.

use stochinf::io::{load_system, write_system};
use stochinf::{heat_system, stoch_hinf_norm, NormOptions};

fn main() {
    let dir = std::env::temp_dir().join("stochinf-heat-4");
    let sys = heat_system(4).expect("heat system");
    let manifest = write_system(&dir, &sys, "heat-4", "heat_system(4)").expect("write");
    println!("wrote {}", manifest.display());
    println!("{}", std::fs::read_to_string(&manifest).expect("read"));

    let back = load_system(&manifest).expect("load");
    println!("bit-exact round trip: {}", back == sys);
    let norm = stoch_hinf_norm(&back, &NormOptions::default()).expect("norm").norm;
    println!("norm from files {norm:.6}");
}
