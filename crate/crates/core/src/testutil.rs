use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{spectral_abscissa, Matrix, SymMatrix};

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_sym<R: Rng>(rng: &mut R, n: usize) -> SymMatrix {
    SymMatrix::new(random_matrix(rng, n, n))
}

/// Gaussian matrix shifted so its spectral abscissa is at most -0.5.
pub fn random_stable<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    let alpha = spectral_abscissa(&a).unwrap();
    let shift = (alpha + 0.5 + rng.random::<f64>()).max(0.0);
    a - Matrix::identity(n, n) * shift
}
