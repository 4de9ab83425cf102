//! Dense real linear algebra shared by every solver in the crate.
//!
//! Storage layout: every matrix is an [`nalgebra::DMatrix<f64>`], which is
//! column-major. Wherever a matrix is flattened (`vec(X)`, Kronecker
//! products, the Matrix Market array format) columns are stacked in order,
//! i.e. the flattening is exactly the storage order.

use std::ops::{Add, Deref, Mul, Neg, Sub};

use nalgebra::{Complex, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Default relative rank cut-off used by [`pseudoinverse`].
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Two eigenvalues count as summing to zero (singular Lyapunov operator)
/// below this multiple of `1 + max |λ|`.
pub const LYAP_SINGULAR_TOL: f64 = 1e-12;

fn max_iterations(n: usize) -> usize {
    // QR sweeps; generous enough that failure means genuine trouble.
    1000 * n.max(10)
}

/// nalgebra's QR iteration can stagnate at the strictest deflation
/// threshold on matrices with many repeated eigenvalues (Kronecker sums), so
/// slightly looser thresholds are tried in turn.
const SCHUR_EPS_LADDER: [f64; 4] = [f64::EPSILON, 4.0 * f64::EPSILON, 64.0 * f64::EPSILON, 1e-12];

fn schur_decompose(a: &Matrix) -> Result<nalgebra::Schur<f64, nalgebra::Dyn>> {
    let n = a.nrows();
    SCHUR_EPS_LADDER
        .iter()
        .find_map(|&eps| nalgebra::Schur::try_new(a.clone(), eps, max_iterations(n)))
        .ok_or(Error::EigenFailure {
            rows: n,
            cols: a.ncols(),
        })
}

pub(crate) fn ensure_finite(m: &Matrix, context: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context })
    }
}

pub(crate) fn ensure_square(m: &Matrix, context: &'static str) -> Result<()> {
    if m.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            context,
            rows: m.nrows(),
            cols: m.ncols(),
        })
    }
}

/// A real symmetric matrix.
///
/// Construction symmetrizes its input as `(M + Mᵀ)/2` and remembers the
/// Frobenius norm of the skew part it discarded.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMatrix {
    inner: Matrix,
    asymmetry: f64,
}

impl SymMatrix {
    /// Panics if `m` is not square.
    pub fn new(m: Matrix) -> Self {
        assert!(m.is_square(), "SymMatrix::new needs a square matrix");
        let mt = m.transpose();
        let asymmetry = (&m - &mt).norm() * 0.5;
        let inner = (m + mt) * 0.5;
        SymMatrix { inner, asymmetry }
    }

    pub fn zeros(n: usize) -> Self {
        SymMatrix {
            inner: Matrix::zeros(n, n),
            asymmetry: 0.0,
        }
    }

    pub fn identity(n: usize) -> Self {
        SymMatrix {
            inner: Matrix::identity(n, n),
            asymmetry: 0.0,
        }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        let mut inner = Matrix::zeros(n, n);
        for (i, v) in d.iter().enumerate() {
            inner[(i, i)] = *v;
        }
        SymMatrix {
            inner,
            asymmetry: 0.0,
        }
    }

    /// `G Gᵀ`, symmetric by construction.
    pub fn gram(g: &Matrix) -> Self {
        SymMatrix::new(g * g.transpose())
    }

    pub fn order(&self) -> usize {
        self.inner.nrows()
    }

    /// Frobenius norm of the skew-symmetric part removed at construction.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.inner
    }

    pub fn into_matrix(self) -> Matrix {
        self.inner
    }

    /// Trace inner product `trace(XY)`.
    pub fn dot(&self, other: &SymMatrix) -> f64 {
        self.inner.dot(&other.inner)
    }

    pub fn scale(&self, s: f64) -> SymMatrix {
        SymMatrix {
            inner: &self.inner * s,
            asymmetry: self.asymmetry * s.abs(),
        }
    }

    /// Largest eigenvalue.
    pub fn max_eigenvalue(&self) -> Result<f64> {
        let (vals, _) = sym_eig(self)?;
        Ok(vals.last().copied().unwrap_or(0.0))
    }

    /// Smallest eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        let (vals, _) = sym_eig(self)?;
        Ok(vals.first().copied().unwrap_or(0.0))
    }

    /// `Qᵀ X Q` for a square or rectangular `Q`.
    pub fn congruence(&self, q: &Matrix) -> SymMatrix {
        SymMatrix::new(q.transpose() * &self.inner * q)
    }
}

impl Deref for SymMatrix {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.inner
    }
}

impl Add<&SymMatrix> for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix {
            inner: &self.inner + &rhs.inner,
            asymmetry: 0.0,
        }
    }
}

impl Sub<&SymMatrix> for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix {
            inner: &self.inner - &rhs.inner,
            asymmetry: 0.0,
        }
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

impl Neg for &SymMatrix {
    type Output = SymMatrix;
    fn neg(self) -> SymMatrix {
        self.scale(-1.0)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

/// All eigenvalues of a square real matrix.
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex<f64>>> {
    ensure_square(a, "eigenvalues")?;
    ensure_finite(a, "eigenvalues")?;
    let schur = schur_decompose(a)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum of `a`.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    let ev = eigenvalues(a)?;
    Ok(ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
///
/// Returns `(λ, V)` with `M = V diag(λ) Vᵀ` and `V` orthogonal.
pub fn sym_eig(m: &SymMatrix) -> Result<(Vec<f64>, Matrix)> {
    ensure_finite(m, "sym_eig")?;
    let n = m.order();
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let eig = SymmetricEigen::try_new(m.as_matrix().clone(), f64::EPSILON, max_iterations(n))
        .ok_or(Error::EigenFailure { rows: n, cols: n })?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((vals, vecs))
}

/// Moore–Penrose inverse of a symmetric positive semidefinite matrix.
///
/// Eigenvalues above `rank_tol · λ_max` are inverted, the rest dropped.
pub fn pseudoinverse(m: &SymMatrix, rank_tol: f64) -> Result<SymMatrix> {
    let (vals, vecs) = sym_eig(m)?;
    let n = m.order();
    let scale = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if scale == 0.0 {
        return Ok(SymMatrix::zeros(n));
    }
    let cut = rank_tol * scale;
    if let Some(&lo) = vals.first() {
        if lo < -cut {
            return Err(Error::NotPsd { min_eig: lo });
        }
    }
    let mut scaled = vecs.clone();
    for (j, &lam) in vals.iter().enumerate() {
        let f = if lam > cut { 1.0 / lam } else { 0.0 };
        scaled.column_mut(j).scale_mut(f);
    }
    Ok(SymMatrix::new(scaled * vecs.transpose()))
}

/// Largest singular value.
pub fn operator_2norm(m: &Matrix) -> Result<f64> {
    if m.is_empty() {
        return Ok(0.0);
    }
    ensure_finite(m, "operator_2norm")?;
    let gram = SymMatrix::new(m.transpose() * m);
    let lam = gram.max_eigenvalue()?;
    Ok(lam.max(0.0).sqrt())
}

/// Solves `X` from `M X = R` for a symmetric positive definite `M`.
pub fn spd_solve(m: &SymMatrix, rhs: &Matrix) -> Result<Matrix> {
    let chol = nalgebra::Cholesky::new(m.as_matrix().clone()).ok_or(Error::Singular {
        context: "Cholesky factorization",
    })?;
    Ok(chol.solve(rhs))
}

/// General square solve `M X = R` by partial-pivoting LU.
pub fn lu_solve(m: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    ensure_square(m, "lu_solve")?;
    m.clone().lu().solve(rhs).ok_or(Error::Singular {
        context: "LU solve",
    })
}

/// Real Schur factorization `A = U T Uᵀ` with `T` quasi upper triangular.
#[derive(Clone, Debug)]
pub struct RealSchur {
    pub u: Matrix,
    pub t: Matrix,
    /// `(start, size)` of the 1×1 and 2×2 diagonal blocks of `T`.
    pub blocks: Vec<(usize, usize)>,
}

impl RealSchur {
    pub fn new(a: &Matrix) -> Result<Self> {
        ensure_square(a, "real Schur")?;
        ensure_finite(a, "real Schur")?;
        let n = a.nrows();
        let (u, mut t) = schur_decompose(a)?.unpack();
        let scale = t.amax().max(f64::MIN_POSITIVE);
        for j in 0..n {
            for i in (j + 2)..n {
                t[(i, j)] = 0.0;
            }
            if j + 1 < n && t[(j + 1, j)].abs() <= f64::EPSILON * scale {
                t[(j + 1, j)] = 0.0;
            }
        }
        let mut blocks = Vec::new();
        let mut i = 0;
        while i < n {
            if i + 1 < n && t[(i + 1, i)] != 0.0 {
                if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                    return Err(Error::EigenFailure { rows: n, cols: n });
                }
                blocks.push((i, 2));
                i += 2;
            } else {
                blocks.push((i, 1));
                i += 1;
            }
        }
        Ok(RealSchur { u, t, blocks })
    }

    /// Eigenvalues read off the diagonal blocks.
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        let mut out = Vec::with_capacity(self.t.nrows());
        for &(s, size) in &self.blocks {
            if size == 1 {
                out.push(Complex::new(self.t[(s, s)], 0.0));
            } else {
                let (a, b) = (self.t[(s, s)], self.t[(s, s + 1)]);
                let (c, d) = (self.t[(s + 1, s)], self.t[(s + 1, s + 1)]);
                let half_tr = 0.5 * (a + d);
                let disc = 0.25 * (a - d) * (a - d) + b * c;
                if disc >= 0.0 {
                    let r = disc.sqrt();
                    out.push(Complex::new(half_tr + r, 0.0));
                    out.push(Complex::new(half_tr - r, 0.0));
                } else {
                    let r = (-disc).sqrt();
                    out.push(Complex::new(half_tr, r));
                    out.push(Complex::new(half_tr, -r));
                }
            }
        }
        out
    }
}

/// Bartels–Stewart solver for `AᵀX + XA = Q`.
///
/// The Schur factorization of `A` is computed once, so repeated solves with
/// the same `A` (power method, fixed-point sweeps) cost only the O(n³)
/// back-substitution.
#[derive(Clone, Debug)]
pub struct LyapunovSolver {
    schur: RealSchur,
}

impl LyapunovSolver {
    pub fn new(a: &Matrix) -> Result<Self> {
        let schur = RealSchur::new(a)?;
        let ev = schur.eigenvalues();
        let scale = 1.0 + ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut min_sum = f64::INFINITY;
        for (i, li) in ev.iter().enumerate() {
            for lj in &ev[i..] {
                min_sum = min_sum.min((li + lj).norm());
            }
        }
        if min_sum <= LYAP_SINGULAR_TOL * scale {
            return Err(Error::SingularLyapunov { min_sum });
        }
        Ok(LyapunovSolver { schur })
    }

    pub fn order(&self) -> usize {
        self.schur.t.nrows()
    }

    pub fn schur(&self) -> &RealSchur {
        &self.schur
    }

    /// Solves `AᵀX + XA = Q`; the result is re-symmetrized.
    pub fn solve(&self, q: &SymMatrix) -> Result<SymMatrix> {
        let n = self.order();
        if q.order() != n {
            return Err(Error::DimensionMismatch {
                context: "lyap_solve",
                expected: format!("{n}x{n}"),
                got: format!("{}x{}", q.order(), q.order()),
            });
        }
        ensure_finite(q, "lyap_solve rhs")?;
        let u = &self.schur.u;
        let t = &self.schur.t;
        let f = u.transpose() * q.as_matrix() * u;
        let mut y = Matrix::zeros(n, n);
        let blocks = &self.schur.blocks;
        // TᵀY + YT = F, block (k, l) depends on blocks above and to the left.
        for (bk, &(sk, nk)) in blocks.iter().enumerate() {
            for &(sl, nl) in &blocks[bk..] {
                let mut rhs = f.view((sk, sl), (nk, nl)).clone_owned();
                if sk > 0 {
                    let t_col = t.view((0, sk), (sk, nk));
                    let y_col = y.view((0, sl), (sk, nl));
                    rhs -= t_col.transpose() * y_col;
                }
                if sl > 0 {
                    let y_row = y.view((sk, 0), (nk, sl));
                    let t_row = t.view((0, sl), (sl, nl));
                    rhs -= y_row * t_row;
                }
                let tkk = t.view((sk, sk), (nk, nk)).clone_owned();
                let tll = t.view((sl, sl), (nl, nl)).clone_owned();
                let z = solve_small_sylvester(&tkk, &tll, &rhs)?;
                y.view_mut((sk, sl), (nk, nl)).copy_from(&z);
                if sk != sl {
                    y.view_mut((sl, sk), (nl, nk)).copy_from(&z.transpose());
                }
            }
        }
        Ok(SymMatrix::new(u * y * u.transpose()))
    }
}

/// Solves `Tkkᵀ Z + Z Tll = R` for blocks of size at most 2.
fn solve_small_sylvester(tkk: &Matrix, tll: &Matrix, r: &Matrix) -> Result<Matrix> {
    let (nk, nl) = (tkk.nrows(), tll.nrows());
    if nk == 1 && nl == 1 {
        let d = tkk[(0, 0)] + tll[(0, 0)];
        if d == 0.0 {
            return Err(Error::SingularLyapunov { min_sum: 0.0 });
        }
        return Ok(Matrix::from_element(1, 1, r[(0, 0)] / d));
    }
    // vec(TkkᵀZ + Z Tll) = (I ⊗ Tkkᵀ + Tllᵀ ⊗ I) vec Z
    let k = kron(&Matrix::identity(nl, nl), &tkk.transpose())
        + kron(&tll.transpose(), &Matrix::identity(nk, nk));
    let rhs = Matrix::from_column_slice(nk * nl, 1, r.as_slice());
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularLyapunov { min_sum: 0.0 })?;
    Ok(Matrix::from_column_slice(nk, nl, sol.as_slice()))
}

/// One-shot `AᵀX + XA = Q`.
pub fn lyap_solve(a: &Matrix, q: &SymMatrix) -> Result<SymMatrix> {
    LyapunovSolver::new(a)?.solve(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_matrix, random_stable, random_sym};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn abscissa_diagonal_and_rotation() {
        let a = Matrix::from_diagonal(&nalgebra::dvector![-1.0, -2.0]);
        assert!((spectral_abscissa(&a).unwrap() + 1.0).abs() < 1e-14);
        let r = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert!(spectral_abscissa(&r).unwrap().abs() < 1e-14);
    }

    #[test]
    fn abscissa_rejects_nan() {
        let a = Matrix::from_element(2, 2, f64::NAN);
        assert!(matches!(spectral_abscissa(&a), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn lyap_trivial_cases() {
        let a = -Matrix::identity(2, 2);
        let q = SymMatrix::identity(2).scale(-2.0);
        let x = lyap_solve(&a, &q).unwrap();
        assert!((x.as_matrix() - Matrix::identity(2, 2)).norm() < 1e-14);

        let a = Matrix::from_element(1, 1, -1.0);
        let q = SymMatrix::from_diagonal(&[-4.0]);
        assert!((lyap_solve(&a, &q).unwrap()[(0, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lyap_singular_is_reported() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let q = SymMatrix::identity(2);
        assert!(matches!(
            lyap_solve(&a, &q),
            Err(Error::SingularLyapunov { .. })
        ));
    }

    #[test]
    fn lyap_matches_kronecker_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = random_stable(&mut rng, 5);
            let q = random_sym(&mut rng, 5);
            let x = lyap_solve(&a, &q).unwrap();
            let i = Matrix::identity(5, 5);
            let k = kron(&i, &a.transpose()) + kron(&a.transpose(), &i);
            let v = Matrix::from_column_slice(25, 1, q.as_slice());
            let sol = k.lu().solve(&v).unwrap();
            let xk = Matrix::from_column_slice(5, 5, sol.as_slice());
            assert!((x.as_matrix() - &xk).norm() <= 1e-9 * xk.norm());
        }
    }

    #[test]
    fn lyap_residual_on_many_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..200 {
            let n = 1 + trial % 20;
            let a = random_stable(&mut rng, n);
            let q = random_sym(&mut rng, n);
            let x = lyap_solve(&a, &q).unwrap();
            let res = a.transpose() * x.as_matrix() + x.as_matrix() * &a - q.as_matrix();
            // Residual scales with ‖A‖‖X‖, the conditioning factor of the solve.
            let bound = 1e-10 * (1.0 + q.norm()) * (1.0 + a.norm() * x.norm());
            assert!(res.norm() <= bound, "n={n}: {} > {bound}", res.norm());
        }
    }

    #[test]
    fn sym_eig_examples() {
        let (v, _) = sym_eig(&SymMatrix::identity(3)).unwrap();
        assert_eq!(v.len(), 3);
        assert!(v.iter().all(|x| (x - 1.0).abs() < 1e-15));
        let (v, _) = sym_eig(&SymMatrix::from_diagonal(&[3.0, -1.0])).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-15 && (v[1] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn sym_eig_reconstructs_and_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let m = random_sym(&mut rng, 6);
            let (vals, v) = sym_eig(&m).unwrap();
            let lam = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vals.clone()));
            let rec = &v * lam * v.transpose();
            assert!((rec - m.as_matrix()).norm() <= 1e-12 * m.norm() * 10.0);
            let orth = &v * v.transpose() - Matrix::identity(6, 6);
            assert!(orth.norm() <= 1e-12 * 6.0);
            let tr: f64 = vals.iter().sum();
            assert!((tr - m.trace()).abs() <= 1e-10 * 6.0 * m.norm());
            assert!(vals.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn pseudoinverse_examples() {
        let p = pseudoinverse(&SymMatrix::identity(3), DEFAULT_RANK_TOL).unwrap();
        assert!((p.as_matrix() - Matrix::identity(3, 3)).norm() < 1e-14);
        let p = pseudoinverse(&SymMatrix::from_diagonal(&[2.0, 0.0]), DEFAULT_RANK_TOL).unwrap();
        assert!((p[(0, 0)] - 0.5).abs() < 1e-15 && p[(1, 1)].abs() < 1e-15);
        assert!(matches!(
            pseudoinverse(&SymMatrix::from_diagonal(&[2.0, -1.0]), DEFAULT_RANK_TOL),
            Err(Error::NotPsd { .. })
        ));
    }

    #[test]
    fn pseudoinverse_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let g = random_matrix(&mut rng, 6, 3);
            let m = SymMatrix::gram(&g);
            let p = pseudoinverse(&m, DEFAULT_RANK_TOL).unwrap();
            let (m, p) = (m.as_matrix(), p.as_matrix());
            let scale = m.norm();
            assert!((m * p * m - m).norm() <= 1e-8 * scale);
            assert!((p * m * p - p).norm() <= 1e-8 * p.norm());
            assert!(((m * p) - (m * p).transpose()).norm() <= 1e-8);
            assert!(((p * m) - (p * m).transpose()).norm() <= 1e-8);
        }
        // positive definite: pseudoinverse is the inverse
        let g = random_matrix(&mut rng, 4, 4);
        let m = SymMatrix::new(&g * g.transpose() + Matrix::identity(4, 4));
        let p = pseudoinverse(&m, DEFAULT_RANK_TOL).unwrap();
        let inv = m.as_matrix().clone().try_inverse().unwrap();
        assert!((p.as_matrix() - &inv).norm() <= 1e-8 * inv.norm());
    }

    #[test]
    fn two_norm_examples() {
        assert_eq!(operator_2norm(&Matrix::zeros(3, 2)).unwrap(), 0.0);
        let d = Matrix::from_diagonal(&nalgebra::dvector![3.0, -4.0]);
        assert!((operator_2norm(&d).unwrap() - 4.0).abs() < 1e-14);
    }

    #[test]
    fn sym_matrix_records_asymmetry() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let s = SymMatrix::new(m);
        assert!((s[(0, 1)] - 1.0).abs() < 1e-15);
        assert!((s.as_matrix() - s.transpose()).norm() == 0.0);
        assert!((s.asymmetry() - (2.0f64).sqrt()).abs() < 1e-15);
    }
}
