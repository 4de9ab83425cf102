use thiserror::Error;

/// Errors raised by the solvers and the file-format layer.
///
/// Mathematically meaningful failures of the Newton iteration (loss of
/// stability, hitting the iteration cap) are not errors; they are reported
/// through [`crate::riccati::NewtonStatus`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix contains non-finite entries ({context})")]
    NonFinite { context: &'static str },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("{context}: matrix must be square, got {rows}x{cols}")]
    NotSquare {
        context: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("eigenvalue iteration failed for a {rows}x{cols} matrix")]
    EigenFailure { rows: usize, cols: usize },

    #[error("Lyapunov operator is (nearly) singular: min |λi + λj| = {min_sum:e}")]
    SingularLyapunov { min_sum: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("matrix is singular or not positive definite ({context})")]
    Singular { context: &'static str },

    #[error("Q_gamma(X) is not positive definite (smallest eigenvalue {min_eig:e})")]
    QIndefinite { min_eig: f64 },

    #[error("Kronecker materialization of order {order} exceeds guard {guard}")]
    KroneckerGuard { order: usize, guard: usize },

    #[error("iteration did not converge after {iterations} steps (residual {residual:e})")]
    NonConverged { iterations: usize, residual: f64 },

    #[error("system is not mean-square stable: {0}")]
    MsUnstable(String),

    #[error("matrix A is not Hurwitz (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },

    #[error("gamma = {gamma} must exceed ||D||_2 = {d_norm}")]
    GammaTooSmall { gamma: f64, d_norm: f64 },

    #[error("Hamiltonian has eigenvalues on the imaginary axis (gamma = {gamma})")]
    ImaginaryAxisEigenvalues { gamma: f64 },

    #[error("norm appears unbounded or system unstable: no converging gamma after {doublings} doublings")]
    BracketFailure { doublings: usize },

    #[error("trajectory blew up at t = {time}: decrease dt or check stability")]
    TrajectoryBlowUp { time: f64 },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {origin}: {message}")]
    Parse { origin: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
