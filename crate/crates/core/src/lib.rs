//! Certification of global extrema for dispersion bands of ℤᵈ-periodic
//! tight-binding graphs with one crossing edge per generator.
//!
//! The crate is organised bottom-up:
//!
//! * [`hermitian`]: dense Hermitian eigensolver, pseudoinverse, inertia and
//!   the generalized Haynsworth machinery.
//! * [`lattice`]: periodic graph specifications and the Floquet–Bloch
//!   matrix family `T(α) = C₀ + Σⱼ (Cⱼ e^{iαⱼ} + Cⱼ* e^{−iαⱼ})`.
//! * [`dispersion`]: band functions, eigenvector diagnostics and the
//!   derivative pack (`B`, `Ω`, `W`, `S`, `i∞`) at a point.
//! * [`certify`]: critical point search, verdict logic and brute-force
//!   oracles.
//! * [`catalog`]: canned example families with reference values.
//! * [`suites`]: randomized property suites shared by the CLI `verify`
//!   command and the test targets.

pub mod catalog;
pub mod certify;
pub mod dispersion;
pub mod hermitian;
pub mod lattice;
pub mod suites;

pub use nalgebra::Complex;

/// Double precision complex scalar.
pub type C64 = Complex<f64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;

/// Numerical thresholds shared by every stage of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    /// Relative rank threshold used by pinv, inertia and null-space extraction.
    pub rank: f64,
    /// Relative spectral gap below which an eigenvalue counts as degenerate.
    pub gap: f64,
    /// Relative threshold below which an eigenvector component counts as zero.
    pub zero: f64,
    /// Relative threshold for structural zeros of crossing coefficients.
    pub structural: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rank: 1e-10,
            gap: 1e-8,
            zero: 1e-8,
            structural: 1e-12,
        }
    }
}

pub(crate) fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}
