//! Dense complex-Hermitian linear algebra.
//!
//! Everything here works on small dense matrices (N ≤ 50 or so). The
//! eigensolver is a cyclic complex Jacobi scheme, which is slow compared to
//! Householder/QR but deterministic and accurate to a few ulps in every
//! eigenpair, which is what the inertia bookkeeping downstream relies on.

use std::fmt;
use std::ops::{Add, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{CMatrix, C64};

/// Default relative rank threshold `ε_rank`.
pub const RANK_EPS: f64 = 1e-10;

/// Eigenvalues closer than this (relative to ‖M‖₂) share one canonical basis.
const CLUSTER_EPS: f64 = 1e-12;

const MAX_SWEEPS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HermitianError {
    #[error("matrix is not Hermitian: ‖M − M*‖ = {deviation:e} exceeds {bound:e}")]
    NotHermitian { deviation: f64, bound: f64 },
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },
    #[error("basis columns are not orthonormal: ‖Q*Q − I‖ = {deviation:e}")]
    NonOrthonormal { deviation: f64 },
    #[error("Jacobi iteration did not converge after {sweeps} sweeps")]
    NoConvergence { sweeps: usize },
    #[error("A + εP is singular for ε = {eps}")]
    SingularShift { eps: f64 },
    #[error("ε must be nonzero")]
    ZeroEpsilon,
    #[error(
        "inertia identity violated: In(M) = {direct}, reconstructed {reconstructed} \
         (check numerical rank; tol = {tol:e})"
    )]
    InconsistentInertia {
        direct: Inertia,
        reconstructed: Inertia,
        tol: f64,
    },
}

pub type Result<T> = std::result::Result<T, HermitianError>;

/// Largest entry modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// Entrywise ‖M − M*‖∞.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Returns `(M + M*) / 2`.
pub fn symmetrize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(HermitianError::DimensionMismatch {
            expected: "square matrix".into(),
            found: format!("{}×{}", m.nrows(), m.ncols()),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(HermitianError::NonFinite);
    }
    let scale = max_abs(m);
    let dev = hermitian_deviation(m);
    let bound = 1e-12 * scale.max(f64::MIN_POSITIVE);
    if dev > bound {
        return Err(HermitianError::NotHermitian {
            deviation: dev,
            bound,
        });
    }
    Ok(())
}

/// Spectral decomposition `M = V diag(values) V*` with ascending values.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenDecomposition {
    /// ‖M‖₂, the largest eigenvalue modulus.
    pub fn spectral_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |a, v| a.max(v.abs()))
    }

    /// Default absolute rank threshold `ε_rank · ‖M‖₂`.
    pub fn default_tol(&self) -> f64 {
        RANK_EPS * self.spectral_norm()
    }

    pub fn inertia(&self, tol: f64) -> Inertia {
        Inertia::from_values(&self.values, tol)
    }

    /// True if some eigenvalue sits just outside the zero band, in (tol, 10·tol).
    pub fn borderline(&self, tol: f64) -> bool {
        self.values
            .iter()
            .any(|v| v.abs() > tol && v.abs() < 10.0 * tol)
    }

    /// Orthonormal basis of the eigenvectors with |λ| ≤ tol.
    pub fn null_basis(&self, tol: f64) -> CMatrix {
        let n = self.vectors.nrows();
        let idx: Vec<usize> = (0..self.values.len())
            .filter(|&k| self.values[k].abs() <= tol)
            .collect();
        let cols: Vec<_> = idx.iter().map(|&k| self.vectors.column(k)).collect();
        if cols.is_empty() {
            return CMatrix::zeros(n, 0);
        }
        canonical_basis(&CMatrix::from_columns(&cols))
    }

    /// Orthogonal projector onto the span of eigenvectors with |λ| ≤ tol.
    pub fn null_projector(&self, tol: f64) -> CMatrix {
        let v = self.null_basis(tol);
        &v * v.adjoint()
    }

    /// Pseudoinverse built from this decomposition.
    pub fn pinv(&self, tol: f64) -> CMatrix {
        let n = self.vectors.nrows();
        let mut out = CMatrix::zeros(n, n);
        for (k, &lam) in self.values.iter().enumerate() {
            if lam.abs() <= tol {
                continue;
            }
            let f = self.vectors.column(k);
            out += (f * f.adjoint()).scale(1.0 / lam);
        }
        symmetrize(&out)
    }
}

/// Makes the largest-modulus component (lowest index on ties) real and nonnegative.
pub fn fix_phase(v: &mut nalgebra::DVector<C64>) {
    let max = v.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-12))
        .unwrap_or(0);
    let z = v[pivot];
    let phase = z.conj() / z.norm();
    for x in v.iter_mut() {
        *x *= phase;
    }
    v[pivot] = C64::new(v[pivot].re.abs(), 0.0);
}

/// Deterministic orthonormal basis for the column span of `v` (orthonormal
/// columns). The result depends only on the subspace, not on the input basis:
/// columns of the projector `VV*` are picked greedily by residual norm.
pub fn canonical_basis(v: &CMatrix) -> CMatrix {
    let (n, k) = v.shape();
    if k == 0 {
        return v.clone();
    }
    let proj = v * v.adjoint();
    let mut chosen: Vec<nalgebra::DVector<C64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut best: Option<(f64, nalgebra::DVector<C64>)> = None;
        for i in 0..n {
            let mut r: nalgebra::DVector<C64> = proj.column(i).into_owned();
            // twice is enough
            for _ in 0..2 {
                for q in &chosen {
                    let c = q.dotc(&r);
                    r -= q * c;
                }
            }
            let nr = r.norm();
            if best.as_ref().is_none_or(|(b, _)| nr > *b * (1.0 + 1e-10)) {
                best = Some((nr, r));
            }
        }
        let (nr, mut r) = best.expect("n > 0");
        r /= C64::new(nr, 0.0);
        fix_phase(&mut r);
        chosen.push(r);
    }
    CMatrix::from_columns(&chosen)
}

/// Eigendecomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
pub fn eig_hermitian(m: &CMatrix) -> Result<EigenDecomposition> {
    check_hermitian(m)?;
    let n = m.nrows();
    let mut a = symmetrize(m);
    let mut v = CMatrix::identity(n, n);
    for i in 0..n {
        a[(i, i)] = C64::new(a[(i, i)].re, 0.0);
    }

    let mut converged = n <= 1;
    for sweep in 0..MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[(p, q)].norm();
            }
        }
        if off == 0.0 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let r = apq.norm();
                if r == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                let g = 100.0 * r;
                if sweep > 3 && app.abs() + g == app.abs() && aqq.abs() + g == aqq.abs() {
                    a[(p, q)] = C64::new(0.0, 0.0);
                    a[(q, p)] = C64::new(0.0, 0.0);
                    continue;
                }
                let h = aqq - app;
                let t = if h.abs() + g == h.abs() {
                    r / h
                } else {
                    let zeta = 0.5 * h / r;
                    let t = 1.0 / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    if zeta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let e = apq / r; // e^{iφ}
                let se = e * s; // s e^{iφ}
                let se_conj = se.conj(); // s e^{-iφ}

                // A ← A U
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * c - akq * se_conj;
                    a[(k, q)] = akp * se + akq * c;
                }
                // A ← U* A
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = apk * c - aqk * se;
                    a[(q, k)] = apk * se_conj + aqk * c;
                }
                a[(p, q)] = C64::new(0.0, 0.0);
                a[(q, p)] = C64::new(0.0, 0.0);
                a[(p, p)] = C64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = C64::new(a[(q, q)].re, 0.0);
                // V ← V U
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * c - vkq * se_conj;
                    v[(k, q)] = vkp * se + vkq * c;
                }
            }
        }
    }
    if !converged {
        return Err(HermitianError::NoConvergence { sweeps: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.total_cmp(&a[(j, j)].re).then(i.cmp(&j)));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut cols: Vec<nalgebra::DVector<C64>> =
        order.iter().map(|&i| v.column(i).into_owned()).collect();

    // Degenerate clusters get a basis that depends only on the eigenspace.
    let scale = values.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let cluster_tol = CLUSTER_EPS * scale.max(f64::MIN_POSITIVE);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[end] - values[end - 1] <= cluster_tol {
            end += 1;
        }
        if end - start > 1 {
            let block = CMatrix::from_columns(&cols[start..end]);
            let canon = canonical_basis(&block);
            for (k, c) in canon.column_iter().enumerate() {
                cols[start + k] = c.into_owned();
            }
        } else {
            fix_phase(&mut cols[start]);
        }
        start = end;
    }

    Ok(EigenDecomposition {
        values,
        vectors: CMatrix::from_columns(&cols),
    })
}

/// Moore–Penrose pseudoinverse; `tol` defaults to `ε_rank · ‖M‖₂`.
pub fn pinv(m: &CMatrix, tol: Option<f64>) -> Result<CMatrix> {
    let e = eig_hermitian(m)?;
    let tol = tol.unwrap_or_else(|| e.default_tol());
    Ok(e.pinv(tol))
}

/// Inertia triple `(i₊, i₋, i₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Inertia {
    pub plus: i64,
    pub minus: i64,
    pub zero: i64,
}

impl Inertia {
    pub fn new(plus: i64, minus: i64, zero: i64) -> Self {
        Self { plus, minus, zero }
    }

    pub fn from_values(values: &[f64], tol: f64) -> Self {
        let mut out = Self::default();
        for &v in values {
            if v > tol {
                out.plus += 1;
            } else if v < -tol {
                out.minus += 1;
            } else {
                out.zero += 1;
            }
        }
        out
    }

    pub fn dim(&self) -> i64 {
        self.plus + self.minus + self.zero
    }
}

impl Add for Inertia {
    type Output = Inertia;
    fn add(self, o: Inertia) -> Inertia {
        Inertia::new(self.plus + o.plus, self.minus + o.minus, self.zero + o.zero)
    }
}

impl Sub for Inertia {
    type Output = Inertia;
    fn sub(self, o: Inertia) -> Inertia {
        Inertia::new(self.plus - o.plus, self.minus - o.minus, self.zero - o.zero)
    }
}

impl fmt::Display for Inertia {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.plus, self.minus, self.zero)
    }
}

/// Inertia with `tol` defaulting to `ε_rank · ‖M‖₂`.
pub fn inertia(m: &CMatrix, tol: Option<f64>) -> Result<Inertia> {
    let e = eig_hermitian(m)?;
    let tol = tol.unwrap_or_else(|| e.default_tol());
    Ok(e.inertia(tol))
}

fn orthonormality_deviation(basis: &CMatrix) -> f64 {
    let k = basis.ncols();
    let gram = basis.adjoint() * basis;
    max_abs(&(gram - CMatrix::identity(k, k)))
}

/// The compression `Q* M Q` of `m` onto the span of the orthonormal columns of `basis`.
pub fn restrict(m: &CMatrix, basis: &CMatrix) -> Result<CMatrix> {
    if m.nrows() != m.ncols() || basis.nrows() != m.nrows() {
        return Err(HermitianError::DimensionMismatch {
            expected: format!("basis with {} rows", m.nrows()),
            found: format!("{}×{}", basis.nrows(), basis.ncols()),
        });
    }
    let dev = orthonormality_deviation(basis);
    if dev > 1e-11 {
        return Err(HermitianError::NonOrthonormal { deviation: dev });
    }
    Ok(symmetrize(&(basis.adjoint() * m * basis)))
}

/// Hermitian block matrix `[[A, B], [B*, C]]`.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    pub a: CMatrix,
    pub b: CMatrix,
    pub c: CMatrix,
}

impl BlockMatrix {
    pub fn new(a: CMatrix, b: CMatrix, c: CMatrix) -> Result<Self> {
        let (m, k) = b.shape();
        if a.shape() != (m, m) || c.shape() != (k, k) {
            return Err(HermitianError::DimensionMismatch {
                expected: format!("A {m}×{m}, C {k}×{k}"),
                found: format!("A {:?}, C {:?}", a.shape(), c.shape()),
            });
        }
        check_hermitian(&a)?;
        check_hermitian(&c)?;
        Ok(Self { a, b, c })
    }

    pub fn assemble(&self) -> CMatrix {
        let (m, k) = self.b.shape();
        let mut out = CMatrix::zeros(m + k, m + k);
        out.view_mut((0, 0), (m, m)).copy_from(&self.a);
        out.view_mut((0, m), (m, k)).copy_from(&self.b);
        out.view_mut((m, 0), (k, m)).copy_from(&self.b.adjoint());
        out.view_mut((m, m), (k, k)).copy_from(&self.c);
        out
    }

    fn default_tol(&self) -> Result<f64> {
        Ok(eig_hermitian(&self.assemble())?.default_tol())
    }
}

/// Generalized Schur complement `M/A = C − B* A⁺ B`.
pub fn schur_complement(blk: &BlockMatrix, tol: Option<f64>) -> Result<CMatrix> {
    let ap = pinv(&blk.a, tol)?;
    Ok(symmetrize(&(&blk.c - blk.b.adjoint() * ap * &blk.b)))
}

/// Ingredients of `In(M) = In(A) + In_Q(M/A) + (i∞, i∞, −i∞)`.
#[derive(Debug, Clone)]
pub struct HaynsworthReport {
    pub inertia_m: Inertia,
    pub inertia_a: Inertia,
    pub inertia_schur_on_q: Inertia,
    pub i_infty: usize,
    /// Orthonormal basis of `Q = Null(B* P B)`.
    pub q_basis: CMatrix,
    /// `tol` actually used for A, M and `(M/A)_Q`.
    pub tol: f64,
}

impl HaynsworthReport {
    pub fn reconstructed(&self) -> Inertia {
        let i = self.i_infty as i64;
        self.inertia_a + self.inertia_schur_on_q + Inertia::new(i, i, -i)
    }
}

/// Generalized Haynsworth formula for a possibly singular `A` block.
///
/// `tol` is the absolute zero threshold for eigenvalues of `A`, `M` and
/// `(M/A)_Q` (default `ε_rank·‖M‖₂`). Eigenvalues of the quadratic quantity
/// `B*PB` are compared against `tol·‖M‖₂`. A mismatch between the direct
/// inertia of `M` and the reconstruction is reported as an error.
pub fn haynsworth_generalized(blk: &BlockMatrix, tol: Option<f64>) -> Result<HaynsworthReport> {
    let m_eig = eig_hermitian(&blk.assemble())?;
    let m_norm = m_eig.spectral_norm();
    let tol = tol.unwrap_or(RANK_EPS * m_norm);

    let a_eig = eig_hermitian(&blk.a)?;
    let inertia_a = a_eig.inertia(tol);
    let p = a_eig.null_projector(tol);
    let bpb = symmetrize(&(blk.b.adjoint() * &p * &blk.b));
    let bpb_eig = eig_hermitian(&bpb)?;
    let quad_tol = tol * m_norm.max(tol);
    let q_basis = bpb_eig.null_basis(quad_tol);
    let i_infty = blk.c.nrows() - q_basis.ncols();

    let schur = symmetrize(&(&blk.c - blk.b.adjoint() * a_eig.pinv(tol) * &blk.b));
    let inertia_schur_on_q = if q_basis.ncols() == 0 {
        Inertia::default()
    } else {
        eig_hermitian(&restrict(&schur, &q_basis)?)?.inertia(tol)
    };

    let report = HaynsworthReport {
        inertia_m: m_eig.inertia(tol),
        inertia_a,
        inertia_schur_on_q,
        i_infty,
        q_basis,
        tol,
    };
    let reconstructed = report.reconstructed();
    if reconstructed != report.inertia_m {
        return Err(HermitianError::InconsistentInertia {
            direct: report.inertia_m,
            reconstructed,
            tol,
        });
    }
    Ok(report)
}

/// Largest pairwise deviation of `(C − B*(A + εP)⁻¹B)_Q` across `eps_list`.
pub fn epsilon_schur_invariance_check(blk: &BlockMatrix, eps_list: &[f64]) -> Result<f64> {
    let tol = blk.default_tol()?;
    let report = haynsworth_generalized(blk, Some(tol))?;
    let a_eig = eig_hermitian(&blk.a)?;
    let p = a_eig.null_projector(tol);
    let q = &report.q_basis;

    let mut restricted = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        if eps == 0.0 {
            return Err(HermitianError::ZeroEpsilon);
        }
        let shifted = &blk.a + p.scale(eps);
        let inv = invert_hermitian(&shifted, tol).ok_or(HermitianError::SingularShift { eps })?;
        let schur = symmetrize(&(&blk.c - blk.b.adjoint() * inv * &blk.b));
        restricted.push(restrict(&schur, q)?);
    }
    let mut worst = 0.0_f64;
    for i in 0..restricted.len() {
        for j in (i + 1)..restricted.len() {
            worst = worst.max(max_abs(&(&restricted[i] - &restricted[j])));
        }
    }
    Ok(worst)
}

fn invert_hermitian(m: &CMatrix, tol: f64) -> Option<CMatrix> {
    let e = eig_hermitian(m).ok()?;
    if e.values.iter().any(|v| v.abs() <= tol) {
        return None;
    }
    Some(e.pinv(0.0))
}

/// Real part of a complex matrix as a complex matrix.
pub fn real_part(m: &CMatrix) -> CMatrix {
    m.map(|z| C64::new(z.re, 0.0))
}

/// Entrywise max of |Im|.
pub fn max_imag(m: &CMatrix) -> f64 {
    m.iter().fold(0.0_f64, |a, z| a.max(z.im.abs()))
}

/// Lifts a real matrix.
pub fn complexify(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}
