//! Band functions and the derivative pack at a point.
//!
//! For a simple eigenvalue `λ = λₙ(T(α°))` with unit eigenvector `f°` the pack
//! collects
//!
//! ```text
//! B = D(T(α) f°)|α°                 (N×d)
//! Ω = ½ Hess ⟨f°, T(α) f°⟩|α°       (d×d, diagonal for Bloch families)
//! W = Ω − B* (T(α°) − λ)⁺ B         (d×d Hermitian)
//! S = (T(α°) − λ − B Ω⁺ B*)_Q,      Q = Null(B P B*),  P = P_Null(Ω)
//! i∞ = rk(B P B*)
//! ```
//!
//! with `∇λ = B* f°` and `Hess λ = 2 Re W`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hermitian::{
    self, eig_hermitian, max_abs, restrict, symmetrize, EigenDecomposition, HermitianError,
    Inertia,
};
use crate::lattice::{BlochFamily, BlochModel, CrossingEdge, LatticeError, Quasimomentum};
use crate::{CMatrix, CVector, Tolerances, C64};

/// Relative gradient residual below which a point is accepted as critical
/// by the operations that require criticality.
pub const CRITICAL_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DispersionError {
    #[error("band index {n} out of range 1..={size}")]
    BandOutOfRange { n: usize, size: usize },
    #[error(
        "eigenvalue λ_{band} is degenerate (gap {gap:e}); band-touching points are out of scope"
    )]
    Degenerate { band: usize, gap: f64 },
    #[error("point is not critical: gradient residual {residual:e}")]
    NotCritical { residual: f64 },
    #[error("operation requires a family with one crossing edge per generator")]
    NotSingleCrossing,
    #[error("Null(A) ⊄ Null(B*): residual {residual:e}")]
    RegularityViolated { residual: f64 },
    #[error("Jacobian is singular (|det| = {det:e})")]
    SingularJacobian { det: f64 },
    #[error("W̃ ≠ JᵀWJ: deviation {deviation:e}")]
    CongruenceViolated { deviation: f64 },
    #[error("point has {found} components, model has dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Hermitian(#[from] HermitianError),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

pub type Result<T> = std::result::Result<T, DispersionError>;

/// One eigenpair of `T(α)` with simplicity diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandEigen {
    /// Parameter point. For Bloch families this is canonical in `(−π, π]^d`.
    pub point: Vec<f64>,
    /// 1-based band index.
    pub band: usize,
    pub value: f64,
    #[serde(skip)]
    pub vector: CVector,
    /// Distance from `value` to the neighbouring eigenvalues.
    pub gap: f64,
    pub simple: bool,
    /// Full ascending spectrum of `T(α)`.
    pub spectrum: Vec<f64>,
}

impl BandEigen {
    pub fn quasimomentum(&self) -> Quasimomentum {
        Quasimomentum::new(self.point.clone())
    }

    /// Natural energy scale of `T(α)`: max(‖T‖₂, spectral diameter).
    pub fn scale(&self) -> f64 {
        spectrum_scale(&self.spectrum)
    }
}

/// `max |zᵢ|`.
pub fn max_modulus(v: &CVector) -> f64 {
    v.iter().fold(0.0_f64, |a, z| a.max(z.norm()))
}

fn spectrum_scale(values: &[f64]) -> f64 {
    let norm = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let diam = values.last().unwrap_or(&0.0) - values.first().unwrap_or(&0.0);
    norm.max(diam).max(f64::MIN_POSITIVE)
}

fn band_from_eig(eig: EigenDecomposition, point: Vec<f64>, n: usize, model_scale: f64, tol: &Tolerances) -> BandEigen {
    let values = eig.values;
    let k = n - 1;
    let lam = values[k];
    let below = if k > 0 { lam - values[k - 1] } else { f64::INFINITY };
    let above = if k + 1 < values.len() {
        values[k + 1] - lam
    } else {
        f64::INFINITY
    };
    let gap = below.min(above);
    let diam = values[values.len() - 1] - values[0];
    let ref_scale = if diam > 0.0 {
        diam
    } else {
        spectrum_scale(&values)
    }
    .max(model_scale);
    let mut vector: CVector = eig.vectors.column(k).into_owned();
    hermitian::fix_phase(&mut vector);
    BandEigen {
        point,
        band: n,
        value: lam,
        vector,
        gap,
        simple: gap > tol.gap * ref_scale,
        spectrum: values,
    }
}

/// `λₙ` and its eigenvector at an arbitrary parameter point of a model.
pub fn band_at_point<M: BlochModel + ?Sized>(
    model: &M,
    point: &[f64],
    n: usize,
    tol: &Tolerances,
) -> Result<BandEigen> {
    let size = model.size();
    if n == 0 || n > size {
        return Err(DispersionError::BandOutOfRange { n, size });
    }
    if point.len() != model.dimension() {
        return Err(DispersionError::DimensionMismatch {
            expected: model.dimension(),
            found: point.len(),
        });
    }
    let eig = eig_hermitian(&model.matrix_at(point))?;
    Ok(band_from_eig(eig, point.to_vec(), n, model.energy_scale(), tol))
}

/// `λₙ(T(α))` with eigenvector and simplicity diagnostics.
pub fn band_at(
    family: &BlochFamily,
    alpha: &Quasimomentum,
    n: usize,
    tol: &Tolerances,
) -> Result<BandEigen> {
    band_at_point(family, alpha.components(), n, tol)
}

/// Eigenvalues of `T(α)` only (ascending).
pub fn spectrum_at<M: BlochModel + ?Sized>(model: &M, point: &[f64]) -> Result<Vec<f64>> {
    Ok(eig_hermitian(&model.matrix_at(point))?.values)
}

/// Everything the certification step needs at a point.
#[derive(Debug, Clone)]
pub struct DerivativePack {
    pub point: Vec<f64>,
    pub band: usize,
    pub value: f64,
    pub f: CVector,
    /// `B`, N×d.
    pub b: CMatrix,
    /// `Ω`, d×d real symmetric.
    pub omega: DMatrix<f64>,
    /// `W`, d×d Hermitian.
    pub w: CMatrix,
    /// `∇λ = B* f°`.
    pub gradient: DVector<f64>,
    /// `2 Re W`.
    pub hessian: DMatrix<f64>,
    /// `A = T(α°) − λ`.
    pub a: CMatrix,
    /// Eigenvalues of `A` (ascending).
    pub a_spectrum: Vec<f64>,
    /// Orthonormal basis of `Null(A)`.
    pub a_null: CMatrix,
    /// Projector onto `Null(Ω)`.
    pub p_omega: DMatrix<f64>,
    /// `S` on `Q`.
    pub s: CMatrix,
    pub q_basis: CMatrix,
    pub i_infty: usize,
    /// Crossing edges (0-based) when the family has one per generator.
    pub crossing: Option<Vec<CrossingEdge>>,
    /// `hⱼ e^{iα°ⱼ} f°_{vⱼ} conj(f°_{uⱼ})` per generator.
    pub edge_products: Option<Vec<C64>>,
    /// 1-based generators with `f°_u f°_v ≠ 0`.
    pub j_prime: Vec<usize>,
    /// 1-based generators with `f°_u f°_v = 0`.
    pub j_double_prime: Vec<usize>,
    /// 1-based generators whose crossing edge has `f°` vanishing on both ends.
    pub crossing_vanishing: Vec<usize>,
    /// Some eigenvector component lies in `(τ_zero, 10 τ_zero)·‖f°‖∞`.
    pub borderline_components: bool,
    /// Some eigenvalue of `A`, `Ω`, `S` or `W` lies just outside the zero band.
    pub borderline_inertia: bool,
    /// Energy scale and absolute zero threshold used for every inertia.
    pub scale: f64,
    pub tol: f64,
    /// Largest relative disagreement of `2 Re W` with a finite-difference Hessian,
    /// when verification was requested.
    pub hessian_fd_deviation: Option<f64>,
}

impl DerivativePack {
    /// True when the single-crossing structure needed for `S`, `i∞` and the
    /// index identities to carry meaning is present.
    pub fn single_crossing(&self) -> bool {
        self.crossing.is_some()
    }

    pub fn dimension(&self) -> usize {
        self.gradient.len()
    }

    pub fn size(&self) -> usize {
        self.f.len()
    }

    pub fn gradient_norm(&self) -> f64 {
        self.gradient.amax()
    }

    pub fn omega_c(&self) -> CMatrix {
        hermitian::complexify(&self.omega)
    }

    pub fn w_eigen(&self) -> Result<EigenDecomposition> {
        Ok(eig_hermitian(&self.w)?)
    }

    pub fn w_inertia(&self) -> Result<Inertia> {
        Ok(self.w_eigen()?.inertia(self.tol))
    }

    pub fn omega_inertia(&self) -> Result<Inertia> {
        Ok(eig_hermitian(&self.omega_c())?.inertia(self.tol))
    }

    pub fn s_inertia(&self) -> Result<Inertia> {
        if self.s.nrows() == 0 {
            return Ok(Inertia::default());
        }
        Ok(eig_hermitian(&self.s)?.inertia(self.tol))
    }

    pub fn a_inertia(&self) -> Inertia {
        Inertia::from_values(&self.a_spectrum, self.tol)
    }

    /// `B P B*`.
    pub fn bpb(&self) -> CMatrix {
        let p = hermitian::complexify(&self.p_omega);
        symmetrize(&(&self.b * p * self.b.adjoint()))
    }

    /// `B Ω⁺ B*`.
    pub fn bob_matrix(&self) -> Result<CMatrix> {
        let op = eig_hermitian(&self.omega_c())?.pinv(self.tol);
        Ok(symmetrize(&(&self.b * op * self.b.adjoint())))
    }
}

/// Options for [`derivative_pack_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct PackOptions {
    /// Recompute the Hessian by finite differences (h = 1e−3) and record the
    /// relative disagreement with `2 Re W`.
    pub verify_hessian: bool,
}

/// Builds the derivative pack for a simple eigenvalue.
pub fn derivative_pack<M: BlochModel + ?Sized>(
    model: &M,
    be: &BandEigen,
    tol: &Tolerances,
) -> Result<DerivativePack> {
    derivative_pack_with(model, be, tol, PackOptions::default())
}

pub fn derivative_pack_with<M: BlochModel + ?Sized>(
    model: &M,
    be: &BandEigen,
    tol: &Tolerances,
    opts: PackOptions,
) -> Result<DerivativePack> {
    if !be.simple {
        return Err(DispersionError::Degenerate {
            band: be.band,
            gap: be.gap,
        });
    }
    let d = model.dimension();
    let n = model.size();
    let pt = &be.point;
    let f = &be.vector;
    let lam = be.value;
    let scale = be.scale();
    let zero_tol = tol.rank * scale;

    let t = model.matrix_at(pt);
    let a = symmetrize(&(&t - CMatrix::identity(n, n) * C64::new(lam, 0.0)));
    let t_eig = eig_hermitian(&t)?;
    let a_eig = EigenDecomposition {
        values: t_eig.values.iter().map(|v| v - lam).collect(),
        vectors: t_eig.vectors,
    };
    let a_pinv = a_eig.pinv(zero_tol);
    let a_null = a_eig.null_basis(zero_tol);

    let mut b = CMatrix::zeros(n, d);
    for j in 0..d {
        b.set_column(j, &(model.first_derivative(pt, j) * f));
    }
    let mut omega = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = 0.5 * f.dotc(&(model.second_derivative(pt, i, j) * f)).re;
            omega[(i, j)] = v;
            omega[(j, i)] = v;
        }
    }
    let gradient = DVector::from_iterator(d, (0..d).map(|j| f.dotc(&b.column(j)).re));
    let omega_c = hermitian::complexify(&omega);
    let w = symmetrize(&(&omega_c - b.adjoint() * &a_pinv * &b));
    let hessian = w.map(|z| 2.0 * z.re);

    let omega_eig = eig_hermitian(&omega_c)?;
    let p_omega = omega_eig.null_projector(zero_tol).map(|z| z.re);
    let omega_pinv = omega_eig.pinv(zero_tol);
    let pc = hermitian::complexify(&p_omega);
    let bpb = symmetrize(&(&b * pc * b.adjoint()));
    let bpb_eig = eig_hermitian(&bpb)?;
    let q_basis = bpb_eig.null_basis(tol.rank * scale * scale);
    let i_infty = n - q_basis.ncols();
    let reduced = symmetrize(&(&a - &b * omega_pinv * b.adjoint()));
    let s = if q_basis.ncols() == 0 {
        CMatrix::zeros(0, 0)
    } else {
        restrict(&reduced, &q_basis)?
    };

    let crossing = model.crossing_edges();
    let fmax = max_modulus(f);
    let zthr = tol.zero * fmax;
    let is_zero = |z: C64| z.norm() <= zthr;
    let mut j_prime = Vec::new();
    let mut j_double_prime = Vec::new();
    let mut crossing_vanishing = Vec::new();
    let edge_products = crossing.as_ref().map(|edges| {
        edges
            .iter()
            .enumerate()
            .map(|(j, e)| {
                let (fu, fv) = (f[e.u], f[e.v]);
                if is_zero(fu) || is_zero(fv) {
                    j_double_prime.push(j + 1);
                    if is_zero(fu) && is_zero(fv) {
                        crossing_vanishing.push(j + 1);
                    }
                } else {
                    j_prime.push(j + 1);
                }
                e.h * C64::from_polar(1.0, pt[j]) * fv * fu.conj()
            })
            .collect()
    });
    let borderline_components = f
        .iter()
        .any(|z| z.norm() > zthr && z.norm() < 10.0 * zthr);

    let w_eig = eig_hermitian(&w)?;
    let mut borderline_inertia = a_eig.borderline(zero_tol)
        || omega_eig.borderline(zero_tol)
        || w_eig.borderline(zero_tol);
    if s.nrows() > 0 {
        borderline_inertia |= eig_hermitian(&s)?.borderline(zero_tol);
    }

    let hessian_fd_deviation = if opts.verify_hessian {
        let fd = finite_difference_hessian(model, pt, be.band, 1e-3)?;
        Some(relative_deviation(&hessian, &fd))
    } else {
        None
    };

    Ok(DerivativePack {
        point: pt.clone(),
        band: be.band,
        value: lam,
        f: f.clone(),
        b,
        omega,
        w,
        gradient,
        hessian,
        a,
        a_spectrum: a_eig.values,
        a_null,
        p_omega,
        s,
        q_basis,
        i_infty,
        crossing,
        edge_products,
        j_prime,
        j_double_prime,
        crossing_vanishing,
        borderline_components,
        borderline_inertia,
        scale,
        tol: zero_tol,
        hessian_fd_deviation,
    })
}

/// `max |X − Y| / max(|Y|, floor)` entrywise.
pub fn relative_deviation(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let diff = (x - y).amax();
    let reference = y.amax().max(x.amax());
    if reference == 0.0 {
        diff
    } else {
        diff / reference
    }
}

/// Gradient residual at a pack: `max_j 2|Im(hⱼ e^{iα°ⱼ} f°_{vⱼ} conj(f°_{uⱼ}))|`
/// for single-crossing families, `‖B* f°‖∞` otherwise.
pub fn criticality_residual(pack: &DerivativePack) -> f64 {
    match &pack.edge_products {
        Some(z) => z.iter().fold(0.0_f64, |a, z| a.max(2.0 * z.im.abs())),
        None => pack.gradient_norm(),
    }
}

/// `B Ω⁺ B*` and `B P B*` cross-checked against their entrywise formulas.
#[derive(Debug, Clone)]
pub struct BobReport {
    pub bob: CMatrix,
    pub bpb: CMatrix,
    /// Entrywise deviation of `B Ω⁺ B*` from the J′ sum formula.
    pub bob_formula_deviation: f64,
    /// Entrywise deviation of `B P B*` from the J″ sum formula.
    pub bpb_formula_deviation: f64,
    /// 0-based vertices whose basis vectors span `Ran(B P B*)` per the
    /// vanishing pattern of `f°`.
    pub range_vertices: Vec<usize>,
    /// True if those vectors span exactly `Ran(B P B*)`.
    pub range_consistent: bool,
}

/// `B Ω⁺ B*` at a critical point of a single-crossing family.
pub fn bob_star(pack: &DerivativePack) -> Result<BobReport> {
    let residual = criticality_residual(pack);
    if residual > CRITICAL_EPS * pack.scale {
        return Err(DispersionError::NotCritical { residual });
    }
    let edges = pack
        .crossing
        .as_ref()
        .ok_or(DispersionError::NotSingleCrossing)?;
    let n = pack.size();
    let f = &pack.f;
    let bob = pack.bob_matrix()?;
    let bpb = pack.bpb();

    let mut bob_formula = CMatrix::zeros(n, n);
    for &j in &pack.j_prime {
        let e = edges[j - 1];
        let om = pack.omega[(j - 1, j - 1)];
        let he = e.h * C64::from_polar(1.0, pack.point[j - 1]);
        bob_formula[(e.u, e.u)] += C64::new(om / f[e.u].norm_sqr(), 0.0);
        bob_formula[(e.u, e.v)] += he;
        bob_formula[(e.v, e.u)] += he.conj();
        bob_formula[(e.v, e.v)] += C64::new(om / f[e.v].norm_sqr(), 0.0);
    }
    let mut bpb_formula = CMatrix::zeros(n, n);
    let zthr = max_modulus(&pack.f) * 1e-8;
    let mut range_vertices = Vec::new();
    for &j in &pack.j_double_prime {
        let e = edges[j - 1];
        let h2 = e.h.norm_sqr();
        bpb_formula[(e.u, e.u)] += C64::new(h2 * f[e.v].norm_sqr(), 0.0);
        bpb_formula[(e.v, e.v)] += C64::new(h2 * f[e.u].norm_sqr(), 0.0);
        let (zu, zv) = (f[e.u].norm() <= zthr, f[e.v].norm() <= zthr);
        if zu && !zv {
            range_vertices.push(e.u);
        }
        if zv && !zu {
            range_vertices.push(e.v);
        }
    }
    range_vertices.sort_unstable();
    range_vertices.dedup();

    // Ran(BPB*) vs span{e_u : u ∈ range_vertices}
    let bpb_eig = eig_hermitian(&bpb)?;
    let thr = 1e-10 * pack.scale * pack.scale;
    let rank = bpb_eig.values.iter().filter(|v| v.abs() > thr).count();
    let mut outside = 0.0_f64;
    for (i, row) in bpb.row_iter().enumerate() {
        if !range_vertices.contains(&i) {
            outside = outside.max(row.iter().fold(0.0_f64, |a, z| a.max(z.norm())));
        }
    }
    let range_consistent = rank == range_vertices.len() && outside <= thr;

    Ok(BobReport {
        bob_formula_deviation: max_abs(&(&bob - &bob_formula)),
        bpb_formula_deviation: max_abs(&(&bpb - &bpb_formula)),
        bob,
        bpb,
        range_vertices,
        range_consistent,
    })
}

/// One side-by-side evaluation of an index identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub lhs: i64,
    pub rhs: i64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexReport {
    pub w: Inertia,
    pub omega: Inertia,
    pub s: Inertia,
    pub a: Inertia,
    pub i_infty: usize,
    pub identities: Vec<IdentityCheck>,
}

impl IndexReport {
    pub fn all_pass(&self) -> bool {
        self.identities.iter().all(|c| c.pass)
    }
}

/// Evaluates the four index formulas for `W` in terms of `Ω`, `S`, `A` and `i∞`.
pub fn index_identities(pack: &DerivativePack) -> Result<IndexReport> {
    let residual = if pack.a_null.ncols() == 0 {
        0.0
    } else {
        max_abs(&(pack.b.adjoint() * &pack.a_null))
    };
    if residual > CRITICAL_EPS * pack.scale {
        return Err(DispersionError::RegularityViolated { residual });
    }
    let w = pack.w_inertia()?;
    let om = pack.omega_inertia()?;
    let s = pack.s_inertia()?;
    let a = pack.a_inertia();
    let inf = pack.i_infty as i64;
    let check = |name: &str, lhs: i64, rhs: i64| IdentityCheck {
        name: name.to_string(),
        lhs,
        rhs,
        pass: lhs == rhs,
    };
    let identities = vec![
        check("i-(W) = i-(Ω) + i-(S) + i∞ - i-(A)", w.minus, om.minus + s.minus + inf - a.minus),
        check("i0(W) = i0(Ω) + i0(S) - i∞ - i0(A)", w.zero, om.zero + s.zero - inf - a.zero),
        check("i+(W) = i+(Ω) + i+(S) + i∞ - i+(A)", w.plus, om.plus + s.plus + inf - a.plus),
        check(
            "i+(W) = i+(Ω) - i-(S) - i0(S) + i-(A) + i0(A)",
            w.plus,
            om.plus - s.minus - s.zero + a.minus + a.zero,
        ),
    ];
    Ok(IndexReport {
        w,
        omega: om,
        s,
        a,
        i_infty: pack.i_infty,
        identities,
    })
}

/// The family `k ↦ T(α° + J k)` with chain-rule derivatives.
pub struct Reparameterized<'a, M: BlochModel + ?Sized> {
    base: &'a M,
    origin: Vec<f64>,
    jac: DMatrix<f64>,
}

impl<'a, M: BlochModel + ?Sized> Reparameterized<'a, M> {
    pub fn new(base: &'a M, origin: Vec<f64>, jac: DMatrix<f64>) -> Result<Self> {
        let d = base.dimension();
        if jac.shape() != (d, d) || origin.len() != d {
            return Err(DispersionError::DimensionMismatch {
                expected: d,
                found: jac.nrows(),
            });
        }
        let det = jac.determinant();
        if det.abs() <= 1e-10 {
            return Err(DispersionError::SingularJacobian { det });
        }
        Ok(Self { base, origin, jac })
    }

    fn alpha(&self, k: &[f64]) -> Vec<f64> {
        let d = self.origin.len();
        (0..d)
            .map(|i| self.origin[i] + (0..d).map(|m| self.jac[(i, m)] * k[m]).sum::<f64>())
            .collect()
    }
}

impl<M: BlochModel + ?Sized> BlochModel for Reparameterized<'_, M> {
    fn dimension(&self) -> usize {
        self.base.dimension()
    }

    fn size(&self) -> usize {
        self.base.size()
    }

    fn matrix_at(&self, k: &[f64]) -> CMatrix {
        self.base.matrix_at(&self.alpha(k))
    }

    fn energy_scale(&self) -> f64 {
        self.base.energy_scale()
    }

    fn first_derivative(&self, k: &[f64], m: usize) -> CMatrix {
        let a = self.alpha(k);
        let n = self.size();
        let mut out = CMatrix::zeros(n, n);
        for i in 0..self.dimension() {
            let jim = self.jac[(i, m)];
            if jim != 0.0 {
                out += self.base.first_derivative(&a, i) * C64::new(jim, 0.0);
            }
        }
        out
    }

    fn second_derivative(&self, k: &[f64], m: usize, l: usize) -> CMatrix {
        let a = self.alpha(k);
        let n = self.size();
        let d = self.dimension();
        let mut out = CMatrix::zeros(n, n);
        for i in 0..d {
            for r in 0..d {
                let c = self.jac[(i, m)] * self.jac[(r, l)];
                if c != 0.0 {
                    out += self.base.second_derivative(&a, i, r) * C64::new(c, 0.0);
                }
            }
        }
        out
    }
}

/// Result of [`reparameterize`].
#[derive(Debug, Clone)]
pub struct ReparamReport {
    /// Pack of the reparameterized family at `k = 0`.
    pub pack: DerivativePack,
    /// `JᵀWJ` from the original pack.
    pub congruent_w: CMatrix,
    pub deviation: f64,
    pub inertia_preserved: bool,
}

/// Recomputes the pack for `T̃(k) = T(α° + J k)` at `k = 0` and checks
/// `W̃ = JᵀWJ` together with invariance of the inertia.
pub fn reparameterize<M: BlochModel + ?Sized>(
    model: &M,
    pack: &DerivativePack,
    jac: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<ReparamReport> {
    let re = Reparameterized::new(model, pack.point.clone(), jac.clone())?;
    let d = model.dimension();
    let be = band_at_point(&re, &vec![0.0; d], pack.band, tol)?;
    let tilde = derivative_pack(&re, &be, tol)?;
    let jc = hermitian::complexify(jac);
    let congruent_w = symmetrize(&(jc.transpose() * &pack.w * &jc));
    let deviation = max_abs(&(&tilde.w - &congruent_w));
    let inertia_preserved = tilde.w_inertia()? == pack.w_inertia()?;
    if deviation > 1e-9 * pack.scale.max(1.0) || !inertia_preserved {
        return Err(DispersionError::CongruenceViolated { deviation });
    }
    Ok(ReparamReport {
        pack: tilde,
        congruent_w,
        deviation,
        inertia_preserved,
    })
}

fn band_value<M: BlochModel + ?Sized>(model: &M, point: &[f64], n: usize) -> Result<f64> {
    Ok(spectrum_at(model, point)?[n - 1])
}

/// Central finite-difference gradient of `λₙ`.
pub fn finite_difference_gradient<M: BlochModel + ?Sized>(
    model: &M,
    point: &[f64],
    n: usize,
    h: f64,
) -> Result<DVector<f64>> {
    let d = point.len();
    let mut g = DVector::zeros(d);
    for j in 0..d {
        let mut p = point.to_vec();
        p[j] += h;
        let up = band_value(model, &p, n)?;
        p[j] = point[j] - h;
        let dn = band_value(model, &p, n)?;
        g[j] = (up - dn) / (2.0 * h);
    }
    Ok(g)
}

/// Central second-order finite-difference Hessian of `λₙ`.
pub fn finite_difference_hessian<M: BlochModel + ?Sized>(
    model: &M,
    point: &[f64],
    n: usize,
    h: f64,
) -> Result<DMatrix<f64>> {
    let d = point.len();
    let mut hess = DMatrix::zeros(d, d);
    let at = |shifts: &[(usize, f64)]| -> Result<f64> {
        let mut p = point.to_vec();
        for &(j, s) in shifts {
            p[j] += s;
        }
        band_value(model, &p, n)
    };
    let center = at(&[])?;
    for i in 0..d {
        hess[(i, i)] = (at(&[(i, h)])? - 2.0 * center + at(&[(i, -h)])?) / (h * h);
        for j in (i + 1)..d {
            let v = (at(&[(i, h), (j, h)])? - at(&[(i, h), (j, -h)])? - at(&[(i, -h), (j, h)])?
                + at(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use std::f64::consts::PI;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn band_index_is_validated() {
        let fam = catalog::honeycomb(0.0, 1.0).family;
        let a = Quasimomentum::zeros(2);
        assert!(matches!(
            band_at(&fam, &a, 0, &tol()),
            Err(DispersionError::BandOutOfRange { .. })
        ));
        assert!(matches!(
            band_at(&fam, &a, 3, &tol()),
            Err(DispersionError::BandOutOfRange { .. })
        ));
    }

    #[test]
    fn phase_convention_on_band_vector() {
        let fam = catalog::hks_magnetic(0.1).family;
        let be = band_at(&fam, &Quasimomentum::new(vec![0.4, -1.3]), 2, &tol()).unwrap();
        let max = max_modulus(&be.vector);
        let pivot = be.vector.iter().position(|z| z.norm() >= max * (1.0 - 1e-12)).unwrap();
        assert_eq!(be.vector[pivot].im, 0.0);
        assert!(be.vector[pivot].re > 0.0);
        assert!((be.vector.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lieb_band_three_at_corner() {
        let fam = catalog::lieb(1.0, -1.0, -1.0).family;
        let a = Quasimomentum::new(vec![PI, PI]);
        let be = band_at(&fam, &a, 3, &tol()).unwrap();
        assert!((be.value - 1.0).abs() < 1e-14);
        assert!((be.vector[0].re - 1.0).abs() < 1e-14);
        assert!(be.simple);
        assert!(!band_at(&fam, &a, 1, &tol()).unwrap().simple);
        assert!(!band_at(&fam, &a, 2, &tol()).unwrap().simple);
    }

    #[test]
    fn degenerate_eigenvalue_is_refused() {
        let fam = catalog::lieb(1.0, -1.0, -1.0).family;
        let be = band_at(&fam, &Quasimomentum::new(vec![PI, PI]), 1, &tol()).unwrap();
        assert!(matches!(
            derivative_pack(&fam, &be, &tol()),
            Err(DispersionError::Degenerate { band: 1, .. })
        ));
    }

    #[test]
    fn honeycomb_pack_matches_closed_form() {
        let fam = catalog::honeycomb(0.0, 1.0).family;
        let a = Quasimomentum::new(vec![2.0 * PI / 3.0, -2.0 * PI / 3.0]);
        let be = band_at(&fam, &a, 1, &tol()).unwrap();
        assert!(be.value.abs() < 1e-14);
        let pack = derivative_pack(&fam, &be, &tol()).unwrap();
        let w0 = C64::from_polar(1.0, -2.0 * PI / 3.0);
        let expected = CMatrix::from_row_slice(2, 2, &[-C64::new(1.0, 0.0), -w0, -w0.conj(), -C64::new(1.0, 0.0)]);
        assert!(max_abs(&(&pack.w - expected)) < 1e-12);
        assert!(pack.omega.amax() < 1e-14);
        assert_eq!(pack.i_infty, 1);
        assert_eq!(pack.s.shape(), (1, 1));
        assert!(pack.s[(0, 0)].norm() < 1e-14);
        // column pattern (0, i e^{∓2πi/3})
        assert!(pack.b[(0, 0)].norm() < 1e-14);
        assert!((pack.b[(1, 0)] - C64::i() * C64::from_polar(1.0, -2.0 * PI / 3.0)).norm() < 1e-14);
        assert!((pack.b[(1, 1)] - C64::i() * C64::from_polar(1.0, 2.0 * PI / 3.0)).norm() < 1e-14);
        assert!(criticality_residual(&pack) < 1e-12);
        assert!(pack.crossing_vanishing.is_empty());
        assert_eq!(pack.j_double_prime, vec![1, 2]);
    }

    #[test]
    fn criticality_residual_equals_gradient_norm() {
        let fam = catalog::honeycomb(0.0, 1.0).family;
        let be = band_at(&fam, &Quasimomentum::new(vec![0.3, 0.1]), 1, &tol()).unwrap();
        let pack = derivative_pack(&fam, &be, &tol()).unwrap();
        let g = pack.gradient_norm();
        assert!(g > 1e-3);
        assert!((criticality_residual(&pack) - g).abs() < 1e-13 * g.max(1.0));
    }

    #[test]
    fn lieb_flat_band_is_everywhere_critical() {
        let fam = catalog::lieb(1.0, -1.0, -1.0).family;
        for a in [[0.3, 0.1], [-2.0, 1.7], [1.0, -0.4]] {
            let be = band_at(&fam, &Quasimomentum::new(a.to_vec()), 2, &tol()).unwrap();
            assert!((be.value + 1.0).abs() < 1e-13);
            let pack = derivative_pack(&fam, &be, &tol()).unwrap();
            assert!(criticality_residual(&pack) < 1e-12);
        }
    }

    #[test]
    fn bob_star_requires_critical_point() {
        let fam = catalog::honeycomb(0.0, 1.0).family;
        let be = band_at(&fam, &Quasimomentum::new(vec![0.3, 0.1]), 1, &tol()).unwrap();
        let pack = derivative_pack(&fam, &be, &tol()).unwrap();
        assert!(matches!(bob_star(&pack), Err(DispersionError::NotCritical { .. })));
    }

    #[test]
    fn honeycomb_bpb() {
        let fam = catalog::honeycomb(0.0, 1.0).family;
        let a = Quasimomentum::new(vec![2.0 * PI / 3.0, -2.0 * PI / 3.0]);
        let be = band_at(&fam, &a, 1, &tol()).unwrap();
        let pack = derivative_pack(&fam, &be, &tol()).unwrap();
        let rep = bob_star(&pack).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(2.0, 0.0)]);
        assert!(max_abs(&(&rep.bpb - expected)) < 1e-13);
        assert!(rep.bob_formula_deviation < 1e-13);
        assert!(rep.bpb_formula_deviation < 1e-13);
        assert_eq!(rep.range_vertices, vec![1]);
        assert!(rep.range_consistent);
    }

    #[test]
    fn identity_jacobian_reproduces_pack() {
        let fam = catalog::lieb(1.0, -1.0, -1.0).family;
        let be = band_at(&fam, &Quasimomentum::new(vec![PI, PI]), 3, &tol()).unwrap();
        let pack = derivative_pack(&fam, &be, &tol()).unwrap();
        let rep = reparameterize(&fam, &pack, &DMatrix::identity(2, 2), &tol()).unwrap();
        assert!(rep.deviation < 1e-14);
        assert!(max_abs(&(&rep.pack.w - &pack.w)) < 1e-14);
    }

    #[test]
    fn singular_jacobian_rejected() {
        let fam = catalog::lieb(1.0, -1.0, -1.0).family;
        let be = band_at(&fam, &Quasimomentum::new(vec![PI, PI]), 3, &tol()).unwrap();
        let pack = derivative_pack(&fam, &be, &tol()).unwrap();
        let jac = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            reparameterize(&fam, &pack, &jac, &tol()),
            Err(DispersionError::SingularJacobian { .. })
        ));
    }

    #[test]
    fn hessian_verification_option() {
        let fam = catalog::lieb(1.0, -1.0, -1.0).family;
        let be = band_at(&fam, &Quasimomentum::new(vec![PI, PI]), 3, &tol()).unwrap();
        let pack = derivative_pack_with(&fam, &be, &tol(), PackOptions { verify_hessian: true }).unwrap();
        assert!(pack.hessian_fd_deviation.unwrap() < 1e-3);
    }
}
