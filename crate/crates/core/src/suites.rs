//! Randomized property suites.
//!
//! Every suite draws its cases from a seeded ChaCha stream, so a
//! `(suite, seed, count)` triple always replays the same cases. Failing
//! cases carry the family matrices and the point so they can be rerun.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{self, HoneycombK};
use crate::certify::{
    corner_points, find_critical_point, grid_points, weyl_bracket_check, Goal, SearchConfig,
    SearchStatus, DET_W_TOL,
};
use crate::dispersion::{
    band_at_point, criticality_residual, derivative_pack, derivative_pack_with,
    finite_difference_gradient, index_identities, reparameterize,
    BandEigen, DerivativePack, PackOptions, CRITICAL_EPS,
};
use crate::hermitian::{
    self, eig_hermitian, epsilon_schur_invariance_check, haynsworth_generalized, max_abs,
    max_imag, restrict, BlockMatrix, Inertia,
};
use crate::lattice::{BlochFamily, Quasimomentum, RawFamilyFile};
use crate::{c64, CMatrix, Tolerances, C64};

/// Suites selectable from the command line.
pub const SUITE_NAMES: [&str; 8] = [
    "gradient",
    "hessian",
    "index",
    "weyl",
    "haynsworth",
    "epsilon-schur",
    "reparam",
    "time-reversal",
];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FailureCase {
    pub family: Option<RawFamilyFile>,
    pub point: Vec<f64>,
    pub band: usize,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub passed: usize,
    pub worst_residual: f64,
    pub threshold: f64,
    pub failures: Vec<FailureCase>,
}

impl SuiteReport {
    fn new(name: &str, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            cases: 0,
            passed: 0,
            worst_residual: 0.0,
            threshold,
            failures: Vec::new(),
        }
    }

    pub fn all_pass(&self) -> bool {
        self.cases > 0 && self.passed == self.cases
    }

    fn record(&mut self, residual: f64, pass: bool, failure: impl FnOnce() -> FailureCase) {
        self.cases += 1;
        if residual.is_nan() {
            self.worst_residual = f64::NAN;
        } else if !self.worst_residual.is_nan() {
            self.worst_residual = self.worst_residual.max(residual);
        }
        if pass {
            self.passed += 1;
        } else {
            self.failures.push(failure());
        }
    }
}

/// Where the families under test come from.
#[derive(Debug, Clone, Copy)]
pub enum FamilySource<'a> {
    /// Fresh random single-crossing families.
    Random,
    /// One fixed family, with fresh random points.
    Fixed(&'a BlochFamily),
}

fn rng_for(seed: u64, suite: &str) -> ChaCha8Rng {
    let tag = suite.bytes().fold(0u64, |h, b| h.wrapping_mul(131).wrapping_add(b as u64));
    ChaCha8Rng::seed_from_u64(seed ^ tag)
}

fn random_angle(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-PI..PI)
}

pub fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Quasimomentum {
    Quasimomentum::new((0..d).map(|_| random_angle(rng)).collect())
}

fn random_scalar(rng: &mut ChaCha8Rng, real: bool) -> C64 {
    if real {
        c64(rng.gen_range(-1.0..1.0), 0.0)
    } else {
        c64(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }
}

/// Random `n×n` Hermitian matrix with entries in the unit box.
pub fn random_hermitian(rng: &mut ChaCha8Rng, n: usize, real: bool) -> CMatrix {
    let mut m = CMatrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = c64(rng.gen_range(-1.0..1.0), 0.0);
        for j in (i + 1)..n {
            let z = random_scalar(rng, real);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
        }
    }
    m
}

/// Random single-crossing family: dense Hermitian `C₀` and one weighted
/// entry `hⱼ E_{uⱼ,vⱼ}` (`uⱼ ≠ vⱼ`) per generator.
pub fn random_family(rng: &mut ChaCha8Rng, n: usize, d: usize, real: bool) -> BlochFamily {
    let c0 = random_hermitian(rng, n, real);
    let coeffs = (0..d)
        .map(|_| {
            let u = rng.gen_range(0..n);
            let v = (u + rng.gen_range(1..n)) % n;
            let mag = rng.gen_range(0.5..1.5);
            let h = if real {
                c64(if rng.gen_bool(0.5) { mag } else { -mag }, 0.0)
            } else {
                C64::from_polar(mag, random_angle(rng))
            };
            let mut c = CMatrix::zeros(n, n);
            c[(u, v)] = h;
            c
        })
        .collect();
    BlochFamily::from_matrices(c0, coeffs).expect("random family is valid")
}

fn draw_family(src: FamilySource<'_>, rng: &mut ChaCha8Rng, dims: (usize, usize), real: bool) -> BlochFamily {
    match src {
        FamilySource::Fixed(f) => f.clone(),
        FamilySource::Random => {
            let n = rng.gen_range(2..=6);
            let d = rng.gen_range(dims.0..=dims.1);
            random_family(rng, n, d, real)
        }
    }
}

/// A converged critical point meeting the certification hypotheses with a
/// comfortable spectral gap.
pub fn random_critical_point(
    family: &BlochFamily,
    rng: &mut ChaCha8Rng,
    tol: &Tolerances,
    attempts: usize,
) -> Option<(BandEigen, DerivativePack)> {
    let cfg = SearchConfig::default();
    for _ in 0..attempts {
        let n = rng.gen_range(1..=family.size());
        let goal = if rng.gen_bool(0.5) { Goal::Min } else { Goal::Max };
        let seed = random_point(rng, family.dimension());
        let Ok(r) = find_critical_point(family, n, &seed, goal, &cfg, tol) else {
            continue;
        };
        if r.status != SearchStatus::Converged {
            continue;
        }
        let be = r.band_eigen;
        if be.gap < 1e-2 * be.scale() {
            continue;
        }
        let Ok(pack) = derivative_pack(family, &be, tol) else {
            continue;
        };
        if pack.crossing_vanishing.is_empty()
            && !pack.borderline_components
            && criticality_residual(&pack) <= CRITICAL_EPS * pack.scale
        {
            return Some((be, pack));
        }
    }
    None
}

fn failure(family: &BlochFamily, point: &[f64], band: usize, detail: String) -> FailureCase {
    FailureCase {
        family: Some(RawFamilyFile::from_family(family)),
        point: point.to_vec(),
        band,
        detail,
    }
}

/// Analytic gradient against central differences (h = 1e−5); the error is
/// measured relative to `max(‖∇λ‖∞, 1e−3·scale)`.
pub fn gradient_suite(src: FamilySource<'_>, count: usize, seed: u64, tol: &Tolerances) -> SuiteReport {
    let threshold = 1e-5;
    let mut rep = SuiteReport::new("gradient", threshold);
    let mut rng = rng_for(seed, "gradient");
    while rep.cases < count {
        let fam = draw_family(src, &mut rng, (1, 3), false);
        let n = rng.gen_range(1..=fam.size());
        let a = random_point(&mut rng, fam.dimension());
        let Ok(be) = band_at_point(&fam, a.components(), n, tol) else { continue };
        if be.gap < 1e-2 * be.scale() {
            continue;
        }
        let pack = derivative_pack(&fam, &be, tol).expect("simple eigenvalue");
        let fd = finite_difference_gradient(&fam, &be.point, n, 1e-5).expect("valid point");
        let denom = pack.gradient.amax().max(1e-3 * be.scale());
        let err = (&pack.gradient - &fd).amax() / denom;
        rep.record(err, err < threshold, || {
            failure(&fam, &be.point, n, format!("relative gradient error {err:e}"))
        });
    }
    rep
}

/// `2 Re W` against a second-order finite-difference Hessian (h = 1e−3) at
/// critical points.
pub fn hessian_suite(src: FamilySource<'_>, count: usize, seed: u64, tol: &Tolerances) -> SuiteReport {
    let threshold = 1e-3;
    let mut rep = SuiteReport::new("hessian", threshold);
    let mut rng = rng_for(seed, "hessian");
    while rep.cases < count {
        let fam = draw_family(src, &mut rng, (1, 3), false);
        let Some((be, _)) = random_critical_point(&fam, &mut rng, tol, 20) else { continue };
        let pack = derivative_pack_with(&fam, &be, tol, PackOptions { verify_hessian: true })
            .expect("simple eigenvalue");
        let err = pack.hessian_fd_deviation.unwrap_or(f64::NAN);
        rep.record(err, err < threshold, || {
            failure(&fam, &be.point, be.band, format!("relative Hessian error {err:e}"))
        });
    }
    rep
}

/// The four index formulas at critical points, checked at integer equality.
pub fn index_suite(src: FamilySource<'_>, count: usize, seed: u64, tol: &Tolerances) -> SuiteReport {
    let mut rep = SuiteReport::new("index", 0.0);
    let mut rng = rng_for(seed, "index");
    while rep.cases < count {
        let fam = draw_family(src, &mut rng, (1, 3), false);
        let Some((be, pack)) = random_critical_point(&fam, &mut rng, tol, 20) else { continue };
        match index_identities(&pack) {
            Ok(r) => {
                let bad = r.identities.iter().filter(|c| !c.pass).count();
                rep.record(bad as f64, bad == 0, || {
                    failure(&fam, &be.point, be.band, format!("{:?}", r.identities))
                });
            }
            Err(e) => rep.record(f64::NAN, false, || failure(&fam, &be.point, be.band, e.to_string())),
        }
    }
    rep
}

/// Weyl bracket around critical points of two-parameter families on a
/// `grid × grid` mesh; violations are measured relative to the pack scale.
pub fn weyl_suite(src: FamilySource<'_>, count: usize, seed: u64, grid: usize, tol: &Tolerances) -> SuiteReport {
    let threshold = 1e-9;
    let mut rep = SuiteReport::new("weyl", threshold);
    let mut rng = rng_for(seed, "weyl");
    while rep.cases < count {
        let fam = draw_family(src, &mut rng, (2, 2), false);
        let Some((be, pack)) = random_critical_point(&fam, &mut rng, tol, 20) else { continue };
        let points = match grid_points(fam.dimension(), grid) {
            Ok(p) => p,
            Err(e) => {
                rep.record(f64::NAN, false, || failure(&fam, &be.point, be.band, e.to_string()));
                return rep;
            }
        };
        match weyl_bracket_check(&fam, &pack, &points) {
            Ok(w) => {
                let r = w.max_violation / pack.scale;
                rep.record(r, r < threshold, || {
                    failure(&fam, &be.point, be.band, format!("Weyl violation {:e} at {:?}", w.max_violation, w.worst_point))
                });
            }
            Err(e) => rep.record(f64::NAN, false, || failure(&fam, &be.point, be.band, e.to_string())),
        }
    }
    rep
}

/// Which kind of `A` block a random block matrix has.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRegime {
    Invertible,
    Singular,
    Zero,
}

/// Random Hermitian block matrix with `m×m` block `A` of the given regime
/// (rank deficit 1–3 when singular).
pub fn random_block(rng: &mut ChaCha8Rng, m: usize, k: usize, regime: BlockRegime) -> BlockMatrix {
    let a = match regime {
        BlockRegime::Zero => CMatrix::zeros(m, m),
        _ => {
            let deficit = match regime {
                BlockRegime::Singular => rng.gen_range(1..=3.min(m)),
                _ => 0,
            };
            let u = random_unitary(rng, m);
            let vals: Vec<f64> = (0..m)
                .map(|i| {
                    if i < deficit {
                        0.0
                    } else {
                        let mag = rng.gen_range(0.2..2.0);
                        if rng.gen_bool(0.5) { mag } else { -mag }
                    }
                })
                .collect();
            let diag = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(m, vals.into_iter().map(|v| c64(v, 0.0))));
            hermitian::symmetrize(&(&u * diag * u.adjoint()))
        }
    };
    let b = CMatrix::from_fn(m, k, |_, _| random_scalar(rng, false));
    let c = random_hermitian(rng, k, false);
    BlockMatrix::new(a, b, c).expect("random block is valid")
}

/// Unitary factor of a random complex matrix via Gram–Schmidt.
pub fn random_unitary(rng: &mut ChaCha8Rng, m: usize) -> CMatrix {
    loop {
        let g = CMatrix::from_fn(m, m, |_, _| random_scalar(rng, false));
        let mut q = CMatrix::zeros(m, m);
        let mut ok = true;
        for j in 0..m {
            let mut v = g.column(j).into_owned();
            for i in 0..j {
                let qi = q.column(i).into_owned();
                let proj = qi.dotc(&v);
                v -= qi * proj;
            }
            let nrm = v.norm();
            if nrm < 1e-3 {
                ok = false;
                break;
            }
            q.set_column(j, &(v / c64(nrm, 0.0)));
        }
        if ok {
            return q;
        }
    }
}

/// `In(M) = In_{Null(B)}(C) + (rk B, rk B, m − rk B)` for `A = 0`, computed
/// without the generalized machinery.
pub fn han_fujiwara_inertia(blk: &BlockMatrix, tol: f64) -> Inertia {
    let m = blk.a.nrows() as i64;
    let btb = hermitian::symmetrize(&(blk.b.adjoint() * &blk.b));
    let e = eig_hermitian(&btb).expect("B*B is Hermitian");
    let rank = e.values.iter().filter(|v| v.abs() > tol * tol.max(1.0)).count() as i64;
    let null_b = e.null_basis(tol * tol.max(1.0));
    let c_on_null = if null_b.ncols() == 0 {
        Inertia::default()
    } else {
        hermitian::inertia(&restrict(&blk.c, &null_b).expect("orthonormal"), Some(tol)).expect("Hermitian")
    };
    c_on_null + Inertia::new(rank, rank, m - rank)
}

/// Generalized Haynsworth identity on random blocks cycling through
/// invertible, singular and zero `A`, plus the zero-`A` special case.
pub fn haynsworth_suite(count: usize, seed: u64) -> SuiteReport {
    let mut rep = SuiteReport::new("haynsworth", 0.0);
    let mut rng = rng_for(seed, "haynsworth");
    let regimes = [BlockRegime::Invertible, BlockRegime::Singular, BlockRegime::Zero];
    for i in 0..count {
        let regime = regimes[i % 3];
        let m = rng.gen_range(1..=5);
        let k = rng.gen_range(1..=5);
        let blk = random_block(&mut rng, m, k, regime);
        let detail = |s: String| FailureCase {
            family: None,
            point: Vec::new(),
            band: 0,
            detail: format!("{regime:?} m={m} k={k}: {s}"),
        };
        match haynsworth_generalized(&blk, None) {
            Ok(r) => {
                let mut ok = r.reconstructed() == r.inertia_m;
                if regime == BlockRegime::Invertible {
                    ok &= r.i_infty == 0;
                }
                if regime == BlockRegime::Zero {
                    ok &= han_fujiwara_inertia(&blk, r.tol) == r.inertia_m;
                }
                rep.record(if ok { 0.0 } else { 1.0 }, ok, || {
                    detail(format!("M {} vs reconstructed {}", r.inertia_m, r.reconstructed()))
                });
            }
            Err(e) => rep.record(f64::NAN, false, || detail(e.to_string())),
        }
    }
    rep
}

/// `(M/A_ε)_Q` for `ε ∈ {0.1, 1, 10}` on random singular-`A` blocks.
pub fn epsilon_schur_suite(count: usize, seed: u64) -> SuiteReport {
    let threshold = 1e-8;
    let mut rep = SuiteReport::new("epsilon-schur", threshold);
    let mut rng = rng_for(seed, "epsilon-schur");
    for _ in 0..count {
        let m = rng.gen_range(2..=5);
        let k = rng.gen_range(1..=5);
        let blk = random_block(&mut rng, m, k, BlockRegime::Singular);
        let scale = max_abs(&blk.c).max(1.0);
        match epsilon_schur_invariance_check(&blk, &[0.1, 1.0, 10.0]) {
            Ok(dev) => {
                let r = dev / scale;
                rep.record(r, r < threshold, || FailureCase {
                    family: None,
                    point: Vec::new(),
                    band: 0,
                    detail: format!("m={m} k={k}: deviation {dev:e}"),
                });
            }
            Err(e) => rep.record(f64::NAN, false, || FailureCase {
                family: None,
                point: Vec::new(),
                band: 0,
                detail: e.to_string(),
            }),
        }
    }
    rep
}

fn random_jacobian(rng: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    loop {
        let j = DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.5..1.5));
        if j.determinant().abs() > 0.1 {
            return j;
        }
    }
}

/// `W̃ = JᵀWJ` and inertia invariance under random linear changes of
/// variables at critical points.
pub fn reparam_suite(src: FamilySource<'_>, count: usize, seed: u64, tol: &Tolerances) -> SuiteReport {
    let threshold = 1e-9;
    let mut rep = SuiteReport::new("reparam", threshold);
    let mut rng = rng_for(seed, "reparam");
    while rep.cases < count {
        let fam = draw_family(src, &mut rng, (1, 3), false);
        let Some((be, pack)) = random_critical_point(&fam, &mut rng, tol, 20) else { continue };
        let jac = random_jacobian(&mut rng, fam.dimension());
        match reparameterize(&fam, &pack, &jac, tol) {
            Ok(r) => {
                let rel = r.deviation / pack.scale.max(1.0);
                rep.record(rel, rel < threshold && r.inertia_preserved, || {
                    failure(&fam, &be.point, be.band, format!("deviation {:e}", r.deviation))
                });
            }
            Err(e) => rep.record(f64::NAN, false, || failure(&fam, &be.point, be.band, e.to_string())),
        }
    }
    rep
}

/// Honeycomb model differentiated directly in Cartesian `k` against the
/// torus model pulled back by the lattice-vector Jacobian. Returns
/// `max |W(k) − JᵀW(α)J|` and whether the inertias agree.
pub fn honeycomb_lattice_reparam(qa: f64, qb: f64, tol: &Tolerances) -> Result<(f64, bool), String> {
    let ex = catalog::honeycomb(qa, qb);
    let alpha = [2.0 * PI / 3.0, -2.0 * PI / 3.0];
    let be = band_at_point(&ex.family, &alpha, 1, tol).map_err(|e| e.to_string())?;
    let pack = derivative_pack(&ex.family, &be, tol).map_err(|e| e.to_string())?;
    let jac = catalog::honeycomb_lattice_jacobian();
    let k0 = jac
        .clone()
        .try_inverse()
        .ok_or("lattice Jacobian is singular")?
        * nalgebra::DVector::from_column_slice(&alpha);
    let km = HoneycombK { qa, qb };
    let kbe = band_at_point(&km, k0.as_slice(), 1, tol).map_err(|e| e.to_string())?;
    let kpack = derivative_pack(&km, &kbe, tol).map_err(|e| e.to_string())?;
    let jc = hermitian::complexify(&jac);
    let pulled = jc.transpose() * &pack.w * &jc;
    let dev = max_abs(&(&kpack.w - pulled));
    let same = kpack.w_inertia().map_err(|e| e.to_string())? == pack.w_inertia().map_err(|e| e.to_string())?;
    Ok((dev, same))
}

/// Statistics of the time-reversal suite beyond pass/fail.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TimeReversalStats {
    pub corners_checked: usize,
    pub interior_points: usize,
    pub worst_corner_gradient: f64,
    pub worst_corner_im_w: f64,
    pub worst_interior_det_residual: f64,
}

/// Real families: every corner with a simple eigenvalue is critical with
/// real `W`, and interior critical points have `det W = 0`.
pub fn time_reversal_suite(
    src: FamilySource<'_>,
    count: usize,
    seed: u64,
    tol: &Tolerances,
) -> (SuiteReport, TimeReversalStats) {
    let mut rep = SuiteReport::new("time-reversal", DET_W_TOL);
    let mut stats = TimeReversalStats::default();
    let mut rng = rng_for(seed, "time-reversal");
    let cfg = SearchConfig::default();
    for _ in 0..count {
        let fam = draw_family(src, &mut rng, (1, 3), true);
        let d = fam.dimension();
        let mut ok = true;
        let mut notes = Vec::new();
        for c in corner_points(d) {
            for n in 1..=fam.size() {
                let be = band_at_point(&fam, c.components(), n, tol).expect("valid band");
                if !be.simple {
                    continue;
                }
                let pack = derivative_pack(&fam, &be, tol).expect("simple eigenvalue");
                let g = pack.gradient_norm();
                let im = max_imag(&pack.w);
                stats.corners_checked += 1;
                stats.worst_corner_gradient = stats.worst_corner_gradient.max(g);
                stats.worst_corner_im_w = stats.worst_corner_im_w.max(im);
                if g >= 1e-10 || im >= 1e-10 {
                    ok = false;
                    notes.push(format!("corner {c} band {n}: |grad| {g:e}, |Im W| {im:e}"));
                }
            }
        }
        for _ in 0..6 {
            let n = rng.gen_range(1..=fam.size());
            let goal = if rng.gen_bool(0.5) { Goal::Min } else { Goal::Max };
            let seed_pt = random_point(&mut rng, d);
            let Ok(r) = find_critical_point(&fam, n, &seed_pt, goal, &cfg, tol) else { continue };
            if r.status != SearchStatus::Converged || r.band_eigen.quasimomentum().is_corner(1e-6) {
                continue;
            }
            let be = r.band_eigen;
            if be.gap < 1e-2 * be.scale() {
                continue;
            }
            let pack = derivative_pack(&fam, &be, tol).expect("simple eigenvalue");
            if !pack.crossing_vanishing.is_empty() {
                continue;
            }
            let e = eig_hermitian(&pack.w).expect("Hermitian W");
            let norm = e.spectral_norm();
            let res = if norm == 0.0 {
                0.0
            } else {
                e.values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs())) / norm
            };
            stats.interior_points += 1;
            stats.worst_interior_det_residual = stats.worst_interior_det_residual.max(res);
            if res >= DET_W_TOL {
                ok = false;
                notes.push(format!("interior {} band {n}: det residual {res:e}", be.quasimomentum()));
            }
        }
        rep.record(stats.worst_interior_det_residual, ok, || failure(&fam, &[], 0, notes.join("; ")));
    }
    (rep, stats)
}
