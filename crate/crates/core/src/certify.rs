//! Critical point search, verdicts and brute-force oracles.

use std::cmp::Ordering;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dispersion::{
    band_at, band_at_point, criticality_residual, derivative_pack, spectrum_at, BandEigen,
    DerivativePack, DispersionError, CRITICAL_EPS,
};
use crate::hermitian::{self, eig_hermitian, max_imag, HermitianError, Inertia};
use crate::lattice::{BlochFamily, BlochModel, Quasimomentum};
use crate::{CMatrix, Tolerances};

/// Largest grid a scan may visit.
pub const GRID_BUDGET: usize = 10_000_000;
/// `‖Im W‖∞` bound at corner points of time-reversal families.
pub const CORNER_IM_TOL: f64 = 1e-10;
/// Bound on `min |eig W| / ‖W‖₂` at interior points of time-reversal families.
pub const DET_W_TOL: f64 = 1e-6;
/// Relative margin for strict definiteness of `Re W` in three dimensions.
pub const STRICT_EPS: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error("point is not critical: residual {residual:e}")]
    NotCritical { residual: f64 },
    #[error("grid of {points} points exceeds budget {budget}")]
    GridBudget { points: f64, budget: usize },
    #[error("grid needs at least 2 points per axis, got {0}")]
    InvalidGrid(usize),
    #[error("hypothesis failed: {0:?}")]
    HypothesisFailed(ReasonCode),
    #[error("no certificates to probe")]
    NoCertificates,
    #[error(transparent)]
    Dispersion(#[from] DispersionError),
    #[error(transparent)]
    Hermitian(#[from] HermitianError),
}

pub type Result<T> = std::result::Result<T, CertifyError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    GlobalMin,
    GlobalMax,
    FlatBand,
    NoCertificate,
    Degenerate,
    HypothesisFailed,
}

impl Verdict {
    pub fn is_certificate(self) -> bool {
        matches!(self, Verdict::GlobalMin | Verdict::GlobalMax | Verdict::FlatBand)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    WPsd,
    WNsd,
    WIndefinite,
    WZero,
    CornerPoint,
    WNotReal,
    DetWZero,
    DetWNonzero,
    #[serde(rename = "dim_le_2")]
    DimLe2,
    #[serde(rename = "dim_3_nondegenerate")]
    Dim3Nondegenerate,
    #[serde(rename = "dim_3_degenerate")]
    Dim3Degenerate,
    LowDimRuleInconsistent,
    EigvecVanishesBothEnds,
    NotSingleCrossing,
    EigenvalueDegenerate,
    BorderlineInertia,
    BorderlineComponent,
    LoopCrossingEdge,
    FlatBandProbe,
}

/// Extremum type sought by the search or implied by a rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    Min,
    Max,
}

impl Goal {
    fn sign(self) -> f64 {
        match self {
            Goal::Min => 1.0,
            Goal::Max => -1.0,
        }
    }
}

/// Grid confirmation attached to a certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleRecord {
    pub points_per_axis: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    /// `Some(true)` if the grid agrees with the certified extremum.
    pub confirmed: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Certificate {
    pub alpha_star: Quasimomentum,
    pub band: usize,
    pub value: f64,
    pub verdict: Verdict,
    pub reason_codes: Vec<ReasonCode>,
    pub w_inertia: Option<Inertia>,
    pub rew_inertia: Option<Inertia>,
    pub w_eigenvalues: Vec<f64>,
    pub rew_eigenvalues: Vec<f64>,
    /// `min |eig W| / ‖W‖₂` (0 when `W = 0`).
    pub det_w_residual: Option<f64>,
    pub im_w_norm: Option<f64>,
    pub gradient_residual: f64,
    pub i_infty: Option<usize>,
    pub gap: f64,
    pub oracle: Option<OracleRecord>,
}

impl Certificate {
    fn degenerate(be: &BandEigen) -> Self {
        Self {
            alpha_star: be.quasimomentum(),
            band: be.band,
            value: be.value,
            verdict: Verdict::Degenerate,
            reason_codes: vec![ReasonCode::EigenvalueDegenerate],
            w_inertia: None,
            rew_inertia: None,
            w_eigenvalues: Vec::new(),
            rew_eigenvalues: Vec::new(),
            det_w_residual: None,
            im_w_norm: None,
            gradient_residual: f64::NAN,
            i_infty: None,
            gap: be.gap,
            oracle: None,
        }
    }

    pub fn has(&self, code: ReasonCode) -> bool {
        self.reason_codes.contains(&code)
    }
}

/// All `2^d` points of `{0, π}^d` in lexicographic order.
pub fn corner_points(d: usize) -> Vec<Quasimomentum> {
    (0..1usize << d)
        .map(|mask| {
            Quasimomentum::new(
                (0..d)
                    .map(|j| if mask >> (d - 1 - j) & 1 == 1 { PI } else { 0.0 })
                    .collect(),
            )
        })
        .collect()
}

/// Verdict implied by the inertia of `W` alone.
pub fn verdict_from_inertia(w: Inertia) -> (Verdict, ReasonCode) {
    match (w.minus, w.plus) {
        (0, 0) => (Verdict::FlatBand, ReasonCode::WZero),
        (0, _) => (Verdict::GlobalMin, ReasonCode::WPsd),
        (_, 0) => (Verdict::GlobalMax, ReasonCode::WNsd),
        _ => (Verdict::NoCertificate, ReasonCode::WIndefinite),
    }
}

/// Outcome of the low-dimensional sign rules, which read the sign of `W`
/// off `Re W` when `det W = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LowDimRule {
    pub extremum: Option<Goal>,
    pub code: Option<ReasonCode>,
}

/// For `d ≤ 2` a semidefinite `Re W` with `det W = 0` fixes the sign of `W`.
/// For `d = 3` only a strictly definite `Re W` does; anything weaker yields
/// `dim_3_degenerate`. No rule exists beyond three dimensions.
pub fn low_dimension_rule(w: &CMatrix, tol: f64) -> std::result::Result<LowDimRule, DispersionError> {
    let d = w.nrows();
    let re = hermitian::real_part(w);
    let re_eig = eig_hermitian(&re)?;
    let vals = &re_eig.values;
    let norm = re_eig.spectral_norm();
    if d <= 2 {
        let w_eig = eig_hermitian(w)?;
        let det_zero = det_residual(&w_eig.values) < DET_W_TOL || max_imag(w) < CORNER_IM_TOL;
        let extremum = if !det_zero {
            None
        } else if vals.iter().all(|&v| v >= -tol) {
            Some(Goal::Min)
        } else if vals.iter().all(|&v| v <= tol) {
            Some(Goal::Max)
        } else {
            None
        };
        return Ok(LowDimRule {
            extremum,
            code: extremum.map(|_| ReasonCode::DimLe2),
        });
    }
    if d == 3 {
        let thr = STRICT_EPS * norm;
        let extremum = if norm > 0.0 && vals.iter().all(|&v| v > thr) {
            Some(Goal::Min)
        } else if norm > 0.0 && vals.iter().all(|&v| v < -thr) {
            Some(Goal::Max)
        } else {
            None
        };
        let code = if extremum.is_some() {
            ReasonCode::Dim3Nondegenerate
        } else {
            ReasonCode::Dim3Degenerate
        };
        return Ok(LowDimRule {
            extremum,
            code: Some(code),
        });
    }
    Ok(LowDimRule {
        extremum: None,
        code: None,
    })
}

fn det_residual(values: &[f64]) -> f64 {
    let norm = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    if norm == 0.0 {
        return 0.0;
    }
    values.iter().fold(f64::INFINITY, |a, v| a.min(v.abs())) / norm
}

/// Issues a certificate for a critical point.
pub fn certify(family: &BlochFamily, be: &BandEigen, pack: &DerivativePack) -> Result<Certificate> {
    if !be.simple {
        return Ok(Certificate::degenerate(be));
    }
    let residual = criticality_residual(pack);
    if residual > CRITICAL_EPS * pack.scale {
        return Err(CertifyError::NotCritical { residual });
    }
    let tol = pack.tol;
    let w_eig = pack.w_eigen()?;
    let w_inertia = w_eig.inertia(tol);
    let re_eig = eig_hermitian(&hermitian::real_part(&pack.w))?;
    let rew_inertia = re_eig.inertia(tol);
    let det_w = det_residual(&w_eig.values);
    let im_w = max_imag(&pack.w);

    let mut codes = Vec::new();
    let verdict = if !family.single_crossing() {
        codes.push(ReasonCode::NotSingleCrossing);
        Verdict::HypothesisFailed
    } else if !pack.crossing_vanishing.is_empty() {
        codes.push(ReasonCode::EigvecVanishesBothEnds);
        Verdict::HypothesisFailed
    } else {
        let (v, code) = verdict_from_inertia(w_inertia);
        codes.push(code);
        v
    };

    let alpha = be.quasimomentum();
    let corner = alpha.is_corner(1e-12);
    if family.time_reversal() {
        if corner {
            codes.push(ReasonCode::CornerPoint);
            if im_w >= CORNER_IM_TOL {
                codes.push(ReasonCode::WNotReal);
            }
        } else if verdict != Verdict::HypothesisFailed {
            codes.push(if det_w < DET_W_TOL {
                ReasonCode::DetWZero
            } else {
                ReasonCode::DetWNonzero
            });
        }
    }
    if verdict != Verdict::HypothesisFailed && (family.time_reversal() || pack.dimension() <= 3) {
        let rule = low_dimension_rule(&pack.w, tol)?;
        if let Some(code) = rule.code {
            codes.push(code);
        }
        let contradicts = match rule.extremum {
            Some(Goal::Min) => w_inertia.minus != 0,
            Some(Goal::Max) => w_inertia.plus != 0,
            None => false,
        };
        if contradicts {
            codes.push(ReasonCode::LowDimRuleInconsistent);
        }
    }
    if pack.borderline_inertia {
        codes.push(ReasonCode::BorderlineInertia);
    }
    if pack.borderline_components {
        codes.push(ReasonCode::BorderlineComponent);
    }
    if !family.loop_generators().is_empty() {
        codes.push(ReasonCode::LoopCrossingEdge);
    }

    Ok(Certificate {
        alpha_star: alpha,
        band: be.band,
        value: be.value,
        verdict,
        reason_codes: codes,
        w_inertia: Some(w_inertia),
        rew_inertia: Some(rew_inertia),
        w_eigenvalues: w_eig.values,
        rew_eigenvalues: re_eig.values,
        det_w_residual: Some(det_w),
        im_w_norm: Some(im_w),
        gradient_residual: residual,
        i_infty: pack.single_crossing().then_some(pack.i_infty),
        gap: be.gap,
        oracle: None,
    })
}

/// Band eigenpair, pack and certificate at one point.
pub fn certify_point(
    family: &BlochFamily,
    alpha: &Quasimomentum,
    n: usize,
    tol: &Tolerances,
) -> Result<Certificate> {
    let be = band_at(family, alpha, n, tol)?;
    if !be.simple {
        return Ok(Certificate::degenerate(&be));
    }
    let pack = derivative_pack(family, &be, tol)?;
    certify(family, &be, &pack)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchConfig {
    pub max_iters: usize,
    /// Stop once `‖∇λ‖∞` falls below this value.
    pub grad_tol: f64,
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Minimum ratio of actual to predicted decrease for accepting a step.
    pub accept_ratio: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-12,
            initial_radius: 0.5,
            max_radius: PI,
            accept_ratio: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStatus {
    Converged,
    NotConverged,
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub seed: Quasimomentum,
    pub goal: Goal,
    pub band_eigen: BandEigen,
    pub status: SearchStatus,
    pub iterations: usize,
    pub gradient_norm: f64,
}

fn grad_hess<M: BlochModel + ?Sized>(
    model: &M,
    be: &BandEigen,
    tol: &Tolerances,
) -> std::result::Result<(DVector<f64>, DMatrix<f64>), DispersionError> {
    let pack = derivative_pack(model, be, tol)?;
    Ok((pack.gradient, pack.hessian))
}

/// Minimizer of `gᵀp + ½ pᵀHp` subject to `‖p‖ ≤ radius`.
fn trust_region_step(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let d = g.len();
    let eig = eig_hermitian(&hermitian::complexify(h)).expect("symmetric Hessian");
    let v = eig.vectors.map(|z| z.re);
    let mu = &eig.values;
    let gt = v.transpose() * g;
    let step_for = |shift: f64| -> DVector<f64> {
        let coeffs = DVector::from_iterator(d, (0..d).map(|i| -gt[i] / (mu[i] + shift)));
        &v * coeffs
    };
    let scale = mu.iter().fold(0.0_f64, |a, m| a.max(m.abs())).max(g.amax()).max(1e-300);
    let lo = (-mu[0]).max(0.0) + 1e-12 * scale;
    if mu[0] > 1e-12 * scale {
        let p = step_for(0.0);
        if p.norm() <= radius {
            return p;
        }
    }
    let p_lo = step_for(lo);
    if p_lo.norm() < radius {
        if mu[0] > 0.0 {
            return p_lo;
        }
        // hard case: walk along the most negative curvature direction
        let rem = (radius * radius - p_lo.norm_squared()).max(0.0).sqrt();
        let dir = v.column(0).into_owned();
        let sign = if g.dot(&dir) > 0.0 { -1.0 } else { 1.0 };
        return p_lo + dir * (sign * rem);
    }
    let mut a = lo;
    let mut b = lo + g.norm() / radius + scale;
    while step_for(b).norm() > radius {
        b *= 2.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if step_for(m).norm() > radius {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-15 * b {
            break;
        }
    }
    step_for(b)
}

/// Trust-region Newton iteration for a critical point of `λₙ` on the torus,
/// using the analytic gradient and `2 Re W` as Hessian.
pub fn find_critical_point<M: BlochModel + ?Sized>(
    model: &M,
    n: usize,
    seed: &Quasimomentum,
    goal: Goal,
    cfg: &SearchConfig,
    tol: &Tolerances,
) -> Result<SearchResult> {
    let sign = goal.sign();
    let mut be = band_at_point(model, seed.components(), n, tol)?;
    let mut radius = cfg.initial_radius;
    let finish = |be: BandEigen, status, iterations, gradient_norm| SearchResult {
        seed: seed.clone(),
        goal,
        band_eigen: be,
        status,
        iterations,
        gradient_norm,
    };
    if !be.simple {
        return Ok(finish(be, SearchStatus::Degenerate, 0, f64::NAN));
    }
    let (mut g, mut h) = grad_hess(model, &be, tol)?;
    for it in 0..cfg.max_iters {
        let gnorm = g.amax();
        if gnorm < cfg.grad_tol {
            return Ok(finish(be, SearchStatus::Converged, it, gnorm));
        }
        let gs = &g * sign;
        let hs = &h * sign;
        let p = trust_region_step(&hs, &gs, radius);
        let pred = -(gs.dot(&p) + 0.5 * p.dot(&(&hs * &p)));
        let x_new = Quasimomentum::new(be.point.iter().zip(p.iter()).map(|(a, s)| a + s).collect());
        let cand = band_at_point(model, x_new.components(), n, tol)?;
        let pnorm = p.norm();
        if !cand.simple {
            radius = 0.25 * pnorm;
        } else {
            let actual = sign * (be.value - cand.value);
            let noise = 1e-13 * be.scale();
            let (gn, hn) = grad_hess(model, &cand, tol)?;
            let accept = if pred.abs() <= noise {
                gn.amax() < gnorm
            } else {
                actual / pred > cfg.accept_ratio
            };
            if accept {
                let rho = if pred.abs() <= noise { 1.0 } else { actual / pred };
                if rho > 0.75 && pnorm > 0.8 * radius {
                    radius = (2.0 * radius).min(cfg.max_radius);
                } else if rho < 0.25 {
                    radius = 0.25 * pnorm;
                }
                be = cand;
                g = gn;
                h = hn;
                continue;
            }
            radius = 0.25 * pnorm;
        }
        if radius < 1e-15 {
            let gnorm = g.amax();
            return Ok(finish(be, SearchStatus::NotConverged, it + 1, gnorm));
        }
    }
    let gnorm = g.amax();
    let status = if gnorm < cfg.grad_tol {
        SearchStatus::Converged
    } else {
        SearchStatus::NotConverged
    };
    Ok(finish(be, status, cfg.max_iters, gnorm))
}

/// `linspace(−π, π, k)`; the endpoint −π is identified with π.
pub fn grid_axis(k: usize) -> Vec<f64> {
    (0..k)
        .map(|i| -PI + 2.0 * PI * i as f64 / (k - 1) as f64)
        .collect()
}

fn grid_size(d: usize, k: usize) -> Result<usize> {
    if k < 2 {
        return Err(CertifyError::InvalidGrid(k));
    }
    let points = (k as f64).powi(d as i32);
    if points > GRID_BUDGET as f64 {
        return Err(CertifyError::GridBudget {
            points,
            budget: GRID_BUDGET,
        });
    }
    Ok(k.pow(d as u32))
}

/// The `idx`-th point of the `k^d` grid, last axis fastest.
pub fn grid_point(axis: &[f64], d: usize, mut idx: usize) -> Quasimomentum {
    let k = axis.len();
    let mut comps = vec![0.0; d];
    for j in (0..d).rev() {
        comps[j] = axis[idx % k];
        idx /= k;
    }
    Quasimomentum::new(comps)
}

/// All points of the uniform grid, in index order.
pub fn grid_points(d: usize, k: usize) -> Result<Vec<Quasimomentum>> {
    let total = grid_size(d, k)?;
    let axis = grid_axis(k);
    Ok((0..total).map(|i| grid_point(&axis, d, i)).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridScan {
    pub points_per_axis: usize,
    pub count: usize,
    pub min: f64,
    pub argmin: Quasimomentum,
    pub max: f64,
    pub argmax: Quasimomentum,
}

fn lex_cmp(a: &Quasimomentum, b: &Quasimomentum) -> Ordering {
    for (x, y) in a.components().iter().zip(b.components()) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Exhaustive evaluation of `λₙ` on the grid. Ties go to the
/// lexicographically smallest point.
pub fn grid_scan_oracle<M: BlochModel + ?Sized>(model: &M, n: usize, k: usize) -> Result<GridScan> {
    let d = model.dimension();
    let total = grid_size(d, k)?;
    if n == 0 || n > model.size() {
        return Err(DispersionError::BandOutOfRange { n, size: model.size() }.into());
    }
    let axis = grid_axis(k);
    type Best = (f64, Quasimomentum);
    let pick = |a: Best, b: Best, want: Ordering| -> Best {
        match a.0.total_cmp(&b.0) {
            o if o == want => a,
            Ordering::Equal => {
                if lex_cmp(&a.1, &b.1) != Ordering::Greater {
                    a
                } else {
                    b
                }
            }
            _ => b,
        }
    };
    let (lo, hi) = (0..total)
        .into_par_iter()
        .map(|i| {
            let p = grid_point(&axis, d, i);
            let v = spectrum_at(model, p.components()).map(|s| s[n - 1]).unwrap_or(f64::NAN);
            ((v, p.clone()), (v, p))
        })
        .reduce(
            || ((f64::INFINITY, Quasimomentum::zeros(d)), (f64::NEG_INFINITY, Quasimomentum::zeros(d))),
            |(amin, amax), (bmin, bmax)| (pick(amin, bmin, Ordering::Less), pick(amax, bmax, Ordering::Greater)),
        );
    Ok(GridScan {
        points_per_axis: k,
        count: total,
        min: lo.0,
        argmin: lo.1,
        max: hi.0,
        argmax: hi.1,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeylReport {
    /// 1-based index into the spectrum of `S` for the lower bound.
    pub lower_index: i64,
    pub upper_index: i64,
    /// The lower index fell below 1, so the lower bound is −∞.
    pub lower_vacuous: bool,
    /// The upper index exceeded `dim S`, so the upper bound is +∞.
    pub upper_vacuous: bool,
    pub lower_bound: Option<f64>,
    pub upper_bound: Option<f64>,
    pub max_violation: f64,
    pub worst_point: Option<Quasimomentum>,
    pub points: usize,
}

/// Checks `λ_{n−i₋(Ω)−i∞}(S) ≤ λₙ(T(α)) − λ° ≤ λ_{n+i₊(Ω)}(S)` on `points`.
pub fn weyl_bracket_check<M: BlochModel + ?Sized>(
    model: &M,
    pack: &DerivativePack,
    points: &[Quasimomentum],
) -> Result<WeylReport> {
    if !pack.single_crossing() {
        return Err(CertifyError::HypothesisFailed(ReasonCode::NotSingleCrossing));
    }
    if !pack.crossing_vanishing.is_empty() {
        return Err(CertifyError::HypothesisFailed(ReasonCode::EigvecVanishesBothEnds));
    }
    let residual = criticality_residual(pack);
    if residual > CRITICAL_EPS * pack.scale {
        return Err(CertifyError::NotCritical { residual });
    }
    let om = pack.omega_inertia()?;
    let n = pack.band as i64;
    let lower_index = n - om.minus - pack.i_infty as i64;
    let upper_index = n + om.plus;
    let s_vals = if pack.s.nrows() == 0 {
        Vec::new()
    } else {
        eig_hermitian(&pack.s)?.values
    };
    let dim_s = s_vals.len() as i64;
    let lower_vacuous = lower_index < 1;
    let upper_vacuous = upper_index > dim_s;
    let lower_bound = (!lower_vacuous && lower_index <= dim_s).then(|| s_vals[(lower_index - 1) as usize]);
    let upper_bound = (!upper_vacuous && upper_index >= 1).then(|| s_vals[(upper_index - 1) as usize]);
    let lam0 = pack.value;
    let band = pack.band;
    let (max_violation, worst) = points
        .par_iter()
        .map(|p| {
            let v = spectrum_at(model, p.components()).map(|s| s[band - 1] - lam0).unwrap_or(f64::NAN);
            let mut viol = 0.0_f64;
            if let Some(lb) = lower_bound {
                viol = viol.max(lb - v);
            }
            if let Some(ub) = upper_bound {
                viol = viol.max(v - ub);
            }
            (viol, Some(p.clone()))
        })
        .reduce(
            || (0.0, None),
            |a, b| match a.0.total_cmp(&b.0) {
                Ordering::Greater => a,
                Ordering::Less => b,
                Ordering::Equal => match (&a.1, &b.1) {
                    (Some(x), Some(y)) if lex_cmp(y, x) == Ordering::Less => b,
                    (None, _) => b,
                    _ => a,
                },
            },
        );
    Ok(WeylReport {
        lower_index,
        upper_index,
        lower_vacuous,
        upper_vacuous,
        lower_bound,
        upper_bound,
        max_violation,
        worst_point: if max_violation > 0.0 { worst } else { None },
        points: points.len(),
    })
}

/// Shape of a critical point read off the Hessian `2 Re W`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticalKind {
    LocalMin,
    LocalMax,
    Saddle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub alpha: Quasimomentum,
    pub value: f64,
    pub kind: CriticalKind,
    /// Best band value in the extremal direction found on the grid or at
    /// another certified point.
    pub best_elsewhere: f64,
    pub best_point: Quasimomentum,
    /// A strictly better value exists elsewhere (`None` for saddles).
    pub dominated: Option<bool>,
}

/// For every uncertified critical point, looks for a strictly better band
/// value elsewhere. Observational only.
pub fn conjecture_probe(certificates: &[Certificate], scan: &GridScan) -> Result<Vec<ProbeEntry>> {
    if certificates.is_empty() {
        return Err(CertifyError::NoCertificates);
    }
    let mut out = Vec::new();
    for c in certificates.iter().filter(|c| c.verdict == Verdict::NoCertificate) {
        let scale = c.value.abs().max(1.0);
        let tol = 1e-9 * scale;
        let re = &c.rew_eigenvalues;
        let kind = if re.iter().all(|&v| v <= tol) {
            CriticalKind::LocalMax
        } else if re.iter().all(|&v| v >= -tol) {
            CriticalKind::LocalMin
        } else {
            CriticalKind::Saddle
        };
        let others = certificates.iter().filter(|o| o.alpha_star != c.alpha_star);
        let (best, point, dominated) = match kind {
            CriticalKind::LocalMax | CriticalKind::Saddle => {
                let mut best = (scan.max, scan.argmax.clone());
                for o in others {
                    if o.value > best.0 {
                        best = (o.value, o.alpha_star.clone());
                    }
                }
                let dom = (kind == CriticalKind::LocalMax).then_some(best.0 > c.value + tol);
                (best.0, best.1, dom)
            }
            CriticalKind::LocalMin => {
                let mut best = (scan.min, scan.argmin.clone());
                for o in others {
                    if o.value < best.0 {
                        best = (o.value, o.alpha_star.clone());
                    }
                }
                (best.0, best.1, Some(best.0 < c.value - tol))
            }
        };
        out.push(ProbeEntry {
            alpha: c.alpha_star.clone(),
            value: c.value,
            kind,
            best_elsewhere: best,
            best_point: point,
            dominated,
        });
    }
    Ok(out)
}

/// Declares a flat band when the gradient vanishes and the value agrees at
/// every probe point.
pub fn detect_flat_band<M: BlochModel + ?Sized>(
    model: &M,
    n: usize,
    probes: usize,
    seed: u64,
    grad_tol: f64,
    tol: &Tolerances,
) -> Result<Option<(Quasimomentum, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x666c_6174);
    let d = model.dimension();
    let mut first: Option<(Quasimomentum, f64)> = None;
    let mut used = 0;
    for _ in 0..probes {
        let a = Quasimomentum::new((0..d).map(|_| rng.gen_range(-PI..PI)).collect());
        let be = band_at_point(model, a.components(), n, tol)?;
        if !be.simple {
            continue;
        }
        let scale = be.scale();
        let pack = derivative_pack(model, &be, tol)?;
        if pack.gradient_norm() >= grad_tol.max(1e-10 * scale) {
            return Ok(None);
        }
        match &first {
            None => first = Some((a, be.value)),
            Some((_, v)) if (be.value - v).abs() > 1e-10 * scale => return Ok(None),
            _ => {}
        }
        used += 1;
    }
    Ok(if used > 0 { first } else { None })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub search: SearchConfig,
    /// Random seeds; each is searched for both a minimum and a maximum.
    pub seeds: usize,
    pub seed: u64,
    /// Caller-supplied search seeds, searched like the random ones.
    #[serde(default)]
    pub extra_seeds: Vec<Quasimomentum>,
    /// Include `{0, π}^d` (as direct candidates for time-reversal families,
    /// as seeds otherwise).
    pub corners: bool,
    pub flat_probes: usize,
    pub dedup_radius: f64,
    /// Grid size for oracle confirmation and the conjecture probe.
    pub oracle_grid: Option<usize>,
    pub tol: Tolerances,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            search: SearchConfig::default(),
            seeds: 8,
            seed: 0,
            extra_seeds: Vec::new(),
            corners: true,
            flat_probes: 20,
            dedup_radius: 1e-6,
            oracle_grid: None,
            tol: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSummary {
    pub seed: Quasimomentum,
    pub goal: Goal,
    pub status: SearchStatus,
    pub iterations: usize,
    pub gradient_norm: f64,
    pub alpha: Quasimomentum,
    pub value: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineReport {
    pub band: usize,
    pub flat_band: Option<f64>,
    pub certificates: Vec<Certificate>,
    pub searches: Vec<SearchSummary>,
    pub grid: Option<GridScan>,
    pub probe: Vec<ProbeEntry>,
    pub warnings: Vec<String>,
}

fn attach_oracle(c: &mut Certificate, scan: &GridScan) {
    let tol = 1e-8 * c.value.abs().max(scan.max.abs()).max(scan.min.abs()).max(1.0);
    let confirmed = match c.verdict {
        Verdict::GlobalMin => Some(scan.min >= c.value - tol),
        Verdict::GlobalMax => Some(scan.max <= c.value + tol),
        Verdict::FlatBand => Some(scan.min >= c.value - tol && scan.max <= c.value + tol),
        _ => None,
    };
    c.oracle = Some(OracleRecord {
        points_per_axis: scan.points_per_axis,
        grid_min: scan.min,
        grid_max: scan.max,
        confirmed,
    });
}

/// Corner enumeration, multi-seed search, certificates, optional grid
/// confirmation and conjecture probe for one band.
pub fn certify_band(family: &BlochFamily, n: usize, cfg: &PipelineConfig) -> Result<PipelineReport> {
    let d = family.dimension();
    let tol = &cfg.tol;
    let mut warnings = Vec::new();
    if n == 0 || n > family.size() {
        return Err(DispersionError::BandOutOfRange { n, size: family.size() }.into());
    }
    let scan = match cfg.oracle_grid {
        Some(k) => Some(grid_scan_oracle(family, n, k)?),
        None => None,
    };

    if let Some((alpha, value)) =
        detect_flat_band(family, n, cfg.flat_probes, cfg.seed, cfg.search.grad_tol, tol)?
    {
        let mut cert = certify_point(family, &alpha, n, tol)?;
        cert.reason_codes.push(ReasonCode::FlatBandProbe);
        if let Some(s) = &scan {
            attach_oracle(&mut cert, s);
        }
        return Ok(PipelineReport {
            band: n,
            flat_band: Some(value),
            certificates: vec![cert],
            searches: Vec::new(),
            grid: scan,
            probe: Vec::new(),
            warnings,
        });
    }

    let mut candidates: Vec<Quasimomentum> = Vec::new();
    let mut seeds: Vec<Quasimomentum> = Vec::new();
    if cfg.corners {
        if family.time_reversal() {
            candidates.extend(corner_points(d));
        } else {
            seeds.extend(corner_points(d));
        }
    }
    seeds.extend(cfg.extra_seeds.iter().cloned());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for _ in 0..cfg.seeds {
        seeds.push(Quasimomentum::new((0..d).map(|_| rng.gen_range(-PI..PI)).collect()));
    }
    let jobs: Vec<(Quasimomentum, Goal)> = seeds
        .iter()
        .flat_map(|s| [(s.clone(), Goal::Min), (s.clone(), Goal::Max)])
        .collect();
    let results: Vec<Result<SearchResult>> = jobs
        .par_iter()
        .map(|(s, g)| find_critical_point(family, n, s, *g, &cfg.search, tol))
        .collect();
    let mut searches = Vec::new();
    for r in results {
        let r = r?;
        searches.push(SearchSummary {
            seed: r.seed.clone(),
            goal: r.goal,
            status: r.status,
            iterations: r.iterations,
            gradient_norm: r.gradient_norm,
            alpha: r.band_eigen.quasimomentum(),
            value: r.band_eigen.value,
        });
        match r.status {
            SearchStatus::Converged => candidates.push(r.band_eigen.quasimomentum()),
            SearchStatus::NotConverged => warnings.push(format!(
                "search from {} ({:?}) stopped with gradient {:.3e}",
                r.seed, r.goal, r.gradient_norm
            )),
            SearchStatus::Degenerate => warnings.push(format!(
                "search from {} ({:?}) reached a degenerate eigenvalue",
                r.seed, r.goal
            )),
        }
    }

    let mut unique: Vec<Quasimomentum> = Vec::new();
    for c in candidates {
        let dup = unique.iter().any(|u| {
            u.torus_distance(&c) < cfg.dedup_radius
                || (family.time_reversal() && u.torus_distance(&c.negated()) < cfg.dedup_radius)
        });
        if !dup {
            unique.push(c);
        }
    }

    let certs: Vec<Result<Certificate>> = unique
        .par_iter()
        .map(|a| certify_point(family, a, n, tol))
        .collect();
    let mut certificates = Vec::new();
    for (a, c) in unique.iter().zip(certs) {
        match c {
            Ok(mut c) => {
                if let Some(s) = &scan {
                    attach_oracle(&mut c, s);
                }
                certificates.push(c);
            }
            Err(CertifyError::NotCritical { residual }) => {
                warnings.push(format!("candidate {a} is not critical (residual {residual:.3e})"))
            }
            Err(e) => return Err(e),
        }
    }
    certificates.sort_by(|a, b| {
        a.value
            .total_cmp(&b.value)
            .then_with(|| lex_cmp(&a.alpha_star, &b.alpha_star))
    });
    let probe = match &scan {
        Some(s) if !certificates.is_empty() => conjecture_probe(&certificates, s)?,
        _ => Vec::new(),
    };
    Ok(PipelineReport {
        band: n,
        flat_band: None,
        certificates,
        searches,
        grid: scan,
        probe,
        warnings,
    })
}
