//! One test per acceptance criterion. Every test prints a single
//! `criterion N: PASS|FAIL ...` line before asserting.

use std::f64::consts::PI;
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use bandcert::catalog::{self, NamedExample};
use bandcert::certify::{
    certify_band, certify_point, find_critical_point, grid_points, grid_scan_oracle, low_dimension_rule,
    verdict_from_inertia, weyl_bracket_check, Certificate, CriticalKind, Goal, PipelineConfig, ReasonCode,
    SearchConfig, SearchStatus, Verdict,
};
use bandcert::dispersion::{band_at, band_at_point, derivative_pack};
use bandcert::hermitian::{self, Inertia};
use bandcert::lattice::{BlochModel, Quasimomentum};
use bandcert::suites::{self, FamilySource};
use bandcert::{CMatrix, Tolerances, C64};

const SEED: u64 = 0;

// Criteria run one at a time so the runtime limits measure the work itself.
static SERIAL: Mutex<()> = Mutex::new(());

/// Collects sub-checks of one criterion and prints the summary line.
struct Criterion {
    id: u32,
    started: Instant,
    checks: Vec<(String, bool)>,
    _serial: MutexGuard<'static, ()>,
}

impl Criterion {
    fn new(id: u32) -> Self {
        let guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
        Self {
            id,
            started: Instant::now(),
            checks: Vec::new(),
            _serial: guard,
        }
    }

    fn check(&mut self, what: impl Into<String>, ok: bool) {
        self.checks.push((what.into(), ok));
    }

    fn runtime(&mut self, limit: Duration) {
        let t = self.started.elapsed();
        self.check(format!("runtime {:.2}s < {}s", t.as_secs_f64(), limit.as_secs()), t < limit);
    }

    fn finish(self) {
        let ok = self.checks.iter().all(|c| c.1);
        let failed: Vec<&str> = self.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
        let detail: Vec<String> = self
            .checks
            .iter()
            .map(|(w, p)| format!("[{}] {w}", if *p { "ok" } else { "FAIL" }))
            .collect();
        println!(
            "criterion {}: {} {}",
            self.id,
            if ok { "PASS" } else { "FAIL" },
            detail.join("; ")
        );
        assert!(ok, "criterion {} failed: {}", self.id, failed.join("; "));
    }
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

fn refs<'a>(ex: &'a NamedExample, label: &str) -> (&'a [f64], f64) {
    let r = ex.reference(label).unwrap_or_else(|| panic!("missing reference {label}"));
    (&r.values, r.tolerance)
}

fn pipeline(seeds: usize, grid: Option<usize>) -> PipelineConfig {
    PipelineConfig {
        seeds,
        seed: SEED,
        oracle_grid: grid,
        ..PipelineConfig::default()
    }
}

#[test]
fn criterion_01_honeycomb() {
    let mut c = Criterion::new(1);
    let ex = catalog::honeycomb(0.0, 1.0);
    let rep = certify_band(&ex.family, 1, &pipeline(8, Some(101))).unwrap();
    let (target, ttol) = refs(&ex, "critical_point");
    let target = Quasimomentum::new(target.to_vec());
    let cert = rep
        .certificates
        .iter()
        .find(|k| k.alpha_star.torus_distance(&target) < ttol || k.alpha_star.negated().torus_distance(&target) < ttol);
    c.check("critical point found within 1e-8", cert.is_some());
    // evaluate W exactly at the reference point (search finds either ±α°)
    let be = band_at(&ex.family, &target, 1, &tol()).unwrap();
    let pack = derivative_pack(&ex.family, &be, &tol()).unwrap();
    let (w_ref, wtol) = refs(&ex, "w_band1_re_im_row_major");
    let w_dev = (0..4)
        .map(|k| {
            let z = pack.w[(k / 2, k % 2)];
            (z.re - w_ref[2 * k]).abs().max((z.im - w_ref[2 * k + 1]).abs())
        })
        .fold(0.0, f64::max);
    c.check(format!("W entrywise deviation {w_dev:.1e} < {wtol:e}"), w_dev < wtol);
    if let Some(cert) = cert {
        c.check(
            format!("inertia {:?} = (0,1,1)", cert.w_inertia),
            cert.w_inertia == Some(Inertia::new(0, 1, 1)),
        );
        c.check(format!("verdict {:?}", cert.verdict), cert.verdict == Verdict::GlobalMax);
        let grid = rep.grid.as_ref().unwrap();
        let excess = grid.max - cert.value;
        c.check(format!("101x101 grid max - value = {excess:.1e} <= 1e-10"), excess <= 1e-10);
        let (bmax, btol) = refs(&ex, "band1_max");
        c.check("band-1 max equals q_A", (cert.value - bmax[0]).abs() < btol);
        c.check("det W residual < 1e-9", cert.det_w_residual.unwrap_or(1.0) < 1e-9);
    }
    c.check("i_infty = 1, S = [0], dim Q = 1", pack.i_infty == 1 && pack.s.nrows() == 1 && pack.s[(0, 0)].norm() < 1e-10);
    let dirac = catalog::honeycomb(0.0, 0.0);
    let dbe = band_at(&dirac.family, &target, 1, &tol()).unwrap();
    c.check("q_A = q_B gives a Dirac point (not simple)", !dbe.simple);
    c.runtime(Duration::from_secs(1));
    c.finish();
}

#[test]
fn criterion_02_lieb() {
    let mut c = Criterion::new(2);
    let ex = catalog::lieb(1.0, -1.0, -1.0);
    let rep = certify_band(&ex.family, 3, &pipeline(8, Some(101))).unwrap();
    let (argmin, _) = refs(&ex, "band3_argmin");
    let argmin = Quasimomentum::new(argmin.to_vec());
    let cert = rep.certificates.iter().find(|k| k.alpha_star.torus_distance(&argmin) < 1e-12);
    let (vmin, vtol) = refs(&ex, "band3_min");
    match cert {
        Some(k) => {
            c.check(format!("verdict {:?} at (pi,pi)", k.verdict), k.verdict == Verdict::GlobalMin);
            c.check(format!("value {:.15} within 1e-12", k.value), (k.value - vmin[0]).abs() < vtol);
            c.check(format!("i_infty {:?} = 2", k.i_infty), k.i_infty == Some(2));
            c.check(
                "grid oracle confirms",
                k.oracle.as_ref().and_then(|o| o.confirmed) == Some(true),
            );
        }
        None => c.check("certificate at (pi,pi)", false),
    }
    let be = band_at(&ex.family, &argmin, 3, &tol()).unwrap();
    let pack = derivative_pack(&ex.family, &be, &tol()).unwrap();
    let (wd, wtol) = refs(&ex, "w_band3_diag");
    let w_ref = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(2, wd.iter().map(|&x| C64::new(x, 0.0))));
    let w_dev = hermitian::max_abs(&(&pack.w - w_ref));
    c.check(format!("W - diag(1/2,1/2) = {w_dev:.1e}"), w_dev < wtol);
    let (fv, ftol) = refs(&ex, "band3_vector");
    let f_dev = (0..3).map(|i| (pack.f[i] - C64::new(fv[i], 0.0)).norm()).fold(0.0, f64::max);
    c.check("eigenvector (1,0,0)", f_dev < ftol);
    let (bpb, btol) = refs(&ex, "bpb_diag");
    let bpb_m = pack.bpb();
    let bpb_dev = hermitian::max_abs(
        &(bpb_m - CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(3, bpb.iter().map(|&x| C64::new(x, 0.0))))),
    );
    c.check(format!("B P B* = diag(0,1,1), deviation {bpb_dev:.1e}"), bpb_dev < btol);
    let flat = certify_band(&ex.family, 2, &pipeline(4, None)).unwrap();
    let (fl, fltol) = refs(&ex, "flat_band2");
    c.check(
        format!("flat band 2 detected at {:?}", flat.flat_band),
        flat.flat_band.is_some_and(|v| (v - fl[0]).abs() < fltol)
            && flat.certificates.iter().all(|k| k.verdict == Verdict::FlatBand),
    );
    c.runtime(Duration::from_secs(1));
    c.finish();
}

/// Band-2 critical points of the magnetic model classified as maxima of
/// `Re W`, in the order (certified, uncertified).
fn hks_maxima(certs: &[Certificate]) -> (Option<&Certificate>, Option<&Certificate>) {
    let is_max = |k: &&Certificate| k.rew_eigenvalues.iter().all(|&v| v < 0.0) && !k.alpha_star.is_corner(1e-9);
    let global = certs.iter().filter(is_max).find(|k| k.verdict == Verdict::GlobalMax);
    let local = certs.iter().filter(is_max).find(|k| k.verdict == Verdict::NoCertificate);
    (global, local)
}

fn hks_point_matches(k: &Certificate, target: &[f64], tol: f64) -> bool {
    // the reference coordinates fix one of the ±α copies
    let p = k.alpha_star.to_zero_two_pi();
    let q = k.alpha_star.negated().to_zero_two_pi();
    dist(&p, target) < tol || dist(&q, target) < tol
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[test]
fn criterion_03_hks_magnetic() {
    let mut c = Criterion::new(3);
    let ex = catalog::hks_magnetic(0.1);
    c.check("single crossing", ex.family.single_crossing());
    let rep = certify_band(&ex.family, 2, &pipeline(16, Some(101))).unwrap();
    let (global, local) = hks_maxima(&rep.certificates);
    c.check("interior maximum with W <= 0 certified GlobalMax", global.is_some());
    c.check("second interior maximum left as NoCertificate", local.is_some());
    if let (Some(g), Some(l)) = (global, local) {
        let (gp, gt) = refs(&ex, "band2_global_max_point_0_2pi");
        let (lp, lt) = refs(&ex, "band2_local_max_point_0_2pi");
        c.check(
            format!("global max point {:.4?} vs reference {gp:?}", g.alpha_star.to_zero_two_pi()),
            hks_point_matches(g, gp, gt),
        );
        c.check(
            format!("local max point {:.4?} vs reference {lp:?}", l.alpha_star.to_zero_two_pi()),
            hks_point_matches(l, lp, lt),
        );
        let (gw, gwt) = refs(&ex, "w_eigs_global_max");
        let (lw, lwt) = refs(&ex, "w_eigs_local_max");
        let gw_dev = dist(&sorted(&g.w_eigenvalues), &sorted(gw));
        let lw_dev = dist(&sorted(&l.w_eigenvalues), &sorted(lw));
        c.check(format!("W eigenvalues {:.4?} vs {gw:?}", g.w_eigenvalues), gw_dev < gwt);
        c.check(format!("W eigenvalues {:.4?} vs {lw:?}", l.w_eigenvalues), lw_dev < lwt);
        c.check("global value exceeds local value", g.value > l.value);
        let probe = rep.probe.iter().find(|p| p.alpha == l.alpha_star);
        c.check(
            "probe: uncertified maximum is dominated",
            probe.is_some_and(|p| p.kind == CriticalKind::LocalMax && p.dominated == Some(true)),
        );
    }
    c.runtime(Duration::from_secs(5));

    // Informational: the reference coordinates and W spectra are matched by
    // the model with phase 1 + 0.05i on the magnetic edge.
    let half = catalog::hks_magnetic(0.05);
    let rep_half = certify_band(&half.family, 2, &pipeline(16, None)).unwrap();
    if let (Some(g), Some(l)) = hks_maxima(&rep_half.certificates) {
        let (gp, _) = refs(&ex, "band2_global_max_point_0_2pi");
        let (lp, _) = refs(&ex, "band2_local_max_point_0_2pi");
        let (gw, _) = refs(&ex, "w_eigs_global_max");
        let (lw, _) = refs(&ex, "w_eigs_local_max");
        let ok = hks_point_matches(g, gp, 2e-3)
            && hks_point_matches(l, lp, 2e-3)
            && dist(&sorted(&g.w_eigenvalues), &sorted(gw)) < 2e-3
            && dist(&sorted(&l.w_eigenvalues), &sorted(lw)) < 2e-3;
        println!(
            "criterion 3 (info): phase 1+0.05i reproduces reference numbers: {ok}; points {:.4?} {:.4?}, W {:.4?} {:.4?}",
            g.alpha_star.to_zero_two_pi(),
            l.alpha_star.to_zero_two_pi(),
            g.w_eigenvalues,
            l.w_eigenvalues
        );
    }
    c.finish();
}

#[test]
fn criterion_04_multi_edge() {
    let mut c = Criterion::new(4);
    let ex = catalog::multi_edge_haldane_like(4.0);
    c.check("not single crossing", !ex.family.single_crossing());
    let origin = Quasimomentum::zeros(2);
    let cert = certify_point(&ex.family, &origin, 1, &tol()).unwrap();
    c.check(
        format!("verdict {:?} with not_single_crossing", cert.verdict),
        cert.verdict == Verdict::HypothesisFailed && cert.has(ReasonCode::NotSingleCrossing),
    );
    c.check(format!("gradient at origin {:.1e}", cert.gradient_residual), cert.gradient_residual < 1e-12);
    c.check(
        format!("Re W at origin {:.4?} is PSD", cert.rew_eigenvalues),
        cert.rew_eigenvalues.iter().all(|&v| v >= 0.0),
    );
    let (v0, v0t) = refs(&ex, "band1_at_origin");
    c.check("lambda_1(0,0) = -sqrt(18)", (cert.value - v0[0]).abs() < v0t);
    let scan = grid_scan_oracle(&ex.family, 1, 101).unwrap();
    let margin = cert.value - scan.min;
    let (m, _) = refs(&ex, "grid_margin_below_origin");
    c.check(format!("grid min {:.4} below origin by {margin:.4} > 0.1", scan.min), margin > m[0]);
    let closed = grid_points(2, 41)
        .unwrap()
        .iter()
        .map(|p| {
            let be = band_at_point(&ex.family, p.components(), 1, &tol()).unwrap();
            (be.value - catalog::multi_edge_band1_closed_form(4.0, p.components())).abs()
        })
        .fold(0.0, f64::max);
    c.check(format!("closed form vs eigensolver on 41x41: {closed:.1e}"), closed < 1e-10);
    let rep = certify_band(&ex.family, 1, &pipeline(8, None)).unwrap();
    c.check(
        "pipeline issues no certificate",
        rep.certificates.iter().all(|k| k.verdict == Verdict::HypothesisFailed),
    );
    c.runtime(Duration::from_secs(2));
    c.finish();
}

#[test]
fn criterion_05_d4() {
    let mut c = Criterion::new(5);
    let ex = catalog::d4_random_example();
    let t = tol();
    let cfg = SearchConfig::default();

    // interior critical point near the reference coordinates
    let (seed, stol) = refs(&ex, "band1_interior_max_point");
    let seed = Quasimomentum::new(seed.to_vec());
    let mut interior: Option<Certificate> = None;
    for goal in [Goal::Max, Goal::Min] {
        let r = find_critical_point(&ex.family, 1, &seed, goal, &cfg, &t).unwrap();
        let a = r.band_eigen.quasimomentum();
        if r.status == SearchStatus::Converged && !a.is_corner(1e-6) && a.torus_distance(&seed).min(a.negated().torus_distance(&seed)) < 0.5 {
            interior = Some(certify_point(&ex.family, &a, 1, &t).unwrap());
            break;
        }
    }
    match &interior {
        Some(k) => {
            let re_max = k.rew_eigenvalues.iter().all(|&v| v < 0.0);
            let d = k.alpha_star.torus_distance(&seed).min(k.alpha_star.negated().torus_distance(&seed));
            c.check(format!("interior critical point {} (distance {d:.1e}, tol {stol:e})", k.alpha_star), d < stol);
            c.check(format!("it is a local max (Re W eigenvalues {:.4?})", k.rew_eigenvalues), re_max);
            let (v, vt) = refs(&ex, "band1_interior_max");
            c.check(format!("value {:.6} vs {}", k.value, v[0]), (k.value - v[0]).abs() < vt);
            c.check(
                format!("W indefinite {:.4?}, verdict {:?}", k.w_eigenvalues, k.verdict),
                k.verdict == Verdict::NoCertificate && k.has(ReasonCode::WIndefinite),
            );
        }
        None => c.check("interior critical point near reference coordinates", false),
    }

    let (corner, _) = refs(&ex, "band1_global_max_point");
    let corner = Quasimomentum::new(corner.to_vec());
    let cc = certify_point(&ex.family, &corner, 1, &t).unwrap();
    let (gv, gt) = refs(&ex, "band1_global_max");
    c.check(format!("corner verdict {:?}", cc.verdict), cc.verdict == Verdict::GlobalMax && cc.has(ReasonCode::CornerPoint));
    c.check(format!("corner value {:.7} vs {}", cc.value, gv[0]), (cc.value - gv[0]).abs() < gt);
    let scan1 = grid_scan_oracle(&ex.family, 1, 21).unwrap();
    c.check(
        format!("21^4 band-1 grid max {:.7} <= certified value", scan1.max),
        scan1.max <= cc.value + 1e-8 * cc.value.abs().max(1.0),
    );
    let scan2 = grid_scan_oracle(&ex.family, 2, 21).unwrap();
    let (b2, b2t) = refs(&ex, "band2_min");
    c.check(format!("21^4 band-2 grid min {:.6} vs {}", scan2.min, b2[0]), (scan2.min - b2[0]).abs() < b2t);
    c.check("bands 1 and 2 do not touch", scan2.min > scan1.max);
    c.runtime(Duration::from_secs(60));
    c.finish();
}

#[test]
fn criterion_06_derivatives() {
    let mut c = Criterion::new(6);
    let g = suites::gradient_suite(FamilySource::Random, 50, SEED, &tol());
    c.check(
        format!("gradient {}/{} worst {:.1e} < {:e}", g.passed, g.cases, g.worst_residual, g.threshold),
        g.all_pass() && g.cases == 50,
    );
    let h = suites::hessian_suite(FamilySource::Random, 50, SEED, &tol());
    c.check(
        format!("Hessian {}/{} worst {:.1e} < {:e}", h.passed, h.cases, h.worst_residual, h.threshold),
        h.all_pass() && h.cases == 50,
    );
    c.finish();
}

#[test]
fn criterion_07_index_identities() {
    let mut c = Criterion::new(7);
    let r = suites::index_suite(FamilySource::Random, 50, SEED, &tol());
    c.check(format!("{}/{} critical points satisfy all identities", r.passed, r.cases), r.all_pass() && r.cases == 50);
    c.finish();
}

fn weyl_at<M: BlochModel>(c: &mut Criterion, label: &str, model: &M, alpha: &[f64], n: usize) {
    let t = tol();
    let be = band_at_point(model, alpha, n, &t).unwrap();
    let pack = derivative_pack(model, &be, &t).unwrap();
    let pts = grid_points(model.dimension(), 41).unwrap();
    match weyl_bracket_check(model, &pack, &pts) {
        Ok(w) => {
            let rel = w.max_violation / pack.scale;
            c.check(format!("{label}: violation/scale {rel:.1e}"), rel < 1e-9);
        }
        Err(e) => c.check(format!("{label}: {e}"), false),
    }
}

#[test]
fn criterion_08_weyl_bracket() {
    let mut c = Criterion::new(8);
    let t = tol();
    let hc = catalog::honeycomb(0.0, 1.0);
    weyl_at(&mut c, "honeycomb band 1", &hc.family, &[2.0 * PI / 3.0, -2.0 * PI / 3.0], 1);
    weyl_at(&mut c, "honeycomb band 2", &hc.family, &[2.0 * PI / 3.0, -2.0 * PI / 3.0], 2);
    let lieb = catalog::lieb(1.0, -1.0, -1.0);
    weyl_at(&mut c, "lieb band 3", &lieb.family, &[PI, PI], 3);
    weyl_at(&mut c, "lieb band 1", &lieb.family, &[0.0, 0.0], 1);
    let hks = catalog::hks_magnetic(0.1);
    let rep = certify_band(&hks.family, 2, &pipeline(16, None)).unwrap();
    for (i, k) in rep.certificates.iter().enumerate() {
        if k.has(ReasonCode::EigvecVanishesBothEnds) {
            continue;
        }
        weyl_at(&mut c, &format!("hks band 2 point {i}"), &hks.family, k.alpha_star.components(), 2);
    }
    let d4 = catalog::d4_random_example();
    weyl_at(&mut c, "d4 band 1 corner", &d4.family, &[PI, 0.0, PI, 0.0], 1);
    let r = suites::weyl_suite(FamilySource::Random, 20, SEED, 41, &t);
    c.check(
        format!("random families {}/{} worst {:.1e}", r.passed, r.cases, r.worst_residual),
        r.all_pass() && r.cases == 20,
    );
    c.finish();
}

#[test]
fn criterion_09_haynsworth() {
    let mut c = Criterion::new(9);
    let h = suites::haynsworth_suite(100, SEED);
    c.check(
        format!("generalized Haynsworth and Han-Fujiwara {}/{}", h.passed, h.cases),
        h.all_pass() && h.cases == 100,
    );
    let e = suites::epsilon_schur_suite(100, SEED);
    c.check(
        format!("eps-Schur invariance {}/{} worst {:.1e}", e.passed, e.cases, e.worst_residual),
        e.all_pass(),
    );
    c.finish();
}

#[test]
fn criterion_10_time_reversal() {
    let mut c = Criterion::new(10);
    let (r, s) = suites::time_reversal_suite(FamilySource::Random, 20, SEED, &tol());
    c.check(format!("{}/{} families", r.passed, r.cases), r.all_pass() && r.cases == 20);
    c.check(
        format!(
            "{} corners: worst gradient {:.1e}, worst Im W {:.1e}",
            s.corners_checked, s.worst_corner_gradient, s.worst_corner_im_w
        ),
        s.corners_checked > 0 && s.worst_corner_gradient < 1e-10 && s.worst_corner_im_w < 1e-10,
    );
    c.check(
        format!("{} interior points: worst det residual {:.1e}", s.interior_points, s.worst_interior_det_residual),
        s.interior_points > 0 && s.worst_interior_det_residual < 1e-6,
    );
    c.finish();
}

#[test]
fn criterion_11_reparameterization() {
    let mut c = Criterion::new(11);
    match suites::honeycomb_lattice_reparam(0.0, 1.0, &tol()) {
        Ok((dev, same)) => c.check(format!("honeycomb lattice vectors: deviation {dev:.1e}, inertia kept {same}"), dev < 1e-9 && same),
        Err(e) => c.check(e, false),
    }
    let r = suites::reparam_suite(FamilySource::Random, 20, SEED, &tol());
    c.check(
        format!("random Jacobians {}/{} worst {:.1e}", r.passed, r.cases, r.worst_residual),
        r.all_pass() && r.cases == 20,
    );
    c.finish();
}

#[test]
fn criterion_12_three_dim_negative_control() {
    let mut c = Criterion::new(12);
    let e = 0.5;
    let z = C64::new(0.0, 0.0);
    let w = CMatrix::from_row_slice(
        3,
        3,
        &[C64::new(e, 0.0), C64::new(0.0, 1.0), z, C64::new(0.0, -1.0), C64::new(e, 0.0), z, z, z, z],
    );
    let we = hermitian::eig_hermitian(&w).unwrap();
    let re = hermitian::eig_hermitian(&hermitian::real_part(&w)).unwrap();
    let expect_w = [-1.0 + e, 0.0, 1.0 + e];
    let expect_re = [0.0, e, e];
    c.check(format!("W eigenvalues {:.3?}", we.values), dist(we.values.as_slice(), &expect_w) < 1e-12);
    c.check(format!("Re W eigenvalues {:.3?} (PSD)", re.values), dist(re.values.as_slice(), &expect_re) < 1e-12);
    let inertia = we.inertia(1e-10);
    c.check(format!("i_-(W) = {}", inertia.minus), inertia.minus == 1);
    let rule = low_dimension_rule(&w, 1e-10).unwrap();
    c.check(
        format!("d=3 rule gives {:?} / {:?}", rule.extremum, rule.code),
        rule.extremum.is_none() && rule.code == Some(ReasonCode::Dim3Degenerate),
    );
    c.check("inertia verdict is not GlobalMin", verdict_from_inertia(inertia).0 != Verdict::GlobalMin);
    c.finish();
}
