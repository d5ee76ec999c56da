use std::f64::consts::PI;

use bandcert::certify::{
    certify_band, find_critical_point, grid_scan_oracle, low_dimension_rule, Goal, PipelineConfig, SearchConfig,
    Verdict,
};
use bandcert::hermitian::{self, eig_hermitian, inertia, pinv};
use bandcert::lattice::BlochModel;
use bandcert::suites::{random_family, random_hermitian, random_point, random_unitary};
use bandcert::{CMatrix, CVector, Tolerances, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs(m: &CMatrix) -> f64 {
    hermitian::max_abs(m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn family_is_hermitian(seed in any::<u64>(), n in 2usize..6, d in 1usize..4) {
        let mut r = rng(seed);
        let fam = random_family(&mut r, n, d, false);
        let a = random_point(&mut r, d);
        let t = fam.matrix_at(a.components());
        prop_assert!(max_abs(&(&t - t.adjoint())) == 0.0);
    }

    #[test]
    fn family_is_periodic(seed in any::<u64>(), n in 2usize..6, d in 1usize..4, j in 0usize..3, k in -3i32..4) {
        let mut r = rng(seed);
        let fam = random_family(&mut r, n, d, false);
        let a = random_point(&mut r, d);
        let mut b = a.components().to_vec();
        b[j % d] += 2.0 * PI * k as f64;
        let ta = fam.matrix_at(a.components());
        let tb = fam.matrix_at(&b);
        let scale = fam.energy_scale().max(1.0);
        prop_assert!(max_abs(&(&ta - &tb)) < 1e-13 * scale);
    }

    #[test]
    fn real_families_are_time_reversal(seed in any::<u64>(), n in 2usize..6, d in 1usize..4) {
        let mut r = rng(seed);
        let fam = random_family(&mut r, n, d, true);
        prop_assert!(fam.time_reversal());
        let a = random_point(&mut r, d);
        let t = fam.matrix_at(a.components());
        let tm = fam.matrix_at(a.negated().components());
        prop_assert!(max_abs(&(t.map(|z| z.conj()) - tm)) < 1e-14 * fam.energy_scale().max(1.0));
    }

    #[test]
    fn pinv_penrose_identities(seed in any::<u64>(), n in 1usize..7, rank in 0usize..7) {
        let mut r = rng(seed);
        let u = random_unitary(&mut r, n);
        let vals: Vec<f64> = (0..n).map(|i| if i < rank.min(n) { 1.0 + i as f64 } else { 0.0 }).collect();
        let m = &u * CMatrix::from_diagonal(&CVector::from_iterator(n, vals.iter().map(|&v| C64::new(v, 0.0)))) * u.adjoint();
        let m = hermitian::symmetrize(&m);
        let p = pinv(&m, None).unwrap();
        let eps = 1e-10 * (n as f64).max(1.0) * 10.0;
        prop_assert!(max_abs(&(&m * &p * &m - &m)) < eps);
        prop_assert!(max_abs(&(&p * &m * &p - &p)) < eps);
        let mp = &m * &p;
        let pm = &p * &m;
        prop_assert!(max_abs(&(&mp - mp.adjoint())) < eps);
        prop_assert!(max_abs(&(&pm - pm.adjoint())) < eps);
    }

    #[test]
    fn unitary_congruence_keeps_inertia(seed in any::<u64>(), n in 1usize..7) {
        let mut r = rng(seed);
        let m = random_hermitian(&mut r, n, false);
        let u = random_unitary(&mut r, n);
        let moved = hermitian::symmetrize(&(u.adjoint() * &m * &u));
        prop_assert_eq!(inertia(&m, None).unwrap(), inertia(&moved, None).unwrap());
    }

    #[test]
    fn two_dim_rule_matches_inertia(seed in any::<u64>(), s in prop_oneof![Just(1.0), Just(-1.0)], re_only in any::<bool>()) {
        // rank-one W = s v v*; det W = 0 and Re W is semidefinite with sign s
        let mut r = rng(seed);
        let h = random_hermitian(&mut r, 2, re_only);
        let v: CVector = h.column(0).into_owned();
        let w = hermitian::symmetrize(&((&v * v.adjoint()) * C64::new(s, 0.0)));
        let rule = low_dimension_rule(&w, 1e-10).unwrap();
        let inr = inertia(&w, None).unwrap();
        match rule.extremum {
            Some(Goal::Min) => prop_assert_eq!(inr.minus, 0),
            Some(Goal::Max) => prop_assert_eq!(inr.plus, 0),
            None => prop_assert!(false, "rule silent on a rank-one semidefinite W"),
        }
    }

    #[test]
    fn eigendecomposition_reconstructs(seed in any::<u64>(), n in 1usize..8) {
        let mut r = rng(seed);
        let m = random_hermitian(&mut r, n, false);
        let e = eig_hermitian(&m).unwrap();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(n, e.values.iter().map(|&v| C64::new(v, 0.0))));
        let back = &e.vectors * d * e.vectors.adjoint();
        prop_assert!(max_abs(&(back - &m)) < 1e-12 * e.spectral_norm().max(1.0));
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }
}

#[test]
fn search_is_bitwise_deterministic() {
    let mut r = rng(11);
    let fam = random_family(&mut r, 4, 2, false);
    let seed = random_point(&mut r, 2);
    let tol = Tolerances::default();
    let cfg = SearchConfig::default();
    let a = find_critical_point(&fam, 2, &seed, Goal::Max, &cfg, &tol).unwrap();
    let b = find_critical_point(&fam, 2, &seed, Goal::Max, &cfg, &tol).unwrap();
    assert_eq!(a.iterations, b.iterations);
    assert_eq!(a.band_eigen.value.to_bits(), b.band_eigen.value.to_bits());
    for (x, y) in a.band_eigen.point.iter().zip(&b.band_eigen.point) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
}

#[test]
fn certificates_are_sound_on_fine_grids() {
    // every global verdict must survive a 61-per-axis scan
    let mut checked = 0;
    for seed in 0..12u64 {
        let mut r = rng(1000 + seed);
        let d = 1 + (seed as usize % 2);
        let fam = random_family(&mut r, 3, d, seed % 3 == 0);
        for n in 1..=3 {
            let cfg = PipelineConfig {
                seeds: 4,
                seed,
                ..PipelineConfig::default()
            };
            let rep = certify_band(&fam, n, &cfg).unwrap();
            let scan = grid_scan_oracle(&fam, n, 61).unwrap();
            for c in &rep.certificates {
                let slack = 1e-8 * c.value.abs().max(1.0);
                match c.verdict {
                    Verdict::GlobalMin => {
                        assert!(scan.min >= c.value - slack, "GlobalMin {} beaten by {}", c.value, scan.min);
                        checked += 1;
                    }
                    Verdict::GlobalMax => {
                        assert!(scan.max <= c.value + slack, "GlobalMax {} beaten by {}", c.value, scan.max);
                        checked += 1;
                    }
                    _ => {}
                }
            }
        }
    }
    assert!(checked > 10, "only {checked} certificates exercised");
}

#[test]
fn corners_of_real_families_are_critical() {
    let tol = Tolerances::default();
    let mut r = rng(5);
    for _ in 0..10 {
        let fam = random_family(&mut r, 4, 3, true);
        for c in bandcert::certify::corner_points(3) {
            let be = bandcert::dispersion::band_at(&fam, &c, 1, &tol).unwrap();
            if !be.simple {
                continue;
            }
            let pack = bandcert::dispersion::derivative_pack(&fam, &be, &tol).unwrap();
            assert!(pack.gradient_norm() < 1e-10);
            assert!(hermitian::max_imag(&pack.w) < 1e-10);
        }
    }
}
