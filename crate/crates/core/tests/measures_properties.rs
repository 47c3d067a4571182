use proptest::prelude::*;
use qcorr_core::matcore::Mat3;
use qcorr_core::measures::{
    cjwr_f, gws_oracle, optimize_cjwr, thresholds, CorrMatrixR, MeasureSet, MeasurementDirections,
};
use qcorr_core::states::{bloch_decompose, corr_r, gws, random_density_with, random_pure_with, random_unitary2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const SQRT_3: f64 = 1.732_050_807_568_877_2;

fn random_state(seed: u64, rank: usize) -> qcorr_core::DensityMatrix2Q {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_density_with(&mut rng, rank).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn local_unitaries_leave_measures_unchanged(seed in any::<u64>(), rank in 1usize..=4) {
        let rho = random_state(seed, rank);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let rotated = rho.apply_local(&random_unitary2(&mut rng), &random_unitary2(&mut rng));
        let a = MeasureSet::from_state(&rho);
        let b = MeasureSet::from_state(&rotated);
        prop_assert!(a.max_abs_diff(&b) < 1e-9, "{:?} vs {:?}", a, b);
    }

    #[test]
    fn measures_stay_in_range(seed in any::<u64>(), rank in 1usize..=4) {
        let ms = MeasureSet::from_state(&random_state(seed, rank));
        for name in MeasureSet::NAMES {
            let v = ms.get(name).unwrap();
            let top = match name { "M" => 2.0, "hierarchy_H" => 3.0, _ => 1.0 };
            prop_assert!((-1e-12..=top + 1e-9).contains(&v), "{} = {}", name, v);
        }
    }

    #[test]
    fn bloch_reassembly_roundtrip(seed in any::<u64>(), rank in 1usize..=4) {
        let rho = random_state(seed, rank);
        let d = bloch_decompose(&rho);
        prop_assert!(d.reassemble().max_abs_diff(rho.matrix()) < 1e-9);
        let norm = |v: &[f64; 3]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm(&d.u) <= 1.0 + 1e-9 && norm(&d.v) <= 1.0 + 1e-9);
        prop_assert!(d.t.max_abs() <= 1.0 + 1e-9);
    }
}

#[test]
fn inequality_chains_and_monotone_links() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for k in 0..10_000 {
        let rho = random_density_with(&mut rng, 1 + k % 4).unwrap();
        let m = MeasureSet::from_state(&rho);
        let tol = 1e-9;
        assert!(m.bell_b <= m.steering_s + tol && m.steering_s <= m.fef + tol, "{m:?}");
        assert!(m.steering_s2 <= m.steering_s3 + tol && m.steering_s3 <= m.fef + tol, "{m:?}");
        assert!(m.steering_s2 <= m.bell_b + tol && m.steering_s3 <= m.steering_s + tol, "{m:?}");

        let s3 = if m.steering_s > 0.0 {
            ((2.0 * m.steering_s * m.steering_s + 1.0).sqrt() - 1.0) / (SQRT_3 - 1.0)
        } else {
            0.0
        };
        assert!((m.steering_s3 - s3).abs() < tol, "{m:?}");
        let bp = if m.bell_b > 0.0 {
            ((m.bell_b * m.bell_b + 1.0).sqrt() - 1.0) / (SQRT_2 - 1.0)
        } else {
            0.0
        };
        assert!((m.bell_bprime - bp).abs() < tol, "{m:?}");
    }
}

/// Entanglement ordering FEF ≤ N ≤ C on random mixed states. The ordering
/// is claimed for all two-qubit states but not proven, so violations are
/// written to a CSV artifact instead of failing the run; the test fails only
/// if the artifact cannot be produced.
#[test]
fn entanglement_ordering_counterexamples_are_recorded() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut csv = String::from("index,rank,fef,negativity,concurrence,violated\n");
    let (mut fef_n, mut n_c) = (0, 0);
    for k in 0..10_000 {
        let rank = 1 + k % 4;
        let m = MeasureSet::from_state(&random_density_with(&mut rng, rank).unwrap());
        let (f, n, c) = (m.fef, m.negativity.unwrap(), m.concurrence.unwrap());
        let a = f > n + 1e-9;
        let b = n > c + 1e-9;
        fef_n += usize::from(a);
        n_c += usize::from(b);
        if a || b {
            let which = if a && b { "both" } else if a { "fef>N" } else { "N>C" };
            writeln!(csv, "{k},{rank},{f:.12},{n:.12},{c:.12},{which}").unwrap();
        }
    }
    let path = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("entanglement_ordering_counterexamples.csv");
    std::fs::write(&path, csv).unwrap();
    println!(
        "FEF > N in {fef_n} and N > C in {n_c} of 10000 random states; details in {}",
        path.display()
    );
}

#[test]
fn pure_states_collapse_to_one_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for _ in 0..1000 {
        let psi = random_pure_with(&mut rng);
        let m = MeasureSet::from_state(&qcorr_core::DensityMatrix2Q::from_pure(&psi));
        let x = psi.two_abs_ad_minus_bc();
        for v in [m.bell_b, m.steering_s, m.fef, m.concurrence.unwrap(), m.negativity.unwrap()] {
            assert!((v - x).abs() < 1e-8, "{v} vs {x}: {m:?}");
        }
    }
}

fn bounds(rho: &qcorr_core::DensityMatrix2Q) -> (f64, f64, Mat3) {
    let d = bloch_decompose(rho);
    let r = corr_r(&d);
    let e = r.eigenvalues();
    (r.trace().sqrt(), (r.trace() - e[0]).sqrt(), d.t)
}

#[test]
fn cjwr_never_exceeds_closed_form_maximum() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for s in 0..100 {
        let rho = random_density_with(&mut rng, 1 + s % 4).unwrap();
        let (b3, b2, _) = bounds(&rho);
        for _ in 0..100 {
            let d3 = MeasurementDirections::random(&mut rng, 3).unwrap();
            let d2 = MeasurementDirections::random(&mut rng, 2).unwrap();
            assert!(cjwr_f(&rho, &d3) <= b3 + 1e-9);
            assert!(cjwr_f(&rho, &d2) <= b2 + 1e-9);
        }
    }
}

#[test]
fn cjwr_maximum_is_attained() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for s in 0..20 {
        let rho = random_density_with(&mut rng, 1 + s % 4).unwrap();
        let (b3, b2, t) = bounds(&rho);
        let (_, d3) = optimize_cjwr(&t, 3, 32, s as u64).unwrap();
        let (_, d2) = optimize_cjwr(&t, 2, 32, s as u64).unwrap();
        assert!((cjwr_f(&rho, &d3) - b3).abs() < 1e-3, "{} vs {b3}", cjwr_f(&rho, &d3));
        assert!((cjwr_f(&rho, &d2) - b2).abs() < 1e-3, "{} vs {b2}", cjwr_f(&rho, &d2));
    }
}

#[test]
fn gws_closed_forms_match_generic_pipeline() {
    for i in 0..=50 {
        for j in 0..=50 {
            let (p, q) = (i as f64 / 50.0, j as f64 / 50.0);
            let oracle = gws_oracle(p, q).unwrap();
            let generic = MeasureSet::from_state(&gws(p, q).unwrap());
            assert!(oracle.max_abs_diff(&generic) < 1e-9, "p={p} q={q}: {oracle:?} vs {generic:?}");
            assert_eq!(oracle.hierarchy_h, generic.hierarchy_h, "p={p} q={q}");
        }
    }
}

#[test]
fn hierarchy_is_monotone_in_p_and_follows_thresholds() {
    for j in 0..=50 {
        let q = j as f64 / 50.0;
        let th = thresholds(q).unwrap();
        let mut last = 0;
        for i in 0..=50 {
            let p = i as f64 / 50.0;
            let h = gws_oracle(p, q).unwrap().hierarchy_h;
            assert!(h >= last, "q={q} p={p}");
            last = h;
            let expect = u8::from(p > th.p_e) + u8::from(p > th.p_s) + u8::from(p > th.p_b);
            assert_eq!(h, expect, "q={q} p={p}");
        }
    }
}

#[test]
fn gws_entanglement_measures_coincide() {
    for i in 0..=20 {
        for j in 0..=20 {
            let m = MeasureSet::from_state(&gws(i as f64 / 20.0, j as f64 / 20.0).unwrap());
            assert!((m.fef - m.negativity.unwrap()).abs() < 1e-9);
            assert!((m.fef - m.concurrence.unwrap()).abs() < 1e-9);
        }
    }
}

#[test]
fn r_only_measures_omit_state_quantities() {
    let r = CorrMatrixR::new(qcorr_core::SymMatrix3::new(0.5, 0.0, 0.0, 0.5, 0.0, 0.5));
    let m = MeasureSet::from_r(&r);
    assert_eq!(m.concurrence, None);
    let json = serde_json::to_string(&m).unwrap();
    assert!(json.contains("\"concurrence\":null"));
    assert!(!json.contains("NaN"));
}
