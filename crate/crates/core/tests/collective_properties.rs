mod common;

use proptest::prelude::*;
use qcorr_core::collective::{
    collective_b, expected_counts, interpolate_r, r_from_collective, simulate_counts, singlet_projector,
    two_copy_expectation, write_counts_csv, InterferenceModel, ModelParams, Polarization, ProjectionSetting, Regime,
};
use qcorr_core::matcore::{c, ComplexMatrix, C64, SymMatrix3};
use qcorr_core::measures::CorrMatrixR;
use qcorr_core::states::{bloch_decompose, corr_r, random_density, random_density_with, werner};
use qcorr_core::DensityMatrix2Q;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::check_golden;

#[test]
fn collective_r_equals_t_tt_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for k in 0..1000 {
        let rho = random_density_with(&mut rng, 1 + k % 4).unwrap();
        let d = bloch_decompose(&rho);
        let collective = r_from_collective(&rho);
        let t_tt = d.t_tt();
        for i in 0..3 {
            for j in 0..3 {
                assert!((collective.matrix().get(i, j) - t_tt.get(i, j)).abs() < 1e-9, "state {k}");
            }
        }
        let a = collective.raw_eigenvalues();
        let b = corr_r(&d).raw_eigenvalues();
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9, "state {k}: {a:?} vs {b:?}");
        }
    }
}

fn bell_kets() -> [[C64; 4]; 4] {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let (z, p, m) = (c(0.0, 0.0), c(h, 0.0), c(-h, 0.0));
    [[p, z, z, p], [p, z, z, m], [z, p, p, z], [z, p, m, z]]
}

fn random_bell_diagonal(rng: &mut ChaCha8Rng) -> DensityMatrix2Q {
    let w: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
    let total: f64 = w.iter().sum();
    let mut m = ComplexMatrix::zeros(4, 4);
    for (wk, ket) in w.iter().zip(bell_kets().iter()) {
        m = &m + &ComplexMatrix::outer(ket).scale_re(wk / total);
    }
    DensityMatrix2Q::new(m).unwrap()
}

#[test]
fn local_term_vanishes_for_bell_diagonal_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..200 {
        let rho = random_bell_diagonal(&mut rng);
        for i in 1..=3 {
            for j in 1..=3 {
                assert!(collective_b(&rho, i, j).unwrap().abs() < 1e-15);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn interpolation_is_linear_in_p_squared(
        seed in any::<u64>(),
        p in 0.0f64..=1.0,
        p2 in 0.0f64..=1.0,
        alpha in 0.0f64..=1.0,
    ) {
        let bell = corr_r(&bloch_decompose(&random_density(seed, 4).unwrap()));
        let noise = corr_r(&bloch_decompose(&random_density(seed ^ 1, 4).unwrap()));
        let a = interpolate_r(&bell, &noise, p).unwrap();
        let b = interpolate_r(&bell, &noise, p2).unwrap();
        let mixed = a.matrix().scale(alpha).add(&b.matrix().scale(1.0 - alpha));
        let pm = (alpha * p * p + (1.0 - alpha) * p2 * p2).sqrt();
        let direct = interpolate_r(&bell, &noise, pm).unwrap();
        prop_assert!(mixed.add(&direct.matrix().scale(-1.0)).max_abs() < 1e-12);
    }

    #[test]
    fn probabilities_are_valid_and_sum_to_bell_projection(seed in any::<u64>(), f in 0.0f64..=1.0) {
        let rho = random_density(seed, 1 + (seed % 4) as usize).unwrap();
        let params = ModelParams::from_state(&rho);
        let model = InterferenceModel::new(f).unwrap();
        let id2 = ComplexMatrix::identity(2);
        let success = two_copy_expectation(&rho, &id2, &singlet_projector(), &id2);
        let pairs = [(Polarization::H, Polarization::V), (Polarization::D, Polarization::A), (Polarization::R, Polarization::L)];
        for (a1, a2) in pairs {
            for (b1, b2) in pairs {
                let mut total = 0.0;
                for a in [a1, a2] {
                    for b in [b1, b2] {
                        let prob = params.probability(ProjectionSetting::new(a, b), Regime::Tuned, &model);
                        prop_assert!((-1e-12..=1.0).contains(&prob));
                        total += prob;
                    }
                }
                prop_assert!((total - (f / 2.0 + (1.0 - f) * success)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn empirical_frequencies_converge_at_million_events() {
    let n = 1e6;
    let model = InterferenceModel::default();
    for seed in 0..5 {
        let rho = random_density(100 + seed, 4).unwrap();
        let exact = expected_counts(&ModelParams::from_state(&rho), &model, n, &[Regime::Tuned, Regime::Detuned]).unwrap();
        let recs = simulate_counts(&rho, &model, n, seed).unwrap();
        let mut worst: f64 = 0.0;
        for ((setting, regime, mean), rec) in exact.iter().zip(recs.iter()) {
            assert_eq!((*setting, *regime), (rec.setting, rec.regime));
            let z = (rec.counts as f64 - mean) / mean.sqrt();
            worst = worst.max(z.abs());
        }
        assert!(worst < 5.0, "seed {seed}: max deviation {worst} sigma");
    }
}

#[test]
fn without_interference_tuned_and_detuned_are_indistinguishable() {
    let model = InterferenceModel::new(1.0).unwrap();
    let (mut chi2, mut dof) = (0.0, 0.0);
    for seed in 0..20 {
        let rho = random_density(200 + seed, 4).unwrap();
        let recs = simulate_counts(&rho, &model, 1e4, seed).unwrap();
        let (tuned, detuned) = recs.split_at(36);
        for (t, d) in tuned.iter().zip(detuned.iter()) {
            assert_eq!(t.setting, d.setting);
            let (a, b) = (t.counts as f64, d.counts as f64);
            if a + b > 0.0 {
                chi2 += (a - b).powi(2) / (a + b);
                dof += 1.0;
            }
        }
    }
    // chi-square with `dof` degrees of freedom; 5 standard deviations
    assert!((chi2 - dof).abs() < 5.0 * (2.0 * dof).sqrt(), "chi2 {chi2} on {dof} dof");
}

#[test]
fn with_interference_tuned_and_detuned_differ() {
    let model = InterferenceModel::default();
    let recs = simulate_counts(&werner(1.0).unwrap(), &model, 1e5, 3).unwrap();
    let (tuned, detuned) = recs.split_at(36);
    let chi2: f64 = tuned
        .iter()
        .zip(detuned.iter())
        .map(|(t, d)| (t.counts as f64 - d.counts as f64).powi(2) / (t.counts + d.counts) as f64)
        .sum();
    assert!(chi2 > 1000.0, "{chi2}");
}

#[test]
fn seeded_counts_match_golden_file() {
    let recs = simulate_counts(&werner(0.8).unwrap(), &InterferenceModel::default(), 1e4, 42).unwrap();
    let mut buf = Vec::new();
    write_counts_csv(&mut buf, &recs).unwrap();
    check_golden("werner_0.8_seed42_counts.csv", &buf);
}

#[test]
fn werner_collective_r_is_p_squared_identity() {
    for p in [0.0, 0.3, 0.5, 0.8, 1.0] {
        let r = r_from_collective(&werner(p).unwrap());
        let expect = CorrMatrixR::new(SymMatrix3::new(p * p, 0.0, 0.0, p * p, 0.0, p * p));
        assert!(r.matrix().add(&expect.matrix().scale(-1.0)).max_abs() < 1e-12);
    }
}
