mod common;

use common::{gaussian, gaussian_vector, random_stable_model, rel_frobenius};
use iodmd_core::excite::GaussianStream;
use iodmd_core::identify::{fit_dmd, fit_dmdc, fit_iodmd, fit_projected_iodmd, fit_reduced_iodmd};
use iodmd_core::linalg::{pinv_apply, spectral_radius};
use iodmd_core::plant::{build_transport_plant, simulate_continuous, simulate_discrete, relative_output_error};
use iodmd_core::snapshot::{concat_pairs, make_pairs};
use iodmd_core::{excite, Matrix, PodOptions, PodSpectrum, SimConfig, Tolerances, Vector, ExcitationKind, ExcitationSpec};
use proptest::prelude::*;

fn recovery_error(seed: u64, n: usize, m: usize, q: usize, k: usize) -> [f64; 4] {
    let mut g = GaussianStream::new(seed);
    let truth = random_stable_model(n, m, q, 0.9, &mut g);
    let u = gaussian(m, k + 1, &mut g);
    let x0 = gaussian_vector(n, &mut g);
    let traj = simulate_discrete(&truth, &u, &x0).unwrap();
    let fit = fit_iodmd(&make_pairs(&traj).unwrap(), &Tolerances::default()).unwrap();
    assert_eq!(fit.rank, n + m);
    assert!(!fit.underdetermined);
    let est = &fit.model;
    [
        (est.a() - truth.a()).norm(),
        (est.b() - truth.b()).norm(),
        (est.c() - truth.c()).norm(),
        (est.d() - truth.d()).norm(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn iodmd_recovers_random_stable_systems(seed in any::<u64>()) {
        let errs = recovery_error(seed, 10, 2, 2, 100);
        for e in errs {
            prop_assert!(e <= 1e-8, "block errors {errs:?}");
        }
    }

    #[test]
    fn pseudoinverse_solution_is_least_squares_optimal(seed in any::<u64>()) {
        let mut g = GaussianStream::new(seed);
        let m = gaussian(4, 9, &mut g);
        // Make it rank deficient half of the time.
        let m = if seed % 2 == 0 { m } else {
            let mut r = m.clone();
            let row = r.row(0) + r.row(1) * 2.0;
            r.set_row(3, &row);
            r
        };
        let rhs = gaussian(3, 9, &mut g);
        let best = pinv_apply(&m, 0.0, &rhs).unwrap();
        let r_best = (&rhs - &best * &m).norm();
        for i in 0..100 {
            let scale = if i % 2 == 0 { 1.0 } else { 1e-3 };
            let other = &best + gaussian(3, 4, &mut g) * scale;
            prop_assert!(r_best <= (&rhs - other * &m).norm() + 1e-10);
        }
    }
}

#[test]
fn small_system_recovery_matches_example() {
    // N=5, M=1, Q=1, K=60 from a random stable model.
    for seed in 0..5 {
        let errs = recovery_error(1000 + seed, 5, 1, 1, 60);
        assert!(errs.iter().all(|e| *e <= 1e-8), "{errs:?}");
    }
}

#[test]
fn concatenated_trajectories_recover_the_system() {
    let mut g = GaussianStream::new(11);
    let truth = random_stable_model(6, 2, 1, 0.8, &mut g);
    // Each piece alone is too short to determine all blocks.
    let parts: Vec<_> = (0..3)
        .map(|_| {
            let u = gaussian(2, 4, &mut g);
            let x0 = gaussian_vector(6, &mut g);
            make_pairs(&simulate_discrete(&truth, &u, &x0).unwrap()).unwrap()
        })
        .collect();
    assert!(fit_iodmd(&parts[0], &Tolerances::default()).unwrap().underdetermined);
    let all = concat_pairs(&parts).unwrap();
    assert_eq!(all.len(), 9);
    let fit = fit_iodmd(&all, &Tolerances::default()).unwrap();
    assert!(!fit.underdetermined);
    assert!(rel_frobenius(&fit.model.block_matrix(), &truth.block_matrix()) < 1e-9);
}

#[test]
fn dmd_and_dmdc_agree_with_known_generators() {
    let mut g = GaussianStream::new(5);
    let truth = random_stable_model(4, 1, 1, 0.7, &mut g);
    let u = gaussian(1, 30, &mut g);
    let traj = simulate_discrete(&truth, &u, &gaussian_vector(4, &mut g)).unwrap();
    let pairs = make_pairs(&traj).unwrap();
    let c = fit_dmdc(&pairs, &Tolerances::default()).unwrap();
    assert!(rel_frobenius(c.model.a(), truth.a()) < 1e-9);
    assert!(rel_frobenius(c.model.b(), truth.b()) < 1e-9);

    // Autonomous data: plain DMD in the SVD basis is similar to A.
    let auto = simulate_discrete(&truth, &Matrix::zeros(1, 30), &gaussian_vector(4, &mut g)).unwrap();
    let d = fit_dmd(&make_pairs(&auto).unwrap(), &Tolerances::default()).unwrap();
    let u = d.basis.unwrap();
    let lifted = &u * d.model.a() * u.transpose();
    assert!(rel_frobenius(&lifted, truth.a()) < 1e-8);
}

#[test]
fn full_basis_projection_is_a_change_of_coordinates() {
    let mut g = GaussianStream::new(8);
    let truth = random_stable_model(5, 1, 2, 0.95, &mut g);
    let traj = simulate_discrete(&truth, &gaussian(1, 50, &mut g), &gaussian_vector(5, &mut g)).unwrap();
    let pairs = make_pairs(&traj).unwrap();
    let q = gaussian(5, 5, &mut g).qr().q();
    let fit = fit_projected_iodmd(&pairs, &q, &Tolerances::default()).unwrap();
    let a = &q * fit.model.a() * q.transpose();
    assert!(rel_frobenius(&a, truth.a()) < 1e-9);
    assert!(rel_frobenius(fit.model.d(), truth.d()) < 1e-9);
    let bad = Matrix::from_element(5, 2, 1.0);
    assert!(fit_projected_iodmd(&pairs, &bad, &Tolerances::default()).is_err());
}

#[test]
fn reduced_models_reproduce_their_training_data() {
    // Stable reduced fits reproduce their own training output up to the
    // one-step residual amplified by at most K·max(1, ρ)^K.
    let plant = build_transport_plant(1.3, 0.02).unwrap();
    let cfg = SimConfig::new(0.005, 1.0).unwrap();
    for kind in [ExcitationKind::PeStep, ExcitationKind::CeShiftedInit, ExcitationKind::PeGaussianNoise] {
        let traj = excite::generate(&plant, &ExcitationSpec::new(kind, 3), &cfg).unwrap();
        let pairs = make_pairs(&traj).unwrap();
        let spectrum = PodSpectrum::new(traj.states()).unwrap();
        let mut checked = 0;
        for e in 1..=6 {
            let basis = spectrum.basis(10f64.powi(-e), PodOptions::default()).unwrap();
            let fit = fit_reduced_iodmd(&pairs, &basis, &Tolerances::default()).unwrap();
            let rho = spectral_radius(fit.model.a()).unwrap();
            if rho >= 1.0 {
                continue;
            }
            checked += 1;
            let z0 = basis.modes().transpose() * traj.states().column(0);
            let sim = simulate_discrete(&fit.model, pairs.u0(), &z0).unwrap();
            let err = relative_output_error(pairs.y0(), sim.outputs()).unwrap();
            let k = pairs.len() as f64;
            let bound = fit.relative_residual * k * rho.max(1.0).powf(k);
            assert!(err <= bound.max(1e-12), "{kind}: err {err:e} bound {bound:e}");
        }
        assert!(checked > 0 || kind == ExcitationKind::PeGaussianNoise);
    }
}

#[test]
fn zero_state_simulation_from_identified_full_model() {
    // A full-order fit on noise-free data driven from rest reproduces the
    // plant response to a different input.
    let plant = build_transport_plant(1.0, 0.1).unwrap();
    let cfg = SimConfig::new(0.05, 2.0).unwrap().with_timing(iodmd_core::InputTiming::StartOfStep);
    let mut g = GaussianStream::new(21);
    let u = gaussian(1, cfg.steps().unwrap() + 1, &mut g);
    let train = simulate_continuous(&plant, &u, &Vector::zeros(10), &cfg).unwrap();
    let fit = fit_iodmd(&make_pairs(&train).unwrap(), &Tolerances::default()).unwrap();
    let u2 = Matrix::from_fn(1, 41, |_, k| (k as f64 * 0.3).sin());
    let truth = simulate_continuous(&plant, &u2, &Vector::zeros(10), &cfg).unwrap();
    let model = simulate_discrete(&fit.model, &u2, &Vector::zeros(10)).unwrap();
    assert!(relative_output_error(truth.outputs(), model.outputs()).unwrap() < 1e-9);
}
