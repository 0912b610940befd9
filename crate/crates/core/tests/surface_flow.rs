use fieldlab::evolve::evolve_krylov;
use fieldlab::lagrangian::{legendre_transform, HamiltonianDensity, LagrangianSpec};
use fieldlab::lattice::{free_ground_state_covariance, init_wavefunctional, LatticeConfig, WaveFunctional};
use fieldlab::operator::{compile_hamiltonian, CompileOptions};
use fieldlab::poly::Poly;
use fieldlab::surface::{integrability_test, run_schedule, DeformOptions, DeformationSchedule, SweepOrder};

fn setup() -> (LatticeConfig, HamiltonianDensity, WaveFunctional) {
    let cfg = LatticeConfig::new(3, 1.0, 16, 8.0, 1.0).unwrap();
    let h = legendre_transform(&LagrangianSpec::scalar(1.0, 0.0)).unwrap();
    let mut spec = free_ground_state_covariance(&cfg, 1.0).unwrap();
    spec.center = vec![0.5, -0.3, 0.2];
    let psi = init_wavefunctional(&spec, &cfg).unwrap();
    (cfg, h, psi)
}

#[test]
fn single_sweep_is_second_order_per_step() {
    let (cfg, h, psi) = setup();
    let flat = compile_hamiltonian(&h, &cfg, None, CompileOptions::default()).unwrap();
    let errs: Vec<f64> = [0.04, 0.02, 0.01]
        .iter()
        .map(|&dt| {
            let sweep = DeformationSchedule::flat_to_flat(3, 1.0, 0.0, dt, dt, SweepOrder::LeftToRight).unwrap();
            let a = run_schedule(&h, &psi, &sweep, &DeformOptions::default()).unwrap();
            let b = evolve_krylov(&flat, &psi, dt, 1e-13).unwrap();
            a.distance(&b).unwrap()
        })
        .collect();
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((3.5..=4.5).contains(&r), "ratio {r} from {errs:?}");
    }
}

#[test]
fn sweep_schedule_tracks_flat_evolution() {
    let (cfg, h, _) = setup();
    let psi = init_wavefunctional(&free_ground_state_covariance(&cfg, 1.0).unwrap(), &cfg).unwrap();
    let flat = compile_hamiltonian(&h, &cfg, None, CompileOptions::default()).unwrap();
    let b = evolve_krylov(&flat, &psi, 0.2, 1e-13).unwrap();
    let d: Vec<f64> = [1e-2, 5e-3]
        .iter()
        .map(|&dt| {
            let sched = DeformationSchedule::flat_to_flat(3, 1.0, 0.0, 0.2, dt, SweepOrder::LeftToRight).unwrap();
            run_schedule(&h, &psi, &sched, &DeformOptions::default()).unwrap().distance(&b).unwrap()
        })
        .collect();
    // First order in dt: one O(dt^2) ordering error per sweep.
    assert!(d[0] < 2.5e-3, "{d:?}");
    let r = d[0] / d[1];
    assert!((1.8..=2.2).contains(&r), "{d:?}");
}

#[test]
fn potential_only_schedules_agree() {
    let (_, _, psi) = setup();
    let h = HamiltonianDensity::potential_only(Poly::new(vec![0.0, 0.0, 0.5, 0.0, 0.1]));
    let lr = |dt| DeformationSchedule::flat_to_flat(3, 1.0, 0.0, 0.2, dt, SweepOrder::LeftToRight);
    let rl = |dt| DeformationSchedule::flat_to_flat(3, 1.0, 0.0, 0.2, dt, SweepOrder::RightToLeft);
    let rep = integrability_test(&h, &psi, lr, rl, &[0.05, 0.025], &DeformOptions::default()).unwrap();
    assert!(rep.discrepancies.iter().all(|d| *d <= 1e-12), "{:?}", rep.discrepancies);
}

#[test]
fn sweep_orders_converge() {
    let (_, h, psi) = setup();
    let lr = |dt| DeformationSchedule::flat_to_flat(3, 1.0, 0.0, 0.2, dt, SweepOrder::LeftToRight);
    let rl = |dt| DeformationSchedule::flat_to_flat(3, 1.0, 0.0, 0.2, dt, SweepOrder::RightToLeft);
    let rep = integrability_test(&h, &psi, lr, rl, &[0.05, 0.025, 0.0125], &DeformOptions::default()).unwrap();
    eprintln!("{rep:?}");
    assert!(!rep.flagged, "{:?}", rep.ratios);
    assert!(rep.fitted_order >= 0.85);
}
