use magnon_core::analysis::ground_state;
use magnon_core::dynamics::{
    ensemble_gradient, ensemble_infidelity, evolve, infidelity, infidelity_gradient, step, StepScheme,
    TransferProblem,
};
use magnon_core::model::{hamiltonian, sample_disorder, DisorderPattern};
use magnon_core::protocols::{fourier_protocol, linear_protocol, FourierParams};
use magnon_core::{ChainSpec, ControlProtocol, SymTridiagonal, TransportTask, WaveState};
use num_complex::Complex64;
use proptest::prelude::*;

const SCHEMES: [StepScheme; 3] = [StepScheme::Eigen, StepScheme::Chebyshev, StepScheme::WindowedChebyshev];

fn small() -> (ChainSpec, TransportTask) {
    let chain = ChainSpec::new(31, 1.0, 0.5).unwrap();
    let task = TransportTask::centered(&chain, 6.0, 2.0).unwrap();
    (chain, task)
}

fn wiggly(task: &TransportTask, amp: f64) -> ControlProtocol {
    let coeffs: Vec<f64> = (1..=4).map(|n| amp / n as f64).collect();
    fourier_protocol(task, &FourierParams { coefficients: coeffs }).unwrap().0
}

fn max_dist(a: &WaveState, b: &WaveState) -> f64 {
    a.amplitudes.iter().zip(&b.amplitudes).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

#[test]
fn zero_hamiltonian_is_identity() {
    let h = SymTridiagonal { diagonal: vec![0.0; 5], off_diagonal: vec![0.0; 4] };
    let psi = WaveState::site(5, 2);
    assert!(max_dist(&step(&h, &psi, 0.7).unwrap(), &psi) < 1e-14);
}

#[test]
fn diagonal_hamiltonian_gives_phases() {
    let diag = vec![0.3, -1.2, 2.5, 0.0];
    let h = SymTridiagonal { diagonal: diag.clone(), off_diagonal: vec![0.0; 3] };
    let psi = WaveState::new(vec![Complex64::new(0.5, 0.0); 4]);
    let out = step(&h, &psi, 0.4).unwrap();
    for (n, a) in out.amplitudes.iter().enumerate() {
        let expected = Complex64::from_polar(0.5, -diag[n] * 0.4);
        assert!((a - expected).norm() < 1e-12);
    }
}

#[test]
fn two_half_steps_equal_one_step() {
    let chain = ChainSpec::new(40, 1.0, 0.5).unwrap();
    let h = hamiltonian(&chain, 18.3, None).unwrap();
    let psi = magnon_core::model::gaussian_state(&chain, 20.0, 2.0).unwrap();
    let half = step(&h, &step(&h, &psi, 0.35).unwrap(), 0.35).unwrap();
    assert!(max_dist(&half, &step(&h, &psi, 0.7).unwrap()) < 1e-12);
    assert!((half.norm() - 1.0).abs() < 1e-12);
    assert!(step(&h, &psi, 0.0).is_err());
}

#[test]
fn trap_ground_state_is_stationary() {
    // The packet lives at the top of the spectrum of H, i.e. in the ground state of −H.
    let chain = ChainSpec::standard();
    let task = TransportTask::centered(&chain, 0.0, 10.0).unwrap();
    let h = hamiltonian(&chain, task.x_start, None).unwrap();
    let neg = SymTridiagonal {
        diagonal: h.diagonal.iter().map(|d| -d).collect(),
        off_diagonal: h.off_diagonal.iter().map(|o| -o).collect(),
    };
    let (_, psi0) = ground_state(&neg).unwrap();
    let protocol = ControlProtocol::constant(&task, task.x_start);
    let traj = evolve(&chain, &task, &protocol, None, &psi0).unwrap();
    assert!(psi0.overlap(traj.final_state()).norm_sqr() >= 0.999);
    // The Gaussian packet is close to this state, so the static transfer is nearly perfect.
    assert!(infidelity(&chain, &task, &protocol, None).unwrap() <= 1e-3);
}

#[test]
fn empty_protocol_keeps_initial_state() {
    let chain = ChainSpec::new(31, 1.0, 0.5).unwrap();
    let task = TransportTask { duration: 0.04, ..TransportTask::centered(&chain, 6.0, 1.0).unwrap() };
    assert_eq!(task.n_bins(), 0);
    let protocol = ControlProtocol { samples: vec![task.x_start], duration: 0.04, bin_width: 0.1 };
    let psi0 = WaveState::site(31, 10);
    let traj = evolve(&chain, &task, &protocol, None, &psi0).unwrap();
    assert_eq!(traj.states.len(), 1);
    assert_eq!(traj.states[0], psi0);
}

#[test]
fn bin_count_mismatch_is_rejected() {
    let (chain, task) = small();
    let mut p = linear_protocol(&task);
    p.samples.pop();
    assert!(infidelity(&chain, &task, &p, None).is_err());
}

#[test]
fn long_run_norm_drift() {
    let chain = ChainSpec::standard();
    let task = TransportTask::centered(&chain, 50.0, 100.0).unwrap();
    let problem = TransferProblem::new(&chain, &task, None).unwrap();
    let traj = problem.evolve(&linear_protocol(&task)).unwrap();
    assert_eq!(traj.states.len(), 1001);
    for s in &traj.states {
        assert!((s.norm() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn linear_protocol_table_values() {
    let chain = ChainSpec::standard();
    for (tau, paper) in [(80.0, 0.0791), (40.0, 0.9845)] {
        let task = TransportTask::centered(&chain, 50.0, tau).unwrap();
        let i = infidelity(&chain, &task, &linear_protocol(&task), None).unwrap();
        assert!((i - paper).abs() < 0.01, "τ = {tau}: {i}");
    }
}

#[test]
fn uniform_shift_direction_has_zero_gradient() {
    // A pattern with equal ε on every site only adds a global phase.
    let (chain, task) = small();
    let p = wiggly(&task, 0.7);
    let base = infidelity(&chain, &task, &p, None).unwrap();
    for eps in [0.3, -1.1] {
        let flat = DisorderPattern { epsilons: vec![eps; 31], magnitude: eps.abs(), seed: 0 };
        let shifted = infidelity(&chain, &task, &p, Some(&flat)).unwrap();
        assert!((shifted - base).abs() < 1e-12);
    }
}

#[test]
fn gradient_matches_finite_differences_all_schemes() {
    let (chain, task) = small();
    let pattern = sample_disorder(&chain, 0.2, 4).unwrap();
    let p = wiggly(&task, 0.9);
    for scheme in SCHEMES {
        let problem = TransferProblem::new(&chain, &task, Some(&pattern)).unwrap().with_scheme(scheme);
        let (_, g) = problem.infidelity_gradient(&p).unwrap();
        let h = 1e-6;
        for k in 0..task.n_bins() {
            let mut up = p.clone();
            let mut dn = p.clone();
            up.samples[k + 1] += h;
            dn.samples[k + 1] -= h;
            let fd = (problem.infidelity(&up).unwrap() - problem.infidelity(&dn).unwrap()) / (2.0 * h);
            // Absolute floor: round-off of the objective divided by the step.
            let err = (fd - g.values[k]).abs();
            assert!(err <= 1e-6 * g.values[k].abs() + 1e-9, "{scheme:?} bin {k}: {} vs {fd}", g.values[k]);
        }
    }
}

#[test]
fn schemes_agree() {
    let chain = ChainSpec::new(121, 1.0, 0.5).unwrap();
    let task = TransportTask::centered(&chain, 20.0, 20.0).unwrap();
    let pattern = sample_disorder(&chain, 0.1, 9).unwrap();
    let p = wiggly(&task, 1.5);
    let reference = TransferProblem::new(&chain, &task, Some(&pattern)).unwrap().with_scheme(StepScheme::Eigen);
    let (i0, g0) = reference.infidelity_gradient(&p).unwrap();
    for scheme in [StepScheme::Chebyshev, StepScheme::WindowedChebyshev] {
        let pr = TransferProblem::new(&chain, &task, Some(&pattern)).unwrap().with_scheme(scheme);
        let (i, g) = pr.infidelity_gradient(&p).unwrap();
        assert!((i - i0).abs() < 1e-11, "{scheme:?}");
        let scale = g0.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for (a, b) in g.values.iter().zip(&g0.values) {
            assert!((a - b).abs() < 1e-9 * scale.max(1.0), "{scheme:?}");
        }
    }
}

#[test]
fn ensemble_examples() {
    let (chain, task) = small();
    let p = wiggly(&task, 0.5);
    let pat = sample_disorder(&chain, 0.3, 11).unwrap();
    let single = infidelity_gradient(&chain, &task, &p, Some(&pat)).unwrap();
    let (ens, g) = ensemble_gradient(&chain, &task, &p, std::slice::from_ref(&pat), StepScheme::default()).unwrap();
    assert_eq!(ens.mean, single.0);
    assert_eq!(g, single.1);
    let copies = vec![pat.clone(); 3];
    let (ens3, g3) = ensemble_gradient(&chain, &task, &p, &copies, StepScheme::default()).unwrap();
    assert!((ens3.mean - single.0).abs() < 1e-15);
    for (a, b) in g3.values.iter().zip(&single.1.values) {
        assert!((a - b).abs() < 1e-15);
    }
    let clean = vec![DisorderPattern::clean(31); 4];
    let e = ensemble_infidelity(&chain, &task, &p, &clean, StepScheme::default()).unwrap();
    assert!((e.mean - infidelity(&chain, &task, &p, None).unwrap()).abs() < 1e-15);
    assert!(ensemble_infidelity(&chain, &task, &p, &[], StepScheme::default()).is_err());
}

#[test]
fn ensemble_gradient_matches_finite_differences() {
    let (chain, task) = small();
    let p = wiggly(&task, 0.8);
    let patterns: Vec<_> = (0..3).map(|s| sample_disorder(&chain, 0.4, s).unwrap()).collect();
    let (_, g) = ensemble_gradient(&chain, &task, &p, &patterns, StepScheme::default()).unwrap();
    let h = 1e-6;
    for k in [0, 7, 19] {
        let mut up = p.clone();
        let mut dn = p.clone();
        up.samples[k + 1] += h;
        dn.samples[k + 1] -= h;
        let f = |q: &ControlProtocol| ensemble_infidelity(&chain, &task, q, &patterns, StepScheme::default()).unwrap().mean;
        let fd = (f(&up) - f(&dn)) / (2.0 * h);
        assert!((fd - g.values[k]).abs() <= 1e-6 * g.values[k].abs(), "bin {k}");
    }
}

#[test]
fn ensemble_mean_is_thread_count_invariant() {
    let (chain, task) = small();
    let p = wiggly(&task, 0.5);
    let patterns: Vec<_> = (0..16).map(|s| sample_disorder(&chain, 0.4, s).unwrap()).collect();
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| ensemble_gradient(&chain, &task, &p, &patterns, StepScheme::default()).unwrap())
    };
    let (a, ga) = run(1);
    let (b, gb) = run(4);
    assert_eq!(a.mean.to_bits(), b.mean.to_bits());
    assert_eq!(ga, gb);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn reversibility(seed in 0u64..500, amp in -2.0f64..2.0) {
        let chain = ChainSpec::new(61, 1.0, 0.5).unwrap();
        let task = TransportTask::centered(&chain, 10.0, 10.0).unwrap();
        let pattern = sample_disorder(&chain, 0.3, seed).unwrap();
        for scheme in SCHEMES {
            let problem = TransferProblem::new(&chain, &task, Some(&pattern)).unwrap().with_scheme(scheme);
            let traj = problem.evolve(&wiggly(&task, amp)).unwrap();
            let back = problem.unevolve(&traj).unwrap();
            prop_assert!(max_dist(&back, problem.initial_state()) < 1e-9);
            for s in &traj.states {
                prop_assert!((s.norm() - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn infidelity_bounded_and_mirror_symmetric(seed in 0u64..500, amp in -3.0f64..3.0, delta in 0.0f64..0.5) {
        let chain = ChainSpec::new(51, 1.0, 0.5).unwrap();
        let task = TransportTask { x_start: 20.0, x_end: 28.5, ..TransportTask::centered(&chain, 8.0, 6.0).unwrap() };
        let pattern = sample_disorder(&chain, delta, seed).unwrap();
        let p = wiggly(&task, amp);
        let i = infidelity(&chain, &task, &p, Some(&pattern)).unwrap();
        prop_assert!((0.0..=1.0).contains(&i));
        let im = infidelity(&chain, &task.mirrored(&chain), &p.mirrored(&chain), Some(&pattern.reversed())).unwrap();
        prop_assert!((i - im).abs() <= 1e-10);
    }

    #[test]
    fn gradient_exact_for_random_protocols(seed in 0u64..1000) {
        let (chain, task) = small();
        let p = magnon_core::protocols::free_protocol(
            &task,
            &magnon_core::protocols::FreeParams::random(&task, seed),
        ).unwrap().0;
        let problem = TransferProblem::new(&chain, &task, None).unwrap();
        let (_, g) = problem.infidelity_gradient(&p).unwrap();
        prop_assert!(g.values.iter().all(|v| v.is_finite()));
        let h = 1e-6;
        for k in 0..task.n_bins() {
            if g.values[k].abs() <= 1e-12 {
                continue;
            }
            let mut up = p.clone();
            let mut dn = p.clone();
            up.samples[k + 1] += h;
            dn.samples[k + 1] -= h;
            let fd = (problem.infidelity(&up).unwrap() - problem.infidelity(&dn).unwrap()) / (2.0 * h);
            // Absolute floor: round-off of the objective divided by the step.
            prop_assert!((fd - g.values[k]).abs() <= 1e-6 * g.values[k].abs() + 1e-9, "bin {}", k);
        }
    }
}
