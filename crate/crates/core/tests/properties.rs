use herman_kluk::coherent::{build_quadrature, coherent_state, fb_inverse, fb_transform, gamma_update, QuadratureOptions, SiegelMatrix};
use herman_kluk::flow::{flow_to, integrate_flow, symplectic_defect, PhasePoint};
use herman_kluk::hamiltonians::{make_model, Hamiltonian, ModelKind, ModelParams};
use herman_kluk::hk::{frozen_det_arg, hk_prefactor_frozen, hk_propagate, m_matrix, HKConfig};
use herman_kluk::linalg::{det, CMat, SqrtBranch};
use herman_kluk::reference::{exact_quadratic_coherent, split_step_propagate};
use herman_kluk::wave::GridSpec;
use num_complex::Complex64;
use proptest::prelude::*;

fn model(kind: ModelKind) -> herman_kluk::hamiltonians::HamiltonianModel {
    make_model(kind, &ModelParams::new(1)).unwrap()
}

fn width(re: f64, im: f64) -> SiegelMatrix {
    SiegelMatrix::new(CMat::from_element(1, 1, Complex64::new(re, im))).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn coherent_states_are_normalized(q in -2.0f64..2.0, p in -2.0f64..2.0, re in -1.0f64..1.0, im in 0.4f64..3.0) {
        let grid = GridSpec::uniform(&[-7.0], &[7.0], 2048).unwrap();
        let psi = coherent_state(&PhasePoint::new(vec![q], vec![p]), &width(re, im), 0.1, &grid).unwrap();
        prop_assert!((psi.l2_norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn flow_stays_symplectic(q in -3.0f64..3.0, p in -2.0f64..2.0, t in 0.0f64..3.0) {
        let m = model(ModelKind::Pendulum);
        let s = flow_to(&m, &PhasePoint::new(vec![q], vec![p]), 0.0, t, 1000).unwrap();
        prop_assert!(symplectic_defect(&s) < 1e-9);
        let e0 = m.value(0.0, &[q, p]);
        prop_assert!((m.value(0.0, &s.z.to_vec()) - e0).abs() < 1e-9);
    }

    #[test]
    fn det_m_bounded_below(q in -3.0f64..3.0, p in -2.0f64..2.0, t in 0.0f64..5.0) {
        let s = flow_to(&model(ModelKind::Pendulum), &PhasePoint::new(vec![q], vec![p]), 0.0, t, 500).unwrap();
        let i1 = SiegelMatrix::standard(1);
        let m = det(&m_matrix(&s, &i1, &i1).unwrap());
        prop_assert!(m.norm() >= 0.5);
        // same quantity as the frozen radicand up to the factor −i
        prop_assert!((m - Complex64::new(0.0, -1.0) * frozen_det_arg(&s)).norm() < 1e-10 * m.norm());
    }

    #[test]
    fn width_update_stays_in_siegel_space(re in -1.0f64..1.0, im in 0.2f64..3.0, t in -4.0f64..4.0, free in any::<bool>()) {
        let kind = if free { ModelKind::Free } else { ModelKind::Harmonic };
        let g = exact_quadratic_coherent(&model(kind), &PhasePoint::origin(1), &width(re, im), t, 0.1).unwrap();
        prop_assert!(g.width.im()[(0, 0)] > 0.0);
        // |det(A + ΓB)|^{-1/2} a_Γ = a_{Γ_t}: norm is conserved
        prop_assert!((g.amplitude.norm() - g.width.a_gamma()).abs() < 1e-10);
    }

    #[test]
    fn exact_quadratic_composes(t1 in -2.0f64..2.0, t2 in -2.0f64..2.0, q in -1.0f64..1.0, p in -1.0f64..1.0) {
        let m = model(ModelKind::Harmonic);
        let z = PhasePoint::new(vec![q], vec![p]);
        let i1 = SiegelMatrix::standard(1);
        let direct = exact_quadratic_coherent(&m, &z, &i1, t1 + t2, 0.1).unwrap();
        let first = exact_quadratic_coherent(&m, &z, &i1, t1, 0.1).unwrap();
        let second = exact_quadratic_coherent(&m, &first.center, &first.width, t2, 0.1).unwrap();
        prop_assert!(direct.center.distance(&second.center) < 1e-10);
        prop_assert!((direct.width.matrix()[(0, 0)] - second.width.matrix()[(0, 0)]).norm() < 1e-10);
        // amplitudes relative to a_Γ compose multiplicatively, up to the sign of the branch
        let composed = first.amplitude / first.width.a_gamma() * second.amplitude;
        prop_assert!((direct.amplitude - composed).norm() < 1e-9 || (direct.amplitude + composed).norm() < 1e-9);
    }

    #[test]
    fn branch_tracks_rotating_path(turns in 0.1f64..4.0, r in 0.5f64..3.0) {
        let n = (turns * 16.0).ceil() as usize + 1;
        let mut b = SqrtBranch::principal(Complex64::new(r, 0.0));
        for k in 1..=n {
            let z = Complex64::from_polar(r, 2.0 * std::f64::consts::PI * turns * k as f64 / n as f64);
            prop_assert!(b.advance(z).is_ok());
            let s = b.sqrt(z);
            prop_assert!((s * s - z).norm() < 1e-12 * r);
        }
        let expected = Complex64::from_polar(r.sqrt(), std::f64::consts::PI * turns);
        prop_assert!((b.sqrt(Complex64::from_polar(r, 2.0 * std::f64::consts::PI * turns)) - expected).norm() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn fb_round_trip(q in -1.0f64..1.0, p in -1.0f64..1.0, re in -0.5f64..0.5, im in 0.5f64..2.0) {
        let hbar = 0.1;
        let grid = GridSpec::uniform(&[-8.0], &[8.0], 2048).unwrap();
        let psi = coherent_state(&PhasePoint::new(vec![q], vec![p]), &width(re, im), hbar, &grid).unwrap();
        let i1 = SiegelMatrix::standard(1);
        let zgrid = build_quadrature(&psi, &i1, &QuadratureOptions::default()).unwrap();
        let field = fb_transform(&psi, &i1, &zgrid).unwrap();
        let mass: f64 = field.iter().zip(&zgrid.weights).map(|(f, w)| f.norm_sqr() * w).sum();
        prop_assert!((mass - 1.0).abs() < 1e-8);
        let back = fb_inverse(&field, &zgrid, &i1, &grid, hbar).unwrap();
        prop_assert!(back.wave.l2_distance(&psi) < 1e-8);
    }

    #[test]
    fn split_step_is_unitary(q in -1.0f64..1.0, p in -1.0f64..1.0, t in 0.0f64..2.0) {
        let grid = GridSpec::new(vec![-8.0], vec![16.0 / 1024.0], vec![1024]).unwrap();
        let psi = coherent_state(&PhasePoint::new(vec![q], vec![p]), &SiegelMatrix::standard(1), 0.1, &grid).unwrap();
        let out = split_step_propagate(&model(ModelKind::Pendulum), &psi, t, 200).unwrap();
        prop_assert!((out.l2_norm() - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3))]

    #[test]
    fn hk_is_linear_on_a_shared_quadrature(a_re in -1.0f64..1.0, a_im in -1.0f64..1.0, q in -0.5f64..0.5) {
        // both inputs share the initial point, so their quadratures coincide
        let hbar = 0.1;
        let grid = GridSpec::uniform(&[-6.0], &[6.0], 1024).unwrap();
        let z = PhasePoint::new(vec![q], vec![0.5]);
        let psi = coherent_state(&z, &SiegelMatrix::standard(1), hbar, &grid).unwrap();
        let a = Complex64::new(a_re, a_im);
        if a.norm() < 1e-3 {
            return Ok(());
        }
        let m = model(ModelKind::Pendulum);
        let cfg = HKConfig::frozen(1);
        let u = hk_propagate(&m, &psi, 0.5, &cfg).unwrap();
        let ua = hk_propagate(&m, &psi.scaled(a), 0.5, &cfg).unwrap();
        prop_assert!(ua.l2_distance(&u.scaled(a)) < 1e-10 * a.norm());
    }
}

#[test]
fn hk_is_deterministic() {
    let hbar = 0.1;
    let grid = GridSpec::uniform(&[-6.0], &[6.0], 1024).unwrap();
    let psi = coherent_state(&PhasePoint::new(vec![0.1], vec![0.7]), &SiegelMatrix::standard(1), hbar, &grid).unwrap();
    let m = model(ModelKind::Pendulum);
    let a = hk_propagate(&m, &psi, 1.0, &HKConfig::frozen(1)).unwrap();
    let b = hk_propagate(&m, &psi, 1.0, &HKConfig::frozen(1)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn frozen_prefactor_follows_energy_shell() {
    // on the harmonic oscillator the frozen radicand is 2e^{-it} for every orbit
    let m = model(ModelKind::Harmonic);
    let traj = integrate_flow(&m, &PhasePoint::new(vec![0.7], vec![-0.2]), 0.0, 4.0, 4000).unwrap();
    for (s, p) in traj.samples.iter().zip(hk_prefactor_frozen(&traj).unwrap()) {
        let expected = Complex64::from_polar(2f64.sqrt(), -s.t / 2.0);
        assert!((p.value - expected).norm() < 1e-9, "t = {}", s.t);
    }
}

#[test]
fn lattice_refinement_keeps_identity() {
    let hbar = 0.1;
    let grid = GridSpec::uniform(&[-6.0], &[6.0], 1024).unwrap();
    let psi = coherent_state(&PhasePoint::new(vec![0.2], vec![-0.3]), &width(0.2, 1.3), hbar, &grid).unwrap();
    for density in [3, 6] {
        let mut cfg = HKConfig::frozen(1);
        cfg.quadrature.density = density;
        let out = hk_propagate(&model(ModelKind::Pendulum), &psi, 0.0, &cfg).unwrap();
        assert!(out.l2_distance(&psi) < 1e-8, "density {density}");
    }
}

#[test]
fn gamma_update_of_identity_flow() {
    let s = flow_to(&model(ModelKind::Pendulum), &PhasePoint::origin(1), 0.0, 0.0, 10).unwrap();
    let g = width(0.3, 0.8);
    assert_eq!(gamma_update(&s, &g).unwrap(), g);
}
