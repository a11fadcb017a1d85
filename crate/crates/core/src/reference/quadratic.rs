use num_complex::Complex64;
use std::f64::consts::PI;

use crate::coherent::{build_quadrature, fb_transform, synthesize, CoherentEvaluator, QuadratureOptions, SiegelMatrix};
use crate::error::{Error, Result};
use crate::flow::{FlowState, PhasePoint};
use crate::hamiltonians::Hamiltonian;
use crate::linalg::{det, symplectic_j, to_complex, RMat, SqrtBranch};
use crate::wave::{GridSpec, WaveFunction};

/// `amplitude · (πħ)^{-d/4} exp(i/ħ (p·x − p·q/2) + i/(2ħ) Γ(x−q)·(x−q))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub center: PhasePoint,
    pub width: SiegelMatrix,
    /// Includes `a_Γ` and any accumulated phase.
    pub amplitude: Complex64,
    pub hbar: f64,
}

impl GaussianState {
    pub fn to_wave(&self, grid: &GridSpec) -> WaveFunction {
        let eval = CoherentEvaluator::new(&self.width, self.hbar);
        let scale = self.amplitude / self.width.a_gamma();
        WaveFunction::from_fn(grid.clone(), self.hbar, |x| eval.value(&self.center, x) * scale)
    }
}

/// Constant Hessian of a quadratic model, checked at two phase points.
fn quadratic_hessian<H: Hamiltonian + ?Sized>(model: &H) -> Result<RMat> {
    let n = 2 * model.dim();
    let x0 = vec![0.0; n];
    let x1: Vec<f64> = (0..n).map(|k| 0.7 - 0.9 * k as f64).collect();
    let h0 = model.hessian(0.0, &x0);
    let h1 = model.hessian(0.0, &x1);
    let diff = (&h0 - &h1).amax();
    if diff > 1e-12 * h0.amax().max(1.0) {
        return Err(Error::NotQuadratic(format!("Hessian varies by {diff:.3e} between sample points")));
    }
    Ok(h0)
}

struct QuadraticEvolution {
    f: RMat,
    width: SiegelMatrix,
    /// `a_{Γ₀} det^{-1/2}(A + Γ₀B)`, continued in `t`.
    amplitude: Complex64,
}

fn stability(generator: &RMat, t: f64) -> RMat {
    (generator * t).exp()
}

fn evolve(hessian: &RMat, gamma0: &SiegelMatrix, t: f64) -> Result<QuadraticEvolution> {
    let d = gamma0.dim();
    let generator = symplectic_j(d) * hessian;
    let radicand = |f: &RMat| {
        let s = FlowState::from_stability(0.0, PhasePoint::origin(d), f);
        det(&(to_complex(&s.a) + gamma0.matrix() * to_complex(&s.b)))
    };
    let rate = generator.norm().max(1.0);
    let mut samples = (64.0 * (t.abs() * rate).ceil()).max(64.0) as usize;
    let f = stability(&generator, t);
    let end = radicand(&f);
    let root = 'refine: loop {
        let mut branch = SqrtBranch::principal(Complex64::new(1.0, 0.0));
        for k in 1..=samples {
            let s = t * k as f64 / samples as f64;
            if let Err(rotation) = branch.advance(radicand(&stability(&generator, s))) {
                if samples >= 1 << 22 {
                    return Err(Error::BranchAmbiguity { t: s, rotation });
                }
                samples *= 2;
                continue 'refine;
            }
        }
        break branch.sqrt(end);
    };
    let state = FlowState::from_stability(t, PhasePoint::origin(d), &f);
    let width = crate::coherent::gamma_update(&state, gamma0)?;
    Ok(QuadraticEvolution {
        f,
        width,
        amplitude: gamma0.a_gamma() / root,
    })
}

fn map_point(f: &RMat, z: &PhasePoint) -> PhasePoint {
    let v = f * nalgebra::DVector::from_vec(z.to_vec());
    PhasePoint::from_slice(v.as_slice())
}

/// Exact evolution of `φ_z^{Γ₀}` under a homogeneous quadratic Hamiltonian.
///
/// The stability matrix is the matrix exponential of `t·J·Hess`; the phase
/// `S + (p·q − p_t·q_t)/2` vanishes identically for these models.
pub fn exact_quadratic_coherent<H: Hamiltonian + ?Sized>(
    model: &H,
    z: &PhasePoint,
    gamma0: &SiegelMatrix,
    t: f64,
    hbar: f64,
) -> Result<GaussianState> {
    if z.dim() != model.dim() || gamma0.dim() != model.dim() {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    let hessian = quadratic_hessian(model)?;
    if t == 0.0 {
        return Ok(GaussianState {
            center: z.clone(),
            width: gamma0.clone(),
            amplitude: Complex64::new(gamma0.a_gamma(), 0.0),
            hbar,
        });
    }
    let evo = evolve(&hessian, gamma0, t)?;
    Ok(GaussianState {
        center: map_point(&evo.f, z),
        width: evo.width,
        amplitude: evo.amplitude,
        hbar,
    })
}

/// Decomposes `psi0` over `φ^{Γ}` coherent states, evolves each exactly and
/// resynthesizes on `psi0`'s grid.
pub fn exact_quadratic_apply<H: Hamiltonian + ?Sized>(
    model: &H,
    psi0: &WaveFunction,
    t: f64,
    gamma_decomp: &SiegelMatrix,
) -> Result<WaveFunction> {
    let mut out =
        exact_quadratic_apply_times(model, psi0, &[t], gamma_decomp, &QuadratureOptions::default(), &psi0.grid)?;
    Ok(out.remove(0))
}

/// [`exact_quadratic_apply`] at several times on an arbitrary output grid.
pub fn exact_quadratic_apply_times<H: Hamiltonian + ?Sized>(
    model: &H,
    psi0: &WaveFunction,
    times: &[f64],
    gamma_decomp: &SiegelMatrix,
    opts: &QuadratureOptions,
    out_grid: &GridSpec,
) -> Result<Vec<WaveFunction>> {
    let d = model.dim();
    if psi0.grid.dim() != d || gamma_decomp.dim() != d || out_grid.dim() != d {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    let hessian = quadratic_hessian(model)?;
    let hbar = psi0.hbar;
    let qgrid = build_quadrature(psi0, gamma_decomp, opts)?;
    if qgrid.coverage < qgrid.coverage_target {
        log::warn!("phase grid coverage below target");
    }
    let coeffs = fb_transform(psi0, gamma_decomp, &qgrid)?;
    let scale = (2.0 * PI * hbar).powf(-(d as f64) / 2.0);
    times
        .iter()
        .map(|&t| {
            let evo = if t == 0.0 {
                QuadraticEvolution {
                    f: RMat::identity(2 * d, 2 * d),
                    width: gamma_decomp.clone(),
                    amplitude: Complex64::new(gamma_decomp.a_gamma(), 0.0),
                }
            } else {
                evolve(&hessian, gamma_decomp, t)?
            };
            let eval = CoherentEvaluator::new(&evo.width, hbar);
            let factor = evo.amplitude / evo.width.a_gamma() * scale;
            let centers: Vec<PhasePoint> = qgrid.nodes.iter().map(|z| map_point(&evo.f, z)).collect();
            Ok(synthesize(out_grid, hbar, centers.len(), |k| {
                (&centers[k], &eval, coeffs[k] * qgrid.weights[k] * factor)
            }))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherent::coherent_state;
    use crate::hamiltonians::{make_model, ModelKind, ModelParams};

    fn model(kind: ModelKind) -> crate::hamiltonians::HamiltonianModel {
        make_model(kind, &ModelParams::new(1)).unwrap()
    }

    #[test]
    fn harmonic_ground_state_phase() {
        let i1 = SiegelMatrix::standard(1);
        for t in [0.5, PI, 2.0 * PI, 7.0] {
            let g = exact_quadratic_coherent(&model(ModelKind::Harmonic), &PhasePoint::origin(1), &i1, t, 0.1).unwrap();
            assert!(g.center.distance(&PhasePoint::origin(1)) < 1e-12);
            assert!((g.width.matrix()[(0, 0)] - crate::linalg::I).norm() < 1e-12);
            assert!((g.amplitude - Complex64::from_polar(1.0, -t / 2.0)).norm() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn free_spreading_width() {
        let g = exact_quadratic_coherent(&model(ModelKind::Free), &PhasePoint::origin(1), &SiegelMatrix::standard(1), 1.0, 0.1)
            .unwrap();
        assert!((g.width.matrix()[(0, 0)] - Complex64::new(0.5, 0.5)).norm() < 1e-14);
        let grid = GridSpec::uniform(&[-6.0], &[6.0], 1201).unwrap();
        assert!((g.to_wave(&grid).l2_norm() - 1.0).abs() < 1e-10);
        // |amplitude| = |1 + i|^{-1/2}
        assert!((g.amplitude.norm() - 2f64.powf(-0.25)).abs() < 1e-14);
    }

    #[test]
    fn zero_time_is_identity() {
        let z = PhasePoint::new(vec![0.3], vec![-1.0]);
        let gamma = SiegelMatrix::new(crate::linalg::CMat::from_element(1, 1, Complex64::new(0.2, 1.5))).unwrap();
        let g = exact_quadratic_coherent(&model(ModelKind::Harmonic), &z, &gamma, 0.0, 0.1).unwrap();
        let grid = GridSpec::uniform(&[-4.0], &[4.0], 801).unwrap();
        let direct = coherent_state(&z, &gamma, 0.1, &grid).unwrap();
        assert!(g.to_wave(&grid).l2_distance(&direct) < 1e-15);
    }

    #[test]
    fn pendulum_is_rejected() {
        let r = exact_quadratic_coherent(&model(ModelKind::Pendulum), &PhasePoint::origin(1), &SiegelMatrix::standard(1), 1.0, 0.1);
        assert!(matches!(r, Err(Error::NotQuadratic(_))));
    }

    #[test]
    fn full_period_sign() {
        let hbar = 0.1;
        let grid = GridSpec::uniform(&[-6.0], &[6.0], 1025).unwrap();
        let psi0 = coherent_state(&PhasePoint::new(vec![0.5], vec![0.2]), &SiegelMatrix::standard(1), hbar, &grid).unwrap();
        let out = exact_quadratic_apply(&model(ModelKind::Harmonic), &psi0, 2.0 * PI, &SiegelMatrix::standard(1)).unwrap();
        let minus = psi0.scaled(Complex64::new(-1.0, 0.0));
        assert!(out.l2_distance(&minus) < 1e-6, "{}", out.l2_distance(&minus));
    }
}
