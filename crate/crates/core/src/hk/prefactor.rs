use num_complex::Complex64;
use std::f64::consts::PI;

use crate::coherent::{gamma_update, CoherentEvaluator, QuadratureOptions, SiegelMatrix};
use crate::error::{Error, Result};
use crate::flow::{FlowState, PhasePoint, TrajectoryRecord, DEFAULT_STEPS_PER_UNIT};
use crate::linalg::{det, smallest_singular_value, to_complex, CMat, RMat, SqrtBranch, I};
use crate::wave::{GridSpec, WaveFunction};

/// Branch-continuous square root sample along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HKPrefactor {
    pub value: Complex64,
    /// Radicand: `value² = det_arg`.
    pub det_arg: Complex64,
    /// Unwound argument of `det_arg`.
    pub branch_phase: f64,
    pub t: f64,
}

/// `det(A + D + i(C − B))`.
pub fn frozen_det_arg(state: &FlowState) -> Complex64 {
    let m = to_complex(&(&state.a + &state.d)) + to_complex(&(&state.c - &state.b)) * I;
    det(&m)
}

fn track<F>(traj: &TrajectoryRecord, start: SqrtBranch, scale: Complex64, radicand: F) -> Result<Vec<HKPrefactor>>
where
    F: Fn(&FlowState) -> Result<Complex64>,
{
    let mut branch = start;
    let mut out = Vec::with_capacity(traj.samples.len());
    for (k, s) in traj.samples.iter().enumerate() {
        let r = radicand(s)?;
        if k > 0 {
            branch
                .advance(r)
                .map_err(|rotation| Error::BranchAmbiguity { t: s.t, rotation })?;
        }
        let root = branch.sqrt(r);
        out.push(HKPrefactor {
            value: scale * root,
            det_arg: scale * scale * r,
            branch_phase: branch.phase() + 2.0 * scale.arg(),
            t: s.t,
        });
    }
    Ok(out)
}

/// Frozen prefactor `det^{1/2}(A + D + i(C − B))` along `traj`, continued
/// from `2^{d/2}` at the first sample.
///
/// Fails with [`Error::BranchAmbiguity`] when consecutive samples rotate the
/// determinant by `π/2` or more; resample the trajectory more densely then.
pub fn hk_prefactor_frozen(traj: &TrajectoryRecord) -> Result<Vec<HKPrefactor>> {
    let first = traj
        .samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let start = SqrtBranch::principal(frozen_det_arg(first));
    track(traj, start, Complex64::new(1.0, 0.0), |s| Ok(frozen_det_arg(s)))
}

/// `M(Θ, Γ) = C + D·Γ̄ − Θ(A + B·Γ̄)`.
pub fn m_matrix(state: &FlowState, theta: &SiegelMatrix, gamma: &SiegelMatrix) -> Result<CMat> {
    let gbar = gamma.conj();
    let a = to_complex(&state.a);
    let b = to_complex(&state.b);
    let c = to_complex(&state.c);
    let d = to_complex(&state.d);
    let m = &c + &d * &gbar - theta.matrix() * (a + b * &gbar);
    let smallest = smallest_singular_value(&m);
    if !(smallest > 1e-12) {
        return Err(Error::Singular { smallest });
    }
    Ok(m)
}

/// Choice of the output width family `Θ_t`.
#[derive(Debug, Clone, PartialEq)]
pub enum ThetaMode {
    /// `Θ = iI` at all times.
    FrozenIdentity,
    /// Fixed `Θ`.
    Constant(SiegelMatrix),
    /// `Θ_t = Γ_t` per trajectory.
    Thawed,
}

/// Propagator configuration with its calibrated normalization.
#[derive(Debug, Clone)]
pub struct HKConfig {
    pub theta_mode: ThetaMode,
    pub gamma: SiegelMatrix,
    pub quadrature: QuadratureOptions,
    pub steps_per_unit: usize,
    theta0: SiegelMatrix,
    overlap: Complex64,
    normalization: Complex64,
    start_radicand: Complex64,
}

impl HKConfig {
    /// Calibrates the normalization so that the propagator is the identity
    /// at the initial time.
    pub fn new(theta_mode: ThetaMode, gamma: SiegelMatrix, quadrature: QuadratureOptions) -> Result<Self> {
        let d = gamma.dim();
        let theta0 = match &theta_mode {
            ThetaMode::FrozenIdentity => SiegelMatrix::standard(d),
            ThetaMode::Constant(theta) => {
                if theta.dim() != d {
                    return Err(Error::InvalidArgument("Θ and Γ differ in dimension".into()));
                }
                theta.clone()
            }
            ThetaMode::Thawed => gamma.clone(),
        };
        let overlap = coherent_overlap(&gamma, &theta0)?;
        let m0 = m_matrix(&FlowState::initial(0.0, &PhasePoint::origin(d)), &theta0, &gamma)?;
        let mut start_radicand = det(&m0);
        // fix the sign of a zero imaginary part so the principal root is reproducible
        if start_radicand.im == 0.0 {
            start_radicand.im = 0.0;
        }
        let f0 = 2f64.powf(d as f64 / 2.0) * theta0.a_gamma() * gamma.a_gamma() / overlap;
        let normalization = f0 / start_radicand.sqrt();
        Ok(HKConfig {
            theta_mode,
            gamma,
            quadrature,
            steps_per_unit: DEFAULT_STEPS_PER_UNIT,
            theta0,
            overlap,
            normalization,
            start_radicand,
        })
    }

    /// Frozen `Θ = Γ = iI` with default quadrature.
    pub fn frozen(d: usize) -> Self {
        HKConfig::new(ThetaMode::FrozenIdentity, SiegelMatrix::standard(d), QuadratureOptions::default())
            .expect("standard widths calibrate")
    }

    pub fn with_steps_per_unit(mut self, steps: usize) -> Self {
        self.steps_per_unit = steps.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.gamma.dim()
    }

    pub fn normalization(&self) -> Complex64 {
        self.normalization
    }

    /// `⟨φ^Γ | φ^{Θ₀}⟩`.
    pub fn overlap(&self) -> Complex64 {
        self.overlap
    }

    pub fn theta0(&self) -> &SiegelMatrix {
        &self.theta0
    }

    /// `Θ_t` for a trajectory state.
    pub(crate) fn theta_at(&self, state: &FlowState) -> Result<SiegelMatrix> {
        match self.theta_mode {
            ThetaMode::Thawed => gamma_update(state, &self.gamma),
            _ => Ok(self.theta0.clone()),
        }
    }

    /// `det M(Θ_t, Γ)` and `Θ_t`.
    pub(crate) fn radicand(&self, state: &FlowState) -> Result<(Complex64, SiegelMatrix)> {
        let theta = self.theta_at(state)?;
        let m = m_matrix(state, &theta, &self.gamma)?;
        Ok((det(&m), theta))
    }

    /// `det M(Θ_t, Γ)` from a row-major stability matrix, with a scalar
    /// path in one dimension.
    pub(crate) fn radicand_from_stability(&self, f: &[f64]) -> Result<Complex64> {
        let d = self.dim();
        if d == 1 {
            let (a, b, c, dd) = (f[0], f[1], f[2], f[3]);
            let g = self.gamma.matrix()[(0, 0)];
            let gbar = g.conj();
            let theta = match self.theta_mode {
                ThetaMode::Thawed => (c + g * dd) / (a + g * b),
                _ => self.theta0.matrix()[(0, 0)],
            };
            let m = c + dd * gbar - theta * (a + b * gbar);
            if !(m.norm() > 1e-12) {
                return Err(Error::Singular { smallest: m.norm() });
            }
            return Ok(m);
        }
        let state = FlowState::from_stability(0.0, PhasePoint::origin(d), &RMat::from_row_slice(2 * d, 2 * d, f));
        Ok(self.radicand(&state)?.0)
    }

    pub(crate) fn start_branch(&self) -> SqrtBranch {
        SqrtBranch::principal(self.start_radicand)
    }

    /// Synthesis amplitude `2^{-d/2} f / (a_Θ a_Γ)` for `φ^Θ` contributions.
    pub(crate) fn synthesis_amplitude(&self, branch: &SqrtBranch, radicand: Complex64, theta: &SiegelMatrix) -> Complex64 {
        let d = self.dim() as f64;
        let f = self.normalization * branch.sqrt(radicand);
        f * 2f64.powf(-d / 2.0) / (theta.a_gamma() * self.gamma.a_gamma())
    }
}

/// General prefactor `normalization · det^{1/2} M(Θ_t, Γ)` along `traj`,
/// continued from the principal branch at the first sample.
pub fn hk_prefactor_general(traj: &TrajectoryRecord, cfg: &HKConfig) -> Result<Vec<HKPrefactor>> {
    if traj.initial.dim() != cfg.dim() {
        return Err(Error::InvalidArgument("trajectory and configuration differ in dimension".into()));
    }
    track(traj, cfg.start_branch(), cfg.normalization, |s| Ok(cfg.radicand(s)?.0))
}

/// `⟨φ^Γ | φ^Θ⟩ = ∫ conj(φ^Γ) φ^Θ` at `ħ = 1`, `z = 0` by trapezoid quadrature.
fn coherent_overlap(gamma: &SiegelMatrix, theta: &SiegelMatrix) -> Result<Complex64> {
    let d = gamma.dim();
    let p = gamma.im() + theta.im();
    let eig = p.clone().symmetric_eigen().eigenvalues;
    let lmin = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = eig.iter().cloned().fold(0.0, f64::max);
    let q: CMat = (theta.matrix() - gamma.conj()) * Complex64::new(0.0, -1.0);
    let qinv = crate::linalg::inverse(&q)?;
    let rmin = qinv
        .map(|v| v.re)
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    // integrand below e^-40 beyond the box, spectrum below e^-45 at the sampling cut-off
    let extent = 9.0 / lmin.sqrt();
    let spacing = (2.0 * PI / (90.0 / rmin).sqrt()).min(1.0 / (3.0 * lmax.sqrt()));
    let half = (extent / spacing).ceil() as usize;
    let n = 2 * half + 1;
    let lower = vec![-(half as f64) * spacing; d];
    let grid = GridSpec::new(lower, vec![spacing; d], vec![n; d])?;
    let origin = PhasePoint::origin(d);
    let eg = CoherentEvaluator::new(gamma, 1.0);
    let et = CoherentEvaluator::new(theta, 1.0);
    let wt = WaveFunction::from_fn(grid.clone(), 1.0, |x| et.value(&origin, x));
    let wg = WaveFunction::from_fn(grid, 1.0, |x| eg.value(&origin, x));
    Ok(wt.inner(&wg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowState;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn harmonic_traj(t1: f64, n: usize) -> TrajectoryRecord {
        let z = PhasePoint::origin(1);
        let samples = (0..=n)
            .map(|k| {
                let t = t1 * k as f64 / n as f64;
                let (s, c) = t.sin_cos();
                FlowState::from_stability(t, z.clone(), &RMat::from_row_slice(2, 2, &[c, s, -s, c]))
            })
            .collect();
        TrajectoryRecord {
            initial: z,
            t0: 0.0,
            step: t1 / n as f64,
            samples,
        }
    }

    #[test]
    fn m_matrix_examples() {
        let s = FlowState::initial(0.0, &PhasePoint::origin(1));
        let i1 = SiegelMatrix::standard(1);
        let m = m_matrix(&s, &i1, &i1).unwrap();
        assert!((m[(0, 0)] - Complex64::new(0.0, -2.0)).norm() < 1e-15);
        let two = SiegelMatrix::scaled_identity(1, 2.0).unwrap();
        let m = m_matrix(&s, &two, &i1).unwrap();
        assert!((m[(0, 0)] - Complex64::new(0.0, -3.0)).norm() < 1e-15);
        for t in [0.3, 1.7, 4.0] {
            let (sn, c) = f64::sin_cos(t);
            let st = FlowState::from_stability(t, PhasePoint::origin(1), &RMat::from_row_slice(2, 2, &[c, sn, -sn, c]));
            let m = m_matrix(&st, &i1, &i1).unwrap()[(0, 0)];
            assert!((m - Complex64::new(-2.0 * sn, -2.0 * c)).norm() < 1e-14);
            assert!((m.norm() - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn frozen_prefactor_starts_at_root_two_and_follows_rotation() {
        let traj = harmonic_traj(2.0 * PI, 400);
        let pf = hk_prefactor_frozen(&traj).unwrap();
        assert!((pf[0].value - Complex64::new(SQRT_2, 0.0)).norm() < 1e-15);
        for p in &pf {
            let expected = Complex64::from_polar(SQRT_2, -p.t / 2.0);
            assert!((p.value - expected).norm() < 1e-12, "t = {}", p.t);
            assert!((p.value * p.value - p.det_arg).norm() <= 1e-10 * p.det_arg.norm());
        }
        assert!((pf.last().unwrap().value - Complex64::new(-SQRT_2, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn frozen_prefactor_rejects_sparse_sampling() {
        let traj = harmonic_traj(2.0 * PI, 3);
        assert!(matches!(hk_prefactor_frozen(&traj), Err(Error::BranchAmbiguity { .. })));
    }

    #[test]
    fn free_prefactor_principal_branch() {
        let z = PhasePoint::origin(1);
        let samples: Vec<FlowState> = (0..=20)
            .map(|k| {
                let t = k as f64 * 0.25;
                FlowState::from_stability(t, z.clone(), &RMat::from_row_slice(2, 2, &[1.0, t, 0.0, 1.0]))
            })
            .collect();
        let traj = TrajectoryRecord {
            initial: z,
            t0: 0.0,
            step: 0.25,
            samples,
        };
        for p in hk_prefactor_frozen(&traj).unwrap() {
            let r = Complex64::new(2.0, -p.t);
            assert!((p.det_arg - r).norm() < 1e-14);
            assert!((p.value - r.sqrt()).norm() < 1e-14);
        }
    }

    #[test]
    fn general_mode_matches_frozen() {
        let traj = harmonic_traj(2.0 * PI, 400);
        let cfg = HKConfig::frozen(1);
        let frozen = hk_prefactor_frozen(&traj).unwrap();
        let general = hk_prefactor_general(&traj, &cfg).unwrap();
        for (a, b) in frozen.iter().zip(&general) {
            assert!((a.value - b.value).norm() < 1e-10);
            assert!((a.det_arg - b.det_arg).norm() < 1e-10);
        }
        let k = 100;
        assert!((general[k].t - FRAC_PI_2).abs() < 1e-12);
        assert!((general[k].value - Complex64::from_polar(SQRT_2, -PI / 4.0)).norm() < 1e-12);
    }

    #[test]
    fn thawed_harmonic_coincides_with_frozen() {
        let traj = harmonic_traj(3.0, 300);
        let thawed = HKConfig::new(ThetaMode::Thawed, SiegelMatrix::standard(1), QuadratureOptions::default()).unwrap();
        let a = hk_prefactor_general(&traj, &thawed).unwrap();
        let b = hk_prefactor_general(&traj, &HKConfig::frozen(1)).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.value - y.value).norm() < 1e-12);
        }
    }

    #[test]
    fn numeric_overlap_matches_closed_form() {
        // ⟨φ^Γ|φ^Θ⟩ = 2^{1/2} a_Γ a_Θ (i(Γ̄ − Θ))^{-1/2} in one dimension
        let cases = [
            (Complex64::new(0.0, 1.0), Complex64::new(0.0, 2.0)),
            (Complex64::new(0.5, 0.7), Complex64::new(-0.3, 1.4)),
            (Complex64::new(0.0, 1.0), Complex64::new(0.0, 1.0)),
        ];
        for (g, t) in cases {
            let gamma = SiegelMatrix::new(CMat::from_element(1, 1, g)).unwrap();
            let theta = SiegelMatrix::new(CMat::from_element(1, 1, t)).unwrap();
            let numeric = coherent_overlap(&gamma, &theta).unwrap();
            let closed = SQRT_2 * gamma.a_gamma() * theta.a_gamma() / (I * (g.conj() - t)).sqrt();
            assert!((numeric - closed).norm() < 1e-12, "{numeric} vs {closed}");
        }
    }

    #[test]
    fn scalar_radicand_matches_matrix_path() {
        let f = RMat::from_row_slice(2, 2, &[1.3, 0.4, -0.2, 0.7076923076923077]);
        let state = FlowState::from_stability(0.5, PhasePoint::origin(1), &f);
        let flat: Vec<f64> = f.transpose().iter().cloned().collect();
        for mode in [ThetaMode::FrozenIdentity, ThetaMode::Thawed, ThetaMode::Constant(SiegelMatrix::scaled_identity(1, 2.0).unwrap())] {
            let gamma = SiegelMatrix::new(CMat::from_element(1, 1, Complex64::new(0.3, 1.2))).unwrap();
            let cfg = HKConfig::new(mode, gamma, QuadratureOptions::default()).unwrap();
            let a = cfg.radicand_from_stability(&flat).unwrap();
            let b = cfg.radicand(&state).unwrap().0;
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn calibration_at_initial_time() {
        let gamma = SiegelMatrix::standard(1);
        let theta = SiegelMatrix::scaled_identity(1, 2.0).unwrap();
        let cfg = HKConfig::new(ThetaMode::Constant(theta.clone()), gamma.clone(), QuadratureOptions::default()).unwrap();
        let s = FlowState::initial(0.0, &PhasePoint::origin(1));
        let (r, th) = cfg.radicand(&s).unwrap();
        let amp = cfg.synthesis_amplitude(&cfg.start_branch(), r, &th);
        // resolution of identity needs amplitude 1 / ⟨φ^Γ|φ^Θ⟩
        assert!((amp * cfg.overlap() - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((HKConfig::frozen(1).normalization() - Complex64::from_polar(1.0, PI / 4.0)).norm() < 1e-12);
        assert!((HKConfig::frozen(2).normalization() - Complex64::new(0.0, -1.0)).norm() < 1e-12);
    }
}
