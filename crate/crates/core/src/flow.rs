//! Classical flow: Hamilton's equations integrated jointly with the action
//! and the variational (stability) equations.

use std::io::Write;

use crate::error::{Error, Result};
use crate::hamiltonians::Hamiltonian;
use crate::linalg::{symplectic_j, RMat};

/// Default fixed-step density for callers without a preference.
pub const DEFAULT_STEPS_PER_UNIT: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl PhasePoint {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Self {
        assert_eq!(q.len(), p.len(), "q and p must have the same dimension");
        PhasePoint { q, p }
    }

    pub fn origin(d: usize) -> Self {
        PhasePoint {
            q: vec![0.0; d],
            p: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Flat `(q, p)` vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.q.clone();
        v.extend_from_slice(&self.p);
        v
    }

    pub fn from_slice(x: &[f64]) -> Self {
        let d = x.len() / 2;
        PhasePoint {
            q: x[..d].to_vec(),
            p: x[d..].to_vec(),
        }
    }

    pub fn distance(&self, other: &PhasePoint) -> f64 {
        self.q
            .iter()
            .zip(&other.q)
            .chain(self.p.iter().zip(&other.p))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|v| v.is_finite())
    }
}

/// Classical state at time `t` with the stability blocks of `F(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub z: PhasePoint,
    pub action: f64,
    /// `∫ H₁(z_s) ds`, zero when the model has no subprincipal term.
    pub subprincipal_integral: f64,
    pub a: RMat,
    pub b: RMat,
    pub c: RMat,
    pub d: RMat,
}

impl FlowState {
    pub fn initial(t0: f64, z0: &PhasePoint) -> Self {
        let d = z0.dim();
        FlowState {
            t: t0,
            z: z0.clone(),
            action: 0.0,
            subprincipal_integral: 0.0,
            a: RMat::identity(d, d),
            b: RMat::zeros(d, d),
            c: RMat::zeros(d, d),
            d: RMat::identity(d, d),
        }
    }

    pub fn dim(&self) -> usize {
        self.z.dim()
    }

    /// State with the given stability matrix `F = [[A, B], [C, D]]`.
    pub fn from_stability(t: f64, z: PhasePoint, f: &RMat) -> Self {
        let d = z.dim();
        FlowState {
            t,
            z,
            action: 0.0,
            subprincipal_integral: 0.0,
            a: f.view((0, 0), (d, d)).into_owned(),
            b: f.view((0, d), (d, d)).into_owned(),
            c: f.view((d, 0), (d, d)).into_owned(),
            d: f.view((d, d), (d, d)).into_owned(),
        }
    }

    pub fn stability(&self) -> RMat {
        let d = self.dim();
        let mut f = RMat::zeros(2 * d, 2 * d);
        f.view_mut((0, 0), (d, d)).copy_from(&self.a);
        f.view_mut((0, d), (d, d)).copy_from(&self.b);
        f.view_mut((d, 0), (d, d)).copy_from(&self.c);
        f.view_mut((d, d), (d, d)).copy_from(&self.d);
        f
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub initial: PhasePoint,
    pub t0: f64,
    pub step: f64,
    pub samples: Vec<FlowState>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &FlowState {
        self.samples.last().expect("trajectory always holds the initial sample")
    }
}

/// Fixed-step RK4 integrator for `(z, S, ∫H₁, F)`.
///
/// State layout: `q (d) | p (d) | S | ∫H₁ | F (2d x 2d, row-major)`.
pub struct FlowStepper<'a, H: Hamiltonian + ?Sized> {
    model: &'a H,
    d: usize,
    t: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    grad: Vec<f64>,
    hess: RMat,
    jh: RMat,
    j: RMat,
}

impl<'a, H: Hamiltonian + ?Sized> FlowStepper<'a, H> {
    pub fn new(model: &'a H, z0: &PhasePoint, t0: f64) -> Self {
        let d = model.dim();
        assert_eq!(z0.dim(), d, "initial point dimension does not match the model");
        let n = 2 * d + 2 + 4 * d * d;
        let mut y = vec![0.0; n];
        y[..d].copy_from_slice(&z0.q);
        y[d..2 * d].copy_from_slice(&z0.p);
        let off = 2 * d + 2;
        for i in 0..2 * d {
            y[off + i * 2 * d + i] = 1.0;
        }
        FlowStepper {
            model,
            d,
            t: t0,
            y,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
            grad: vec![0.0; 2 * d],
            hess: RMat::zeros(2 * d, 2 * d),
            jh: RMat::zeros(2 * d, 2 * d),
            j: symplectic_j(d),
        }
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    /// Raw state vector, for checkpointing.
    pub fn raw(&self) -> (f64, &[f64]) {
        (self.t, &self.y)
    }

    pub fn restore(&mut self, t: f64, y: &[f64]) {
        self.t = t;
        self.y.copy_from_slice(y);
    }

    fn rhs(&mut self, t: f64, src: usize) {
        // src: 0..4 reads `tmp`, usize::MAX reads `y`
        let d = self.d;
        let n2 = 2 * d;
        let y: &[f64] = if src == usize::MAX { &self.y } else { &self.tmp };
        let slot = if src == usize::MAX { 0 } else { src };
        let x = &y[..n2];
        self.model.gradient_into(t, x, &mut self.grad);
        self.model.hessian_into(t, x, &mut self.hess);
        let h = self.model.value(t, x);
        let h1 = self.model.subprincipal(t, x).unwrap_or(0.0);
        let out = &mut self.k[slot];
        let mut p_qdot = 0.0;
        for i in 0..d {
            out[i] = self.grad[d + i];
            out[d + i] = -self.grad[i];
            p_qdot += x[d + i] * self.grad[d + i];
        }
        out[n2] = p_qdot - h;
        out[n2 + 1] = h1;
        self.j.mul_to(&self.hess, &mut self.jh);
        let off = n2 + 2;
        for r in 0..n2 {
            for c in 0..n2 {
                let mut s = 0.0;
                for m in 0..n2 {
                    s += self.jh[(r, m)] * y[off + m * n2 + c];
                }
                out[off + r * n2 + c] = s;
            }
        }
    }

    /// Advances by `dt` with one classical RK4 step.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        let n = self.y.len();
        let t = self.t;
        self.rhs(t, usize::MAX);
        for i in 0..n {
            self.tmp[i] = self.y[i] + 0.5 * dt * self.k[0][i];
        }
        self.rhs(t + 0.5 * dt, 1);
        for i in 0..n {
            self.tmp[i] = self.y[i] + 0.5 * dt * self.k[1][i];
        }
        self.rhs(t + 0.5 * dt, 2);
        for i in 0..n {
            self.tmp[i] = self.y[i] + dt * self.k[2][i];
        }
        self.rhs(t + dt, 3);
        for i in 0..n {
            self.y[i] += dt / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]);
        }
        self.t = t + dt;
        if self.y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: self.t });
        }
        Ok(())
    }

    pub fn state(&self) -> FlowState {
        let d = self.d;
        let n2 = 2 * d;
        let off = n2 + 2;
        let f = RMat::from_row_slice(n2, n2, &self.y[off..off + n2 * n2]);
        let mut s = FlowState::from_stability(self.t, PhasePoint::from_slice(&self.y[..n2]), &f);
        s.action = self.y[n2];
        s.subprincipal_integral = self.y[n2 + 1];
        s
    }
}

/// Integrates the flow from `t0` to `t1` with `steps` equal RK4 steps and
/// keeps every sample.
pub fn integrate_flow<H: Hamiltonian + ?Sized>(
    model: &H,
    z0: &PhasePoint,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<TrajectoryRecord> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    if z0.dim() != model.dim() {
        return Err(Error::InvalidArgument("initial point dimension does not match the model".into()));
    }
    let mut stepper = FlowStepper::new(model, z0, t0);
    let mut samples = vec![stepper.state()];
    if t1 == t0 {
        return Ok(TrajectoryRecord {
            initial: z0.clone(),
            t0,
            step: 0.0,
            samples,
        });
    }
    let dt = (t1 - t0) / steps as f64;
    for k in 1..=steps {
        stepper.step(dt)?;
        // pin the time grid to avoid drift
        stepper.t = t0 + dt * k as f64;
        samples.push(stepper.state());
    }
    Ok(TrajectoryRecord {
        initial: z0.clone(),
        t0,
        step: dt,
        samples,
    })
}

/// Final state only, with `ceil(|t1 - t0| · steps_per_unit)` steps.
pub fn flow_to<H: Hamiltonian + ?Sized>(
    model: &H,
    z0: &PhasePoint,
    t0: f64,
    t1: f64,
    steps_per_unit: usize,
) -> Result<FlowState> {
    let mut stepper = FlowStepper::new(model, z0, t0);
    let steps = ((t1 - t0).abs() * steps_per_unit as f64).ceil() as usize;
    if steps == 0 {
        return Ok(stepper.state());
    }
    let dt = (t1 - t0) / steps as f64;
    for _ in 0..steps {
        stepper.step(dt)?;
    }
    Ok(stepper.state())
}

/// `‖FᵀJF − J‖` in the Frobenius norm.
pub fn symplectic_defect(state: &FlowState) -> f64 {
    let f = state.stability();
    let j = symplectic_j(state.dim());
    (f.transpose() * &j * &f - j).norm()
}

/// Max-norm difference between the integrated `F(t)` and centered finite
/// differences (step `h`) of the flow map `z0 ↦ z_t`.
pub fn jacobian_check<H: Hamiltonian + ?Sized>(model: &H, z0: &PhasePoint, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument("finite-difference step must be positive".into()));
    }
    let spu = DEFAULT_STEPS_PER_UNIT;
    let f = flow_to(model, z0, 0.0, t, spu)?.stability();
    let base = z0.to_vec();
    let n = base.len();
    let mut worst: f64 = 0.0;
    for col in 0..n {
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[col] += h;
        minus[col] -= h;
        let zp = flow_to(model, &PhasePoint::from_slice(&plus), 0.0, t, spu)?.z.to_vec();
        let zm = flow_to(model, &PhasePoint::from_slice(&minus), 0.0, t, spu)?.z.to_vec();
        for row in 0..n {
            let fd = (zp[row] - zm[row]) / (2.0 * h);
            worst = worst.max((fd - f[(row, col)]).abs());
        }
    }
    Ok(worst)
}

/// Writes a trajectory as CSV: `t,q0..,p0..,S,A00..,B00..,C00..,D00..`
/// with row-major block entries.
pub fn write_trajectory_csv<W: Write>(traj: &TrajectoryRecord, mut out: W) -> std::io::Result<()> {
    let d = traj.initial.dim();
    let mut header = vec!["t".to_string()];
    header.extend((0..d).map(|i| format!("q{i}")));
    header.extend((0..d).map(|i| format!("p{i}")));
    header.push("S".into());
    for block in ["A", "B", "C", "D"] {
        for r in 0..d {
            for c in 0..d {
                header.push(format!("{block}{r}{c}"));
            }
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for s in &traj.samples {
        let mut row = vec![s.t];
        row.extend(&s.z.q);
        row.extend(&s.z.p);
        row.push(s.action);
        for m in [&s.a, &s.b, &s.c, &s.d] {
            for r in 0..d {
                for c in 0..d {
                    row.push(m[(r, c)]);
                }
            }
        }
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{make_model, ModelKind, ModelParams};
    use std::f64::consts::FRAC_PI_2;

    fn model(kind: ModelKind) -> crate::hamiltonians::HamiltonianModel {
        make_model(kind, &ModelParams::new(1)).unwrap()
    }

    #[test]
    fn harmonic_quarter_period() {
        let traj = integrate_flow(&model(ModelKind::Harmonic), &PhasePoint::new(vec![1.0], vec![0.0]), 0.0, FRAC_PI_2, 1000).unwrap();
        let s = traj.last();
        assert!(s.z.q[0].abs() < 1e-8);
        assert!((s.z.p[0] + 1.0).abs() < 1e-8);
        assert!(s.action.abs() < 1e-8);
        assert_eq!(traj.samples.len(), 1001);
    }

    #[test]
    fn free_flow_closed_form() {
        let traj = integrate_flow(&model(ModelKind::Free), &PhasePoint::new(vec![0.0], vec![1.0]), 0.0, 1.0, 10).unwrap();
        let s = traj.last();
        assert!((s.z.q[0] - 1.0).abs() < 1e-13);
        assert!((s.z.p[0] - 1.0).abs() < 1e-13);
        assert!((s.a[(0, 0)] - 1.0).abs() < 1e-13);
        assert!((s.b[(0, 0)] - 1.0).abs() < 1e-13);
        assert!(s.c[(0, 0)].abs() < 1e-13);
        assert!((s.d[(0, 0)] - 1.0).abs() < 1e-13);
        assert!((s.action - 0.5).abs() < 1e-13);
    }

    #[test]
    fn empty_evolution_is_identity() {
        let z0 = PhasePoint::new(vec![0.3], vec![-1.1]);
        let traj = integrate_flow(&model(ModelKind::Pendulum), &z0, 2.0, 2.0, 5).unwrap();
        assert_eq!(traj.samples.len(), 1);
        assert_eq!(traj.samples[0], FlowState::initial(2.0, &z0));
    }

    #[test]
    fn zero_steps_rejected() {
        let z0 = PhasePoint::origin(1);
        assert!(integrate_flow(&model(ModelKind::Free), &z0, 0.0, 1.0, 0).is_err());
    }

    #[test]
    fn symplectic_defect_examples() {
        let z = PhasePoint::origin(1);
        assert_eq!(symplectic_defect(&FlowState::initial(0.0, &z)), 0.0);
        let shear = RMat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_eq!(symplectic_defect(&FlowState::from_stability(0.0, z.clone(), &shear)), 0.0);
        let stretch = RMat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let defect = symplectic_defect(&FlowState::from_stability(0.0, z, &stretch));
        assert!((defect - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let z0 = PhasePoint::new(vec![0.4], vec![0.9]);
        assert!(jacobian_check(&model(ModelKind::Harmonic), &z0, 1.0, 1e-5).unwrap() <= 1e-6);
        assert!(jacobian_check(&model(ModelKind::Free), &z0, 3.0, 1e-2).unwrap() <= 1e-9);
        assert!(jacobian_check(&model(ModelKind::Pendulum), &z0, 1.0, 1e-5).unwrap() <= 1e-5);
    }

    #[test]
    fn nonfinite_state_reports_time() {
        let m = crate::hamiltonians::CustomModel::new(
            1,
            |_, x| x[0].powi(4),
            |_, x, g| {
                g[0] = 4.0 * x[0].powi(3);
                g[1] = 0.0;
            },
            |_, x, h| {
                h.fill(0.0);
                h[(0, 0)] = 12.0 * x[0] * x[0];
            },
        )
        .unwrap();
        // superquadratic and started far out: the explicit step overflows
        let err = integrate_flow(&m, &PhasePoint::new(vec![1e80], vec![0.0]), 0.0, 1.0, 10).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn trajectory_csv_header() {
        let traj = integrate_flow(&model(ModelKind::Free), &PhasePoint::origin(1), 0.0, 1.0, 2).unwrap();
        let mut buf = Vec::new();
        write_trajectory_csv(&traj, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,q0,p0,S,A00,B00,C00,D00");
        assert_eq!(lines.count(), 3);
    }
}
