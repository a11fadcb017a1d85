//! Hamiltonian models on `T*R^d`, the built-in subquadratic examples and the
//! stability-rate estimator.
//!
//! Phase points are flat slices `X = (q_1..q_d, p_1..p_d)`.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, symplectic_j, RMat};

/// Evaluator bundle for a (possibly time-dependent) classical symbol `H(t, X)`.
pub trait Hamiltonian: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, t: f64, x: &[f64]) -> f64;

    fn gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// Writes the `2d x 2d` Hessian into `out`.
    fn hessian_into(&self, t: f64, x: &[f64], out: &mut RMat);

    /// Subprincipal term `H₁`; `None` means identically zero.
    fn subprincipal(&self, _t: f64, _x: &[f64]) -> Option<f64> {
        None
    }

    fn has_subprincipal(&self) -> bool {
        false
    }

    /// Kinetic/potential decomposition `H = T(ξ) + V(x)` when available.
    fn split_form(&self) -> Option<&dyn SplitForm> {
        None
    }

    fn gradient(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; 2 * self.dim()];
        self.gradient_into(t, x, &mut g);
        g
    }

    fn hessian(&self, t: f64, x: &[f64]) -> RMat {
        let n = 2 * self.dim();
        let mut h = RMat::zeros(n, n);
        self.hessian_into(t, x, &mut h);
        h
    }
}

/// `H = T(ξ) + V(x)`, autonomous.
pub trait SplitForm: Send + Sync {
    fn kinetic(&self, xi: &[f64]) -> f64;
    fn potential(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Harmonic,
    Free,
    QuadraticGeneral,
    Pendulum,
    Relativistic,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::Harmonic => "harmonic",
            ModelKind::Free => "free",
            ModelKind::QuadraticGeneral => "quadratic_general",
            ModelKind::Pendulum => "pendulum",
            ModelKind::Relativistic => "relativistic",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "harmonic" => ModelKind::Harmonic,
            "free" => ModelKind::Free,
            "quadratic_general" => ModelKind::QuadraticGeneral,
            "pendulum" => ModelKind::Pendulum,
            "relativistic" => ModelKind::Relativistic,
            other => return Err(Error::InvalidModel(format!("unknown model kind `{other}`"))),
        })
    }
}

/// Parameters for [`make_model`]. Fields not used by a kind are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    /// Harmonic frequency; also the frequency of the relativistic model's
    /// confining potential `ω²|x|²/2`.
    pub omega: f64,
    /// Pendulum strength `g` in `|p|²/2 − g Σ cos q_i`.
    pub strength: f64,
    /// Quadratic blocks of `½(Gq·q + 2Lq·p + Kp·p)`.
    pub g: Option<RMat>,
    pub l: Option<RMat>,
    pub k: Option<RMat>,
}

impl ModelParams {
    pub fn new(dim: usize) -> Self {
        ModelParams {
            dim,
            omega: 1.0,
            strength: 1.0,
            g: None,
            l: None,
            k: None,
        }
    }
}

/// One of the built-in subquadratic Hamiltonians.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianModel {
    kind: ModelKind,
    dim: usize,
    omega: f64,
    strength: f64,
    g: RMat,
    l: RMat,
    k: RMat,
}

fn check_symmetric(name: &str, m: &RMat) -> Result<()> {
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidModel(format!(
            "{name} must be symmetric (asymmetry {asym:.3e})"
        )));
    }
    Ok(())
}

/// Builds a built-in model.
pub fn make_model(kind: ModelKind, params: &ModelParams) -> Result<HamiltonianModel> {
    let d = params.dim;
    if d == 0 {
        return Err(Error::InvalidModel("dimension must be positive".into()));
    }
    let zero = RMat::zeros(d, d);
    let (g, l, k) = match kind {
        ModelKind::QuadraticGeneral => {
            let take = |name: &str, m: &Option<RMat>| -> Result<RMat> {
                match m {
                    Some(m) if m.nrows() == d && m.ncols() == d => Ok(m.clone()),
                    Some(m) => Err(Error::InvalidModel(format!(
                        "{name} has shape {}x{}, expected {d}x{d}",
                        m.nrows(),
                        m.ncols()
                    ))),
                    None => Ok(RMat::zeros(d, d)),
                }
            };
            let g = take("G", &params.g)?;
            let l = take("L", &params.l)?;
            let k = take("K", &params.k)?;
            check_symmetric("G", &g)?;
            check_symmetric("K", &k)?;
            (g, l, k)
        }
        _ => (zero.clone(), zero.clone(), zero),
    };
    if !params.omega.is_finite() || !params.strength.is_finite() {
        return Err(Error::InvalidModel("parameters must be finite".into()));
    }
    Ok(HamiltonianModel {
        kind,
        dim: d,
        omega: params.omega,
        strength: params.strength,
        g,
        l,
        k,
    })
}

impl HamiltonianModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// True for models whose Hessian does not depend on `X`.
    pub fn is_quadratic(&self) -> bool {
        matches!(
            self.kind,
            ModelKind::Harmonic | ModelKind::Free | ModelKind::QuadraticGeneral
        )
    }

    /// `(G, L, K)` blocks for quadratic kinds.
    pub fn quadratic_blocks(&self) -> Option<(RMat, RMat, RMat)> {
        let d = self.dim;
        match self.kind {
            ModelKind::Harmonic => Some((
                RMat::identity(d, d) * (self.omega * self.omega),
                RMat::zeros(d, d),
                RMat::identity(d, d),
            )),
            ModelKind::Free => Some((RMat::zeros(d, d), RMat::zeros(d, d), RMat::identity(d, d))),
            ModelKind::QuadraticGeneral => Some((self.g.clone(), self.l.clone(), self.k.clone())),
            _ => None,
        }
    }
}

impl Hamiltonian for HamiltonianModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, _t: f64, x: &[f64]) -> f64 {
        let d = self.dim;
        let (q, p) = x.split_at(d);
        let p2: f64 = p.iter().map(|v| v * v).sum();
        let q2: f64 = q.iter().map(|v| v * v).sum();
        match self.kind {
            ModelKind::Harmonic => 0.5 * (p2 + self.omega * self.omega * q2),
            ModelKind::Free => 0.5 * p2,
            ModelKind::Pendulum => 0.5 * p2 - self.strength * q.iter().map(|v| v.cos()).sum::<f64>(),
            ModelKind::Relativistic => (1.0 + p2).sqrt() + 0.5 * self.omega * self.omega * q2,
            ModelKind::QuadraticGeneral => {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += 0.5 * self.g[(i, j)] * q[i] * q[j]
                            + self.l[(i, j)] * q[j] * p[i]
                            + 0.5 * self.k[(i, j)] * p[i] * p[j];
                    }
                }
                s
            }
        }
    }

    fn gradient_into(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let (q, p) = x.split_at(d);
        match self.kind {
            ModelKind::Harmonic => {
                let w2 = self.omega * self.omega;
                for i in 0..d {
                    out[i] = w2 * q[i];
                    out[d + i] = p[i];
                }
            }
            ModelKind::Free => {
                for i in 0..d {
                    out[i] = 0.0;
                    out[d + i] = p[i];
                }
            }
            ModelKind::Pendulum => {
                for i in 0..d {
                    out[i] = self.strength * q[i].sin();
                    out[d + i] = p[i];
                }
            }
            ModelKind::Relativistic => {
                let w2 = self.omega * self.omega;
                let root = (1.0 + p.iter().map(|v| v * v).sum::<f64>()).sqrt();
                for i in 0..d {
                    out[i] = w2 * q[i];
                    out[d + i] = p[i] / root;
                }
            }
            ModelKind::QuadraticGeneral => {
                // ∂q = Gq + Lᵀp, ∂p = Lq + Kp
                for i in 0..d {
                    let mut gq = 0.0;
                    let mut gp = 0.0;
                    for j in 0..d {
                        gq += self.g[(i, j)] * q[j] + self.l[(j, i)] * p[j];
                        gp += self.l[(i, j)] * q[j] + self.k[(i, j)] * p[j];
                    }
                    out[i] = gq;
                    out[d + i] = gp;
                }
            }
        }
    }

    fn hessian_into(&self, _t: f64, x: &[f64], out: &mut RMat) {
        let d = self.dim;
        out.fill(0.0);
        let (q, p) = x.split_at(d);
        match self.kind {
            ModelKind::Harmonic => {
                for i in 0..d {
                    out[(i, i)] = self.omega * self.omega;
                    out[(d + i, d + i)] = 1.0;
                }
            }
            ModelKind::Free => {
                for i in 0..d {
                    out[(d + i, d + i)] = 1.0;
                }
            }
            ModelKind::Pendulum => {
                for i in 0..d {
                    out[(i, i)] = self.strength * q[i].cos();
                    out[(d + i, d + i)] = 1.0;
                }
            }
            ModelKind::Relativistic => {
                let s = 1.0 + p.iter().map(|v| v * v).sum::<f64>();
                let r3 = s * s.sqrt();
                for i in 0..d {
                    out[(i, i)] = self.omega * self.omega;
                    for j in 0..d {
                        let delta = if i == j { s } else { 0.0 };
                        out[(d + i, d + j)] = (delta - p[i] * p[j]) / r3;
                    }
                }
            }
            ModelKind::QuadraticGeneral => {
                for i in 0..d {
                    for j in 0..d {
                        out[(i, j)] = self.g[(i, j)];
                        out[(i, d + j)] = self.l[(j, i)];
                        out[(d + i, j)] = self.l[(i, j)];
                        out[(d + i, d + j)] = self.k[(i, j)];
                    }
                }
            }
        }
    }

    fn split_form(&self) -> Option<&dyn SplitForm> {
        match self.kind {
            ModelKind::QuadraticGeneral => None,
            _ => Some(self),
        }
    }
}

impl SplitForm for HamiltonianModel {
    fn kinetic(&self, xi: &[f64]) -> f64 {
        let p2: f64 = xi.iter().map(|v| v * v).sum();
        match self.kind {
            ModelKind::Relativistic => (1.0 + p2).sqrt(),
            _ => 0.5 * p2,
        }
    }

    fn potential(&self, x: &[f64]) -> f64 {
        let q2: f64 = x.iter().map(|v| v * v).sum();
        match self.kind {
            ModelKind::Harmonic | ModelKind::Relativistic => 0.5 * self.omega * self.omega * q2,
            ModelKind::Free => 0.0,
            ModelKind::Pendulum => -self.strength * x.iter().map(|v| v.cos()).sum::<f64>(),
            ModelKind::QuadraticGeneral => unreachable!("no split form"),
        }
    }
}

type ScalarFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;
type VectorFn = dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync;
type MatrixFn = dyn Fn(f64, &[f64], &mut RMat) + Send + Sync;

/// User-supplied model built from closures.
#[derive(Clone)]
pub struct CustomModel {
    dim: usize,
    value: Arc<ScalarFn>,
    gradient: Arc<VectorFn>,
    hessian: Arc<MatrixFn>,
    subprincipal: Option<Arc<ScalarFn>>,
}

impl fmt::Debug for CustomModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomModel")
            .field("dim", &self.dim)
            .field("subprincipal", &self.subprincipal.is_some())
            .finish()
    }
}

impl CustomModel {
    pub fn new(
        dim: usize,
        value: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        gradient: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static,
        hessian: impl Fn(f64, &[f64], &mut RMat) + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        Ok(CustomModel {
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
            subprincipal: None,
        })
    }

    pub fn with_subprincipal(mut self, h1: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.subprincipal = Some(Arc::new(h1));
        self
    }
}

impl Hamiltonian for CustomModel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, t: f64, x: &[f64]) -> f64 {
        (self.value)(t, x)
    }

    fn gradient_into(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.gradient)(t, x, out)
    }

    fn hessian_into(&self, t: f64, x: &[f64], out: &mut RMat) {
        (self.hessian)(t, x, out)
    }

    fn subprincipal(&self, t: f64, x: &[f64]) -> Option<f64> {
        self.subprincipal.as_ref().map(|h1| h1(t, x))
    }

    fn has_subprincipal(&self) -> bool {
        self.subprincipal.is_some()
    }
}

/// Axis-aligned box in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl PhaseBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidArgument("box bounds must have equal, nonzero length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidArgument("box is empty".into()));
        }
        Ok(PhaseBox { lower, upper })
    }

    pub fn translated(&self, shift: &[f64]) -> PhaseBox {
        PhaseBox {
            lower: self.lower.iter().zip(shift).map(|(a, s)| a + s).collect(),
            upper: self.upper.iter().zip(shift).map(|(a, s)| a + s).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityBound {
    pub delta: f64,
    pub sample_box: PhaseBox,
    pub sample_count: usize,
}

/// Samples `‖J ∂²H‖` on a tensor grid with `n` points per axis (at `t = 0`)
/// and returns the maximum.
pub fn estimate_delta<H: Hamiltonian + ?Sized>(model: &H, region: &PhaseBox, n: usize) -> Result<StabilityBound> {
    let d = model.dim();
    if region.lower.len() != 2 * d {
        return Err(Error::InvalidArgument(format!(
            "box has {} axes, model phase space has {}",
            region.lower.len(),
            2 * d
        )));
    }
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples per axis".into()));
    }
    let axes = 2 * d;
    let total = n.checked_pow(axes as u32).ok_or_else(|| Error::InvalidArgument("sample grid too large".into()))?;
    let j = symplectic_j(d);
    let mut hess = RMat::zeros(axes, axes);
    let mut x = vec![0.0; axes];
    let mut delta: f64 = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        for a in (0..axes).rev() {
            let k = rem % n;
            rem /= n;
            let (lo, hi) = (region.lower[a], region.upper[a]);
            x[a] = lo + (hi - lo) * k as f64 / (n - 1) as f64;
        }
        model.hessian_into(0.0, &x, &mut hess);
        delta = delta.max(spectral_norm(&(&j * &hess)));
    }
    Ok(StabilityBound {
        delta,
        sample_box: region.clone(),
        sample_count: total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(kind: ModelKind) -> HamiltonianModel {
        make_model(kind, &ModelParams::new(1)).unwrap()
    }

    #[test]
    fn harmonic_defining_formula() {
        let m = model(ModelKind::Harmonic);
        assert_eq!(m.value(0.0, &[0.3, -0.4]), 0.5 * (0.09 + 0.16));
        assert_eq!(m.hessian(0.0, &[1.7, 2.0]), RMat::identity(2, 2));
    }

    #[test]
    fn free_defining_formula() {
        let m = model(ModelKind::Free);
        assert_eq!(m.value(0.0, &[5.0, 2.0]), 2.0);
        assert_eq!(m.hessian(0.0, &[5.0, 2.0]), RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0])));
    }

    #[test]
    fn pendulum_defining_formula() {
        let m = model(ModelKind::Pendulum);
        let q = 0.7;
        assert!((m.value(0.0, &[q, 1.0]) - (0.5 - q.cos())).abs() < 1e-15);
        let h = m.hessian(0.0, &[q, 1.0]);
        assert_eq!(h[(0, 0)], q.cos());
        assert_eq!(h[(1, 1)], 1.0);
        assert_eq!(h[(0, 1)], 0.0);
    }

    #[test]
    fn split_form_presence() {
        for kind in [ModelKind::Harmonic, ModelKind::Free, ModelKind::Pendulum, ModelKind::Relativistic] {
            assert!(model(kind).split_form().is_some(), "{kind:?}");
        }
        assert!(model(ModelKind::QuadraticGeneral).split_form().is_none());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_model(ModelKind::Harmonic, &ModelParams::new(0)).is_err());
        let mut p = ModelParams::new(2);
        p.g = Some(RMat::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]));
        assert!(matches!(make_model(ModelKind::QuadraticGeneral, &p), Err(Error::InvalidModel(_))));
        p.g = None;
        p.k = Some(RMat::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]));
        assert!(make_model(ModelKind::QuadraticGeneral, &p).is_err());
    }

    #[test]
    fn delta_closed_forms() {
        let b = PhaseBox::new(vec![-3.0, -2.0], vec![3.0, 2.0]).unwrap();
        let harmonic = estimate_delta(&model(ModelKind::Harmonic), &b, 5).unwrap();
        assert!((harmonic.delta - 1.0).abs() < 1e-14);
        let free = estimate_delta(&model(ModelKind::Free), &b, 5).unwrap();
        assert!((free.delta - 1.0).abs() < 1e-14);
        let pb = PhaseBox::new(vec![-std::f64::consts::PI, -2.0], vec![std::f64::consts::PI, 2.0]).unwrap();
        let pend = estimate_delta(&model(ModelKind::Pendulum), &pb, 33).unwrap();
        // brute force: max over the same grid of the norm of [[0,1],[-cos q,0]]
        let brute = (0..33)
            .map(|k| {
                let q = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * k as f64 / 32.0;
                q.cos().abs().max(1.0)
            })
            .fold(0.0, f64::max);
        assert!((pend.delta - brute).abs() < 1e-14);
        assert!((pend.delta - 1.0).abs() < 1e-14);
        assert_eq!(pend.sample_count, 33 * 33);
    }

    #[test]
    fn delta_rejects_single_sample() {
        let b = PhaseBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(estimate_delta(&model(ModelKind::Harmonic), &b, 1).is_err());
    }
}
