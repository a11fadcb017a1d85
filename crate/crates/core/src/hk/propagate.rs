use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use super::prefactor::HKConfig;
use crate::coherent::{build_quadrature, fb_transform, synthesize, CoherentEvaluator, SiegelMatrix};
use crate::error::{Error, Result};
use crate::flow::{FlowStepper, PhasePoint};
use crate::hamiltonians::Hamiltonian;
use crate::linalg::SqrtBranch;
use crate::wave::{GridSpec, WaveFunction};

/// Halvings allowed when a step rotates the prefactor radicand too far.
const MAX_REFINE_DEPTH: u32 = 20;

/// Output of [`hk_propagate_times`], one entry per requested time.
#[derive(Debug, Clone)]
pub struct HKRun {
    pub times: Vec<f64>,
    pub waves: Vec<WaveFunction>,
    /// Weighted share of the evolved coherent-state mass inside the output grid.
    pub ensemble_coverage: Vec<f64>,
    /// Captured Fourier–Bargmann mass of the initial state.
    pub quadrature_coverage: f64,
    pub node_count: usize,
}

/// Evolves `psi0` from time 0 to `t` on its own grid.
pub fn hk_propagate<H: Hamiltonian + ?Sized>(model: &H, psi0: &WaveFunction, t: f64, cfg: &HKConfig) -> Result<WaveFunction> {
    let mut run = hk_propagate_times(model, psi0, 0.0, &[t], cfg, &psi0.grid)?;
    Ok(run.waves.remove(0))
}

struct NodeSample {
    z: PhasePoint,
    amplitude: Complex64,
    theta: Option<SiegelMatrix>,
}

struct NodeTracker<'a, H: Hamiltonian + ?Sized> {
    stepper: FlowStepper<'a, H>,
    branch: SqrtBranch,
    cfg: &'a HKConfig,
}

impl<'a, H: Hamiltonian + ?Sized> NodeTracker<'a, H> {
    fn step(&mut self, dt: f64, depth: u32) -> Result<()> {
        let (t, y) = self.stepper.raw();
        let saved = y.to_vec();
        self.stepper.step(dt)?;
        let d = self.cfg.dim();
        let r = self.cfg.radicand_from_stability(&self.stepper.raw().1[2 * d + 2..])?;
        match self.branch.advance(r) {
            Ok(()) => Ok(()),
            Err(rotation) if depth >= MAX_REFINE_DEPTH => Err(Error::BranchAmbiguity {
                t: self.stepper.time(),
                rotation,
            }),
            Err(_) => {
                self.stepper.restore(t, &saved);
                self.step(0.5 * dt, depth + 1)?;
                self.step(0.5 * dt, depth + 1)
            }
        }
    }

    fn advance_to(&mut self, target: f64) -> Result<()> {
        let span = target - self.stepper.time();
        let n = (span * self.cfg.steps_per_unit as f64 - 1e-9).ceil().max(0.0) as usize;
        if n == 0 {
            return Ok(());
        }
        let dt = span / n as f64;
        for _ in 0..n {
            self.step(dt, 0)?;
        }
        Ok(())
    }
}

fn evolve_node<H: Hamiltonian + ?Sized>(
    model: &H,
    z0: &PhasePoint,
    t0: f64,
    times: &[f64],
    cfg: &HKConfig,
    hbar: f64,
) -> Result<Vec<NodeSample>> {
    let mut tracker = NodeTracker {
        stepper: FlowStepper::new(model, z0, t0),
        branch: cfg.start_branch(),
        cfg,
    };
    let pq0: f64 = z0.p.iter().zip(&z0.q).map(|(p, q)| p * q).sum();
    let thawed = matches!(cfg.theta_mode, super::ThetaMode::Thawed);
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        tracker.advance_to(t)?;
        let state = tracker.stepper.state();
        let (r, theta) = cfg.radicand(&state)?;
        let pq: f64 = state.z.p.iter().zip(&state.z.q).map(|(p, q)| p * q).sum();
        let delta = state.action + 0.5 * (pq0 - pq);
        let phase = delta / hbar - state.subprincipal_integral;
        let amplitude = cfg.synthesis_amplitude(&tracker.branch, r, &theta) * Complex64::from_polar(1.0, phase);
        out.push(NodeSample {
            z: state.z,
            amplitude,
            theta: thawed.then_some(theta),
        });
    }
    Ok(out)
}

/// Evolves `psi0` from `t0` to every entry of `times` (each `≥ t0`) and
/// samples the results on `out_grid`.
pub fn hk_propagate_times<H: Hamiltonian + ?Sized>(
    model: &H,
    psi0: &WaveFunction,
    t0: f64,
    times: &[f64],
    cfg: &HKConfig,
    out_grid: &GridSpec,
) -> Result<HKRun> {
    let d = model.dim();
    if psi0.grid.dim() != d || cfg.dim() != d || out_grid.dim() != d {
        return Err(Error::InvalidArgument("model, state, configuration and grid must share the dimension".into()));
    }
    if times.iter().any(|t| !t.is_finite() || *t < t0) {
        return Err(Error::InvalidArgument("times must be finite and not before the initial time".into()));
    }
    let hbar = psi0.hbar;
    let qgrid = build_quadrature(psi0, &cfg.gamma, &cfg.quadrature)?;
    let coeffs = fb_transform(psi0, &cfg.gamma, &qgrid)?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let sorted: Vec<f64> = order.iter().map(|&k| times[k]).collect();
    let evolved: Vec<Vec<NodeSample>> = qgrid
        .nodes
        .par_iter()
        .map(|z| evolve_node(model, z, t0, &sorted, cfg, hbar))
        .collect::<Result<_>>()?;

    let scale = (2.0 * PI * hbar).powf(-(d as f64) / 2.0);
    let weighted: Vec<Complex64> = coeffs
        .iter()
        .zip(&qgrid.weights)
        .map(|(c, w)| c * (w * scale))
        .collect();
    let mass: Vec<f64> = coeffs.iter().zip(&qgrid.weights).map(|(c, w)| c.norm_sqr() * w).collect();
    let total_mass: f64 = mass.iter().sum();
    let shared = CoherentEvaluator::new(cfg.theta0(), hbar);

    let mut waves = vec![None; times.len()];
    let mut coverage = vec![0.0; times.len()];
    for (slot, &k) in order.iter().enumerate() {
        let per_node: Vec<CoherentEvaluator> = evolved
            .iter()
            .filter_map(|s| s[slot].theta.as_ref().map(|th| CoherentEvaluator::new(th, hbar)))
            .collect();
        let eval_of = |n: usize| if per_node.is_empty() { &shared } else { &per_node[n] };
        let wave = synthesize(out_grid, hbar, evolved.len(), |n| {
            let s = &evolved[n][slot];
            (&s.z, eval_of(n), weighted[n] * s.amplitude)
        });
        let inside: f64 = evolved
            .iter()
            .enumerate()
            .map(|(n, s)| mass[n] * eval_of(n).mass_inside(&s[slot].z, out_grid))
            .sum();
        coverage[k] = if total_mass > 0.0 { inside / total_mass } else { 1.0 };
        waves[k] = Some(wave);
    }
    Ok(HKRun {
        times: times.to_vec(),
        waves: waves.into_iter().map(|w| w.expect("every time synthesized")).collect(),
        ensemble_coverage: coverage,
        quadrature_coverage: qgrid.coverage,
        node_count: qgrid.len(),
    })
}
