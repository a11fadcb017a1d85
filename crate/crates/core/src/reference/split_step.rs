use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::hamiltonians::{Hamiltonian, SplitForm};
use crate::wave::WaveFunction;

/// Largest admissible mass share in the outer frequency band or next to the
/// box edges.
pub const SPECTRAL_THRESHOLD: f64 = 1e-10;

struct SplitStepper {
    hbar: f64,
    shape: Vec<usize>,
    strides: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    high_band: Vec<bool>,
    edge: Vec<bool>,
    line: Vec<Complex64>,
}

fn frequency_index(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

impl SplitStepper {
    fn new(split: &dyn SplitForm, psi: &WaveFunction) -> Self {
        let g = &psi.grid;
        let d = g.dim();
        let shape = g.shape.clone();
        let strides = g.strides();
        let mut planner = FftPlanner::new();
        let forward = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = shape.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        let mut kinetic = Vec::with_capacity(g.len());
        let mut potential = Vec::with_capacity(g.len());
        let mut high_band = Vec::with_capacity(g.len());
        let mut edge = Vec::with_capacity(g.len());
        let mut idx = vec![0; d];
        let mut xi = vec![0.0; d];
        for flat in 0..g.len() {
            g.multi_index(flat, &mut idx);
            let mut high = false;
            let mut near_edge = false;
            for a in 0..d {
                let n = shape[a];
                let k = frequency_index(idx[a], n);
                let period = n as f64 * g.spacing[a];
                xi[a] = 2.0 * PI * psi.hbar * k as f64 / period;
                high |= k.unsigned_abs() as f64 > 0.4 * n as f64;
                let m = (n / 20).max(1);
                near_edge |= idx[a] < m || idx[a] >= n - m;
            }
            kinetic.push(split.kinetic(&xi));
            potential.push(split.potential(&g.point(flat)));
            high_band.push(high);
            edge.push(near_edge);
        }
        let longest = shape.iter().cloned().max().unwrap_or(0);
        SplitStepper {
            hbar: psi.hbar,
            shape,
            strides,
            forward,
            inverse,
            kinetic,
            potential,
            high_band,
            edge,
            line: vec![Complex64::new(0.0, 0.0); longest],
        }
    }

    fn transform(&mut self, values: &mut [Complex64], inverse: bool) {
        let d = self.shape.len();
        for a in 0..d {
            let n = self.shape[a];
            let stride = self.strides[a];
            let plan = if inverse { &self.inverse[a] } else { &self.forward[a] };
            let total = values.len();
            for start in 0..total {
                // visit each line once, from its first element
                if (start / stride) % n != 0 {
                    continue;
                }
                for k in 0..n {
                    self.line[k] = values[start + k * stride];
                }
                plan.process(&mut self.line[..n]);
                for k in 0..n {
                    values[start + k * stride] = self.line[k];
                }
            }
        }
        if inverse {
            let scale = 1.0 / values.len() as f64;
            values.iter_mut().for_each(|v| *v *= scale);
        }
    }

    fn share(values: &[Complex64], mask: &[bool]) -> f64 {
        let total: f64 = values.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let part: f64 = values.iter().zip(mask).filter(|(_, m)| **m).map(|(v, _)| v.norm_sqr()).sum();
        part / total
    }

    fn check_edges(&self, values: &[Complex64]) -> Result<()> {
        let edge = Self::share(values, &self.edge);
        if edge > SPECTRAL_THRESHOLD {
            return Err(Error::BoundaryHit {
                edge,
                threshold: SPECTRAL_THRESHOLD,
            });
        }
        Ok(())
    }

    fn run(&mut self, values: &mut [Complex64], span: f64, steps: usize) -> Result<()> {
        let dt = span / steps as f64;
        let half_v: Vec<Complex64> = self
            .potential
            .iter()
            .map(|v| Complex64::from_polar(1.0, -v * dt / (2.0 * self.hbar)))
            .collect();
        let kin: Vec<Complex64> = self
            .kinetic
            .iter()
            .map(|t| Complex64::from_polar(1.0, -t * dt / self.hbar))
            .collect();
        for _ in 0..steps {
            values.iter_mut().zip(&half_v).for_each(|(v, p)| *v *= p);
            self.transform(values, false);
            let tail = Self::share(values, &self.high_band);
            if tail > SPECTRAL_THRESHOLD {
                return Err(Error::Aliasing {
                    tail,
                    threshold: SPECTRAL_THRESHOLD,
                });
            }
            values.iter_mut().zip(&kin).for_each(|(v, p)| *v *= p);
            self.transform(values, true);
            values.iter_mut().zip(&half_v).for_each(|(v, p)| *v *= p);
            self.check_edges(values)?;
        }
        Ok(())
    }
}

/// Strang splitting `e^{-iV dt/2ħ} e^{-iT dt/ħ} e^{-iV dt/2ħ}` with `steps`
/// equal steps on the periodic extension of `psi0`'s grid.
pub fn split_step_propagate<H: Hamiltonian + ?Sized>(
    model: &H,
    psi0: &WaveFunction,
    t: f64,
    steps: usize,
) -> Result<WaveFunction> {
    let split = model.split_form().ok_or(Error::MissingSplitForm)?;
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    let mut stepper = SplitStepper::new(split, psi0);
    let mut out = psi0.clone();
    stepper.check_edges(&out.values)?;
    if t == 0.0 {
        return Ok(out);
    }
    stepper.run(&mut out.values, t, steps)?;
    Ok(out)
}

/// Evolves to each of the nondecreasing `times` (from 0) using
/// `ceil(Δt · steps_per_unit)` steps per segment.
pub fn split_step_propagate_times<H: Hamiltonian + ?Sized>(
    model: &H,
    psi0: &WaveFunction,
    times: &[f64],
    steps_per_unit: usize,
) -> Result<Vec<WaveFunction>> {
    let split = model.split_form().ok_or(Error::MissingSplitForm)?;
    if steps_per_unit == 0 {
        return Err(Error::InvalidArgument("steps per unit must be positive".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidArgument("times must be nonnegative and nondecreasing".into()));
    }
    let mut stepper = SplitStepper::new(split, psi0);
    let mut current = psi0.clone();
    stepper.check_edges(&current.values)?;
    let mut now = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let span = t - now;
        let steps = (span * steps_per_unit as f64 - 1e-9).ceil().max(0.0) as usize;
        if steps > 0 {
            stepper.run(&mut current.values, span, steps)?;
        }
        now = t;
        out.push(current.clone());
    }
    Ok(out)
}
