//! Gaussian coherent states with Siegel-class widths, the Fourier–Bargmann
//! transform, its inverse, and phase-space quadrature grids.
//!
//! Conventions: `φ_z^Γ(x) = (πħ)^{-d/4} a_Γ exp(i/ħ (p·x − p·q/2) + i/(2ħ) Γ(x−q)·(x−q))`
//! with `a_Γ = det^{1/4} Im Γ`, inner products conjugate the second argument,
//! and `F_B[ψ](z) = (2πħ)^{-d/2} ⟨ψ, φ_z^Γ⟩`.

use num_complex::Complex64;
use rayon::prelude::*;
use statrs::function::erf::erfc;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::flow::{FlowState, PhasePoint};
use crate::linalg::{inverse, is_positive_definite, to_complex, CMat, RMat, I};
use crate::wave::{GridSpec, WaveFunction};

/// Truncated-mass threshold for grid adequacy.
pub const GRID_MASS_THRESHOLD: f64 = 1e-10;

/// Gaussian amplitudes below `exp(-WINDOW_CUT)` of the peak are skipped.
const WINDOW_CUT: f64 = 40.0;

/// Complex symmetric matrix with positive-definite imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct SiegelMatrix {
    entries: CMat,
}

impl SiegelMatrix {
    /// Symmetrizes `m` and checks `Im m > 0`.
    pub fn new(m: CMat) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::NotSiegel("matrix must be square and nonempty".into()));
        }
        if m.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NotSiegel("non-finite entries".into()));
        }
        let entries = (&m + m.transpose()) * Complex64::new(0.5, 0.0);
        let im = entries.map(|v| v.im);
        if !is_positive_definite(&im, 1e-12) {
            return Err(Error::NotSiegel("imaginary part is not positive definite".into()));
        }
        Ok(SiegelMatrix { entries })
    }

    /// `i·s·I`.
    pub fn scaled_identity(d: usize, s: f64) -> Result<Self> {
        SiegelMatrix::new(CMat::identity(d, d) * Complex64::new(0.0, s))
    }

    /// `i_i`, the standard width.
    pub fn standard(d: usize) -> Self {
        SiegelMatrix {
            entries: CMat::identity(d, d) * I,
        }
    }

    pub fn from_parts(re: &RMat, im: &RMat) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(Error::NotSiegel("real and imaginary parts differ in shape".into()));
        }
        SiegelMatrix::new(re.zip_map(im, |a, b| Complex64::new(a, b)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.entries
    }

    pub fn re(&self) -> RMat {
        self.entries.map(|v| v.re)
    }

    pub fn im(&self) -> RMat {
        self.entries.map(|v| v.im)
    }

    pub fn conj(&self) -> CMat {
        self.entries.map(|v| v.conj())
    }

    /// `a_Γ = det^{1/4} Im Γ` (principal root of a positive determinant).
    pub fn a_gamma(&self) -> f64 {
        self.im().determinant().powf(0.25)
    }

    /// Position covariance diagonal of `|φ^Γ|²` divided by `ħ`: `(Im Γ)^{-1}_ii / 2`.
    fn position_variance_diag(&self) -> Vec<f64> {
        let inv = self
            .im()
            .try_inverse()
            .expect("Siegel matrix has invertible imaginary part");
        (0..self.dim()).map(|i| 0.5 * inv[(i, i)]).collect()
    }

    /// Momentum variance diagonal of `|φ^Γ|²` in Fourier space divided by `ħ`.
    fn momentum_variance_diag(&self) -> Vec<f64> {
        let re = self.re();
        let im = self.im();
        let inv = im.clone().try_inverse().expect("invertible");
        let m = &im + &re * inv * &re;
        (0..self.dim()).map(|i| 0.5 * m[(i, i)]).collect()
    }
}

/// Evaluates `φ_z^Γ` on grids for a fixed `(Γ, ħ)`.
#[derive(Debug, Clone)]
pub struct CoherentEvaluator {
    d: usize,
    hbar: f64,
    norm: f64,
    half_gamma: Vec<Complex64>,
    radius: Vec<f64>,
    sigma: Vec<f64>,
}

impl CoherentEvaluator {
    pub fn new(gamma: &SiegelMatrix, hbar: f64) -> Self {
        let d = gamma.dim();
        let norm = (PI * hbar).powf(-(d as f64) / 4.0) * gamma.a_gamma();
        let half_gamma = (0..d * d)
            .map(|k| gamma.matrix()[(k / d, k % d)] / (2.0 * hbar))
            .collect();
        let var = gamma.position_variance_diag();
        let radius = var.iter().map(|v| (4.0 * WINDOW_CUT * hbar * v).sqrt()).collect();
        let sigma = var.iter().map(|v| (hbar * v).sqrt()).collect();
        CoherentEvaluator {
            d,
            hbar,
            norm,
            half_gamma,
            radius,
            sigma,
        }
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn value(&self, z: &PhasePoint, x: &[f64]) -> Complex64 {
        let d = self.d;
        let mut phase = 0.0;
        for i in 0..d {
            phase += z.p[i] * (x[i] - 0.5 * z.q[i]);
        }
        phase /= self.hbar;
        let mut quad = Complex64::new(0.0, 0.0);
        for i in 0..d {
            let di = x[i] - z.q[i];
            for j in 0..d {
                quad += self.half_gamma[i * d + j] * (di * (x[j] - z.q[j]));
            }
        }
        // exp(i·phase + i·quad)
        let re = -quad.im;
        let im = phase + quad.re;
        Complex64::from_polar(self.norm * re.exp(), im)
    }

    /// Per-axis probability mass of `|φ_z|²` outside the grid (union bound).
    pub fn mass_outside(&self, z: &PhasePoint, grid: &GridSpec) -> f64 {
        (0..self.d)
            .map(|a| {
                let s = std::f64::consts::SQRT_2 * self.sigma[a];
                0.5 * erfc((z.q[a] - grid.origin[a]) / s) + 0.5 * erfc((grid.upper(a) - z.q[a]) / s)
            })
            .sum()
    }

    /// Fraction of `|φ_z|²` inside the grid box.
    pub fn mass_inside(&self, z: &PhasePoint, grid: &GridSpec) -> f64 {
        (0..self.d)
            .map(|a| {
                let s = std::f64::consts::SQRT_2 * self.sigma[a];
                let out = 0.5 * erfc((z.q[a] - grid.origin[a]) / s) + 0.5 * erfc((grid.upper(a) - z.q[a]) / s);
                (1.0 - out).max(0.0)
            })
            .product()
    }

    /// Calls `f(flat, x, weight)` for grid points in the window of `z`,
    /// restricted to axis-0 rows `[row_lo, row_hi)`.
    fn for_each_in_window(
        &self,
        z: &PhasePoint,
        grid: &GridSpec,
        row_lo: usize,
        row_hi: usize,
        weights: &[Vec<f64>],
        mut f: impl FnMut(usize, &[f64], f64),
    ) {
        let d = self.d;
        let mut lo = vec![0; d];
        let mut hi = vec![0; d];
        for a in 0..d {
            let (l, h) = grid.window(a, z.q[a], self.radius[a]);
            lo[a] = l;
            hi[a] = h;
        }
        lo[0] = lo[0].max(row_lo);
        hi[0] = hi[0].min(row_hi);
        if (0..d).any(|a| lo[a] >= hi[a]) {
            return;
        }
        let strides = grid.strides();
        let mut idx = lo.clone();
        let mut x: Vec<f64> = (0..d).map(|a| grid.coord(a, idx[a])).collect();
        loop {
            let flat: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
            let w: f64 = (0..d).map(|a| weights[a][idx[a]]).product();
            f(flat, &x, w);
            // odometer, last axis fastest
            let mut a = d;
            loop {
                if a == 0 {
                    return;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < hi[a] {
                    x[a] = grid.coord(a, idx[a]);
                    break;
                }
                idx[a] = lo[a];
                x[a] = grid.coord(a, idx[a]);
            }
        }
    }

    /// `⟨ψ, φ_z⟩` by trapezoid quadrature over the window of `z`.
    pub fn overlap(&self, z: &PhasePoint, psi: &WaveFunction, weights: &[Vec<f64>]) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let n0 = psi.grid.shape[0];
        self.for_each_in_window(z, &psi.grid, 0, n0, weights, |flat, x, w| {
            acc += psi.values[flat] * self.value(z, x).conj() * w;
        });
        acc
    }

    /// Adds `coeff · φ_z` to the rows `[row_lo, row_hi)` held in `block`.
    pub fn accumulate_rows(
        &self,
        z: &PhasePoint,
        coeff: Complex64,
        grid: &GridSpec,
        row_lo: usize,
        row_hi: usize,
        block: &mut [Complex64],
        weights: &[Vec<f64>],
    ) {
        let offset = row_lo * grid.strides()[0];
        self.for_each_in_window(z, grid, row_lo, row_hi, weights, |flat, x, _| {
            block[flat - offset] += coeff * self.value(z, x);
        });
    }
}

fn axis_weights(grid: &GridSpec) -> Vec<Vec<f64>> {
    (0..grid.dim()).map(|a| grid.axis_weights(a)).collect()
}

/// Samples `φ_z^Γ` on `grid`, failing when more than `1e-10` of its mass is
/// lost to truncation or undersampling.
pub fn coherent_state(z: &PhasePoint, gamma: &SiegelMatrix, hbar: f64, grid: &GridSpec) -> Result<WaveFunction> {
    if !(hbar > 0.0) {
        return Err(Error::InvalidArgument("hbar must be positive".into()));
    }
    check_dims(z.dim(), gamma.dim(), grid.dim())?;
    let eval = CoherentEvaluator::new(gamma, hbar);
    let wave = WaveFunction::from_fn(grid.clone(), hbar, |x| eval.value(z, x));
    let truncated = (1.0 - wave.norm_squared()).abs().max(eval.mass_outside(z, grid));
    if truncated > GRID_MASS_THRESHOLD {
        return Err(Error::InadequateGrid {
            truncated,
            threshold: GRID_MASS_THRESHOLD,
        });
    }
    Ok(wave)
}

fn check_dims(z: usize, gamma: usize, grid: usize) -> Result<()> {
    if z != gamma || z != grid {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: point {z}, width {gamma}, grid {grid}"
        )));
    }
    Ok(())
}

/// Phase-space quadrature nodes on a cell-centred tensor lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub nodes: Vec<PhasePoint>,
    pub weights: Vec<f64>,
    /// Captured Fourier–Bargmann mass fraction.
    pub coverage: f64,
    pub coverage_target: f64,
    /// Lattice description over the `2d` axes `(q_1..q_d, p_1..p_d)`.
    pub center: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl PhaseGrid {
    /// Lattice with `2·half_counts[a]` cells of width `spacing[a]` per axis,
    /// nodes at cell centres shifted by `offset[a]` cells.
    pub fn lattice(center: &[f64], spacing: &[f64], half_counts: &[usize], offset: Option<&[f64]>) -> Self {
        let axes = center.len();
        let d = axes / 2;
        let counts: Vec<usize> = half_counts.iter().map(|m| 2 * m).collect();
        let total: usize = counts.iter().product();
        let weight: f64 = spacing.iter().product();
        let coords: Vec<Vec<f64>> = (0..axes)
            .map(|a| {
                let off = offset.map_or(0.0, |o| o[a]);
                let m = half_counts[a] as i64;
                (-m..m).map(|k| center[a] + (k as f64 + 0.5 + off) * spacing[a]).collect()
            })
            .collect();
        let mut nodes = Vec::with_capacity(total);
        let mut idx = vec![0usize; axes];
        for flat in 0..total {
            let mut rem = flat;
            for a in (0..axes).rev() {
                idx[a] = rem % counts[a];
                rem /= counts[a];
            }
            let x: Vec<f64> = (0..axes).map(|a| coords[a][idx[a]]).collect();
            nodes.push(PhasePoint {
                q: x[..d].to_vec(),
                p: x[d..].to_vec(),
            });
        }
        PhaseGrid {
            nodes,
            weights: vec![weight; total],
            coverage: 1.0,
            coverage_target: 0.0,
            center: center.to_vec(),
            spacing: spacing.to_vec(),
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn volume(&self) -> f64 {
        self.spacing.iter().zip(&self.counts).map(|(h, n)| h * *n as f64).product()
    }

    /// True when the node lies on the outermost layer of the lattice.
    pub fn on_boundary(&self, node: usize) -> bool {
        let mut rem = node;
        for a in (0..self.counts.len()).rev() {
            let k = rem % self.counts[a];
            rem /= self.counts[a];
            if k == 0 || k + 1 == self.counts[a] {
                return true;
            }
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureOptions {
    /// Required captured Fourier–Bargmann mass fraction, in `(0, 1)`.
    pub coverage_target: f64,
    /// Nodes per `√ħ` per axis.
    pub density: usize,
    /// Largest admissible half-width of the box on any axis.
    pub max_half_width: f64,
    /// Optional lattice shift in cell units, one entry per phase-space axis.
    pub offset: Option<Vec<f64>>,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        QuadratureOptions {
            coverage_target: 1.0 - 1e-14,
            density: 3,
            max_half_width: 50.0,
            offset: None,
        }
    }
}

/// Fourier–Bargmann coefficients at every node; fails when a node's coherent
/// state is truncated by `psi`'s grid beyond the threshold.
pub fn fb_transform(psi: &WaveFunction, gamma: &SiegelMatrix, zgrid: &PhaseGrid) -> Result<Vec<Complex64>> {
    check_dims(gamma.dim(), gamma.dim(), psi.grid.dim())?;
    let eval = CoherentEvaluator::new(gamma, psi.hbar);
    for z in &zgrid.nodes {
        let truncated = eval.mass_outside(z, &psi.grid);
        if truncated > GRID_MASS_THRESHOLD {
            return Err(Error::InadequateGrid {
                truncated,
                threshold: GRID_MASS_THRESHOLD,
            });
        }
    }
    Ok(fb_coefficients(psi, &eval, &zgrid.nodes))
}

fn fb_coefficients(psi: &WaveFunction, eval: &CoherentEvaluator, nodes: &[PhasePoint]) -> Vec<Complex64> {
    let d = psi.grid.dim() as f64;
    let scale = (2.0 * PI * psi.hbar).powf(-d / 2.0);
    let weights = axis_weights(&psi.grid);
    nodes
        .par_iter()
        .map(|z| eval.overlap(z, psi, &weights) * scale)
        .collect()
}

/// Output of [`fb_inverse`].
#[derive(Debug, Clone)]
pub struct Resynthesis {
    pub wave: WaveFunction,
    pub coverage: f64,
    /// Set when the grid's coverage is below its target.
    pub low_coverage: bool,
}

/// Resynthesizes `(2πħ)^{-d/2} Σ w F(z) φ_z^Γ` on `grid`.
pub fn fb_inverse(
    field: &[Complex64],
    zgrid: &PhaseGrid,
    gamma: &SiegelMatrix,
    grid: &GridSpec,
    hbar: f64,
) -> Result<Resynthesis> {
    if field.len() != zgrid.len() {
        return Err(Error::InvalidArgument("field and phase grid differ in length".into()));
    }
    check_dims(gamma.dim(), gamma.dim(), grid.dim())?;
    let low_coverage = zgrid.coverage < zgrid.coverage_target;
    if low_coverage {
        log::warn!(
            "phase grid coverage {:.3e} below target {:.3e}",
            1.0 - zgrid.coverage,
            1.0 - zgrid.coverage_target
        );
    }
    let eval = CoherentEvaluator::new(gamma, hbar);
    let scale = (2.0 * PI * hbar).powf(-(grid.dim() as f64) / 2.0);
    let wave = synthesize(grid, hbar, zgrid.len(), |k| {
        (&zgrid.nodes[k], &eval, field[k] * zgrid.weights[k] * scale)
    });
    Ok(Resynthesis {
        wave,
        coverage: zgrid.coverage,
        low_coverage,
    })
}

const ROWS_PER_BLOCK: usize = 8;

/// `Σ_k coeff_k φ_{z_k}` on `grid`. Each output point sums nodes in index
/// order, so the result does not depend on the worker count.
pub fn synthesize<'a, F>(grid: &GridSpec, hbar: f64, count: usize, node: F) -> WaveFunction
where
    F: Fn(usize) -> (&'a PhasePoint, &'a CoherentEvaluator, Complex64) + Sync,
{
    let mut out = WaveFunction::zeros(grid.clone(), hbar);
    let stride0 = grid.strides()[0];
    let weights = axis_weights(grid);
    let n0 = grid.shape[0];
    out.values
        .par_chunks_mut(ROWS_PER_BLOCK * stride0)
        .enumerate()
        .for_each(|(b, block)| {
            let lo = b * ROWS_PER_BLOCK;
            let hi = (lo + ROWS_PER_BLOCK).min(n0);
            for k in 0..count {
                let (z, eval, coeff) = node(k);
                if coeff == Complex64::new(0.0, 0.0) {
                    continue;
                }
                eval.accumulate_rows(z, coeff, grid, lo, hi, block, &weights);
            }
        });
    out
}

struct Moments {
    mean: Vec<f64>,
    var: Vec<f64>,
}

/// Position and momentum means/variances of `psi` (finite differences for
/// momenta), normalised by `‖ψ‖²`.
fn phase_space_moments(psi: &WaveFunction) -> Moments {
    let g = &psi.grid;
    let d = g.dim();
    let w = g.weights();
    let norm: f64 = psi.values.iter().zip(&w).map(|(v, w)| v.norm_sqr() * w).sum();
    let strides = g.strides();
    let mut mean = vec![0.0; 2 * d];
    let mut second = vec![0.0; 2 * d];
    let mut idx = vec![0; d];
    let hbar = psi.hbar;
    for flat in 0..g.len() {
        g.multi_index(flat, &mut idx);
        let v = psi.values[flat];
        let rho = v.norm_sqr() * w[flat] / norm;
        for a in 0..d {
            let x = g.coord(a, idx[a]);
            mean[a] += rho * x;
            second[a] += rho * x * x;
            let h = g.spacing[a];
            let fwd = if idx[a] + 1 < g.shape[a] { psi.values[flat + strides[a]] } else { Complex64::new(0.0, 0.0) };
            let bwd = if idx[a] > 0 { psi.values[flat - strides[a]] } else { Complex64::new(0.0, 0.0) };
            let dpsi = (fwd - bwd) / (2.0 * h);
            // ⟨p⟩ = ħ Im ∫ conj(ψ) ∂ψ, ⟨p²⟩ = ħ² ∫ |∂ψ|²
            mean[d + a] += hbar * (v.conj() * dpsi).im * w[flat] / norm;
            second[d + a] += hbar * hbar * dpsi.norm_sqr() * w[flat] / norm;
        }
    }
    let var = mean.iter().zip(&second).map(|(m, s)| (s - m * m).max(0.0)).collect();
    Moments { mean, var }
}

/// Builds a centred tensor lattice whose box captures at least
/// `coverage_target` of the Fourier–Bargmann mass of `psi0`; node spacing is
/// `√ħ / density` on every axis.
pub fn build_quadrature(psi0: &WaveFunction, gamma: &SiegelMatrix, opts: &QuadratureOptions) -> Result<PhaseGrid> {
    if !(opts.coverage_target > 0.0 && opts.coverage_target < 1.0) {
        return Err(Error::InvalidArgument("coverage target must lie in (0, 1)".into()));
    }
    if opts.density == 0 {
        return Err(Error::InvalidArgument("density must be positive".into()));
    }
    let d = psi0.grid.dim();
    check_dims(d, gamma.dim(), d)?;
    let axes = 2 * d;
    if let Some(off) = &opts.offset {
        if off.len() != axes {
            return Err(Error::InvalidArgument("lattice offset needs one entry per phase-space axis".into()));
        }
    }
    let hbar = psi0.hbar;
    let unit = hbar.sqrt();
    let h = unit / opts.density as f64;
    let moments = phase_space_moments(psi0);
    let mut widths = gamma.position_variance_diag();
    widths.extend(gamma.momentum_variance_diag());
    let mut half_units: Vec<usize> = (0..axes)
        .map(|a| {
            let sigma = (moments.var[a] + hbar * widths[a]).sqrt();
            ((4.0 * sigma / unit).ceil() as usize).max(2)
        })
        .collect();
    let eval = CoherentEvaluator::new(gamma, hbar);
    let spacing = vec![h; axes];
    let tolerance = 1.0 - opts.coverage_target;
    loop {
        if half_units.iter().any(|&j| j as f64 * unit > opts.max_half_width) {
            return Err(Error::QuadratureRadius {
                max_half_width: opts.max_half_width,
            });
        }
        let outer_units: Vec<usize> = half_units.iter().map(|&j| j + (j / 2).max(3)).collect();
        let outer_half: Vec<usize> = outer_units.iter().map(|j| j * opts.density).collect();
        let outer = PhaseGrid::lattice(&moments.mean, &spacing, &outer_half, opts.offset.as_deref());
        let coeffs = fb_coefficients(psi0, &eval, &outer.nodes);
        let inner_half: Vec<usize> = half_units.iter().map(|j| j * opts.density).collect();
        let mut inside = 0.0;
        let mut tail = 0.0;
        let mut idx = vec![0usize; axes];
        for (k, c) in coeffs.iter().enumerate() {
            let mut rem = k;
            for a in (0..axes).rev() {
                idx[a] = rem % outer.counts[a];
                rem /= outer.counts[a];
            }
            let is_inner = (0..axes).all(|a| {
                let m = idx[a] as i64 - outer_half[a] as i64;
                m >= -(inner_half[a] as i64) && m < inner_half[a] as i64
            });
            if is_inner {
                inside += c.norm_sqr();
            } else {
                tail += c.norm_sqr();
            }
        }
        let total = inside + tail;
        if total == 0.0 {
            return Err(Error::InvalidArgument("state has no Fourier–Bargmann mass".into()));
        }
        let missing = tail / total;
        if missing <= tolerance {
            let mut grid = PhaseGrid::lattice(&moments.mean, &spacing, &inner_half, opts.offset.as_deref());
            grid.coverage = 1.0 - missing;
            grid.coverage_target = opts.coverage_target;
            return Ok(grid);
        }
        for j in half_units.iter_mut() {
            *j += (*j / 4).max(1);
        }
    }
}

/// `Γ_t = (C + Γ₀D)(A + Γ₀B)^{-1}`, symmetrized.
pub fn gamma_update(state: &FlowState, gamma0: &SiegelMatrix) -> Result<SiegelMatrix> {
    let g = gamma0.matrix();
    let num = to_complex(&state.c) + g * to_complex(&state.d);
    let den = to_complex(&state.a) + g * to_complex(&state.b);
    let updated = num * inverse(&den)?;
    SiegelMatrix::new(updated)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowState;

    fn grid1(lo: f64, hi: f64, n: usize) -> GridSpec {
        GridSpec::uniform(&[lo], &[hi], n).unwrap()
    }

    #[test]
    fn standard_gaussian() {
        let g = grid1(-12.0, 12.0, 801);
        let psi = coherent_state(&PhasePoint::origin(1), &SiegelMatrix::standard(1), 1.0, &g).unwrap();
        for (k, v) in psi.values.iter().enumerate() {
            let x = g.coord(0, k);
            let expected = PI.powf(-0.25) * (-x * x / 2.0).exp();
            assert!((v - Complex64::new(expected, 0.0)).norm() < 1e-15);
        }
        assert!((psi.l2_norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn modulus_independent_of_momentum() {
        let g = grid1(-4.0, 5.0, 901);
        let hbar = 0.1;
        let z = PhasePoint::new(vec![0.7], vec![-1.3]);
        let psi = coherent_state(&z, &SiegelMatrix::standard(1), hbar, &g).unwrap();
        for (k, v) in psi.values.iter().enumerate() {
            let x = g.coord(0, k);
            let expected = (PI * hbar).powf(-0.25) * (-(x - 0.7) * (x - 0.7) / (2.0 * hbar)).exp();
            assert!((v.norm() - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn squeezed_width() {
        let g = grid1(-10.0, 10.0, 1001);
        let gamma = SiegelMatrix::scaled_identity(1, 2.0).unwrap();
        assert!((gamma.a_gamma() - 2f64.powf(0.25)).abs() < 1e-15);
        let psi = coherent_state(&PhasePoint::origin(1), &gamma, 1.0, &g).unwrap();
        let x = g.coord(0, 600);
        let expected = 2f64.powf(0.25) * PI.powf(-0.25) * (-x * x).exp();
        assert!((psi.values[600].re - expected).abs() < 1e-15);
        assert!((psi.l2_norm() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let g = grid1(-1.0, 1.0, 201);
        let err = coherent_state(&PhasePoint::origin(1), &SiegelMatrix::standard(1), 1.0, &g).unwrap_err();
        assert!(matches!(err, Error::InadequateGrid { .. }));
    }

    #[test]
    fn siegel_rejects_indefinite_imaginary_part() {
        let m = CMat::from_row_slice(2, 2, &[I, Complex64::new(0.3, 2.0), Complex64::new(0.3, 2.0), I]);
        assert!(SiegelMatrix::new(m).is_err());
        let s = SiegelMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[I, Complex64::new(0.2, 0.1), Complex64::new(0.4, 0.3), I * 2.0],
        ))
        .unwrap();
        assert_eq!(s.matrix()[(0, 1)], s.matrix()[(1, 0)]);
    }

    #[test]
    fn gamma_update_examples() {
        let z = PhasePoint::origin(1);
        let i_i = SiegelMatrix::standard(1);
        // identity map
        let g = gamma_update(&FlowState::initial(0.0, &z), &i_i).unwrap();
        assert_eq!(g.matrix()[(0, 0)], I);
        // harmonic rotation by t: fixed point i_i
        for t in [0.3, 1.0, 2.5] {
            let (s, c) = f64::sin_cos(t);
            let f = RMat::from_row_slice(2, 2, &[c, s, -s, c]);
            let g = gamma_update(&FlowState::from_stability(t, z.clone(), &f), &i_i).unwrap();
            assert!((g.matrix()[(0, 0)] - I).norm() < 1e-14);
        }
        // free flow at t = 1: i / (1 + i) = (1 + i) / 2
        let f = RMat::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let g = gamma_update(&FlowState::from_stability(1.0, z, &f), &i_i).unwrap();
        assert!((g.matrix()[(0, 0)] - Complex64::new(0.5, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn lattice_refinement_doubles_nodes_per_axis() {
        let coarse = PhaseGrid::lattice(&[0.0, 1.0], &[0.2, 0.2], &[5, 5], None);
        let fine = PhaseGrid::lattice(&[0.0, 1.0], &[0.1, 0.1], &[10, 10], None);
        assert_eq!(coarse.counts, vec![10, 10]);
        assert_eq!(fine.counts, vec![20, 20]);
        let total: f64 = coarse.weights.iter().sum();
        assert!((total - coarse.volume()).abs() < 1e-12);
        assert!((fine.spacing[0] - coarse.spacing[0] / 2.0).abs() < 1e-15);
    }
}
