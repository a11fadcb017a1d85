use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::coherent::{coherent_state, CoherentEvaluator, PhaseGrid, SiegelMatrix, GRID_MASS_THRESHOLD};
use crate::error::{Error, Result};
use crate::flow::PhasePoint;
use crate::wave::{GridSpec, WaveFunction};

/// Samples `⟨Uφ_X, φ_Y⟩` on `X × Y`, row-major in `X`.
#[derive(Debug, Clone)]
pub struct KernelSamples {
    pub x_nodes: Vec<PhasePoint>,
    pub y_nodes: Vec<PhasePoint>,
    pub values: Vec<Complex64>,
    pub hbar: f64,
}

impl KernelSamples {
    fn scale(&self) -> f64 {
        let d = self.x_nodes.first().map_or(1, |z| z.dim()) as f64;
        (2.0 * PI * self.hbar).powf(-d)
    }

    /// `K̃(X_i, Y_j) = (2πħ)^{-d} ⟨Uφ_{X_i}, φ_{Y_j}⟩`.
    pub fn ktilde(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.y_nodes.len() + j] * self.scale()
    }

    /// `|⟨Uφ_X, φ_Y⟩|`, the input of [`schur_norm_bound`].
    pub fn abs_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

/// Applies `apply` to `φ_X^Γ` for every `X` and projects onto every `φ_Y^Γ`.
pub fn fb_kernel_samples<F>(
    apply: F,
    x_nodes: &[PhasePoint],
    y_nodes: &[PhasePoint],
    gamma: &SiegelMatrix,
    grid: &GridSpec,
    hbar: f64,
) -> Result<KernelSamples>
where
    F: Fn(&WaveFunction) -> Result<WaveFunction>,
{
    let eval = CoherentEvaluator::new(gamma, hbar);
    for y in y_nodes {
        let truncated = eval.mass_outside(y, grid);
        if truncated > GRID_MASS_THRESHOLD {
            return Err(Error::InadequateGrid {
                truncated,
                threshold: GRID_MASS_THRESHOLD,
            });
        }
    }
    let weights: Vec<Vec<f64>> = (0..grid.dim()).map(|a| grid.axis_weights(a)).collect();
    let mut values = Vec::with_capacity(x_nodes.len() * y_nodes.len());
    for x in x_nodes {
        let phi = coherent_state(x, gamma, hbar, grid)?;
        let u = apply(&phi)?;
        if u.grid != *grid {
            return Err(Error::InvalidArgument("operator must return a state on the input grid".into()));
        }
        let row: Vec<Complex64> = y_nodes.par_iter().map(|y| eval.overlap(y, &u, &weights)).collect();
        values.extend(row);
    }
    Ok(KernelSamples {
        x_nodes: x_nodes.to_vec(),
        y_nodes: y_nodes.to_vec(),
        values,
        hbar,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayBin {
    /// Off-graph distance bounds in units of `√ħ`.
    pub lower: f64,
    pub upper: f64,
    pub max_abs_ktilde: f64,
    /// `Σ |K̃|²` over the bin's samples.
    pub mass: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeakRecord {
    pub x: PhasePoint,
    /// `φᵗ(X)`.
    pub image: PhasePoint,
    pub peak_y: PhasePoint,
    /// `|φᵗ(X) − Y_peak| / √ħ`.
    pub peak_distance: f64,
    pub peak_value: f64,
}

/// Binned off-graph decay of `|K̃|`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub bin_width: f64,
    pub bins: Vec<DecayBin>,
    pub peaks: Vec<PeakRecord>,
    pub peak: f64,
}

impl DecayReport {
    /// Bins `|K̃(X, Y)|` by `|φᵗ(X) − Y| / √ħ` with bins of `bin_width`.
    pub fn from_samples(samples: &KernelSamples, images: &[PhasePoint], bin_width: f64) -> Result<Self> {
        if images.len() != samples.x_nodes.len() {
            return Err(Error::InvalidArgument("one flow image per X node is required".into()));
        }
        if !(bin_width > 0.0) {
            return Err(Error::InvalidArgument("bin width must be positive".into()));
        }
        let root = samples.hbar.sqrt();
        let ny = samples.y_nodes.len();
        let mut bins: Vec<DecayBin> = Vec::new();
        let mut peaks = Vec::with_capacity(images.len());
        let mut peak = 0.0f64;
        for (i, image) in images.iter().enumerate() {
            let mut best = (0usize, -1.0f64);
            for j in 0..ny {
                let dist = image.distance(&samples.y_nodes[j]) / root;
                let k = samples.ktilde(i, j).norm();
                let b = (dist / bin_width).floor() as usize;
                while bins.len() <= b {
                    let n = bins.len() as f64;
                    bins.push(DecayBin {
                        lower: n * bin_width,
                        upper: (n + 1.0) * bin_width,
                        max_abs_ktilde: 0.0,
                        mass: 0.0,
                        count: 0,
                    });
                }
                let bin = &mut bins[b];
                bin.max_abs_ktilde = bin.max_abs_ktilde.max(k);
                bin.mass += k * k;
                bin.count += 1;
                if k > best.1 {
                    best = (j, k);
                }
            }
            peak = peak.max(best.1.max(0.0));
            if ny > 0 {
                let y = &samples.y_nodes[best.0];
                peaks.push(PeakRecord {
                    x: samples.x_nodes[i].clone(),
                    image: image.clone(),
                    peak_y: y.clone(),
                    peak_distance: image.distance(y) / root,
                    peak_value: best.1,
                });
            }
        }
        Ok(DecayReport {
            bin_width,
            bins,
            peaks,
            peak,
        })
    }

    /// True when the per-bin maxima never increase by more than
    /// `rel_tol · peak` from one nonempty bin to the next.
    pub fn is_monotone(&self, rel_tol: f64) -> bool {
        let mut prev = f64::INFINITY;
        for b in self.bins.iter().filter(|b| b.count > 0) {
            if b.max_abs_ktilde > prev + rel_tol * self.peak {
                return false;
            }
            prev = b.max_abs_ktilde;
        }
        true
    }

    /// Largest `|K̃|` in bins starting at or beyond `distance` (units of `√ħ`).
    pub fn max_beyond(&self, distance: f64) -> f64 {
        self.bins
            .iter()
            .filter(|b| b.lower >= distance - 1e-12)
            .map(|b| b.max_abs_ktilde)
            .fold(0.0, f64::max)
    }

    /// Share of `Σ|K̃|²` in bins starting at or beyond `distance`.
    pub fn mass_fraction_beyond(&self, distance: f64) -> f64 {
        let total: f64 = self.bins.iter().map(|b| b.mass).sum();
        if total == 0.0 {
            return 0.0;
        }
        let tail: f64 = self
            .bins
            .iter()
            .filter(|b| b.lower >= distance - 1e-12)
            .map(|b| b.mass)
            .sum();
        tail / total
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "bin_lower,bin_upper,max_abs_ktilde,count")?;
        for b in &self.bins {
            writeln!(out, "{:.6},{:.6},{:.17e},{}", b.lower, b.upper, b.max_abs_ktilde, b.count)?;
        }
        Ok(())
    }
}

/// Samples the kernel of `apply` and bins it around the graph of `flow_map`.
#[allow(clippy::too_many_arguments)]
pub fn fb_kernel_diagnostic<F, M>(
    apply: F,
    flow_map: M,
    x_nodes: &[PhasePoint],
    y_nodes: &[PhasePoint],
    gamma: &SiegelMatrix,
    grid: &GridSpec,
    hbar: f64,
    bin_width: f64,
) -> Result<DecayReport>
where
    F: Fn(&WaveFunction) -> Result<WaveFunction>,
    M: Fn(&PhasePoint) -> Result<PhasePoint>,
{
    let samples = fb_kernel_samples(apply, x_nodes, y_nodes, gamma, grid, hbar)?;
    let images = x_nodes.iter().map(flow_map).collect::<Result<Vec<_>>>()?;
    DecayReport::from_samples(&samples, &images, bin_width)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchurBound {
    pub bound: f64,
    pub row_sup: f64,
    pub column_sup: f64,
    /// Largest boundary sample over the peak, on the row or column that
    /// attains the bound.
    pub boundary_ratio: f64,
    pub boundary_warning: bool,
}

/// `(2πħ)^{-d} max(sup_X Σ_Y w_Y |k|, sup_Y Σ_X w_X |k|)` for
/// `k(X, Y) = ⟨Uφ_X, φ_Y⟩` sampled on two lattices, row-major in `X`.
pub fn schur_norm_bound(abs_kernel: &[f64], x_grid: &PhaseGrid, y_grid: &PhaseGrid, hbar: f64) -> Result<SchurBound> {
    let nx = x_grid.len();
    let ny = y_grid.len();
    if abs_kernel.len() != nx * ny || nx == 0 || ny == 0 {
        return Err(Error::InvalidArgument("kernel samples must match the X and Y grids".into()));
    }
    let d = x_grid.nodes[0].dim() as f64;
    let scale = (2.0 * PI * hbar).powf(-d);
    let rows: Vec<f64> = (0..nx)
        .map(|i| (0..ny).map(|j| abs_kernel[i * ny + j] * y_grid.weights[j]).sum())
        .collect();
    let cols: Vec<f64> = (0..ny)
        .map(|j| (0..nx).map(|i| abs_kernel[i * ny + j] * x_grid.weights[i]).sum())
        .collect();
    let argmax = |v: &[f64]| (0..v.len()).fold(0, |best, k| if v[k] > v[best] { k } else { best });
    let (ri, cj) = (argmax(&rows), argmax(&cols));
    let row_sup = rows[ri] * scale;
    let column_sup = cols[cj] * scale;
    let boundary_ratio = if row_sup >= column_sup {
        let line: Vec<f64> = (0..ny).map(|j| abs_kernel[ri * ny + j]).collect();
        edge_ratio(&line, |j| y_grid.on_boundary(j))
    } else {
        let line: Vec<f64> = (0..nx).map(|i| abs_kernel[i * ny + cj]).collect();
        edge_ratio(&line, |i| x_grid.on_boundary(i))
    };
    let boundary_warning = boundary_ratio > 1e-3;
    if boundary_warning {
        log::warn!("kernel support not covered: boundary/peak ratio {boundary_ratio:.3e}");
    }
    Ok(SchurBound {
        bound: row_sup.max(column_sup),
        row_sup,
        column_sup,
        boundary_ratio,
        boundary_warning,
    })
}

fn edge_ratio(line: &[f64], on_boundary: impl Fn(usize) -> bool) -> f64 {
    let peak = line.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return 0.0;
    }
    let edge = (0..line.len())
        .filter(|&k| on_boundary(k))
        .map(|k| line[k])
        .fold(0.0, f64::max);
    edge / peak
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(c: [f64; 2], h: f64, m: usize) -> PhaseGrid {
        PhaseGrid::lattice(&c, &[h, h], &[m, m], None)
    }

    #[test]
    fn gaussian_kernel_schur_bound_is_two() {
        let hbar: f64 = 0.05;
        let r = hbar.sqrt();
        let xs = lattice([0.0, 0.0], r / 2.0, 4);
        let ys = lattice([0.0, 0.0], r / 4.0, 64);
        let k: Vec<f64> = xs
            .nodes
            .iter()
            .flat_map(|x| ys.nodes.iter().map(move |y| (-x.distance(y).powi(2) / (4.0 * hbar)).exp()))
            .collect();
        let s = schur_norm_bound(&k, &xs, &ys, hbar).unwrap();
        assert!((s.bound - 2.0).abs() < 1e-6, "{}", s.bound);
        assert!(!s.boundary_warning);
        let zero = schur_norm_bound(&vec![0.0; k.len()], &xs, &ys, hbar).unwrap();
        assert_eq!(zero.bound, 0.0);
    }

    #[test]
    fn truncated_support_warns() {
        let hbar: f64 = 0.05;
        let r = hbar.sqrt();
        let xs = lattice([0.0, 0.0], r, 2);
        let ys = lattice([0.0, 0.0], r / 2.0, 4);
        let k: Vec<f64> = xs
            .nodes
            .iter()
            .flat_map(|x| ys.nodes.iter().map(move |y| (-x.distance(y).powi(2) / (4.0 * hbar)).exp()))
            .collect();
        assert!(schur_norm_bound(&k, &xs, &ys, hbar).unwrap().boundary_warning);
    }

    #[test]
    fn identity_kernel_profile() {
        let hbar = 0.1;
        let gamma = SiegelMatrix::standard(1);
        let grid = GridSpec::uniform(&[-6.0], &[6.0], 801).unwrap();
        let xs = vec![PhasePoint::new(vec![0.3], vec![-0.2])];
        let ys: Vec<PhasePoint> = (0..9)
            .map(|k| PhasePoint::new(vec![0.3 + 0.1 * k as f64], vec![-0.2 + 0.05 * k as f64]))
            .collect();
        let samples = fb_kernel_samples(|psi| Ok(psi.clone()), &xs, &ys, &gamma, &grid, hbar).unwrap();
        for (j, y) in ys.iter().enumerate() {
            let expected = (-xs[0].distance(y).powi(2) / (4.0 * hbar)).exp() / (2.0 * PI * hbar);
            assert!((samples.ktilde(0, j).norm() - expected).abs() < 1e-10);
        }
        let report = DecayReport::from_samples(&samples, &xs, 0.5).unwrap();
        assert_eq!(report.peaks[0].peak_distance, 0.0);
        assert!(report.is_monotone(0.0));
    }

    #[test]
    fn zero_operator_report_is_zero() {
        let hbar = 0.1;
        let gamma = SiegelMatrix::standard(1);
        let grid = GridSpec::uniform(&[-6.0], &[6.0], 401).unwrap();
        let xs = vec![PhasePoint::origin(1)];
        let ys = vec![PhasePoint::origin(1), PhasePoint::new(vec![0.5], vec![0.5])];
        let report = fb_kernel_diagnostic(
            |psi| Ok(psi.scaled(Complex64::new(0.0, 0.0))),
            |x| Ok(x.clone()),
            &xs,
            &ys,
            &gamma,
            &grid,
            hbar,
            1.0,
        )
        .unwrap();
        assert!(report.bins.iter().all(|b| b.max_abs_ktilde == 0.0 && b.mass == 0.0));
        assert!(report.is_monotone(0.0));
    }
}
