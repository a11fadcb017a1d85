//! Uniform tensor-product position grids and sampled wave functions.
//!
//! Text dump layout (`write_text` / `read_text`):
//!
//! ```text
//! hkwave,1
//! dim,<d>
//! hbar,<ħ>
//! origin,<x0_1>,...,<x0_d>
//! spacing,<h_1>,...,<h_d>
//! shape,<n_1>,...,<n_d>
//! re,im
//! <re>,<im>        one line per sample, row-major (last axis fastest)
//! ```

use std::io::{BufRead, Write};

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
}

impl GridSpec {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        let d = origin.len();
        if d == 0 || spacing.len() != d || shape.len() != d {
            return Err(Error::InvalidArgument("grid axes must agree and be nonempty".into()));
        }
        if spacing.iter().any(|h| !(*h > 0.0) || !h.is_finite()) || shape.iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument("grid needs positive spacing and at least 2 points per axis".into()));
        }
        Ok(GridSpec { origin, spacing, shape })
    }

    /// `n` points per axis spanning `[lower, upper]` inclusive.
    pub fn uniform(lower: &[f64], upper: &[f64], n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument("need at least 2 points per axis".into()));
        }
        let spacing = lower.iter().zip(upper).map(|(l, u)| (u - l) / (n - 1) as f64).collect();
        GridSpec::new(lower.to_vec(), spacing, vec![n; lower.len()])
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, k: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * k as f64
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.coord(axis, self.shape[axis] - 1)
    }

    /// Coordinates of axis `axis`.
    pub fn axis(&self, axis: usize) -> Vec<f64> {
        (0..self.shape[axis]).map(|k| self.coord(axis, k)).collect()
    }

    /// Trapezoid weights of one axis.
    pub fn axis_weights(&self, axis: usize) -> Vec<f64> {
        let n = self.shape[axis];
        let h = self.spacing[axis];
        (0..n)
            .map(|k| if k == 0 || k == n - 1 { 0.5 * h } else { h })
            .collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1; d];
        for a in (0..d.saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.shape[a + 1];
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            out[a] = flat % self.shape[a];
            flat /= self.shape[a];
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.multi_index(flat, &mut idx);
        idx.iter().enumerate().map(|(a, &k)| self.coord(a, k)).collect()
    }

    /// Full tensor trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let axes: Vec<Vec<f64>> = (0..self.dim()).map(|a| self.axis_weights(a)).collect();
        let mut idx = vec![0; self.dim()];
        (0..self.len())
            .map(|flat| {
                self.multi_index(flat, &mut idx);
                idx.iter().enumerate().map(|(a, &k)| axes[a][k]).product()
            })
            .collect()
    }

    /// Index range `[lo, hi)` of grid points within `[c - r, c + r]` on one
    /// axis; empty when disjoint.
    pub fn window(&self, axis: usize, center: f64, radius: f64) -> (usize, usize) {
        let h = self.spacing[axis];
        let n = self.shape[axis] as f64;
        let lo = ((center - radius - self.origin[axis]) / h).ceil().max(0.0);
        let hi = ((center + radius - self.origin[axis]) / h).floor() + 1.0;
        let hi = hi.min(n);
        if hi <= lo {
            (0, 0)
        } else {
            (lo as usize, hi as usize)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    pub grid: GridSpec,
    pub values: Vec<Complex64>,
    pub hbar: f64,
}

impl WaveFunction {
    pub fn zeros(grid: GridSpec, hbar: f64) -> Self {
        let n = grid.len();
        WaveFunction {
            grid,
            values: vec![Complex64::new(0.0, 0.0); n],
            hbar,
        }
    }

    pub fn from_fn(grid: GridSpec, hbar: f64, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        WaveFunction { grid, values, hbar }
    }

    /// `⟨self, other⟩ = ∫ self · conj(other)` with trapezoid weights.
    pub fn inner(&self, other: &WaveFunction) -> Complex64 {
        assert_eq!(self.grid, other.grid, "inner product needs matching grids");
        let w = self.grid.weights();
        self.values
            .iter()
            .zip(&other.values)
            .zip(&w)
            .map(|((a, b), w)| a * b.conj() * *w)
            .sum()
    }

    pub fn norm_squared(&self) -> f64 {
        let w = self.grid.weights();
        self.values.iter().zip(&w).map(|(a, w)| a.norm_sqr() * w).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn l2_distance(&self, other: &WaveFunction) -> f64 {
        assert_eq!(self.grid, other.grid, "distance needs matching grids");
        let w = self.grid.weights();
        self.values
            .iter()
            .zip(&other.values)
            .zip(&w)
            .map(|((a, b), w)| (a - b).norm_sqr() * w)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scaled(&self, s: Complex64) -> WaveFunction {
        WaveFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
            hbar: self.hbar,
        }
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: Complex64, other: &WaveFunction, b: Complex64) -> WaveFunction {
        assert_eq!(self.grid, other.grid, "combination needs matching grids");
        WaveFunction {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            hbar: self.hbar,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn write_text<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let join = |v: Vec<String>| v.join(",");
        writeln!(out, "hkwave,1")?;
        writeln!(out, "dim,{}", self.grid.dim())?;
        writeln!(out, "hbar,{:.17e}", self.hbar)?;
        writeln!(out, "origin,{}", join(self.grid.origin.iter().map(|v| format!("{v:.17e}")).collect()))?;
        writeln!(out, "spacing,{}", join(self.grid.spacing.iter().map(|v| format!("{v:.17e}")).collect()))?;
        writeln!(out, "shape,{}", join(self.grid.shape.iter().map(|v| v.to_string()).collect()))?;
        writeln!(out, "re,im")?;
        for v in &self.values {
            writeln!(out, "{:.17e},{:.17e}", v.re, v.im)?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<WaveFunction> {
        let mut lines = input.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what} line")))?
                .map_err(|e| Error::Parse(e.to_string()))
        };
        fn fields<'a>(line: &'a str, key: &str) -> Result<Vec<&'a str>> {
            let mut it = line.split(',');
            if it.next() != Some(key) {
                return Err(Error::Parse(format!("expected `{key}` line, found `{line}`")));
            }
            Ok(it.collect())
        }
        fn floats(v: Vec<&str>) -> Result<Vec<f64>> {
            v.iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string())))
                .collect()
        }
        let magic = next("header")?;
        if magic.trim() != "hkwave,1" {
            return Err(Error::Parse(format!("unsupported header `{magic}`")));
        }
        let d: usize = fields(&next("dim")?, "dim")?
            .first()
            .ok_or_else(|| Error::Parse("empty dim".into()))?
            .trim()
            .parse()
            .map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string()))?;
        let hbar = floats(fields(&next("hbar")?, "hbar")?)?[0];
        let origin = floats(fields(&next("origin")?, "origin")?)?;
        let spacing = floats(fields(&next("spacing")?, "spacing")?)?;
        let shape: Vec<usize> = fields(&next("shape")?, "shape")?
            .iter()
            .map(|s| s.trim().parse().map_err(|e: std::num::ParseIntError| Error::Parse(e.to_string())))
            .collect::<Result<_>>()?;
        if origin.len() != d {
            return Err(Error::Parse("origin length does not match dim".into()));
        }
        let grid = GridSpec::new(origin, spacing, shape)?;
        let cols = next("column")?;
        if cols.trim() != "re,im" {
            return Err(Error::Parse("expected `re,im` column header".into()));
        }
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let f = floats(next("sample")?.split(',').collect())?;
            if f.len() != 2 {
                return Err(Error::Parse("sample lines need two columns".into()));
            }
            values.push(Complex64::new(f[0], f[1]));
        }
        Ok(WaveFunction { grid, values, hbar })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn trapezoid_weights_sum_to_volume() {
        let g = GridSpec::uniform(&[-1.0, 0.0], &[1.0, 3.0], 11).unwrap();
        let total: f64 = g.weights().iter().sum();
        assert!((total - 6.0).abs() < 1e-12);
    }

    #[test]
    fn window_clips_to_grid() {
        let g = GridSpec::uniform(&[0.0], &[10.0], 11).unwrap();
        assert_eq!(g.window(0, 5.0, 1.5), (4, 7));
        assert_eq!(g.window(0, -0.5, 1.0), (0, 1));
        assert_eq!(g.window(0, 20.0, 1.0), (0, 0));
    }

    proptest! {
        #[test]
        fn text_dump_round_trips(values in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 6), hbar in 1e-3f64..1.0) {
            let grid = GridSpec::new(vec![-0.5, 2.0], vec![0.25, 0.125], vec![2, 3]).unwrap();
            let wave = WaveFunction { grid, values: values.into_iter().map(|(a, b)| Complex64::new(a, b)).collect(), hbar };
            let mut buf = Vec::new();
            wave.write_text(&mut buf).unwrap();
            let back = WaveFunction::read_text(std::io::Cursor::new(buf)).unwrap();
            prop_assert_eq!(back, wave);
        }
    }
}
