use anyhow::{anyhow, bail, Context, Result};
use herman_kluk::coherent::{coherent_state, PhaseGrid};
use herman_kluk::flow::{flow_to, integrate_flow, PhasePoint};
use herman_kluk::hamiltonians::{estimate_delta, make_model, Hamiltonian, HamiltonianModel, ModelKind, ModelParams, PhaseBox};
use herman_kluk::hk::{fb_kernel_samples, hk_propagate, hk_propagate_times, schur_norm_bound, DecayReport, HKRun, SchurBound};
use herman_kluk::reference::{exact_quadratic_apply_times, split_step_propagate_times};
use herman_kluk::wave::{GridSpec, WaveFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::time::Instant;

use crate::config::{ExperimentConfig, KernelOperator, PropagatorSection, SolverChoice};
use crate::fit::{least_squares, log_log_slope, through_origin, LineFit};

/// Position grid for one `ħ`: the centre trajectory over `[0, horizon]`
/// (or the manual box) widened by the configured margins plus `extra`
/// (in `√ħ`), with a spacing that resolves the momentum cutoff.
pub fn position_grid<H: Hamiltonian + ?Sized>(
    cfg: &ExperimentConfig,
    model: &H,
    hbar: f64,
    horizon: f64,
    extra: f64,
) -> Result<GridSpec> {
    let d = cfg.dim();
    let g = &cfg.grid;
    let root = hbar.sqrt();
    let z0 = cfg.initial_point();
    let steps = ((horizon * 100.0).ceil() as usize).max(1);
    let traj = integrate_flow(model, &z0, 0.0, horizon, steps).context("centre trajectory")?;
    let mut qmin = z0.q.clone();
    let mut qmax = z0.q.clone();
    let mut pmax: Vec<f64> = z0.p.iter().map(|p| p.abs()).collect();
    for s in &traj.samples {
        for a in 0..d {
            qmin[a] = qmin[a].min(s.z.q[a]);
            qmax[a] = qmax[a].max(s.z.q[a]);
            pmax[a] = pmax[a].max(s.z.p[a].abs());
        }
    }
    let (lower, upper) = match (&g.q_lower, &g.q_upper) {
        (Some(lo), Some(hi)) => (lo.clone(), hi.clone()),
        _ => {
            let m = (g.margin + extra) * root;
            (qmin.iter().map(|q| q - m).collect(), qmax.iter().map(|q| q + m).collect())
        }
    };
    if let Some(p) = &g.p_max {
        pmax = p.clone();
    }
    let mut spacing = Vec::with_capacity(d);
    let mut shape = Vec::with_capacity(d);
    for a in 0..d {
        let cutoff = pmax[a] + (g.momentum_margin + extra) * root;
        let h = 0.8 * PI * hbar / cutoff;
        let width = upper[a] - lower[a];
        let n = g.points.unwrap_or_else(|| ((width / h).ceil() as usize).next_power_of_two().max(8));
        spacing.push(width / n as f64);
        shape.push(n);
    }
    Ok(GridSpec::new(lower, spacing, shape)?)
}

/// Lattice shift for job `index`, in cell units, when jitter is enabled.
pub fn lattice_offset(cfg: &ExperimentConfig, index: u64) -> Option<Vec<f64>> {
    if !cfg.grid.jitter {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(index));
    Some((0..2 * cfg.dim()).map(|_| rng.gen_range(-0.5..0.5)).collect())
}

fn run_horizon(cfg: &ExperimentConfig) -> f64 {
    cfg.time.horizon
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    ExactQuadratic,
    SplitStep,
}

pub fn reference_kind(cfg: &ExperimentConfig, model: &HamiltonianModel) -> ReferenceKind {
    match cfg.reference.solver {
        SolverChoice::ExactQuadratic => ReferenceKind::ExactQuadratic,
        SolverChoice::SplitStep => ReferenceKind::SplitStep,
        SolverChoice::Auto if model.is_quadratic() => ReferenceKind::ExactQuadratic,
        SolverChoice::Auto => ReferenceKind::SplitStep,
    }
}

/// Reference states at the sorted `times` on `psi0`'s grid.
pub fn reference_waves(
    cfg: &ExperimentConfig,
    model: &HamiltonianModel,
    kind: ReferenceKind,
    psi0: &WaveFunction,
    times: &[f64],
) -> Result<Vec<WaveFunction>> {
    let out = match kind {
        ReferenceKind::ExactQuadratic => {
            exact_quadratic_apply_times(model, psi0, times, &cfg.initial_width(), &cfg.quadrature(None), &psi0.grid)
        }
        ReferenceKind::SplitStep => split_step_propagate_times(model, psi0, times, cfg.reference.steps_per_unit),
    };
    out.context("reference propagation")
}

/// Agreement of the reference with an independent or refined solve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub reference: ReferenceKind,
    pub against: String,
    pub hbar: f64,
    pub t: f64,
    pub difference: f64,
}

fn cross_check(
    cfg: &ExperimentConfig,
    model: &HamiltonianModel,
    kind: ReferenceKind,
    psi0: &WaveFunction,
    t: f64,
    value: &WaveFunction,
) -> Result<CrossCheck> {
    let (against, other) = match kind {
        ReferenceKind::ExactQuadratic if model.split_form().is_some() => (
            "split_step".to_string(),
            split_step_propagate_times(model, psi0, &[t], 2 * cfg.reference.steps_per_unit)?.remove(0),
        ),
        ReferenceKind::ExactQuadratic => {
            let mut opts = cfg.quadrature(None);
            opts.density *= 2;
            let w = exact_quadratic_apply_times(model, psi0, &[t], &cfg.initial_width(), &opts, &psi0.grid)?;
            ("exact_quadratic_refined".to_string(), w.into_iter().next().expect("one time"))
        }
        ReferenceKind::SplitStep => (
            "split_step_refined".to_string(),
            split_step_propagate_times(model, psi0, &[t], 2 * cfg.reference.steps_per_unit)?.remove(0),
        ),
    };
    Ok(CrossCheck {
        reference: kind,
        against,
        hbar: psi0.hbar,
        t,
        difference: value.l2_distance(&other),
    })
}

fn initial_state(cfg: &ExperimentConfig, hbar: f64, grid: &GridSpec) -> Result<WaveFunction> {
    coherent_state(&cfg.initial_point(), &cfg.initial_width(), hbar, grid).context("initial coherent state")
}

fn hk_run(
    cfg: &ExperimentConfig,
    model: &HamiltonianModel,
    section: &PropagatorSection,
    psi0: &WaveFunction,
    times: &[f64],
    index: u64,
) -> Result<(HKRun, f64)> {
    let hk = cfg.hk_config(section, lattice_offset(cfg, index))?;
    let start = Instant::now();
    let run = hk_propagate_times(model, psi0, 0.0, times, &hk, &psi0.grid).context("HK propagation")?;
    Ok((run, start.elapsed().as_secs_f64()))
}

/// One `(ħ, t)` measurement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorRow {
    pub hbar: f64,
    pub t: f64,
    /// L² error against the reference (or the difference between two
    /// propagators in a phase-invariance study).
    pub error: f64,
    pub hk_norm: f64,
    /// Wall time of the propagation job that produced the row.
    #[serde(skip)]
    pub runtime_seconds: f64,
    pub node_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

impl ErrorTable {
    pub fn at_time(&self, t: f64) -> Vec<&ErrorRow> {
        self.rows.iter().filter(|r| r.t == t).collect()
    }

    pub fn lookup(&self, hbar: f64, t: f64) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.hbar == hbar && r.t == t)
    }
}

/// Log-log fit at one sample time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeFit {
    pub t: f64,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    /// Residuals of the points used, in ladder order.
    pub residuals: Vec<f64>,
    pub used_hbar: Vec<f64>,
    /// `ħ` values excluded as being at the quadrature floor.
    pub floor_hbar: Vec<f64>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderReport {
    pub table: ErrorTable,
    /// Same measurement on the harmonic oscillator, where the method is
    /// exact; empty when the studied model is itself quadratic.
    pub control: ErrorTable,
    pub fits: Vec<TimeFit>,
    /// Fit at the last sample time.
    pub slope: Option<f64>,
    pub flags: Vec<String>,
    pub cross_check: Option<CrossCheck>,
}

fn harmonic_control(cfg: &ExperimentConfig) -> Result<(ExperimentConfig, HamiltonianModel)> {
    let model = make_model(ModelKind::Harmonic, &ModelParams::new(cfg.dim()))?;
    let mut control = cfg.clone();
    control.model.kind = ModelKind::Harmonic.name().into();
    control.model.omega = 1.0;
    control.grid.q_lower = None;
    control.grid.q_upper = None;
    control.grid.p_max = None;
    control.reference.solver = SolverChoice::ExactQuadratic;
    Ok((control, model))
}

fn ladder(cfg: &ExperimentConfig) -> Result<Vec<f64>> {
    cfg.ladder()
        .map(|l| l.to_vec())
        .ok_or_else(|| anyhow!("`ladder.hbar` is required for this experiment"))
}

fn assemble(table: ErrorTable, control: ErrorTable, times: &[f64], ladder: &[f64], quadratic: bool) -> LadderReport {
    let mut flags = Vec::new();
    let mut fits = Vec::with_capacity(times.len());
    for &t in times {
        let rows: Vec<&ErrorRow> = ladder.iter().filter_map(|&h| table.lookup(h, t)).collect();
        let monotone = rows.windows(2).all(|w| w[1].error < w[0].error);
        let (mut used, mut floor) = (Vec::new(), Vec::new());
        for r in &rows {
            let at_floor = quadratic || control.lookup(r.hbar, t).is_some_and(|c| r.error < 10.0 * c.error);
            if at_floor {
                floor.push(r.hbar);
            } else {
                used.push((r.hbar, r.error));
            }
        }
        let fit: Option<LineFit> = if used.len() >= 2 {
            let (h, e): (Vec<f64>, Vec<f64>) = used.iter().cloned().unzip();
            log_log_slope(&h, &e)
        } else {
            None
        };
        if !monotone && !flags.iter().any(|f| f == "non-monotone") {
            flags.push("non-monotone".to_string());
        }
        if !floor.is_empty() && !flags.iter().any(|f| f == "quadrature-floor") {
            flags.push("quadrature-floor".to_string());
        }
        fits.push(TimeFit {
            t,
            slope: fit.as_ref().map(|f| f.slope),
            intercept: fit.as_ref().map(|f| f.intercept),
            residuals: fit.map(|f| f.residuals).unwrap_or_default(),
            used_hbar: used.iter().map(|u| u.0).collect(),
            floor_hbar: floor,
            monotone,
        });
    }
    let slope = fits.last().and_then(|f| f.slope);
    LadderReport {
        table,
        control,
        fits,
        slope,
        flags,
        cross_check: None,
    }
}

fn error_rows(hbar: f64, times: &[f64], run: &HKRun, targets: &[WaveFunction], runtime: f64) -> Vec<ErrorRow> {
    times
        .iter()
        .zip(run.waves.iter().zip(targets))
        .map(|(&t, (w, r))| ErrorRow {
            hbar,
            t,
            error: w.l2_distance(r),
            hk_norm: w.l2_norm(),
            runtime_seconds: runtime,
            node_count: run.node_count,
        })
        .collect()
}

fn scaling_table(cfg: &ExperimentConfig, model: &HamiltonianModel, ladder: &[f64]) -> Result<ErrorTable> {
    let times = cfg.sample_times();
    let kind = reference_kind(cfg, model);
    let rows: Vec<Vec<ErrorRow>> = ladder
        .par_iter()
        .enumerate()
        .map(|(i, &hbar)| -> Result<Vec<ErrorRow>> {
            let grid = position_grid(cfg, model, hbar, run_horizon(cfg), 0.0)?;
            let psi0 = initial_state(cfg, hbar, &grid)?;
            let reference = reference_waves(cfg, model, kind, &psi0, &times)?;
            let (run, secs) = hk_run(cfg, model, &cfg.propagator, &psi0, &times, i as u64)?;
            Ok(error_rows(hbar, &times, &run, &reference, secs))
        })
        .collect::<Result<_>>()?;
    Ok(ErrorTable {
        rows: rows.into_iter().flatten().collect(),
    })
}

/// HK against the reference along the `ħ` ladder, with a log-log slope fit.
pub fn run_scaling_study(cfg: &ExperimentConfig) -> Result<LadderReport> {
    let model = cfg.build_model()?;
    let ladder = ladder(cfg)?;
    let times = cfg.sample_times();
    let table = scaling_table(cfg, &model, &ladder)?;
    let control = if model.is_quadratic() {
        ErrorTable::default()
    } else {
        let (ccfg, cmodel) = harmonic_control(cfg)?;
        scaling_table(&ccfg, &cmodel, &ladder)?
    };
    let mut report = assemble(table, control, &times, &ladder, model.is_quadratic());
    let t = *times.last().expect("at least one sample time");
    report.cross_check = Some(reference_check(cfg, &model, ladder[0], t, run_horizon(cfg))?);
    Ok(report)
}

/// Cross-checks the reference once, at `(hbar, t)`.
fn reference_check(cfg: &ExperimentConfig, model: &HamiltonianModel, hbar: f64, t: f64, horizon: f64) -> Result<CrossCheck> {
    let grid = position_grid(cfg, model, hbar, horizon, 0.0)?;
    let psi0 = initial_state(cfg, hbar, &grid)?;
    let kind = reference_kind(cfg, model);
    let value = reference_waves(cfg, model, kind, &psi0, &[t])?.remove(0);
    cross_check(cfg, model, kind, &psi0, t, &value)
}

fn invariance_table(cfg: &ExperimentConfig, model: &HamiltonianModel, ladder: &[f64]) -> Result<ErrorTable> {
    let other = cfg
        .comparison
        .as_ref()
        .ok_or_else(|| anyhow!("a `[comparison]` table is required for phase-invariance studies"))?;
    let times = cfg.sample_times();
    let rows: Vec<Vec<ErrorRow>> = ladder
        .par_iter()
        .enumerate()
        .map(|(i, &hbar)| -> Result<Vec<ErrorRow>> {
            let grid = position_grid(cfg, model, hbar, run_horizon(cfg), 0.0)?;
            let psi0 = initial_state(cfg, hbar, &grid)?;
            let (a, secs_a) = hk_run(cfg, model, &cfg.propagator, &psi0, &times, i as u64)?;
            let (b, secs_b) = hk_run(cfg, model, other, &psi0, &times, i as u64)?;
            let mut rows = error_rows(hbar, &times, &a, &b.waves, secs_a + secs_b);
            for r in &mut rows {
                r.node_count = a.node_count.max(b.node_count);
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(ErrorTable {
        rows: rows.into_iter().flatten().collect(),
    })
}

/// L² difference between the `[propagator]` and `[comparison]` outputs
/// along the ladder.
pub fn run_phase_invariance(cfg: &ExperimentConfig) -> Result<LadderReport> {
    let model = cfg.build_model()?;
    let ladder = ladder(cfg)?;
    let times = cfg.sample_times();
    let table = invariance_table(cfg, &model, &ladder)?;
    let control = if model.is_quadratic() {
        ErrorTable::default()
    } else {
        let (ccfg, cmodel) = harmonic_control(cfg)?;
        invariance_table(&ccfg, &cmodel, &ladder)?
    };
    Ok(assemble(table, control, &times, &ladder, model.is_quadratic()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EhrenfestRow {
    pub hbar: f64,
    /// Linearly interpolated first crossing of the threshold.
    pub t_star: Option<f64>,
    pub crossed: bool,
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EhrenfestReport {
    pub threshold: f64,
    pub rows: Vec<EhrenfestRow>,
    /// Full error curves, one row per `(ħ, t)`.
    pub curves: ErrorTable,
    /// `t*` never decreases as `ħ` decreases; rows without a crossing count
    /// as an infinite `t*`.
    pub nondecreasing: bool,
    /// Least-squares `c` in `t* ≈ c·log(1/ħ)`.
    pub c: Option<f64>,
    /// Slope of `t*` against `log(1/ħ)` with a free intercept.
    pub growth_rate: Option<f64>,
    pub delta: f64,
    /// `1/(4δ)`, for comparison only.
    pub asymptotic_c: f64,
    pub cross_check: Option<CrossCheck>,
}

/// First crossing of `threshold`, interpolated between neighbouring samples.
pub fn crossing_time(times: &[f64], errors: &[f64], threshold: f64) -> Option<f64> {
    let k = errors.iter().position(|e| *e > threshold)?;
    if k == 0 {
        return Some(times[0]);
    }
    let (t0, t1) = (times[k - 1], times[k]);
    let (e0, e1) = (errors[k - 1], errors[k]);
    Some(t0 + (threshold - e0) / (e1 - e0) * (t1 - t0))
}

/// Crossing times of the HK error through the threshold along the ladder.
pub fn run_ehrenfest(cfg: &ExperimentConfig) -> Result<EhrenfestReport> {
    let model = cfg.build_model()?;
    let ladder = ladder(cfg)?;
    let e = &cfg.ehrenfest;
    let d = cfg.dim();
    let z0 = cfg.initial_point().to_vec();
    let region = PhaseBox::new(z0.iter().map(|v| v - 1.0).collect(), z0.iter().map(|v| v + 1.0).collect())?;
    let delta = estimate_delta(&model, &region, if d == 1 { 21 } else { 7 })?.delta;
    if !(delta > 0.0) {
        bail!("the estimated growth rate is not positive ({delta}); no Ehrenfest horizon to measure");
    }
    let count = (e.max_horizon / e.time_step + 1e-9).floor() as usize;
    let times: Vec<f64> = (0..=count).map(|k| k as f64 * e.time_step).collect();
    let kind = reference_kind(cfg, &model);
    let curves: Vec<Vec<ErrorRow>> = ladder
        .par_iter()
        .enumerate()
        .map(|(i, &hbar)| -> Result<Vec<ErrorRow>> {
            let grid = position_grid(cfg, &model, hbar, e.max_horizon, 0.0)?;
            let psi0 = initial_state(cfg, hbar, &grid)?;
            let reference = reference_waves(cfg, &model, kind, &psi0, &times)?;
            let (run, secs) = hk_run(cfg, &model, &cfg.propagator, &psi0, &times, i as u64)?;
            Ok(error_rows(hbar, &times, &run, &reference, secs))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(ladder.len());
    for (curve, &hbar) in curves.iter().zip(&ladder) {
        let errors: Vec<f64> = curve.iter().map(|r| r.error).collect();
        let t_star = crossing_time(&times, &errors, e.threshold);
        if t_star.is_none() {
            log::info!("no crossing within horizon {} at hbar = {hbar}", e.max_horizon);
        }
        rows.push(EhrenfestRow {
            hbar,
            t_star,
            crossed: t_star.is_some(),
            max_error: errors.iter().cloned().fold(0.0, f64::max),
        });
    }
    let nondecreasing = rows
        .windows(2)
        .all(|w| w[1].t_star.unwrap_or(f64::INFINITY) >= w[0].t_star.unwrap_or(f64::INFINITY));
    let (logs, ts): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter_map(|r| r.t_star.map(|t| ((1.0 / r.hbar).ln(), t)))
        .unzip();
    let c = through_origin(&logs, &ts);
    let growth_rate = least_squares(&logs, &ts).map(|f| f.slope);
    Ok(EhrenfestReport {
        threshold: e.threshold,
        rows,
        curves: ErrorTable {
            rows: curves.into_iter().flatten().collect(),
        },
        nondecreasing,
        c,
        growth_rate,
        delta,
        asymptotic_c: 1.0 / (4.0 * delta),
        cross_check: Some(reference_check(cfg, &model, ladder[0], times[count], e.max_horizon)?),
    })
}

/// Kernel samples binned around the graph of the flow, plus the Schur bound
/// of the same samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelReport {
    pub hbar: f64,
    pub t: f64,
    #[serde(skip)]
    pub decay: DecayReport,
    pub schur: SchurSummary,
    pub monotone: bool,
    pub peak: f64,
    /// `max |K̃|` at off-graph distance `≥ far_distance·√ħ`, over the peak.
    pub far_ratio: f64,
    /// Share of `Σ|K̃|²` at off-graph distance `≥ far_distance·√ħ`.
    pub far_mass_fraction: f64,
    /// Largest distance, in `√ħ`, between a row's peak and the flow image.
    pub max_peak_offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SchurSummary {
    pub bound: f64,
    pub row_sup: f64,
    pub column_sup: f64,
    pub boundary_ratio: f64,
    pub boundary_warning: bool,
}

impl From<SchurBound> for SchurSummary {
    fn from(s: SchurBound) -> Self {
        SchurSummary {
            bound: s.bound,
            row_sup: s.row_sup,
            column_sup: s.column_sup,
            boundary_ratio: s.boundary_ratio,
            boundary_warning: s.boundary_warning,
        }
    }
}

/// Phase-space lattices used by [`run_inspect_kernel`].
pub fn kernel_lattices(cfg: &ExperimentConfig, image: &PhasePoint, hbar: f64) -> (PhaseGrid, PhaseGrid) {
    let k = &cfg.kernel;
    let n = 2 * cfg.dim();
    let root = hbar.sqrt();
    let x = PhaseGrid::lattice(
        &cfg.initial_point().to_vec(),
        &vec![k.x_spacing * root; n],
        &vec![k.x_half_count; n],
        None,
    );
    let y = PhaseGrid::lattice(&image.to_vec(), &vec![k.y_spacing * root; n], &vec![k.y_half_count; n], None);
    (x, y)
}

pub fn run_inspect_kernel(cfg: &ExperimentConfig) -> Result<KernelReport> {
    let model = cfg.build_model()?;
    let k = &cfg.kernel;
    let hbar = cfg.initial.hbar;
    let t = match k.operator {
        KernelOperator::Identity => 0.0,
        KernelOperator::Hk => k.time.unwrap_or(cfg.time.horizon),
    };
    let spu = cfg.propagator.steps_per_unit;
    let z0 = cfg.initial_point();
    let image = flow_to(&model, &z0, 0.0, t, spu)?.z;
    let (xs, ys) = kernel_lattices(cfg, &image, hbar);
    let extra = k.x_half_count as f64 * k.x_spacing + k.y_half_count as f64 * k.y_spacing;
    let grid = position_grid(cfg, &model, hbar, t, extra)?;
    let hk = cfg.hk_config(&cfg.propagator, lattice_offset(cfg, 0))?;
    let apply = |psi: &WaveFunction| -> herman_kluk::Result<WaveFunction> {
        match k.operator {
            KernelOperator::Identity => Ok(psi.clone()),
            KernelOperator::Hk => hk_propagate(&model, psi, t, &hk),
        }
    };
    let gamma = cfg.initial_width();
    let samples = fb_kernel_samples(apply, &xs.nodes, &ys.nodes, &gamma, &grid, hbar)?;
    let images = xs
        .nodes
        .iter()
        .map(|x| flow_to(&model, x, 0.0, t, spu).map(|s| s.z))
        .collect::<herman_kluk::Result<Vec<_>>>()?;
    let decay = DecayReport::from_samples(&samples, &images, k.bin_width)?;
    let schur = schur_norm_bound(&samples.abs_values(), &xs, &ys, hbar)?;
    let far_ratio = if decay.peak > 0.0 {
        decay.max_beyond(k.far_distance) / decay.peak
    } else {
        0.0
    };
    Ok(KernelReport {
        hbar,
        t,
        monotone: decay.is_monotone(1e-9),
        peak: decay.peak,
        far_ratio,
        far_mass_fraction: decay.mass_fraction_beyond(k.far_distance),
        max_peak_offset: decay.peaks.iter().map(|p| p.peak_distance).fold(0.0, f64::max),
        schur: schur.into(),
        decay,
    })
}

/// One propagation at `initial.hbar`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropagateRow {
    pub t: f64,
    pub hk_norm: f64,
    pub error: f64,
    pub ensemble_coverage: f64,
    pub node_count: usize,
}

#[derive(Debug, Clone)]
pub struct PropagateReport {
    pub rows: Vec<PropagateRow>,
    pub waves: Vec<WaveFunction>,
    pub reference: ReferenceKind,
    pub quadrature_coverage: f64,
    pub runtime_seconds: f64,
}

pub fn run_propagate(cfg: &ExperimentConfig) -> Result<PropagateReport> {
    let model = cfg.build_model()?;
    let hbar = cfg.initial.hbar;
    let times = cfg.sample_times();
    let grid = position_grid(cfg, &model, hbar, run_horizon(cfg), 0.0)?;
    let psi0 = initial_state(cfg, hbar, &grid)?;
    let kind = reference_kind(cfg, &model);
    let reference = reference_waves(cfg, &model, kind, &psi0, &times)?;
    let (run, secs) = hk_run(cfg, &model, &cfg.propagator, &psi0, &times, 0)?;
    let rows = times
        .iter()
        .enumerate()
        .map(|(i, &t)| PropagateRow {
            t,
            hk_norm: run.waves[i].l2_norm(),
            error: run.waves[i].l2_distance(&reference[i]),
            ensemble_coverage: run.ensemble_coverage[i],
            node_count: run.node_count,
        })
        .collect();
    Ok(PropagateReport {
        rows,
        reference: kind,
        quadrature_coverage: run.quadrature_coverage,
        runtime_seconds: secs,
        waves: run.waves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crossing_interpolates() {
        let t = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(crossing_time(&t, &[0.0, 0.05, 0.15, 0.3], 0.1), Some(1.5));
        assert_eq!(crossing_time(&t, &[0.0, 0.05, 0.06, 0.07], 0.1), None);
        assert_eq!(crossing_time(&t, &[0.2, 0.3, 0.4, 0.5], 0.1), Some(0.0));
    }

    #[test]
    fn floor_points_excluded() {
        let row = |hbar: f64, error: f64| ErrorRow {
            hbar,
            t: 1.0,
            error,
            hk_norm: 1.0,
            runtime_seconds: 0.0,
            node_count: 1,
        };
        let table = ErrorTable {
            rows: vec![row(0.1, 1e-2), row(0.05, 5e-3), row(0.025, 2.5e-3), row(0.0125, 1e-5)],
        };
        let control = ErrorTable {
            rows: vec![row(0.1, 1e-7), row(0.05, 1e-7), row(0.025, 1e-7), row(0.0125, 5e-6)],
        };
        let r = assemble(table, control, &[1.0], &[0.1, 0.05, 0.025, 0.0125], false);
        assert_eq!(r.fits[0].floor_hbar, vec![0.0125]);
        assert!((r.slope.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(r.flags, vec!["quadrature-floor".to_string()]);
    }

    #[test]
    fn non_monotone_flagged() {
        let row = |hbar: f64, error: f64| ErrorRow {
            hbar,
            t: 1.0,
            error,
            hk_norm: 1.0,
            runtime_seconds: 0.0,
            node_count: 1,
        };
        let table = ErrorTable {
            rows: vec![row(0.1, 1e-2), row(0.05, 2e-2), row(0.025, 1e-3)],
        };
        let r = assemble(table, ErrorTable::default(), &[1.0], &[0.1, 0.05, 0.025], false);
        assert!(r.flags.contains(&"non-monotone".to_string()));
        assert!(!r.fits[0].monotone);
    }

    #[test]
    fn jitter_is_seeded() {
        let mut cfg = crate::config::parse_config(
            "seed = 4\n[model]\nkind = \"harmonic\"\n[initial]\nhbar = 0.1\n[time]\nhorizon = 1.0\n[grid]\njitter = true\n",
        )
        .unwrap();
        let a = lattice_offset(&cfg, 2).unwrap();
        assert_eq!(a, lattice_offset(&cfg, 2).unwrap());
        assert!(a.iter().all(|v| v.abs() <= 0.5));
        assert_ne!(a, lattice_offset(&cfg, 3).unwrap());
        cfg.grid.jitter = false;
        assert!(lattice_offset(&cfg, 2).is_none());
    }
}
