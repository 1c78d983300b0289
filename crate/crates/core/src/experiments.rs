//! Monte Carlo comparison of coupled systems under common random numbers.
//!
//! Every harness draws path `j` of the noise once and feeds the same
//! increments to both systems being compared. Per-path statistics are
//! reduced in path order, so the reported numbers do not depend on the
//! number of worker threads.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::approximants::GeneratorFamily;
use crate::error::{Error, Result};
use crate::model::{diagonal_gate, GateOutcome, ModelSpec, VectorField};
use crate::solver::{grid_layout, solve_deterministic, solve_mild, solve_mild_scaled, SolverConfig, Trajectory};
use crate::spectral::SpectralModel;
use crate::stochastics::{sample_increments, uniform_grid, NoiseSpec, WienerIncrements};

/// `sup_t E|x_a(t) - x_b(t)|^p` over the grid on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorEstimate {
    pub value: f64,
    pub stderr: f64,
    pub paths: usize,
    pub argmax_t: f64,
}

/// Path-ordered running sums of `d_j(t_i)` and `d_j(t_i)^2`.
#[derive(Debug, Clone)]
struct Moments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    paths: usize,
}

impl Moments {
    fn new(points: usize) -> Self {
        Moments {
            sum: vec![0.0; points],
            sum_sq: vec![0.0; points],
            paths: 0,
        }
    }

    fn push(&mut self, d: &[f64]) {
        for ((s, q), x) in self.sum.iter_mut().zip(self.sum_sq.iter_mut()).zip(d) {
            *s += x;
            *q += x * x;
        }
        self.paths += 1;
    }

    fn estimate(&self, dt: f64) -> ErrorEstimate {
        let n = self.paths as f64;
        let (mut best, mut arg) = (f64::NEG_INFINITY, 0);
        for (i, s) in self.sum.iter().enumerate() {
            let m = s / n;
            if m > best {
                best = m;
                arg = i;
            }
        }
        let stderr = if self.paths > 1 {
            let mean = self.sum[arg] / n;
            let var = ((self.sum_sq[arg] - n * mean * mean) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        ErrorEstimate {
            value: best.max(0.0),
            stderr,
            paths: self.paths,
            argmax_t: arg as f64 * dt,
        }
    }
}

/// `‖x_a(t_i) - x_b(t_i)‖^p` at each grid point of `[0, T]`.
fn pointwise_error(a: &Trajectory, b: &Trajectory, p: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() || a.history_steps() != b.history_steps() || a.dt() != b.dt() {
        return Err(Error::invalid("compared trajectories live on different grids"));
    }
    Ok(a.forward_values()
        .iter()
        .zip(b.forward_values())
        .map(|(x, y)| x.distance(y).powf(p))
        .collect())
}

fn pointwise_norm(a: &Trajectory, p: f64) -> Vec<f64> {
    a.forward_values().iter().map(|x| x.norm().powf(p)).collect()
}

/// Estimates `sup_t E|x_a(t) - x_b(t)|^p` from coupled path lists.
pub fn pth_mean_sup_error(paths_a: &[Trajectory], paths_b: &[Trajectory], p: f64) -> Result<ErrorEstimate> {
    if paths_a.len() != paths_b.len() {
        return Err(Error::DimensionMismatch {
            expected: paths_a.len(),
            found: paths_b.len(),
        });
    }
    if paths_a.is_empty() {
        return Err(Error::invalid("at least one path is required"));
    }
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("exponent p = {p} must be >= 1")));
    }
    let mut acc = Moments::new(paths_a[0].steps() + 1);
    for (a, b) in paths_a.iter().zip(paths_b) {
        acc.push(&pointwise_error(a, b, p)?);
    }
    Ok(acc.estimate(paths_a[0].dt()))
}

/// Path count, worker threads and step control shared by the harnesses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    pub paths: usize,
    /// `0` means the available parallelism.
    pub workers: usize,
    pub solver: SolverConfig,
}

impl MonteCarlo {
    pub fn new(paths: usize, solver: SolverConfig) -> Self {
        MonteCarlo {
            paths,
            workers: 0,
            solver,
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
    }
}

/// Paths are processed in blocks of this size to bound memory.
const CHUNK: usize = 256;

type PathRows = Result<Vec<std::result::Result<Vec<f64>, String>>>;

type Row<'a> = Box<dyn Fn(&WienerIncrements) -> Result<Trajectory> + Sync + 'a>;

/// Runs every row against the reference under common noise.
fn coupled_rows(
    horizon_steps: usize,
    noise: &NoiseSpec,
    mc: &MonteCarlo,
    p: f64,
    reference: &(dyn Fn(&WienerIncrements) -> Result<Trajectory> + Sync),
    rows: &[Row<'_>],
) -> Result<Vec<std::result::Result<ErrorEstimate, String>>> {
    if mc.paths == 0 {
        return Err(Error::invalid("path count must be >= 1"));
    }
    let dt = mc.solver.dt;
    let grid = uniform_grid(dt, horizon_steps);
    let pool = mc.pool()?;
    let mut acc: Vec<std::result::Result<Moments, String>> =
        rows.iter().map(|_| Ok(Moments::new(horizon_steps + 1))).collect();
    let mut start = 0;
    while start < mc.paths {
        let end = (start + CHUNK).min(mc.paths);
        let chunk: Vec<PathRows> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|j| {
                    let inc = sample_increments(noise, &grid, j as u64)?;
                    let base = reference(&inc)?;
                    Ok(rows
                        .iter()
                        .map(|row| {
                            row(&inc)
                                .and_then(|x| pointwise_error(&x, &base, p))
                                .map_err(|e| format!("path {j}: {e}"))
                        })
                        .collect())
                })
                .collect()
        });
        for per_path in chunk {
            for (slot, d) in acc.iter_mut().zip(per_path?) {
                match (slot.as_mut(), d) {
                    (Ok(m), Ok(d)) => m.push(&d),
                    (Ok(_), Err(msg)) => *slot = Err(msg),
                    (Err(_), _) => {}
                }
            }
        }
        start = end;
    }
    Ok(acc
        .into_iter()
        .map(|m| m.map(|m| m.estimate(dt)))
        .collect())
}

/// Which index labels the rows of a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    N,
    Eps,
    Theta,
}

impl IndexKind {
    pub fn name(self) -> &'static str {
        match self {
            IndexKind::N => "n",
            IndexKind::Eps => "eps",
            IndexKind::Theta => "theta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub index_value: f64,
    #[serde(flatten)]
    pub outcome: RowOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RowOutcome {
    Estimate(ErrorEstimate),
    Failed { failure: String },
}

impl ReportRow {
    pub fn estimate(&self) -> Option<&ErrorEstimate> {
        match &self.outcome {
            RowOutcome::Estimate(e) => Some(e),
            RowOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportMeta {
    pub experiment: String,
    pub seed: u64,
    pub dt: f64,
    pub n: usize,
    pub j: usize,
    pub p: f64,
    pub t: f64,
    pub label: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub index_kind: IndexKind,
    pub metadata: ReportMeta,
    pub rows: Vec<ReportRow>,
}

impl ExperimentReport {
    fn assemble(
        experiment: &str,
        kind: IndexKind,
        spec: &ModelSpec,
        noise: &NoiseSpec,
        mc: &MonteCarlo,
        index: &[f64],
        results: Vec<std::result::Result<ErrorEstimate, String>>,
    ) -> Self {
        let rows = index
            .iter()
            .zip(results)
            .map(|(&index_value, r)| ReportRow {
                index_value,
                outcome: match r {
                    Ok(e) => RowOutcome::Estimate(e),
                    Err(failure) => RowOutcome::Failed { failure },
                },
            })
            .collect();
        ExperimentReport {
            index_kind: kind,
            metadata: ReportMeta {
                experiment: experiment.to_string(),
                seed: noise.seed(),
                dt: mc.solver.dt,
                n: spec.dim(),
                j: noise.noise_dim(),
                p: spec.p(),
                t: spec.horizon(),
                label: spec.space().label().to_string(),
                config_hash: String::new(),
            },
            rows,
        }
    }

    pub fn with_config_hash(mut self, hash: impl Into<String>) -> Self {
        self.metadata.config_hash = hash.into();
        self
    }

    /// Error values in row order; `None` for failed rows.
    pub fn values(&self) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.estimate().map(|e| e.value)).collect()
    }

    /// Rows are nonincreasing allowing each rise to stay within one
    /// standard error of the previous row.
    pub fn nonincreasing_within_stderr(&self) -> bool {
        let est: Option<Vec<&ErrorEstimate>> = self.rows.iter().map(|r| r.estimate()).collect();
        match est {
            Some(e) => e.windows(2).all(|w| w[1].value <= w[0].value + w[0].stderr.max(w[1].stderr)),
            None => false,
        }
    }

    /// `last / first` of the error column.
    pub fn decay_ratio(&self) -> Option<f64> {
        let first = self.rows.first()?.estimate()?.value;
        let last = self.rows.last()?.estimate()?.value;
        Some(last / first)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("index_kind,index_value,error_value,stderr,argmax_t,paths,seed,config_hash\n");
        let m = &self.metadata;
        for r in &self.rows {
            let _ = write!(out, "{},{},", self.index_kind.name(), r.index_value);
            match &r.outcome {
                RowOutcome::Estimate(e) => {
                    let _ = write!(out, "{},{},{},{}", e.value, e.stderr, e.argmax_t, e.paths);
                }
                RowOutcome::Failed { .. } => out.push_str("NaN,NaN,NaN,0"),
            }
            let _ = writeln!(out, ",{},{}", m.seed, m.config_hash);
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Plot data: `x y yerr`, one line per successful row.
    pub fn to_plot_data(&self) -> String {
        let m = &self.metadata;
        let mut out = format!(
            "# {} {} error  config_hash={}\n# x y yerr\n",
            m.experiment,
            self.index_kind.name(),
            m.config_hash
        );
        for r in &self.rows {
            if let Some(e) = r.estimate() {
                let _ = writeln!(out, "{} {} {}", r.index_value, e.value, e.stderr);
            }
        }
        out
    }
}

fn check_index(values: &[f64], name: &str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::invalid(format!("{name} grid is empty")));
    }
    let up = values.windows(2).all(|w| w[1] > w[0]);
    let down = values.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} grid must be strictly monotone")));
    }
    Ok(())
}

fn gate(spec: &ModelSpec) -> Result<()> {
    match diagonal_gate(spec) {
        GateOutcome::Pass { .. } => Ok(()),
        GateOutcome::Fail { value, .. } => Err(Error::Wellposedness { value }),
    }
}

/// Generator approximation: `x_n` driven by family member `n` versus `x`
/// driven by the base generator, same noise per path.
pub fn trotter_kato_experiment(
    spec: &ModelSpec,
    family: &GeneratorFamily,
    n_grid: &[f64],
    noise: &NoiseSpec,
    mc: &MonteCarlo,
) -> Result<ExperimentReport> {
    check_index(n_grid, "family index")?;
    gate(spec)?;
    let (_, steps, _) = grid_layout(spec, mc.solver.dt)?;
    let members = n_grid
        .iter()
        .map(|&raw| family.member(family.index_from(raw)?))
        .collect::<Result<Vec<SpectralModel>>>()?;
    let cfg = mc.solver;
    let base = family.base();
    let reference = move |inc: &WienerIncrements| solve_mild(spec, base, noise, inc, &cfg);
    let rows: Vec<Row<'_>> = members
        .iter()
        .map(|g| Box::new(move |inc: &WienerIncrements| solve_mild(spec, g, noise, inc, &cfg)) as Row<'_>)
        .collect();
    let results = coupled_rows(steps, noise, mc, spec.p(), &reference, &rows)?;
    Ok(ExperimentReport::assemble("trotter-kato", IndexKind::N, spec, noise, mc, n_grid, results))
}

/// Small-noise limit: `x_eps` with diffusion `eps b` (and generator
/// `A_eps`, the base unless `shift` is given) against the deterministic
/// solution.
pub fn zeroth_order_experiment(
    spec: &ModelSpec,
    shift: Option<&GeneratorFamily>,
    eps_grid: &[f64],
    noise: &NoiseSpec,
    mc: &MonteCarlo,
) -> Result<ExperimentReport> {
    check_index(eps_grid, "eps")?;
    if eps_grid.iter().any(|&e| e < 0.0) {
        return Err(Error::invalid("eps values must be >= 0"));
    }
    gate(spec)?;
    let (_, steps, _) = grid_layout(spec, mc.solver.dt)?;
    let base = spec.space().clone();
    let generators = eps_grid
        .iter()
        .map(|&e| match shift {
            Some(fam) if e > 0.0 => fam.member(fam.index_from(e)?),
            Some(fam) => Ok(fam.base().clone()),
            None => Ok(base.clone()),
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = mc.solver;
    let det = solve_deterministic(spec, shift.map_or(&base, |f| f.base()), &cfg)?;
    let reference = move |_: &WienerIncrements| Ok(det.clone());
    let rows: Vec<Row<'_>> = eps_grid
        .iter()
        .zip(&generators)
        .map(|(&e, g)| Box::new(move |inc: &WienerIncrements| solve_mild_scaled(spec, g, noise, inc, &cfg, e)) as Row<'_>)
        .collect();
    let results = coupled_rows(steps, noise, mc, spec.p(), &reference, &rows)?;
    Ok(ExperimentReport::assemble("zeroth-order", IndexKind::Eps, spec, noise, mc, eps_grid, results))
}

/// Builtin parameter family `a_theta = a + (theta - theta0) g` with the
/// generator, neutral term, diffusion and impulses held fixed.
pub fn drift_perturbation<'a>(
    spec: &'a ModelSpec,
    generator: &SpectralModel,
    g: VectorField,
    theta0: f64,
) -> impl Fn(f64) -> Result<(ModelSpec, SpectralModel)> + Sync + 'a {
    let generator = generator.clone();
    move |theta| {
        let mut coeffs = spec.coeffs().clone();
        coeffs.drift = VectorField::Perturbed {
            base: Box::new(coeffs.drift),
            direction: Box::new(g.clone()),
            weight: theta - theta0,
        };
        Ok((spec.with_coeffs(coeffs)?, generator.clone()))
    }
}

/// Parameter dependence: `x_theta` against `x_theta0` under common noise.
///
/// `family(theta)` returns the model and generator of member `theta`.
pub fn parameter_family_experiment<F>(
    family: &F,
    theta_grid: &[f64],
    theta0: f64,
    noise: &NoiseSpec,
    mc: &MonteCarlo,
) -> Result<ExperimentReport>
where
    F: Fn(f64) -> Result<(ModelSpec, SpectralModel)> + Sync,
{
    check_index(theta_grid, "theta")?;
    let (spec0, gen0) = family(theta0)?;
    gate(&spec0)?;
    let (_, steps, _) = grid_layout(&spec0, mc.solver.dt)?;
    let members = theta_grid
        .iter()
        .map(|&th| {
            let (s, g) = family(th)?;
            gate(&s)?;
            if grid_layout(&s, mc.solver.dt)?.1 != steps {
                return Err(Error::invalid("family members must share the horizon"));
            }
            Ok((s, g))
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = mc.solver;
    let (s0, g0) = (&spec0, &gen0);
    let reference = move |inc: &WienerIncrements| solve_mild(s0, g0, noise, inc, &cfg);
    let rows: Vec<Row<'_>> = members
        .iter()
        .map(|(s, g)| Box::new(move |inc: &WienerIncrements| solve_mild(s, g, noise, inc, &cfg)) as Row<'_>)
        .collect();
    let results = coupled_rows(steps, noise, mc, spec0.p(), &reference, &rows)?;
    Ok(ExperimentReport::assemble("parameter", IndexKind::Theta, &spec0, noise, mc, theta_grid, results))
}

/// Moment bound `sup_t E|x(t)|^p` with `paths` and `2 paths` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AprioriReport {
    pub half: ErrorEstimate,
    pub full: ErrorEstimate,
    pub relative_change: f64,
}

impl AprioriReport {
    /// Finite and within 10% between the two sample sizes.
    pub fn stable(&self) -> bool {
        self.full.value.is_finite() && self.relative_change < 0.1
    }
}

/// Runs `2 mc.paths` paths of the model and compares the moment estimate
/// from the first half against the full sample.
pub fn apriori_bound_check(
    spec: &ModelSpec,
    generator: &SpectralModel,
    noise: &NoiseSpec,
    mc: &MonteCarlo,
) -> Result<AprioriReport> {
    if mc.paths == 0 {
        return Err(Error::invalid("path count must be >= 1"));
    }
    gate(spec)?;
    let cfg = mc.solver;
    let (_, steps, _) = grid_layout(spec, cfg.dt)?;
    let grid = uniform_grid(cfg.dt, steps);
    let pool = mc.pool()?;
    let total = 2 * mc.paths;
    let mut half = Moments::new(steps + 1);
    let mut full = Moments::new(steps + 1);
    let mut start = 0;
    while start < total {
        let end = (start + CHUNK).min(total);
        let chunk: Vec<Result<Vec<f64>>> = pool.install(|| {
            (start..end)
                .into_par_iter()
                .map(|j| {
                    let inc = sample_increments(noise, &grid, j as u64)?;
                    let x = solve_mild(spec, generator, noise, &inc, &cfg)?;
                    Ok(pointwise_norm(&x, spec.p()))
                })
                .collect()
        });
        for (off, d) in chunk.into_iter().enumerate() {
            let d = d?;
            if start + off < mc.paths {
                half.push(&d);
            }
            full.push(&d);
        }
        start = end;
    }
    let (half, full) = (half.estimate(cfg.dt), full.estimate(cfg.dt));
    let relative_change = if full.value == 0.0 && half.value == 0.0 {
        0.0
    } else {
        (full.value - half.value).abs() / full.value.abs().max(half.value.abs())
    };
    Ok(AprioriReport {
        half,
        full,
        relative_change,
    })
}
