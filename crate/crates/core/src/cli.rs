//! Command-line front end.
//!
//! Exit codes: `0` success, `1` configuration (including usage errors and
//! violated constants found by `probe`), `2` solver, `3` I/O.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{self, ConfigErrors, Overrides, RunConfig};
use crate::experiments::{
    drift_perturbation, parameter_family_experiment, trotter_kato_experiment, zeroth_order_experiment,
    ExperimentReport, RowOutcome,
};
use crate::approximants::GeneratorFamily;
use crate::model::lipschitz_probe;
use crate::solver::solve_mild;
use crate::stochastics::{sample_increments, uniform_grid};

#[derive(Debug, Parser)]
#[command(name = "neutral-spde", version, about = "Impulsive neutral SPDE simulation and convergence studies")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate path 0 and write its trajectory.
    Simulate(RunArgs),
    /// Generator approximation study over `family.indices`.
    Tk(RunArgs),
    /// Small-noise study over `zeroth.eps`.
    Zeroth(RunArgs),
    /// Parameter dependence study over `param.offsets`.
    Param(RunArgs),
    /// Check a configuration and list every problem.
    Validate(RunArgs),
    /// Sample the coefficients and compare with the declared constants.
    Probe(RunArgs),
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Simulate(a)
            | Command::Tk(a)
            | Command::Zeroth(a)
            | Command::Param(a)
            | Command::Validate(a)
            | Command::Probe(a) => a,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Tk(_) => "tk",
            Command::Zeroth(_) => "zeroth",
            Command::Param(_) => "param",
            Command::Validate(_) => "validate",
            Command::Probe(_) => "probe",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overwrite outputs written under a different configuration.
    #[arg(long)]
    pub force: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            paths: self.paths,
            out: self.out.clone(),
            workers: self.workers,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config:\n{0}")]
    Config(ConfigErrors),
    #[error("{stage}: {message}")]
    Checks { stage: &'static str, message: String },
    #[error("solver: {0}")]
    Solver(#[from] crate::Error),
    #[error("{stage}: {message}")]
    SolverRows { stage: &'static str, message: String },
    #[error("io: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("io: {0} was written by a different configuration; pass --force to overwrite")]
    Overwrite(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Checks { .. } => 1,
            CliError::Solver(_) | CliError::SolverRows { .. } => 2,
            CliError::Io { .. } | CliError::Overwrite(_) => 3,
        }
    }
}

/// Files produced by one command.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<(PathBuf, String)>,
    pub summary: String,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("{} failed: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

/// Runs a command and writes its outputs; returns a printable summary.
pub fn execute(cmd: &Command) -> Result<String, CliError> {
    let args = cmd.args();
    let cfg = config::load(&args.config, &args.overrides()).map_err(CliError::Config)?;
    if let Command::Validate(_) = cmd {
        return Ok(format!("ok {} {}\n", args.config.display(), cfg.hash()));
    }
    let (out, pending) = produce(cmd, &cfg);
    let out = out?;
    write_all(&cfg.output_dir, &cfg.hash(), &out.files, args.force)?;
    let mut summary = out.summary;
    for (name, _) in &out.files {
        summary.push_str(&format!("wrote {}\n", cfg.output_dir.join(name).display()));
    }
    match pending {
        Some(e) => {
            eprint!("{summary}");
            Err(e)
        }
        None => Ok(summary),
    }
}

/// Builds the outputs; the second value is an error to report after the
/// files are written (failed rows, violated constants).
fn produce(cmd: &Command, cfg: &RunConfig) -> (Result<Outputs, CliError>, Option<CliError>) {
    let hash = cfg.hash();
    let result = (|| {
        let spec = cfg.model()?;
        let noise = cfg.noise();
        let mc = cfg.monte_carlo();
        let report = match cmd {
            Command::Simulate(_) => {
                let steps = (cfg.horizon / cfg.dt).round() as usize;
                let inc = sample_increments(&noise, &uniform_grid(cfg.dt, steps), 0)?;
                let traj = solve_mild(&spec, spec.space(), &noise, &inc, &cfg.solver())?;
                let body = format!("# config_hash={hash}\n{}", traj.to_csv());
                return Ok((
                    Outputs {
                        files: vec![(PathBuf::from("trajectory.csv"), body)],
                        summary: format!("x(T) norm {}\n", traj.final_value().norm()),
                    },
                    None,
                ));
            }
            Command::Probe(_) => {
                let rep = lipschitz_probe(&spec, &noise, cfg.probe_samples, cfg.seed)?;
                let body = format!("# config_hash={hash}\n{}", rep.to_csv());
                let bad: Vec<String> = rep
                    .violations()
                    .iter()
                    .map(|l| format!("{} declared {} observed {}", l.quantity, l.declared, l.observed))
                    .collect();
                let pending = (!bad.is_empty()).then(|| CliError::Checks {
                    stage: "probe",
                    message: format!("declared constants violated: {}", bad.join("; ")),
                });
                return Ok((
                    Outputs {
                        files: vec![(PathBuf::from("probe.csv"), body)],
                        summary: format!("probe: {} samples, {} violations\n", rep.samples, bad.len()),
                    },
                    pending,
                ));
            }
            Command::Tk(_) => ("tk", trotter_kato_experiment(&spec, &cfg.family(), &cfg.family_indices, &noise, &mc)?),
            Command::Zeroth(_) => {
                let shift = cfg.zeroth_shifted.then(|| GeneratorFamily::shifted(cfg.space()));
                ("zeroth", zeroth_order_experiment(&spec, shift.as_ref(), &cfg.zeroth_eps, &noise, &mc)?)
            }
            Command::Param(_) => {
                let fam = drift_perturbation(&spec, spec.space(), cfg.param_direction.build(), cfg.theta0);
                ("param", parameter_family_experiment(&fam, &cfg.theta_grid(), cfg.theta0, &noise, &mc)?)
            }
            Command::Validate(_) => unreachable!("handled before producing outputs"),
        };
        Ok::<_, crate::Error>(report_outputs(report.0, report.1.with_config_hash(hash.clone())))
    })();
    match result {
        Ok((o, pending)) => (Ok(o), pending),
        Err(e) => (Err(CliError::Solver(e)), None),
    }
}

fn report_outputs(stem: &'static str, rep: ExperimentReport) -> (Outputs, Option<CliError>) {
    let mut summary = String::new();
    let mut failed = Vec::new();
    for r in &rep.rows {
        match &r.outcome {
            RowOutcome::Estimate(e) => summary.push_str(&format!(
                "{} = {}: {} +- {}\n",
                rep.index_kind.name(),
                r.index_value,
                e.value,
                e.stderr
            )),
            RowOutcome::Failed { failure } => {
                summary.push_str(&format!("{} = {}: failed\n", rep.index_kind.name(), r.index_value));
                failed.push(format!("{} = {}: {failure}", rep.index_kind.name(), r.index_value));
            }
        }
    }
    let files = vec![
        (PathBuf::from(format!("{stem}.csv")), rep.to_csv()),
        (PathBuf::from(format!("{stem}.json")), rep.to_json()),
        (PathBuf::from(format!("{stem}.dat")), rep.to_plot_data()),
    ];
    let pending = (!failed.is_empty()).then(|| CliError::SolverRows {
        stage: stem,
        message: format!("rows failed: {}", failed.join("; ")),
    });
    (Outputs { files, summary }, pending)
}

/// Writes every file after checking that none of them belongs to another
/// configuration.
fn write_all(dir: &Path, hash: &str, files: &[(PathBuf, String)], force: bool) -> Result<(), CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    for (name, _) in files {
        let path = dir.join(name);
        if path.exists() && !force {
            let existing = fs::read_to_string(&path).map_err(io(&path))?;
            if !existing.contains(hash) {
                return Err(CliError::Overwrite(path));
            }
        }
    }
    fs::create_dir_all(dir).map_err(io(dir))?;
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(())
}
