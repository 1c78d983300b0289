//! TOML run configuration.
//!
//! Parsing walks the document by hand so that every problem is reported
//! with its key path in one pass, instead of stopping at the first one.
//! The schema is documented in `configs/reference.toml`.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::approximants::{FamilyKind, GeneratorFamily};
use crate::experiments::MonteCarlo;
use crate::model::{
    grid_steps, wellposedness_check, CoefficientSet, Constants, DiffusionField, GateOutcome, ImpulseMap,
    ImpulseSchedule, InitialPath, Matrix, ModelSpec, VectorField,
};
use crate::solver::SolverConfig;
use crate::spectral::SpectralModel;
use crate::stochastics::NoiseSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl ConfigErrors {
    pub fn keys(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.key.as_str()).collect()
    }

    pub fn find(&self, key: &str) -> Option<&ConfigError> {
        self.0.iter().find(|e| e.key == key)
    }
}

/// Declarative form of a builtin vector field.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldDecl {
    Zero,
    Constant { value: Vec<f64> },
    Linear { current: Vec<Vec<f64>>, delayed: Option<Vec<Vec<f64>>> },
    Bounded { scale: f64, delayed_scale: f64 },
}

impl FieldDecl {
    pub fn build(&self) -> VectorField {
        match self {
            FieldDecl::Zero => VectorField::Zero,
            FieldDecl::Constant { value } => VectorField::Constant(value.clone().into()),
            FieldDecl::Linear { current, delayed } => VectorField::Linear {
                current: Matrix::from_rows(current.clone()).expect("validated square matrix"),
                delayed: delayed
                    .as_ref()
                    .map(|d| Matrix::from_rows(d.clone()).expect("validated square matrix")),
            },
            FieldDecl::Bounded { scale, delayed_scale } => VectorField::BoundedNonlinear {
                scale: *scale,
                delayed_scale: *delayed_scale,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DiffusionDecl {
    Zero,
    Additive { sigma: f64 },
    Diagonal { additive: f64, sigma: f64 },
}

impl DiffusionDecl {
    pub fn build(&self) -> DiffusionField {
        match *self {
            DiffusionDecl::Zero => DiffusionField::Zero,
            DiffusionDecl::Additive { sigma } => DiffusionField::additive(sigma),
            DiffusionDecl::Diagonal { additive, sigma } => DiffusionField::Diagonal { additive, sigma },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpulseForm {
    Linear,
    Saturating,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpulseDecl {
    pub times: Vec<f64>,
    pub form: ImpulseForm,
    pub scale: Vec<f64>,
    pub h0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub label: String,
    pub mu: Vec<f64>,
    pub alpha: f64,
    pub constants: Option<[f64; 5]>,
    pub drift: FieldDecl,
    pub neutral: FieldDecl,
    pub diffusion: DiffusionDecl,
    pub impulses: ImpulseDecl,
    pub phi: Vec<f64>,
    pub delay: f64,
    pub q_eigs: Vec<f64>,
    pub seed: u64,
    pub paths: usize,
    pub p: f64,
    pub horizon: f64,
    pub dt: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub family_kind: String,
    pub family_indices: Vec<f64>,
    pub zeroth_eps: Vec<f64>,
    pub zeroth_shifted: bool,
    pub theta0: f64,
    pub param_offsets: Vec<f64>,
    pub param_direction: FieldDecl,
    pub probe_samples: usize,
    #[serde(skip)]
    pub output_dir: PathBuf,
    #[serde(skip)]
    pub workers: usize,
}

/// Command-line values that replace configured ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    /// sha256 of the effective configuration; output location and worker
    /// count are not part of it.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canon.as_bytes()))
    }

    pub fn space(&self) -> SpectralModel {
        SpectralModel::new(self.mu.clone(), self.label.clone()).expect("validated spectrum")
    }

    pub fn noise(&self) -> NoiseSpec {
        NoiseSpec::new(self.q_eigs.clone(), self.seed).expect("validated noise")
    }

    pub fn solver(&self) -> SolverConfig {
        SolverConfig {
            dt: self.dt,
            picard_tol: self.picard_tol,
            picard_max_iter: self.picard_max_iter,
        }
    }

    pub fn monte_carlo(&self) -> MonteCarlo {
        MonteCarlo::new(self.paths, self.solver()).with_workers(self.workers)
    }

    pub fn family(&self) -> GeneratorFamily {
        let kind = FamilyKind::parse(&self.family_kind).expect("validated family kind");
        GeneratorFamily::new(self.space(), kind)
    }

    pub fn theta_grid(&self) -> Vec<f64> {
        self.param_offsets.iter().map(|d| self.theta0 + d).collect()
    }

    fn coefficients(&self) -> CoefficientSet {
        let mut c = CoefficientSet {
            drift: self.drift.build(),
            neutral: self.neutral.build(),
            diffusion: self.diffusion.build(),
            constants: Constants::default(),
            alpha: self.alpha,
        };
        c.constants = match self.constants {
            Some([c1, c2, c3, c4, c5]) => Constants { c1, c2, c3, c4, c5 },
            None => c
                .derived_constants(self.p, self.mu.len(), &self.noise())
                .expect("builtin coefficients have closed-form constants"),
        };
        c
    }

    fn impulse_schedule(&self) -> crate::Result<ImpulseSchedule> {
        let maps = self
            .impulses
            .scale
            .iter()
            .map(|&h| match self.impulses.form {
                ImpulseForm::Linear => ImpulseMap::Linear(h),
                ImpulseForm::Saturating => ImpulseMap::Saturating(h),
            })
            .collect();
        let sched = ImpulseSchedule::new(self.impulses.times.clone(), maps)?;
        let h = sched.h().to_vec();
        sched.with_constants(h, self.impulses.h0)
    }

    pub fn model(&self) -> crate::Result<ModelSpec> {
        ModelSpec::new(
            self.space(),
            self.coefficients(),
            self.impulse_schedule()?,
            InitialPath::Constant(self.phi.clone().into()),
            self.delay,
            self.p,
            self.horizon,
        )
    }
}

/// Reads, parses and validates a configuration file.
pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
            ConfigErrors(vec![ConfigError {
                key: path.display().to_string(),
                message: format!("cannot read config: {e}"),
            }])
        })?;
    parse(&text, overrides)
}

/// Parses and validates configuration text.
pub fn parse(text: &str, overrides: &Overrides) -> Result<RunConfig, ConfigErrors> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| {
        ConfigErrors(vec![ConfigError {
            key: "syntax".into(),
            message: e.message().to_string(),
        }])
    })?;
    let mut w = Walker::default();
    let cfg = w.run_config(&doc, overrides);
    match cfg {
        Some(cfg) if w.errors.is_empty() => {
            w.semantics(&cfg);
            if w.errors.is_empty() {
                Ok(cfg)
            } else {
                Err(ConfigErrors(w.errors))
            }
        }
        _ => Err(ConfigErrors(w.errors)),
    }
}

#[derive(Default)]
struct Walker {
    errors: Vec<ConfigError>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

impl Walker {
    fn err(&mut self, key: impl Into<String>, message: impl Into<String>) {
        self.errors.push(ConfigError {
            key: key.into(),
            message: message.into(),
        });
    }

    fn allow(&mut self, t: &Table, path: &str, allowed: &[&str]) {
        for k in t.keys() {
            if !allowed.contains(&k.as_str()) {
                self.err(join(path, k), "unknown key");
            }
        }
    }

    fn table<'a>(&mut self, t: &'a Table, path: &str, key: &str, required: bool) -> Option<&'a Table> {
        match t.get(key) {
            Some(Value::Table(s)) => Some(s),
            Some(_) => {
                self.err(join(path, key), "expected a table");
                None
            }
            None => {
                if required {
                    self.err(join(path, key), "missing section");
                }
                None
            }
        }
    }

    fn number(&mut self, v: &Value, key: &str) -> Option<f64> {
        match v {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                self.err(key, "expected a number");
                None
            }
        }
    }

    fn f64(&mut self, t: &Table, path: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let full = join(path, key);
        match t.get(key) {
            Some(v) => self.number(v, &full),
            None if default.is_some() => default,
            None => {
                self.err(full, "missing key");
                None
            }
        }
    }

    fn uint(&mut self, t: &Table, path: &str, key: &str, default: Option<u64>) -> Option<u64> {
        let full = join(path, key);
        match t.get(key) {
            Some(Value::Integer(i)) if *i >= 0 => Some(*i as u64),
            Some(_) => {
                self.err(full, "expected a nonnegative integer");
                None
            }
            None if default.is_some() => default,
            None => {
                self.err(full, "missing key");
                None
            }
        }
    }

    fn list(&mut self, t: &Table, path: &str, key: &str, default: Option<Vec<f64>>) -> Option<Vec<f64>> {
        let full = join(path, key);
        match t.get(key) {
            Some(Value::Array(a)) => {
                let before = self.errors.len();
                let out: Vec<f64> = a
                    .iter()
                    .enumerate()
                    .filter_map(|(i, v)| self.number(v, &format!("{full}[{i}]")))
                    .collect();
                (self.errors.len() == before).then_some(out)
            }
            Some(v) => self.number(v, &full).map(|x| vec![x]),
            None if default.is_some() => default,
            None => {
                self.err(full, "missing key");
                None
            }
        }
    }

    fn matrix(&mut self, v: &Value, key: &str, n: usize) -> Option<Vec<Vec<f64>>> {
        let rows = match v {
            Value::Array(a) => a,
            _ => {
                self.err(key, "expected an array of rows");
                return None;
            }
        };
        let before = self.errors.len();
        let m: Vec<Vec<f64>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r {
                Value::Array(r) => r.iter().filter_map(|x| self.number(x, &format!("{key}[{i}]"))).collect(),
                _ => {
                    self.err(format!("{key}[{i}]"), "expected a row");
                    Vec::new()
                }
            })
            .collect();
        if self.errors.len() != before {
            return None;
        }
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            self.err(key, format!("expected a {n} x {n} matrix"));
            return None;
        }
        Some(m)
    }

    fn string<'a>(&mut self, t: &'a Table, path: &str, key: &str) -> Option<&'a str> {
        match t.get(key) {
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                self.err(join(path, key), "expected a string");
                None
            }
            None => None,
        }
    }

    fn field(&mut self, t: Option<&Table>, path: &str, n: usize) -> Option<FieldDecl> {
        let Some(t) = t else {
            return Some(FieldDecl::Zero);
        };
        let kind = self.string(t, path, "kind").unwrap_or("zero");
        match kind {
            "zero" => {
                self.allow(t, path, &["kind"]);
                Some(FieldDecl::Zero)
            }
            "constant" => {
                self.allow(t, path, &["kind", "value"]);
                let value = self.list(t, path, "value", None)?;
                if value.len() != n {
                    self.err(join(path, "value"), format!("expected {n} entries, found {}", value.len()));
                    return None;
                }
                Some(FieldDecl::Constant { value })
            }
            "linear" => {
                self.allow(t, path, &["kind", "current", "delayed"]);
                let current = match t.get("current") {
                    Some(v) => self.matrix(v, &join(path, "current"), n),
                    None => {
                        self.err(join(path, "current"), "missing key");
                        None
                    }
                };
                let delayed = match t.get("delayed") {
                    Some(v) => Some(self.matrix(v, &join(path, "delayed"), n)?),
                    None => None,
                };
                Some(FieldDecl::Linear { current: current?, delayed })
            }
            "bounded" => {
                self.allow(t, path, &["kind", "scale", "delayed_scale"]);
                let scale = self.f64(t, path, "scale", None);
                let delayed_scale = self.f64(t, path, "delayed_scale", Some(0.0));
                Some(FieldDecl::Bounded {
                    scale: scale?,
                    delayed_scale: delayed_scale?,
                })
            }
            other => {
                self.err(join(path, "kind"), format!("unknown field kind {other:?} (zero, constant, linear, bounded)"));
                None
            }
        }
    }

    fn diffusion(&mut self, t: Option<&Table>, path: &str) -> Option<DiffusionDecl> {
        let Some(t) = t else {
            return Some(DiffusionDecl::Zero);
        };
        match self.string(t, path, "kind").unwrap_or("zero") {
            "zero" => {
                self.allow(t, path, &["kind"]);
                Some(DiffusionDecl::Zero)
            }
            "additive" => {
                self.allow(t, path, &["kind", "sigma"]);
                Some(DiffusionDecl::Additive {
                    sigma: self.f64(t, path, "sigma", None)?,
                })
            }
            "diagonal" => {
                self.allow(t, path, &["kind", "additive", "sigma"]);
                let additive = self.f64(t, path, "additive", Some(0.0));
                let sigma = self.f64(t, path, "sigma", Some(0.0));
                Some(DiffusionDecl::Diagonal {
                    additive: additive?,
                    sigma: sigma?,
                })
            }
            other => {
                self.err(join(path, "kind"), format!("unknown diffusion kind {other:?} (zero, additive, diagonal)"));
                None
            }
        }
    }

    fn run_config(&mut self, doc: &Table, ov: &Overrides) -> Option<RunConfig> {
        let sections = [
            "model", "coeffs", "impulses", "initial", "delay", "noise", "sim", "family", "zeroth", "param", "probe",
            "output", "run",
        ];
        self.allow(doc, "", &sections);
        let empty = Table::new();

        let model = self.table(doc, "", "model", true).unwrap_or(&empty);
        self.allow(model, "model", &["label", "mu", "laplacian_modes"]);
        let label = self.string(model, "model", "label").unwrap_or("model").to_string();
        let mu = match (model.get("mu"), model.get("laplacian_modes")) {
            (Some(_), Some(_)) => {
                self.err("model", "give either mu or laplacian_modes, not both");
                None
            }
            (Some(_), None) => self.list(model, "model", "mu", None),
            (None, Some(_)) => self
                .uint(model, "model", "laplacian_modes", None)
                .map(|n| (1..=n).map(|k| (k * k) as f64).collect()),
            (None, None) => {
                self.err("model.mu", "missing key (or model.laplacian_modes)");
                None
            }
        };
        if let Some(mu) = &mu {
            if let Err(e) = SpectralModel::new(mu.clone(), label.clone()) {
                self.err("model.mu", e.to_string());
            }
        }
        let n = mu.as_ref().map_or(0, Vec::len);

        let coeffs = self.table(doc, "", "coeffs", true).unwrap_or(&empty);
        self.allow(coeffs, "coeffs", &["alpha", "constants", "drift", "neutral", "diffusion"]);
        let alpha = self.f64(coeffs, "coeffs", "alpha", None);
        let constants = match self.table(coeffs, "coeffs", "constants", false) {
            Some(c) => {
                self.allow(c, "coeffs.constants", &["c1", "c2", "c3", "c4", "c5"]);
                let vals: Vec<Option<f64>> = ["c1", "c2", "c3", "c4", "c5"]
                    .iter()
                    .map(|k| self.f64(c, "coeffs.constants", k, None))
                    .collect();
                let vals: Option<Vec<f64>> = vals.into_iter().collect();
                vals.map(|v| Some([v[0], v[1], v[2], v[3], v[4]]))
            }
            None => Some(None),
        };
        let dt = self.table(coeffs, "coeffs", "drift", false);
        let drift = self.field(dt, "coeffs.drift", n);
        let nt = self.table(coeffs, "coeffs", "neutral", false);
        let neutral = self.field(nt, "coeffs.neutral", n);
        let bt = self.table(coeffs, "coeffs", "diffusion", false);
        let diffusion = self.diffusion(bt, "coeffs.diffusion");

        let imp = self.table(doc, "", "impulses", false).unwrap_or(&empty);
        self.allow(imp, "impulses", &["times", "form", "scale", "h0"]);
        let times = self.list(imp, "impulses", "times", Some(Vec::new()));
        let form = match self.string(imp, "impulses", "form").unwrap_or("linear") {
            "linear" => Some(ImpulseForm::Linear),
            "saturating" => Some(ImpulseForm::Saturating),
            other => {
                self.err("impulses.form", format!("unknown impulse form {other:?} (linear, saturating)"));
                None
            }
        };
        let scale = self.list(imp, "impulses", "scale", Some(Vec::new()));
        let h0 = self.f64(imp, "impulses", "h0", Some(0.0));
        let scale = match (&times, scale) {
            (Some(t), Some(s)) if s.len() == 1 && t.len() > 1 => Some(vec![s[0]; t.len()]),
            (Some(t), Some(s)) if s.len() != t.len() => {
                self.err("impulses.scale", format!("expected 1 or {} entries, found {}", t.len(), s.len()));
                None
            }
            (_, s) => s,
        };

        let init = self.table(doc, "", "initial", true).unwrap_or(&empty);
        self.allow(init, "initial", &["phi"]);
        let phi = self.list(init, "initial", "phi", None);
        if let Some(phi) = &phi {
            if n > 0 && phi.len() != n {
                self.err("initial.phi", format!("expected {n} entries, found {}", phi.len()));
            }
        }

        let delay_t = self.table(doc, "", "delay", false).unwrap_or(&empty);
        self.allow(delay_t, "delay", &["r"]);
        let delay = self.f64(delay_t, "delay", "r", Some(0.0));

        let noise = self.table(doc, "", "noise", true).unwrap_or(&empty);
        self.allow(noise, "noise", &["q_eigs", "seed", "paths"]);
        let q_eigs = self.list(noise, "noise", "q_eigs", None);
        if let Some(q) = &q_eigs {
            if let Err(e) = NoiseSpec::new(q.clone(), 0) {
                self.err("noise.q_eigs", e.to_string());
            }
        }
        let seed = self.uint(noise, "noise", "seed", Some(0));
        let paths = self.uint(noise, "noise", "paths", Some(200));

        let sim = self.table(doc, "", "sim", true).unwrap_or(&empty);
        self.allow(sim, "sim", &["p", "T", "dt", "picard_tol", "picard_max_iter"]);
        let p = self.f64(sim, "sim", "p", Some(2.0));
        let horizon = self.f64(sim, "sim", "T", None);
        let step = self.f64(sim, "sim", "dt", None);
        let picard_tol = self.f64(sim, "sim", "picard_tol", Some(1e-10));
        let picard_max_iter = self.uint(sim, "sim", "picard_max_iter", Some(50));

        let fam = self.table(doc, "", "family", false).unwrap_or(&empty);
        self.allow(fam, "family", &["kind", "indices"]);
        let family_kind = self.string(fam, "family", "kind").unwrap_or("yosida").to_string();
        if FamilyKind::parse(&family_kind).is_none() {
            self.err("family.kind", format!("unknown family {family_kind:?} (yosida, galerkin, shifted)"));
        }
        let family_indices = self.list(fam, "family", "indices", Some(vec![2.0, 8.0, 32.0, 128.0]));

        let zeroth = self.table(doc, "", "zeroth", false).unwrap_or(&empty);
        self.allow(zeroth, "zeroth", &["eps", "shifted"]);
        let zeroth_eps = self.list(zeroth, "zeroth", "eps", Some(vec![0.4, 0.2, 0.1]));
        let zeroth_shifted = match zeroth.get("shifted") {
            Some(Value::Boolean(b)) => Some(*b),
            Some(_) => {
                self.err("zeroth.shifted", "expected a boolean");
                None
            }
            None => Some(false),
        };

        let param = self.table(doc, "", "param", false).unwrap_or(&empty);
        self.allow(param, "param", &["theta0", "offsets", "g"]);
        let theta0 = self.f64(param, "param", "theta0", Some(0.0));
        let param_offsets = self.list(param, "param", "offsets", Some(vec![0.4, 0.2, 0.1, 0.0]));
        let gt = self.table(param, "param", "g", false);
        let param_direction = match gt {
            Some(_) => self.field(gt, "param.g", n),
            None => Some(FieldDecl::Bounded {
                scale: 1.0,
                delayed_scale: 0.0,
            }),
        };

        let probe = self.table(doc, "", "probe", false).unwrap_or(&empty);
        self.allow(probe, "probe", &["samples"]);
        let probe_samples = self.uint(probe, "probe", "samples", Some(2000));

        let out = self.table(doc, "", "output", false).unwrap_or(&empty);
        self.allow(out, "output", &["dir"]);
        let output_dir = PathBuf::from(self.string(out, "output", "dir").unwrap_or("out"));

        let run = self.table(doc, "", "run", false).unwrap_or(&empty);
        self.allow(run, "run", &["workers"]);
        let workers = self.uint(run, "run", "workers", Some(0));

        Some(RunConfig {
            label,
            mu: mu?,
            alpha: alpha?,
            constants: constants?,
            drift: drift?,
            neutral: neutral?,
            diffusion: diffusion?,
            impulses: ImpulseDecl {
                times: times?,
                form: form?,
                scale: scale?,
                h0: h0?,
            },
            phi: phi?,
            delay: delay?,
            q_eigs: q_eigs?,
            seed: ov.seed.or(seed)?,
            paths: ov.paths.or(paths.map(|x| x as usize))?,
            p: p?,
            horizon: horizon?,
            dt: step?,
            picard_tol: picard_tol?,
            picard_max_iter: picard_max_iter? as usize,
            family_kind,
            family_indices: family_indices?,
            zeroth_eps: zeroth_eps?,
            zeroth_shifted: zeroth_shifted?,
            theta0: theta0?,
            param_offsets: param_offsets?,
            param_direction: param_direction?,
            probe_samples: probe_samples? as usize,
            output_dir: ov.out.clone().unwrap_or(output_dir),
            workers: ov.workers.or(workers.map(|x| x as usize))?,
        })
    }

    /// Checks that need the whole configuration.
    fn semantics(&mut self, c: &RunConfig) {
        if !(c.dt > 0.0 && c.dt.is_finite()) {
            self.err("sim.dt", format!("dt = {} must be > 0", c.dt));
        } else {
            if grid_steps(c.horizon, c.dt).is_none() {
                self.err("sim.T", format!("grid alignment: T = {} is not a multiple of dt = {}", c.horizon, c.dt));
            }
            if grid_steps(c.delay, c.dt).is_none() {
                self.err("delay.r", format!("grid alignment: r = {} is not a multiple of dt = {}", c.delay, c.dt));
            }
            for (k, &t) in c.impulses.times.iter().enumerate() {
                if grid_steps(t, c.dt).is_none() {
                    self.err(
                        format!("impulses.times[{k}]"),
                        format!("grid alignment: t_{} = {t} is not a multiple of dt = {}", k + 1, c.dt),
                    );
                }
            }
        }
        if c.p >= 2.0 && !(c.alpha > 1.0 / c.p && c.alpha <= 1.0) {
            self.err("coeffs.alpha", format!("alpha = {} must satisfy 1/p < alpha <= 1 with p = {}", c.alpha, c.p));
        }
        if c.paths == 0 {
            self.err("noise.paths", "path count must be >= 1");
        }
        if !(c.picard_tol > 0.0) {
            self.err("sim.picard_tol", "must be > 0");
        }
        if c.picard_max_iter == 0 {
            self.err("sim.picard_max_iter", "must be >= 1");
        }
        if c.impulses.h0 < 0.0 || c.impulses.scale.iter().any(|s| !s.is_finite()) {
            self.err("impulses", "impulse constants must be finite and h0 >= 0");
        }
        let fam = FamilyKind::parse(&c.family_kind).map(|k| GeneratorFamily::new(c.space(), k));
        if let Some(fam) = fam {
            for (i, &raw) in c.family_indices.iter().enumerate() {
                if let Err(e) = fam.index_from(raw).and_then(|ix| fam.member(ix)) {
                    self.err(format!("family.indices[{i}]"), e.to_string());
                }
            }
        }
        if c.zeroth_eps.iter().any(|&e| !(e >= 0.0 && e.is_finite())) {
            self.err("zeroth.eps", "eps values must be finite and >= 0");
        }
        match c.model() {
            Ok(spec) => {
                if let GateOutcome::Fail { reason, .. } = wellposedness_check(&spec, 1.0, 0.0) {
                    self.err("wellposedness", reason);
                }
            }
            Err(e) => self.err("model", e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        mu = [1.0]
        [coeffs]
        alpha = 0.75
        [coeffs.diffusion]
        kind = "additive"
        sigma = 1.0
        [initial]
        phi = [0.0]
        [noise]
        q_eigs = [1.0]
        [sim]
        T = 1.0
        dt = 0.01
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse(MINIMAL, &Overrides::default()).unwrap();
        assert_eq!(c.p, 2.0);
        assert_eq!(c.paths, 200);
        assert_eq!(c.family_indices, vec![2.0, 8.0, 32.0, 128.0]);
        assert_eq!(c.diffusion, DiffusionDecl::Additive { sigma: 1.0 });
        assert!(c.model().is_ok());
    }

    #[test]
    fn hash_tracks_effective_values_only() {
        let a = parse(MINIMAL, &Overrides::default()).unwrap();
        let b = parse(
            MINIMAL,
            &Overrides {
                workers: Some(4),
                out: Some("elsewhere".into()),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = parse(MINIMAL, &Overrides { seed: Some(9), ..Default::default() }).unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn all_errors_are_listed() {
        let bad = r#"
            [model]
            mu = [1.0, 4.0]
            colour = "red"
            [coeffs]
            alpha = 0.3
            [coeffs.drift]
            kind = "wavy"
            [initial]
            phi = [0.0]
            [noise]
            q_eigs = [1.0, -1.0]
            [sim]
            T = 1.0
        "#;
        let e = parse(bad, &Overrides::default()).unwrap_err();
        let keys = e.keys();
        for k in ["model.colour", "coeffs.drift.kind", "initial.phi", "noise.q_eigs", "sim.dt"] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
    }

    #[test]
    fn gate_violation_reports_value() {
        let text = format!("{MINIMAL}\n[impulses]\ntimes = [0.5]\nscale = [1.1]\n");
        let e = parse(&text, &Overrides::default()).unwrap_err();
        let g = e.find("wellposedness").expect("gate entry");
        assert!(g.message.contains("1.1"), "{}", g.message);
    }

    #[test]
    fn unaligned_impulse_is_reported() {
        let text = format!("{MINIMAL}\n[impulses]\ntimes = [0.333]\nscale = 0.1\n");
        let e = parse(&text, &Overrides::default()).unwrap_err();
        assert!(e.find("impulses.times[0]").unwrap().message.contains("grid alignment"));
    }

    #[test]
    fn alpha_side_condition() {
        let text = MINIMAL.replace("alpha = 0.75", "alpha = 0.5");
        let e = parse(&text, &Overrides::default()).unwrap_err();
        assert_eq!(e.keys(), vec!["coeffs.alpha"]);
    }

    #[test]
    fn syntax_errors_are_reported() {
        let e = parse("[model\nmu = 1", &Overrides::default()).unwrap_err();
        assert_eq!(e.keys(), vec!["syntax"]);
    }

    #[test]
    fn linear_matrices_are_checked() {
        let text = MINIMAL.replace(
            "[coeffs.diffusion]",
            "[coeffs.drift]\nkind = \"linear\"\ncurrent = [[0.5, 1.0]]\n[coeffs.diffusion]",
        );
        let e = parse(&text, &Overrides::default()).unwrap_err();
        assert_eq!(e.keys(), vec!["coeffs.drift.current"]);
    }
}
