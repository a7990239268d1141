//! Experiment runs: solve instances with several methods and write the
//! summary, per-method traces and an instance echo.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use benders_lab_core::{solve, Config, Method, Report};

use crate::instance::{GeneratorSpec, Instance};

/// Environment variable capping subproblem worker threads.
pub const THREADS_ENV: &str = "BENDERS_LAB_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEntry {
    /// Instance file, relative paths resolved against the config file.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub generate: Option<GeneratorSpec>,
    /// Row label in the summary; defaults to the file stem or generator name.
    #[serde(default)]
    pub name: Option<String>,
    /// Known optimum; switches the trace gap to `(OPT − z_L)/|OPT|`.
    #[serde(default)]
    pub reference_objective: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instances: Vec<InstanceEntry>,
    pub methods: Vec<Method>,
    #[serde(default = "default_tol")]
    pub tol_gap: f64,
    #[serde(default)]
    pub tol_cut: Option<f64>,
    #[serde(default = "default_tol")]
    pub refine_tol: f64,
    /// Seconds per method run.
    #[serde(default)]
    pub time_limit: Option<f64>,
    #[serde(default)]
    pub iteration_limit: Option<usize>,
    #[serde(default)]
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
}

fn default_tol() -> f64 {
    1e-6
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for e in &mut cfg.instances {
            if let Some(p) = &mut e.path {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail!("methods: at least one method is required");
        }
        if self.instances.is_empty() {
            bail!("instances: at least one instance is required");
        }
        for (i, e) in self.instances.iter().enumerate() {
            if e.path.is_some() == e.generate.is_some() {
                bail!("instances[{i}]: give exactly one of `path` and `generate`");
            }
        }
        if !(self.tol_gap > 0.0) {
            bail!("tol_gap: must be positive");
        }
        if !(self.refine_tol > 0.0) {
            bail!("refine_tol: must be positive");
        }
        if self.tol_cut.is_some_and(|t| !(t > 0.0)) {
            bail!("tol_cut: must be positive");
        }
        if self.time_limit.is_some_and(|t| !(t > 0.0)) {
            bail!("time_limit: must be positive");
        }
        if self.iteration_limit == Some(0) {
            bail!("iteration_limit: must be positive");
        }
        if self.threads == Some(0) {
            bail!("threads: must be positive");
        }
        Ok(())
    }
}

/// Solver settings shared by `solve` and `compare`.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSettings {
    pub tol_gap: f64,
    pub tol_cut: Option<f64>,
    pub refine_tol: f64,
    pub time_limit: Option<f64>,
    pub iteration_limit: Option<usize>,
    pub threads: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            tol_gap: 1e-6,
            tol_cut: None,
            refine_tol: 1e-6,
            time_limit: None,
            iteration_limit: None,
            threads: 1,
        }
    }
}

impl RunSettings {
    pub fn solver_config(&self) -> Config {
        Config {
            tol_gap: self.tol_gap,
            tol_cut: self.tol_cut.unwrap_or(Config::default().tol_cut),
            refine_tol: self.refine_tol,
            time_limit: self.time_limit.map(Duration::from_secs_f64),
            iteration_limit: self.iteration_limit,
            threads: effective_threads(self.threads),
            ..Config::default()
        }
    }
}

/// `requested` capped by [`THREADS_ENV`] when it is set.
pub fn effective_threads(requested: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    match cap {
        Some(c) if c >= 1 => requested.min(c).max(1),
        _ => requested.max(1),
    }
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub instance: String,
    pub method: String,
    pub status: String,
    pub objective: f64,
    pub z_lower: f64,
    pub z_upper: f64,
    pub wall_seconds: f64,
    pub iterations: usize,
    pub optimality_cuts: usize,
    pub feasibility_cuts: usize,
    pub refinements: usize,
    pub final_partition_size: usize,
}

impl SummaryRow {
    pub fn from_report(instance: &str, r: &Report) -> Self {
        Self {
            instance: instance.to_string(),
            method: r.method.to_string(),
            status: r.status.to_string(),
            objective: r.objective,
            z_lower: r.lower_bound,
            z_upper: r.upper_bound,
            wall_seconds: r.wall_seconds,
            iterations: r.iterations,
            optimality_cuts: r.optimality_cuts,
            feasibility_cuts: r.feasibility_cuts,
            refinements: r.refinements,
            final_partition_size: r.final_partition_size(),
        }
    }

    fn failed(instance: &str, method: Method) -> Self {
        Self {
            instance: instance.to_string(),
            method: method.to_string(),
            status: "error".into(),
            objective: f64::NAN,
            z_lower: f64::NAN,
            z_upper: f64::NAN,
            wall_seconds: 0.0,
            iterations: 0,
            optimality_cuts: 0,
            feasibility_cuts: 0,
            refinements: 0,
            final_partition_size: 0,
        }
    }
}

#[derive(Serialize)]
struct TraceRow {
    elapsed_seconds: f64,
    #[serde(rename = "z_L")]
    z_lower: f64,
    #[serde(rename = "z_U")]
    z_upper: f64,
    gap: f64,
    partition_size: usize,
    cumulative_cuts: usize,
}

/// `(OPT − z_L)/|OPT|` against a reference optimum, else
/// `(z_U − z_L)/(1 + |z_U|)`.
pub fn trace_gap(z_lower: f64, z_upper: f64, reference: Option<f64>) -> f64 {
    let bound = if reference.is_some() {
        z_lower
    } else {
        z_upper - z_lower
    };
    if bound.is_infinite() {
        return f64::INFINITY;
    }
    match reference {
        Some(opt) if opt != 0.0 => (opt - z_lower) / opt.abs(),
        Some(opt) => opt - z_lower,
        None => (z_upper - z_lower) / (1.0 + z_upper.abs()),
    }
}

pub fn write_trace(path: &Path, report: &Report, reference: Option<f64>) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for p in &report.trace {
        w.serialize(TraceRow {
            elapsed_seconds: p.elapsed_seconds,
            z_lower: p.z_lower,
            z_upper: p.z_upper,
            gap: trace_gap(p.z_lower, p.z_upper, reference),
            partition_size: p.partition_size,
            cumulative_cuts: p.cumulative_cuts,
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Solves `instance` with every method in turn, writing `trace_<method>.csv`
/// and `instance.json` into `dir`. Method failures become `error` rows.
pub fn run_instance(
    name: &str,
    instance: &Instance,
    methods: &[Method],
    settings: &RunSettings,
    reference: Option<f64>,
    dir: Option<&Path>,
) -> Result<(Vec<SummaryRow>, Vec<Option<Report>>)> {
    instance
        .validate()
        .with_context(|| format!("instance {name}"))?;
    let built = instance.build()?;
    if let Some(dir) = dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        instance.save(&dir.join("instance.json"))?;
    }
    let cfg = settings.solver_config();
    let mut rows = Vec::with_capacity(methods.len());
    let mut reports = Vec::with_capacity(methods.len());
    for &m in methods {
        match solve(m, &built.problem, &built.extractor, &cfg) {
            Ok(report) => {
                info!(
                    "{name} {m}: {} objective {} in {:.3}s",
                    report.status, report.objective, report.wall_seconds
                );
                if let Some(dir) = dir {
                    write_trace(&dir.join(format!("trace_{m}.csv")), &report, reference)?;
                }
                rows.push(SummaryRow::from_report(name, &report));
                reports.push(Some(report));
            }
            Err(e) => {
                warn!("{name} {m}: {e}");
                rows.push(SummaryRow::failed(name, m));
                reports.push(None);
            }
        }
    }
    Ok((rows, reports))
}

/// Runs every instance of `config` and writes `summary.csv`. With one
/// instance its traces go straight into the output directory, otherwise
/// into one subdirectory per instance.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<SummaryRow>> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let settings = RunSettings {
        tol_gap: config.tol_gap,
        tol_cut: config.tol_cut,
        refine_tol: config.refine_tol,
        time_limit: config.time_limit,
        iteration_limit: config.iteration_limit,
        threads: config.threads.unwrap_or(1),
    };
    let single = config.instances.len() == 1;
    let mut all = Vec::new();
    for entry in &config.instances {
        let (name, instance) = match (&entry.path, &entry.generate) {
            (Some(p), _) => {
                let stem = p
                    .file_stem()
                    .map_or("instance".into(), |s| s.to_string_lossy().into_owned());
                (entry.name.clone().unwrap_or(stem), Instance::load(p)?)
            }
            (None, Some(spec)) => (
                entry.name.clone().unwrap_or_else(|| spec.name()),
                spec.generate()?,
            ),
            (None, None) => unreachable!("validated"),
        };
        let dir = if single {
            config.output_dir.clone()
        } else {
            config.output_dir.join(&name)
        };
        let (rows, _) = run_instance(
            &name,
            &instance,
            &config.methods,
            &settings,
            entry.reference_objective,
            Some(&dir),
        )?;
        all.extend(rows);
        write_summary(&config.output_dir.join("summary.csv"), &all)?;
    }
    Ok(all)
}
