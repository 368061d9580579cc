//! Command-line front end: argument parsing, run orchestration, manifests.
//!
//! Every run is described by a [`Job`], which is stored verbatim in the
//! manifest written next to the outputs. `replay` re-executes the job of a
//! manifest, so a run can be reproduced without its original arguments.

pub mod config;
pub mod io;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::averaging::{self, log_spaced, PhiProbes, StudyNorms};
use crate::error::Error;
use crate::fbm::{self, FbmMethod, HurstParam};
use crate::frac::{self, FracOrder};
use crate::grid::TimeGrid;
use crate::metrics::{holder_norm, holder_seminorm_full, lambda_norm, sup_norm, HolderExponent};
use crate::registry::{self, ModelEntry};
use crate::solver::{self, ProbeSpec, ValidationReport};

use config::{ConfigError, RunConfig};
use io::{num, sha256_hex, write_atomic};

/// Environment variable overriding the worker thread count.
pub const THREADS_ENV: &str = "FBM_AVG_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "fbm-avg", version, about = "Averaging of fBm-driven McKean-Vlasov SDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample fractional Brownian motion paths.
    Fbm(FbmArgs),
    /// Sup, Hölder and λ-weighted norms of a `t,value` path.
    Norms(NormsArgs),
    /// Fractional-calculus integral of f against g.
    Integrate(IntegrateArgs),
    /// Particle simulation of the oscillatory equation.
    Simulate(SimulateArgs),
    /// Convergence of the oscillatory solution to the averaged one as ε decreases.
    AverageStudy(StudyArgs),
    /// Empirical averaging-rate curve of the configured drift.
    Phi(ConfigArgs),
    /// Check a model's declared constants on probes.
    Validate(ValidateArgs),
    /// Re-run the job recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
struct FbmArgs {
    #[arg(long, default_value_t = 0.7)]
    hurst: f64,
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    #[arg(long, default_value_t = 256)]
    steps: usize,
    #[arg(long, default_value_t = 1)]
    paths: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = MethodArg::Circulant)]
    method: MethodArg,
    /// Output CSV; the manifest goes to `<out>.manifest.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum MethodArg {
    Cholesky,
    Circulant,
}

impl From<MethodArg> for FbmMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Cholesky => FbmMethod::Cholesky,
            MethodArg::Circulant => FbmMethod::Circulant,
        }
    }
}

#[derive(Debug, Args)]
struct NormsArgs {
    /// CSV with header `t,value`.
    input: PathBuf,
    #[arg(long, default_value_t = 0.55)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Also write the JSON result and a manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IntegrateArgs {
    f: PathBuf,
    g: PathBuf,
    #[arg(long, default_value_t = 0.4)]
    alpha: f64,
    /// Lower limit (default: start of the grid).
    #[arg(long)]
    a: Option<f64>,
    /// Upper limit (default: end of the grid).
    #[arg(long)]
    b: Option<f64>,
    /// Also compute the left-point Riemann-Stieltjes sum.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output prefix (default: `output_prefix` from the config).
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Also solve the averaged equation on the same noise.
    #[arg(long)]
    with_averaged: bool,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[command(flatten)]
    common: ConfigArgs,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Output location (default: the manifest's own).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare regenerated outputs with the recorded hashes instead of writing.
    #[arg(long)]
    verify: bool,
}

/// A fully resolved run: everything needed to regenerate its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
pub enum Job {
    Fbm { hurst: f64, t_end: f64, steps: usize, paths: usize, seed: u64, method: FbmMethod },
    Norms { input: PathBuf, input_sha256: String, gamma: f64, lambda: f64 },
    Integrate {
        f: PathBuf,
        f_sha256: String,
        g: PathBuf,
        g_sha256: String,
        alpha: f64,
        a: Option<f64>,
        b: Option<f64>,
        oracle: bool,
    },
    Simulate { config: RunConfig, with_averaged: bool },
    AverageStudy { config: RunConfig },
    Phi { config: RunConfig },
    Validate { config: RunConfig },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Lib(#[from] Error),
    #[error("{0}")]
    Input(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("assumption validation failed")]
    ValidationFailed,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Lib(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub passed: bool,
    pub violations: Vec<String>,
}

impl From<&ValidationReport> for ValidationSummary {
    fn from(r: &ValidationReport) -> Self {
        Self { passed: r.passed(), violations: r.violations().map(|c| c.name.clone()).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub role: String,
    /// Appended to the output stem to form the file name.
    pub suffix: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: Option<u64>,
    pub job: Job,
    pub validation: Option<ValidationSummary>,
    pub notes: Vec<String>,
    pub outputs: Vec<OutputRecord>,
}

pub fn manifest_path(stem: &Path) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn output_path(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

struct OutputFile {
    role: &'static str,
    suffix: &'static str,
    bytes: Vec<u8>,
}

#[derive(Default)]
struct Outcome {
    files: Vec<OutputFile>,
    stdout: Option<String>,
    validation: Option<ValidationSummary>,
    notes: Vec<String>,
    /// Non-zero when the run itself produced a failing verdict.
    status: i32,
}

fn json_text<S: Serialize>(value: &S) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn file_digest(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

fn check_digest(path: &Path, want: &str) -> Result<(), CliError> {
    let got = file_digest(path)?;
    if got != want {
        return Err(CliError::Input(format!("input {} changed since the manifest was written", path.display())));
    }
    Ok(())
}

fn model_for(cfg: &RunConfig) -> Result<ModelEntry<f64>, CliError> {
    let mut entry = registry::lookup::<f64>(&cfg.model)?;
    if let Some(window) = cfg.averaging_window {
        let nodes = ((window * 16.0).ceil() as usize).max(16);
        entry.drift = averaging::numeric_average_drift(&entry.drift, window, nodes)?;
    }
    Ok(entry)
}

fn validated_model(cfg: &RunConfig, out: &mut Outcome) -> Result<ModelEntry<f64>, CliError> {
    let entry = model_for(cfg)?;
    let report = solver::validate_assumptions(&entry.drift, &entry.diffusion, &ProbeSpec::default());
    out.validation = Some((&report).into());
    if !report.passed() && !cfg.force {
        report.into_result()?;
    }
    Ok(entry)
}

fn scheme_notes(cfg: &RunConfig, drift_nodes: usize) -> Vec<String> {
    vec![
        format!("law approximated by the empirical measure of {} particles", cfg.particles),
        format!("{} scheme with the measure frozen at the start of each step", cfg.scheme),
        format!("{drift_nodes} midpoint drift nodes per step"),
        format!("noise sampled by the {} method", cfg.method),
    ]
}

impl Job {
    pub fn config_hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("serializable"))
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Job::Fbm { seed, .. } => Some(*seed),
            Job::Simulate { config, .. }
            | Job::AverageStudy { config }
            | Job::Phi { config }
            | Job::Validate { config } => Some(config.seed),
            Job::Norms { .. } | Job::Integrate { .. } => None,
        }
    }

    fn execute(&self) -> Result<Outcome, CliError> {
        match self {
            Job::Fbm { hurst, t_end, steps, paths, seed, method } => {
                let grid = TimeGrid::new(*t_end, *steps)?;
                let batch = fbm::sample(*method, grid, HurstParam::new(*hurst)?, *paths, *seed)?;
                let csv = io::rows_csv("path_id,t,value", grid, batch.paths());
                Ok(Outcome {
                    files: vec![OutputFile { role: "paths", suffix: "", bytes: csv.into_bytes() }],
                    ..Default::default()
                })
            }
            Job::Norms { input, input_sha256, gamma, lambda } => {
                check_digest(input, input_sha256)?;
                let f = io::read_path_csv(input).map_err(CliError::Input)?;
                let g = HolderExponent::new(*gamma)?;
                let semi = holder_seminorm_full(&f, g);
                let result = serde_json::json!({
                    "sup": sup_norm(&f),
                    "seminorm": semi.value,
                    "seminorm_exact": semi.exact,
                    "holder": holder_norm(&f, g),
                    "lambda_norm": lambda_norm(&f, g, *lambda)?,
                });
                Ok(json_outcome(&result))
            }
            Job::Integrate { f, f_sha256, g, g_sha256, alpha, a, b, oracle } => {
                check_digest(f, f_sha256)?;
                check_digest(g, g_sha256)?;
                let fp = io::read_path_csv(f).map_err(CliError::Input)?;
                let gp = io::read_path_csv(g).map_err(CliError::Input)?;
                let lo = a.unwrap_or(0.0);
                let hi = b.unwrap_or(fp.grid().t_end());
                let zahle = frac::zahle_integral(&fp, &gp, FracOrder::new(*alpha)?, lo, hi)?;
                let (rs, diff) = if *oracle {
                    let rs = frac::rs_sum(&fp, &gp, lo, hi)?;
                    (Some(rs), Some(zahle - rs))
                } else {
                    (None, None)
                };
                Ok(json_outcome(&serde_json::json!({ "zahle": zahle, "rs": rs, "diff": diff })))
            }
            Job::Simulate { config, with_averaged } => {
                let mut out = Outcome::default();
                let entry = validated_model(config, &mut out)?;
                let cfg = config.solver_config()?;
                let noise = Arc::new(solver::sample_noise(&cfg)?);
                let traj = solver::solve_oscillatory(&cfg, &entry.drift, &entry.diffusion, Arc::clone(&noise))?;
                let csv = io::rows_csv("particle_id,t,value", cfg.grid, traj.particles());
                out.files.push(OutputFile { role: "trajectories", suffix: "_trajectories.csv", bytes: csv.into_bytes() });
                if *with_averaged {
                    let avg = solver::solve_averaged(&cfg, &entry.drift, &entry.diffusion, noise)?;
                    let csv = io::rows_csv("particle_id,t,value", cfg.grid, avg.particles());
                    out.files.push(OutputFile { role: "averaged", suffix: "_averaged.csv", bytes: csv.into_bytes() });
                }
                out.notes = scheme_notes(config, cfg.drift_nodes(&entry.drift));
                Ok(out)
            }
            Job::AverageStudy { config } => {
                let mut out = Outcome::default();
                let entry = validated_model(config, &mut out)?;
                let cfg = config.solver_config()?;
                let norms = StudyNorms { gamma: HolderExponent::new(config.gamma)?, lambda: config.lambda };
                let report = averaging::convergence_study(
                    &solver::SolverConfig { force: true, ..cfg },
                    &entry.drift,
                    &entry.diffusion,
                    &config.epsilons,
                    config.replicates,
                    norms,
                )?;
                let mut summary = String::from(
                    "epsilon,err_sup_sq_mean,err_sup_sq_se,err_holder_sq_mean,err_holder_sq_se,\
                     err_lambda_sq_mean,err_lambda_sq_se\n",
                );
                let mut reps = String::from(
                    "epsilon,replicate,seed,err_sup_sq,err_holder_sq,err_lambda_sq,endpoint_ms,endpoint_w2_sq\n",
                );
                for row in &report.rows {
                    let cols = [
                        row.epsilon,
                        row.err_sup_sq.mean,
                        row.err_sup_sq.se,
                        row.err_holder_sq.mean,
                        row.err_holder_sq.se,
                        row.err_lambda_sq.mean,
                        row.err_lambda_sq.se,
                    ];
                    summary.push_str(&cols.iter().map(|c| num(*c)).collect::<Vec<_>>().join(","));
                    summary.push('\n');
                    for (r, e) in row.replicates.iter().enumerate() {
                        let vals = [e.sup_sq, e.holder_sq, e.lambda_sq, e.endpoint_ms, e.endpoint_w2_sq];
                        let vals: Vec<String> = vals.iter().map(|v| num(*v)).collect();
                        writeln!(reps, "{},{r},{},{}", num(row.epsilon), e.seed, vals.join(",")).expect("string write");
                    }
                }
                out.files.push(OutputFile { role: "convergence", suffix: "_convergence.csv", bytes: summary.into_bytes() });
                out.files.push(OutputFile { role: "replicates", suffix: "_replicates.csv", bytes: reps.into_bytes() });
                out.notes = vec![
                    format!("law approximated by the empirical measure of {} particles", config.particles),
                    format!("{} scheme with the measure frozen at the start of each step", config.scheme),
                    format!("replicate seeds derived from base seed {}, shared across epsilon", config.seed),
                    "errors averaged over particles within a replicate, then over replicates".into(),
                    format!("coupling inequality held in every replicate: {}", report.coupling_consistent),
                ];
                Ok(out)
            }
            Job::Phi { config } => {
                let entry = model_for(config)?;
                let ts = log_spaced(config.phi_t_min, config.phi_t_max, config.phi_points);
                let curve = averaging::phi_estimate(&entry.drift, &ts, &PhiProbes::default())?;
                let mut csv = String::from("T,phi,phi_envelope,phi_abs\n");
                for i in 0..ts.len() {
                    writeln!(
                        csv,
                        "{},{},{},{}",
                        num(curve.t_values[i]),
                        num(curve.phi[i]),
                        num(curve.envelope[i]),
                        num(curve.phi_abs[i])
                    )
                    .expect("string write");
                }
                let p = &curve.probes;
                Ok(Outcome {
                    files: vec![OutputFile { role: "phi", suffix: "_phi.csv", bytes: csv.into_bytes() }],
                    notes: vec![
                        "values are lower bounds over a finite probe set".into(),
                        format!(
                            "probes: {} start times in [{}, {}], {} states in [{}, {}], {} measures, {} nodes per unit time",
                            p.n_start_times,
                            p.start_time_min,
                            p.start_time_max,
                            p.n_states,
                            p.state_min,
                            p.state_max,
                            p.n_measures,
                            p.nodes_per_unit
                        ),
                        format!("normalizer: {}", p.normalizer),
                        format!("probes with |mean(b - bbar)| > mean|b - bbar|: {}", curve.ordering_violations),
                    ],
                    ..Default::default()
                })
            }
            Job::Validate { config } => {
                let entry = model_for(config)?;
                let report = solver::validate_assumptions(&entry.drift, &entry.diffusion, &ProbeSpec::default());
                let mut out = json_outcome(&report);
                out.validation = Some((&report).into());
                if !report.passed() {
                    out.status = EXIT_VALIDATION;
                }
                Ok(out)
            }
        }
    }
}

fn json_outcome<S: Serialize>(value: &S) -> Outcome {
    let text = json_text(value);
    Outcome {
        files: vec![OutputFile { role: "result", suffix: "", bytes: text.clone().into_bytes() }],
        stdout: Some(text),
        ..Default::default()
    }
}

fn manifest_for(job: &Job, out: &Outcome) -> Manifest {
    Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_hash: job.config_hash(),
        seed: job.seed(),
        job: job.clone(),
        validation: out.validation.clone(),
        notes: out.notes.clone(),
        outputs: out
            .files
            .iter()
            .map(|f| OutputRecord {
                role: f.role.into(),
                suffix: f.suffix.into(),
                sha256: sha256_hex(&f.bytes),
                bytes: f.bytes.len(),
            })
            .collect(),
    }
}

/// Runs `job`, printing any stdout payload and, when `stem` is given,
/// writing the outputs and the manifest. Returns the exit status.
fn run_job(job: &Job, stem: Option<&Path>) -> Result<i32, CliError> {
    let out = job.execute()?;
    if let Some(text) = &out.stdout {
        print!("{text}");
    }
    if let Some(stem) = stem {
        for f in &out.files {
            write_atomic(&output_path(stem, f.suffix), &f.bytes)?;
        }
        let manifest = manifest_for(job, &out);
        write_atomic(&manifest_path(stem), json_text(&manifest).as_bytes())?;
    }
    Ok(out.status)
}

fn replay(args: &ReplayArgs) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", args.manifest.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", args.manifest.display())))?;
    if manifest.job.config_hash() != manifest.config_hash {
        return Err(CliError::Input("manifest job does not match its config hash".into()));
    }
    if args.verify {
        let out = manifest.job.execute()?;
        let regenerated = manifest_for(&manifest.job, &out);
        let mut status = out.status;
        for (want, got) in manifest.outputs.iter().zip(&regenerated.outputs) {
            let same = want.sha256 == got.sha256;
            println!("{} {}", if same { "match" } else { "MISMATCH" }, want.role);
            if !same {
                status = EXIT_VALIDATION;
            }
        }
        if manifest.outputs.len() != regenerated.outputs.len() {
            println!("MISMATCH output count");
            status = EXIT_VALIDATION;
        }
        return Ok(status);
    }
    let stem = match &args.out {
        Some(p) => p.clone(),
        None => {
            let s = args.manifest.to_string_lossy();
            match s.strip_suffix(".manifest.json") {
                Some(stem) => PathBuf::from(stem),
                None => return Err(CliError::Input("manifest name does not end in .manifest.json; pass --out".into())),
            }
        }
    };
    run_job(&manifest.job, Some(&stem))
}

fn load_with_prefix(args: &ConfigArgs) -> Result<(RunConfig, PathBuf), CliError> {
    let cfg = RunConfig::load(&args.config)?;
    let stem = args
        .out_prefix
        .clone()
        .or_else(|| cfg.output_prefix.clone().map(PathBuf::from))
        .ok_or_else(|| CliError::Input("no output prefix: pass --out-prefix or set output_prefix".into()))?;
    Ok((cfg, stem))
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Fbm(a) => {
            let job = Job::Fbm {
                hurst: a.hurst,
                t_end: a.t_end,
                steps: a.steps,
                paths: a.paths,
                seed: a.seed,
                method: a.method.into(),
            };
            run_job(&job, Some(&a.out))
        }
        Command::Norms(a) => {
            let job = Job::Norms { input_sha256: file_digest(&a.input)?, input: a.input, gamma: a.gamma, lambda: a.lambda };
            run_job(&job, a.out.as_deref())
        }
        Command::Integrate(a) => {
            let job = Job::Integrate {
                f_sha256: file_digest(&a.f)?,
                g_sha256: file_digest(&a.g)?,
                f: a.f,
                g: a.g,
                alpha: a.alpha,
                a: a.a,
                b: a.b,
                oracle: a.oracle,
            };
            run_job(&job, a.out.as_deref())
        }
        Command::Simulate(a) => {
            let (config, stem) = load_with_prefix(&a.common)?;
            run_job(&Job::Simulate { config, with_averaged: a.with_averaged }, Some(&stem))
        }
        Command::AverageStudy(a) => {
            let (mut config, stem) = load_with_prefix(&a.common)?;
            if let Some(e) = a.epsilons {
                config.epsilons = e;
            }
            if let Some(r) = a.replicates {
                config.replicates = r;
            }
            config.validate()?;
            run_job(&Job::AverageStudy { config }, Some(&stem))
        }
        Command::Phi(a) => {
            let (config, stem) = load_with_prefix(&a)?;
            run_job(&Job::Phi { config }, Some(&stem))
        }
        Command::Validate(a) => {
            let config = RunConfig::load(&a.config)?;
            run_job(&Job::Validate { config }, a.out.as_deref())
        }
        Command::Replay(a) => replay(&a),
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Input(format!("{THREADS_ENV} must be a positive integer, got `{value}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Input(format!("cannot configure {n} threads: {e}")))
}

/// Parses `args` (including the program name), runs, and returns the
/// process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    let result = configure_threads().and_then(|()| dispatch(cli.command));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
