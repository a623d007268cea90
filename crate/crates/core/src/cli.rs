//! The `collab` command-line front end.
//!
//! ```text
//! collab run <config>                    # config file, or a summary.json to re-run
//! collab gen-data --out <csv> [...]      # synthetic logistic data
//! collab verify <summary> <trajectory>   # re-check the loss bound
//! ```
//!
//! Exit codes: 0 ok, 1 usage, 2 validation or parse, 3 numeric failure,
//! 4 loss bound violated.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{generate_logistic, load_csv, partition, Dataset, PartitionSpec};
use crate::dynamics::DynamicsParams;
use crate::error::{Error, Result};
use crate::model::{LogisticGrowthParams, ModelKind, ModelSpec, ParamBox};
use crate::orchestrator::{
    run, verify_bound, InitialState, RunConfig, Termination, TrajectoryRecord, BOUND_SLACK,
};
use crate::principal::PrincipalParams;

pub const OUT_DIR_ENV: &str = "COLLAB_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_BOUND: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "collab",
    version,
    about = "Principal-agent collaborative learning experiments"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Override the RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for `run`.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for agent updates.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, short, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment from a config file (or from the config echoed in a summary.json).
    Run { config: PathBuf },
    /// Write synthetic logistic-growth data as CSV.
    GenData(GenDataArgs),
    /// Check that the cumulative loss in a trajectory respects the summary's bound.
    Verify {
        summary: PathBuf,
        trajectory: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    /// Logistic parameters `N0,Ne,r`.
    #[arg(
        long,
        default_value = "1.1224,229.9285,0.7259",
        value_delimiter = ',',
        num_args = 3
    )]
    pub params: Vec<f64>,
    /// Sample times as `start:end[:step]` (inclusive) or a comma-separated list.
    #[arg(long, default_value = "0:23")]
    pub times: String,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sd: f64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run { config } => cmd_run(config, &cli.global).map(|_| EXIT_OK),
        Command::GenData(args) => cmd_gen_data(args, &cli.global).map(|_| EXIT_OK),
        Command::Verify {
            summary,
            trajectory,
        } => cmd_verify(summary, trajectory, &cli.global),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Bound(msg)) => {
            eprintln!("error: {msg}");
            EXIT_BOUND
        }
        Err(CliError::Lib(e)) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NumericFailure { .. } | Error::Domain(_) | Error::DegenerateWeights(_) => {
            EXIT_NUMERIC
        }
        Error::InvalidArgument(_)
        | Error::Parse { .. }
        | Error::Validation { .. }
        | Error::Io { .. } => EXIT_VALIDATION,
    }
}

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    Bound(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

// ---------------------------------------------------------------------------
// Config file

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub data: DataSection,
    pub partition: PartitionSpec,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub param_box: Option<BoxSection>,
    #[serde(default)]
    pub project_to_box: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_lip: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// CSV file, relative to the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generate: Option<GenerateSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateSection {
    pub params: [f64; 3],
    pub times: Vec<f64>,
    pub noise_sd: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta0 {
    Keyword(String),
    Shared(Vec<f64>),
    PerAgent(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Momentum0 {
    Shared(Vec<f64>),
    PerAgent(Vec<Vec<f64>>),
}

fn default_theta0() -> Theta0 {
    Theta0::Keyword("auto".into())
}

fn default_tol() -> f64 {
    1e-8
}

fn default_stride() -> usize {
    100
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    pub steps: usize,
    /// Optional; must equal `horizon / steps` when given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub c: f64,
    pub beta: f64,
    pub mu: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    pub seed: u64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default = "default_theta0")]
    pub theta0: Theta0,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Momentum0>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl ExperimentConfig {
    /// Reads a TOML config file, or the `config` object echoed in a summary.json.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            msg,
        };
        let mut cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            let summary: Summary =
                serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            summary.config
        } else {
            toml::from_str(&text).map_err(|e| {
                // toml reports unknown keys and type errors with the key path in the message.
                Error::Validation {
                    key: path.display().to_string(),
                    msg: e.to_string(),
                }
            })?
        };
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let absolutize = |p: &PathBuf| {
            if p.is_relative() {
                base.join(p)
            } else {
                p.clone()
            }
        };
        if let Some(csv) = &self.data.csv {
            self.data.csv = Some(absolutize(csv));
        }
        if let Some(out) = &self.output {
            self.output = Some(OutputSection {
                dir: absolutize(&out.dir),
            });
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let kind = ModelKind::from_name(&self.model.name, self.model.degree)?;
        let spec = ModelSpec::new(kind);
        match &self.model.param_box {
            None => Ok(spec),
            Some(b) => {
                let pb = ParamBox::new(b.lower.clone(), b.upper.clone())
                    .map_err(|e| Error::validation("model.param_box", e.to_string()))?;
                spec.with_param_box(pb)
                    .map_err(|e| Error::validation("model.param_box", e.to_string()))
            }
        }
    }

    pub fn source_dataset(&self) -> Result<Dataset> {
        match (&self.data.csv, &self.data.generate) {
            (Some(path), None) => load_csv(path),
            (None, Some(g)) => {
                let params = LogisticGrowthParams::new(g.params[0], g.params[1], g.params[2])
                    .map_err(|e| Error::validation("data.generate.params", e.to_string()))?;
                generate_logistic(&params, &g.times, g.noise_sd, g.seed)
                    .map_err(|e| Error::validation("data.generate", e.to_string()))
            }
            _ => Err(Error::validation(
                "data",
                "give exactly one of `csv` or `generate`",
            )),
        }
    }

    /// Converts the `[run]` section into a validated [`RunConfig`] for `agents` agents.
    pub fn run_config(&self, agents: usize) -> Result<RunConfig> {
        let r = &self.run;
        if r.steps == 0 {
            return Err(Error::validation("run.steps", "need at least one step"));
        }
        let delta = r.horizon / r.steps as f64;
        if let Some(given) = r.delta {
            if (given - delta).abs() > 1e-15 {
                return Err(Error::validation(
                    "run.delta",
                    format!("{given} disagrees with horizon / steps = {delta}"),
                ));
            }
        }
        let initial = match (&r.theta0, &r.p0) {
            (Theta0::Keyword(k), p0) if k == "auto" => {
                if p0.is_some() {
                    return Err(Error::validation(
                        "run.p0",
                        "needs an explicit theta0 (theta0 = \"auto\" starts at rest)",
                    ));
                }
                InitialState::Auto
            }
            (Theta0::Keyword(k), _) => {
                return Err(Error::validation(
                    "run.theta0",
                    format!("expected \"auto\" or a list of numbers, got \"{k}\""),
                ))
            }
            (Theta0::Shared(theta), None) => InitialState::Shared {
                theta: theta.clone(),
                momentum: None,
            },
            (Theta0::Shared(theta), Some(Momentum0::Shared(p))) => InitialState::Shared {
                theta: theta.clone(),
                momentum: Some(p.clone()),
            },
            (Theta0::PerAgent(thetas), None) => InitialState::PerAgent {
                thetas: thetas.clone(),
                momenta: None,
            },
            (Theta0::PerAgent(thetas), Some(Momentum0::PerAgent(p))) => InitialState::PerAgent {
                thetas: thetas.clone(),
                momenta: Some(p.clone()),
            },
            _ => {
                return Err(Error::validation(
                    "run.p0",
                    "must be shared when theta0 is shared, per-agent when theta0 is per-agent",
                ))
            }
        };
        let config = RunConfig {
            agents,
            horizon: r.horizon,
            steps: r.steps,
            dynamics: DynamicsParams {
                delta,
                gamma: r.gamma,
                eta: r.eta,
                c: r.c,
            },
            principal: PrincipalParams {
                beta: r.beta,
                mu: r.mu,
            },
            tol: r.tol,
            seed: r.seed,
            record_stride: r.record_stride,
            l_lip: self.model.l_lip,
            project_to_box: self.model.project_to_box,
            initial,
            threads: r.threads,
        };
        config.validate()?;
        Ok(config)
    }
}

// ---------------------------------------------------------------------------
// Outputs

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: String,
    pub param_names: Vec<String>,
    pub consensus: Vec<f64>,
    pub initial_consensus: Vec<f64>,
    pub cumulative_loss: f64,
    pub bound: f64,
    pub bound_holds: bool,
    pub log_weight_sum: f64,
    pub final_log_alpha: Vec<f64>,
    pub final_pi: Vec<f64>,
    pub terminated_by: Termination,
    pub steps_executed: usize,
    pub seed: u64,
    pub config: ExperimentConfig,
}

/// Shortest round-trip decimal; scientific notation outside `[1e-6, 1e16)`.
pub fn fmt_num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-6..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn param_names(kind: ModelKind) -> Vec<String> {
    match kind {
        ModelKind::LogisticGrowth => vec!["N0".into(), "Ne".into(), "r".into()],
        ModelKind::Linear => vec!["slope".into()],
        ModelKind::Polynomial { degree } => (0..=degree).map(|j| format!("c{j}")).collect(),
    }
}

/// Renders `trajectory.csv`.
pub fn trajectory_csv(record: &TrajectoryRecord, names: &[String]) -> String {
    let k = record.final_log_alpha.len();
    let mut out = String::from("n,tau");
    for name in names {
        write!(out, ",theta_bar_{name}").unwrap();
    }
    for a in 1..=k {
        for name in names {
            write!(out, ",agent{a}_{name}").unwrap();
        }
        write!(out, ",agent{a}_rho,agent{a}_pi").unwrap();
    }
    out.push_str(",step_loss,window_loss\n");
    for row in &record.rows {
        write!(out, "{},{}", row.n, fmt_num(row.tau)).unwrap();
        for v in &row.theta_bar {
            write!(out, ",{}", fmt_num(*v)).unwrap();
        }
        for ((theta, rho), pi) in row.thetas.iter().zip(&row.rho).zip(&row.pi) {
            for v in theta {
                write!(out, ",{}", fmt_num(*v)).unwrap();
            }
            write!(out, ",{},{}", fmt_num(*rho), fmt_num(*pi)).unwrap();
        }
        writeln!(
            out,
            ",{},{}",
            fmt_num(row.step_loss),
            fmt_num(row.window_loss)
        )
        .unwrap();
    }
    out
}

/// Renders `estimates.csv`: consensus estimate after each recorded iteration,
/// starting from the initial consensus at `step = 0`.
pub fn estimates_csv(record: &TrajectoryRecord, names: &[String]) -> String {
    let mut out = String::from("step,tau");
    for name in names {
        write!(out, ",{name}").unwrap();
    }
    out.push('\n');
    let mut push = |step: usize, tau: f64, values: &[f64]| {
        write!(out, "{step},{}", fmt_num(tau)).unwrap();
        for v in values {
            write!(out, ",{}", fmt_num(*v)).unwrap();
        }
        out.push('\n');
    };
    push(0, 0.0, &record.initial_theta_bar);
    for row in &record.rows {
        push(row.n + 1, row.tau, &row.theta_bar);
    }
    out
}

/// Renders `fit_curve.csv`: observed points of every dataset, then the model
/// at the consensus estimate on a 200-interval grid.
pub fn fit_curve_csv(model: &ModelSpec, theta: &[f64], datasets: &[Dataset]) -> Result<String> {
    let mut out = String::from("t,prediction,observed,set\n");
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for d in datasets {
        for &(t, y) in d.points() {
            lo = lo.min(t);
            hi = hi.max(t);
            let pred = model.predict(theta, t)?;
            writeln!(
                out,
                "{},{},{},{}",
                fmt_num(t),
                fmt_num(pred),
                fmt_num(y),
                d.label()
            )
            .unwrap();
        }
    }
    if lo.is_finite() {
        const INTERVALS: usize = 200;
        for i in 0..=INTERVALS {
            let t = lo + (hi - lo) * i as f64 / INTERVALS as f64;
            let pred = model.predict(theta, t)?;
            writeln!(out, "{},{},,model", fmt_num(t), fmt_num(pred)).unwrap();
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// What `cmd_run` produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub out_dir: PathBuf,
    pub summary: Summary,
    pub record: TrajectoryRecord,
}

pub fn cmd_run(
    config_path: &Path,
    global: &GlobalOpts,
) -> std::result::Result<RunOutput, CliError> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = global.seed {
        cfg.run.seed = seed;
    }
    if let Some(threads) = global.threads {
        cfg.run.threads = threads;
    }
    // Precedence: --out-dir (or its environment variable), then the config, then "out".
    let out_dir = global
        .out_dir
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    cfg.output = Some(OutputSection {
        dir: std::path::absolute(&out_dir).unwrap_or(out_dir.clone()),
    });

    let model = cfg.model_spec()?;
    let source = cfg.source_dataset()?;
    let parts = partition(&source, &cfg.partition)
        .map_err(|e| Error::validation("partition", e.to_string()))?;
    let (test, train) = parts
        .split_last()
        .expect("partition yields at least two sets");
    let run_cfg = cfg.run_config(train.len())?;

    let record = run(&run_cfg, &model, train, test)?;
    let report = verify_bound(&record, run_cfg.principal.beta);
    let names = param_names(model.kind());

    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    write_file(
        &out_dir.join("trajectory.csv"),
        &trajectory_csv(&record, &names),
    )?;
    write_file(
        &out_dir.join("estimates.csv"),
        &estimates_csv(&record, &names),
    )?;
    write_file(
        &out_dir.join("fit_curve.csv"),
        &fit_curve_csv(&model, &record.consensus, &parts)?,
    )?;

    let last_pi = record.rows.last().map(|r| r.pi.clone()).unwrap_or_default();
    let summary = Summary {
        model: model.kind().name().to_string(),
        param_names: names,
        consensus: record.consensus.clone(),
        initial_consensus: record.initial_theta_bar.clone(),
        cumulative_loss: record.cumulative_loss,
        bound: record.bound,
        bound_holds: report.holds,
        log_weight_sum: crate::principal::log_sum_exp(&record.final_log_alpha),
        final_log_alpha: record.final_log_alpha.clone(),
        final_pi: last_pi,
        terminated_by: record.terminated_by,
        steps_executed: record.steps_executed,
        seed: run_cfg.seed,
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write_file(&out_dir.join("summary.json"), &(json + "\n"))?;

    if !global.quiet {
        println!(
            "{} steps ({:?}); consensus = {:?}",
            record.steps_executed, record.terminated_by, record.consensus
        );
        println!(
            "cumulative loss {:.6} <= bound {:.6}: {}",
            report.cumulative_loss, report.bound, report.holds
        );
        println!("wrote {}", out_dir.display());
    }
    if !report.holds {
        return Err(CliError::Bound(format!(
            "cumulative loss {} exceeds bound {}",
            report.cumulative_loss, report.bound
        )));
    }
    Ok(RunOutput {
        out_dir,
        summary,
        record,
    })
}

fn parse_times(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::validation("times", format!("cannot parse `{spec}`"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let (start, end, step) = match parts.as_slice() {
            [a, b] => (num(a)?, num(b)?, 1.0),
            [a, b, c] => (num(a)?, num(b)?, num(c)?),
            _ => return Err(bad()),
        };
        if step.is_nan() || step <= 0.0 || end < start {
            return Err(bad());
        }
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        Ok((0..count).map(|i| start + i as f64 * step).collect())
    } else {
        spec.split(',').map(num).collect()
    }
}

pub fn cmd_gen_data(
    args: &GenDataArgs,
    global: &GlobalOpts,
) -> std::result::Result<Dataset, CliError> {
    let params = LogisticGrowthParams::from_slice(&args.params)
        .map_err(|e| Error::validation("params", e.to_string()))?;
    let times = parse_times(&args.times)?;
    let data = generate_logistic(&params, &times, args.noise_sd, global.seed.unwrap_or(0))
        .map_err(|e| Error::validation("noise-sd", e.to_string()))?;
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    data.write_csv(&args.out)?;
    if !global.quiet {
        println!("wrote {} points to {}", data.len(), args.out.display());
    }
    Ok(data)
}

/// Sums the `window_loss` column of a trajectory file.
pub fn trajectory_loss(path: &Path) -> Result<f64> {
    let parse_err = |row: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        msg,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => parse_err(0, format!("{other:?}")),
    })?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(0, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(0, format!("missing `{name}` column")))
    };
    let window_col = column("window_loss")?;
    let step_col = column("step_loss")?;
    let mut total = 0.0;
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let field = |j: usize| -> Result<f64> {
            let v: f64 = rec
                .get(j)
                .ok_or_else(|| parse_err(row, "short row".into()))?
                .parse()
                .map_err(|_| parse_err(row, format!("non-numeric `{}`", &rec[j])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(row, "non-finite value".into()))
            }
        };
        let window = field(window_col)?;
        let step = field(step_col)?;
        if !(0.0..=1.0).contains(&step) || window < step {
            return Err(parse_err(
                row,
                format!("inconsistent losses: step_loss {step}, window_loss {window}"),
            ));
        }
        total += window;
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(0, "no trajectory rows".into()));
    }
    Ok(total)
}

pub fn cmd_verify(
    summary_path: &Path,
    trajectory_path: &Path,
    global: &GlobalOpts,
) -> std::result::Result<i32, CliError> {
    let text = fs::read_to_string(summary_path).map_err(|e| Error::io(summary_path, e))?;
    let summary: Summary = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: summary_path.to_path_buf(),
        row: e.line(),
        msg: e.to_string(),
    })?;
    let loss = trajectory_loss(trajectory_path)?;
    let holds = loss <= summary.bound + BOUND_SLACK;
    if !global.quiet {
        println!(
            "cumulative loss {loss} vs bound {}: {}",
            summary.bound,
            if holds { "ok" } else { "VIOLATED" }
        );
    }
    if holds {
        Ok(EXIT_OK)
    } else {
        Err(CliError::Bound(format!(
            "cumulative loss {loss} exceeds bound {}",
            summary.bound
        )))
    }
}
