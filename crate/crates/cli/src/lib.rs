//! `mad` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use mad_core::backend::{build_backend, Backend};
use mad_core::config::{BackendDescriptor, SimParams};
use mad_core::harness::analysis::format_strata_tsv;
use mad_core::harness::{
    ablation_sweep, default_thresholds, filter_inputs, format_sweep_tsv, generate_inputs,
    load_dataset, load_trace_dir, pairwise_svr, persist_traces, read_report_csv, run_methods,
    stratify_and_rank, thread_pool, trace_files, tune_sid, verify_report, verify_traces,
    write_report_csv, MethodReport, MethodSettings, QuestionInput, QuestionSignals,
};
use mad_core::orchestrator::{PosteriorVariant, SvrMadOptions};
use mad_core::{ExperimentConfig, Method, Question};
use rayon::ThreadPool;

pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_BACKEND: i32 = 2;
pub const EXIT_DATASET: i32 = 3;
pub const EXIT_MISMATCH: i32 = 4;

/// A failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    fn new(code: i32, error: impl Into<anyhow::Error>) -> Self {
        Self {
            code,
            error: error.into(),
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::new(EXIT_CONFIG, e)
}

fn backend_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::new(EXIT_BACKEND, e)
}

fn dataset_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::new(EXIT_DATASET, e)
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfigFile {
    pub experiment: ExperimentConfig,
    pub dataset: Option<PathBuf>,
    pub methods: Vec<String>,
    pub out_dir: PathBuf,
    pub parallelism: usize,
}

impl Default for CliConfigFile {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            dataset: None,
            methods: Method::ALL.iter().map(|m| m.name().to_string()).collect(),
            out_dir: PathBuf::from("out"),
            parallelism: 4,
        }
    }
}

impl CliConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn parsed_methods(&self) -> anyhow::Result<Vec<Method>> {
        if self.methods.is_empty() {
            return Err(anyhow!("no methods requested"));
        }
        self.methods
            .iter()
            .map(|m| Method::parse(m).ok_or_else(|| anyhow!("unknown method {m:?}")))
            .collect()
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "mad",
    version,
    about = "Survival-rate guided multi-agent debate experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run methods over a dataset and write traces plus a report.
    Run(CommonArgs),
    /// Recompute final answers and metrics from a trace directory.
    Replay(ReplayArgs),
    /// Scan SID-ET skip rates against a reference report.
    TuneSid(TuneArgs),
    /// Sweep acceptance thresholds for posterior variants.
    Sweep(SweepArgs),
    /// Rank agents by each signal within difficulty buckets.
    Analyze(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// simulated, replay or http; replay reads `--traces`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub traces: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Directory of `*.jsonl` trace files.
    pub trace_dir: PathBuf,
    /// Stored report to compare against; defaults to `report.csv` next to
    /// the trace directory when present.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Report whose token total and accuracy are the tuning reference.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, default_value = "svr_mad")]
    pub reference_method: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Comma-separated posterior variants: svr, min_ll, ppl, conf.
    #[arg(long, value_delimiter = ',', default_value = "svr,min_ll,ppl,conf")]
    pub variants: Vec<String>,
    /// Comma-separated thresholds; each variant's default grid when absent.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub thresholds: Option<Vec<f64>>,
}

/// Resolved settings of a command after flags override the file.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub file: CliConfigFile,
    pub methods: Vec<Method>,
}

pub fn resolve(args: &CommonArgs) -> Result<Resolved, CliError> {
    let mut file = match &args.config {
        Some(path) => CliConfigFile::load(path).map_err(config_err)?,
        None => CliConfigFile::default(),
    };
    if let Some(d) = &args.dataset {
        file.dataset = Some(d.clone());
    }
    if let Some(m) = &args.methods {
        file.methods = m
            .iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }
    if let Some(seed) = args.seed {
        file.experiment.seed = seed;
    }
    if let Some(p) = args.parallelism {
        file.parallelism = p;
    }
    if let Some(out) = &args.out {
        file.out_dir = out.clone();
    }
    if let Some(kind) = &args.backend {
        file.experiment.backend = match (kind.as_str(), &file.experiment.backend) {
            ("simulated", BackendDescriptor::Simulated { params }) => {
                BackendDescriptor::Simulated {
                    params: params.clone(),
                }
            }
            ("simulated", _) => BackendDescriptor::Simulated {
                params: SimParams::default(),
            },
            ("replay", BackendDescriptor::Replay { path }) => BackendDescriptor::Replay {
                path: args.traces.clone().unwrap_or_else(|| path.clone()),
            },
            ("replay", _) => BackendDescriptor::Replay {
                path: args
                    .traces
                    .clone()
                    .ok_or_else(|| config_err(anyhow!("--backend replay needs --traces")))?,
            },
            ("http", BackendDescriptor::Http(p)) => BackendDescriptor::Http(p.clone()),
            ("http", _) => {
                return Err(config_err(anyhow!(
                    "--backend http needs an http backend table in the config"
                )))
            }
            (other, _) => return Err(config_err(anyhow!("unknown backend {other:?}"))),
        };
    } else if let (Some(traces), BackendDescriptor::Replay { .. }) =
        (&args.traces, &file.experiment.backend)
    {
        file.experiment.backend = BackendDescriptor::Replay {
            path: traces.clone(),
        };
    }
    if let BackendDescriptor::Simulated { params } = &file.experiment.backend {
        params.validate().map_err(config_err)?;
    }
    file.experiment.validate().map_err(config_err)?;
    if file.parallelism == 0 {
        return Err(config_err(anyhow!("parallelism must be at least 1")));
    }
    let methods = file.parsed_methods().map_err(config_err)?;
    Ok(Resolved { file, methods })
}

type Prepared = (Vec<QuestionInput>, Arc<dyn Backend>, ThreadPool);

/// Loads the dataset, generates shared initial responses and drops
/// unanimous questions.
fn prepare(resolved: &Resolved) -> Result<Prepared, CliError> {
    let path = resolved
        .file
        .dataset
        .as_ref()
        .ok_or_else(|| dataset_err(anyhow!("no dataset given")))?;
    let records =
        load_dataset(path).map_err(|e| dataset_err(anyhow!("{}: {e}", path.display())))?;
    if records.is_empty() {
        return Err(dataset_err(anyhow!("{} has no questions", path.display())));
    }
    let questions: Vec<Question> = records.iter().map(|r| r.to_question()).collect();
    let backend = build_backend(&resolved.file.experiment).map_err(backend_err)?;
    let pool = thread_pool(resolved.file.parallelism).map_err(config_err)?;
    let inputs = generate_inputs(
        &questions,
        resolved.file.experiment.n_agents,
        backend.as_ref(),
        &pool,
    )
    .map_err(backend_err)?;
    let total = inputs.len();
    let inputs = filter_inputs(inputs);
    tracing::info!(
        kept = inputs.len(),
        dropped = total - inputs.len(),
        "filtered unanimous questions"
    );
    Ok((inputs, backend, pool))
}

fn settings(resolved: &Resolved, inputs: &[QuestionInput]) -> Result<MethodSettings, CliError> {
    MethodSettings::from_config(&resolved.file.experiment, inputs).map_err(backend_err)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)
            .map_err(|e| config_err(anyhow!("creating {}: {e}", parent.display())))?;
    }
    fs::write(path, contents).map_err(|e| config_err(anyhow!("writing {}: {e}", path.display())))
}

pub fn cmd_run(args: &CommonArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(args)?;
    let (inputs, backend, pool) = prepare(&resolved)?;
    let settings = settings(&resolved, &inputs)?;
    let runs = run_methods(
        &resolved.methods,
        &inputs,
        &settings,
        backend.as_ref(),
        &pool,
    )
    .map_err(backend_err)?;

    let out_dir = &resolved.file.out_dir;
    let trace_dir = out_dir.join("traces");
    fs::create_dir_all(&trace_dir)
        .map_err(|e| config_err(anyhow!("creating {}: {e}", trace_dir.display())))?;
    for run in &runs {
        persist_traces(
            &run.traces,
            &trace_dir.join(format!("{}.jsonl", run.method)),
        )
        .map_err(config_err)?;
    }
    let reports: Vec<MethodReport> = runs.iter().map(|r| r.report()).collect();
    let mut csv = Vec::new();
    write_report_csv(&mut csv, &reports).map_err(config_err)?;
    write_file(&out_dir.join("report.csv"), &csv)?;
    print_summary(out, &reports)?;
    Ok(())
}

fn print_summary(out: &mut dyn Write, reports: &[MethodReport]) -> Result<(), CliError> {
    let io = |e: std::io::Error| config_err(anyhow!("writing output: {e}"));
    writeln!(out, "method\tquestions\tncomm\ttok_k\tacc_pct").map_err(io)?;
    for r in reports {
        writeln!(
            out,
            "{}\t{}\t{:.2}\t{:.1}\t{:.2}",
            r.method,
            r.rows.len(),
            r.mean_ncomm(),
            r.total_tokens() as f64 / 1_000.0,
            r.accuracy() * 100.0
        )
        .map_err(io)?;
    }
    Ok(())
}

pub fn cmd_replay(args: &ReplayArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let files = trace_files(&args.trace_dir).map_err(dataset_err)?;
    if files.is_empty() {
        return Err(dataset_err(anyhow!(
            "no trace files in {}",
            args.trace_dir.display()
        )));
    }
    let traces = load_trace_dir(&args.trace_dir).map_err(dataset_err)?;
    if traces.is_empty() {
        return Err(dataset_err(anyhow!(
            "no traces in {}",
            args.trace_dir.display()
        )));
    }
    let mut mismatches = verify_traces(&traces);

    let report_path = args.report.clone().or_else(|| {
        let p = args.trace_dir.parent()?.join("report.csv");
        p.is_file().then_some(p)
    });
    let mut methods: Vec<Method> = Vec::new();
    for t in &traces {
        if !methods.contains(&t.method) {
            methods.push(t.method);
        }
    }
    let recomputed: Vec<MethodReport> = methods
        .iter()
        .map(|&m| MethodReport::from_traces(m, traces.iter().filter(|t| t.method == m)))
        .collect();
    if let Some(path) = &report_path {
        let file =
            fs::File::open(path).map_err(|e| dataset_err(anyhow!("{}: {e}", path.display())))?;
        let stored =
            read_report_csv(file).map_err(|e| dataset_err(anyhow!("{}: {e}", path.display())))?;
        mismatches.extend(verify_report(&traces, &stored));
    }
    print_summary(out, &recomputed)?;
    if mismatches.is_empty() {
        return Ok(());
    }
    let mut summary = format!("{} mismatch(es):", mismatches.len());
    for m in mismatches.iter().take(20) {
        summary.push_str(&format!("\n  {m}"));
    }
    if mismatches.len() > 20 {
        summary.push_str(&format!("\n  ... and {} more", mismatches.len() - 20));
    }
    Err(CliError::new(EXIT_MISMATCH, anyhow!(summary)))
}

pub fn cmd_tune_sid(args: &TuneArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(&args.common)?;
    let reference_method = Method::parse(&args.reference_method)
        .ok_or_else(|| config_err(anyhow!("unknown method {:?}", args.reference_method)))?;
    let file = fs::File::open(&args.reference).map_err(|e| {
        config_err(anyhow!(
            "reference report {}: {e}",
            args.reference.display()
        ))
    })?;
    let reports = read_report_csv(file).map_err(config_err)?;
    let reference = reports
        .iter()
        .find(|r| r.method == reference_method)
        .ok_or_else(|| config_err(anyhow!("reference report has no {reference_method} rows")))?;
    let (tok_ref, acc_ref) = (reference.total_tokens() as f64, reference.accuracy());

    let (inputs, backend, pool) = prepare(&resolved)?;
    let settings = settings(&resolved, &inputs)?;
    let tuning = tune_sid(
        &inputs,
        &settings,
        backend.as_ref(),
        &pool,
        tok_ref,
        acc_ref,
    )
    .map_err(backend_err)?;
    let io = |e: std::io::Error| config_err(anyhow!("writing output: {e}"));
    writeln!(out, "skip_rate\tthreshold\ttokens\taccuracy").map_err(io)?;
    for (rate, (tok, acc)) in &tuning.table {
        let threshold = tuning.thresholds[rate];
        writeln!(out, "{rate}\t{threshold:.6}\t{tok}\t{acc:.4}").map_err(io)?;
    }
    writeln!(out, "reference\t-\t{tok_ref}\t{acc_ref:.4}").map_err(io)?;
    writeln!(
        out,
        "selected skip rate: {}% (threshold {:.6})",
        tuning.rate, tuning.threshold
    )
    .map_err(io)?;
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(&args.common)?;
    let variants: Vec<PosteriorVariant> = args
        .variants
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            PosteriorVariant::parse(s).ok_or_else(|| config_err(anyhow!("unknown variant {s:?}")))
        })
        .collect::<Result<_, _>>()?;
    if variants.is_empty() {
        return Err(config_err(anyhow!("no variants requested")));
    }
    if let Some(t) = &args.thresholds {
        if t.is_empty() || t.iter().any(|x| x.is_nan()) {
            return Err(config_err(anyhow!(
                "thresholds must be a non-empty list of numbers"
            )));
        }
    }
    let (inputs, backend, pool) = prepare(&resolved)?;
    let base = SvrMadOptions::from_config(&resolved.file.experiment);
    let mut points = Vec::new();
    for variant in variants {
        let thresholds = args
            .thresholds
            .clone()
            .unwrap_or_else(|| default_thresholds(variant));
        points.extend(
            ablation_sweep(
                &inputs,
                &base,
                variant,
                &thresholds,
                backend.as_ref(),
                &pool,
            )
            .map_err(backend_err)?,
        );
    }
    let tsv = format_sweep_tsv(&points);
    write_file(&resolved.file.out_dir.join("sweep.tsv"), tsv.as_bytes())?;
    out.write_all(tsv.as_bytes())
        .map_err(|e| config_err(anyhow!("writing output: {e}")))
}

pub fn cmd_analyze(args: &CommonArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let resolved = resolve(args)?;
    let (inputs, backend, _pool) = prepare(&resolved)?;
    let mut data = Vec::with_capacity(inputs.len());
    for input in &inputs {
        let Some(gold) = &input.question.gold_answer else {
            continue;
        };
        let svr = pairwise_svr(&input.question, &input.initials, backend.as_ref())
            .map_err(backend_err)?;
        data.push(
            QuestionSignals::from_initials(&input.question.id, &input.initials, gold, Some(svr))
                .map_err(backend_err)?,
        );
    }
    let tsv = format_strata_tsv(&stratify_and_rank(&data));
    write_file(&resolved.file.out_dir.join("strata.tsv"), tsv.as_bytes())?;
    out.write_all(tsv.as_bytes())
        .map_err(|e| config_err(anyhow!("writing output: {e}")))
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Replay(a) => cmd_replay(a, out),
        Command::TuneSid(a) => cmd_tune_sid(a, out),
        Command::Sweep(a) => cmd_sweep(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
    }
}

/// Parses arguments, runs the command and returns the exit code. Errors go
/// to `err`.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return EXIT_CONFIG;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {:#}", e.error);
            e.code
        }
    }
}
