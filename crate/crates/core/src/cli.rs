//! Command-line surface.
//!
//! Exit codes: 0 on success, 1 for domain errors (invalid hierarchy,
//! undefined alpha, occupied port, ...), 2 for usage errors and missing
//! input files. Every command takes `--json` for machine-readable output.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::agreement::{agreement_report_with, AlphaOptions, ReliabilityMatrix};
use crate::campaign::{export_jsonl, AppState, CampaignStore, ServiceConfig, StoreError};
use crate::hierarchy::Hierarchy;
use crate::localization::{dataset_stats, expand_dataset, read_manifest, LocalizationStrategy};
use crate::outcomes::{
    audit_report, read_label_lines, resolve_golds, resolve_labels, AnnotatorModel,
};
use crate::simulate::{gold_per_node, simulate_campaign};
use crate::traversal::LabelingScheme;

#[derive(Debug, Parser)]
#[command(
    name = "differentia",
    version,
    about = "Genus-differentia guided image annotation"
)]
pub struct Cli {
    /// Machine-readable JSON output.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a hierarchy and list its diagnostics. Exits 1 on any error.
    Validate(ValidateArgs),
    /// Run simulated annotators over gold tasks and report agreement.
    Simulate(SimulateArgs),
    /// Krippendorff's alpha over a reliability matrix CSV.
    Alpha(AlphaArgs),
    /// Classify labels against gold into the outcome taxonomy.
    Audit(AuditArgs),
    /// Run the campaign HTTP service.
    Serve(ServeArgs),
    /// Expand a dataset manifest into annotation tasks.
    Tasks(TasksArgs),
    /// Write the training manifest of a closed campaign.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct HierarchyArg {
    /// Hierarchy JSON file; defaults to the built-in musical instruments tree.
    #[arg(long)]
    pub hierarchy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Hierarchy JSON file.
    #[arg(required_unless_present = "hierarchy_flag")]
    pub path: Option<PathBuf>,
    #[arg(long = "hierarchy", id = "hierarchy_flag", conflicts_with = "path")]
    pub hierarchy: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub hierarchy: HierarchyArg,
    /// Gold labels, JSON lines of {"task_id", "label"}. Defaults to one
    /// task per hierarchy node.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// perfect, mislabeler, partial_view[:N], knowledge_limited:N, noisy:EPS
    #[arg(long, default_value = "perfect")]
    pub model: String,
    #[arg(long, default_value_t = 8)]
    pub annotators: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the simulated records here as JSON lines.
    #[arg(long)]
    pub records_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    /// CSV: header of annotator ids, first column unit ids, empty = missing.
    pub matrix: PathBuf,
    #[command(flatten)]
    pub hierarchy: HierarchyArg,
    /// Leave discharged and unrecognised values out of alpha.
    #[arg(long)]
    pub exclude_reserved: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// Labels, JSON lines of {"task_id", "annotator_id"?, "label"}.
    #[arg(long)]
    pub records: PathBuf,
    /// Gold labels, JSON lines of {"task_id", "label"}.
    #[arg(long)]
    pub gold: PathBuf,
    #[command(flatten)]
    pub hierarchy: HierarchyArg,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML service configuration.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct TasksArgs {
    /// Dataset manifest, JSON lines of image records.
    #[arg(long)]
    pub dataset: PathBuf,
    /// discard, split or polygons.
    #[arg(long, default_value = "polygons")]
    pub strategy: LocalizationStrategy,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Service configuration naming the data directory.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub campaign: String,
    /// differentia or category; defaults to the campaign's scheme.
    #[arg(long)]
    pub scheme: Option<LabelingScheme>,
    /// Adds a stratified 80/20 train/test split drawn with this seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("no such file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::MissingFile(_) => 2,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

fn existing(path: &Path) -> Result<&Path, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingFile(path.to_owned()))
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    Ok(BufReader::new(File::open(existing(path)?).map_err(domain)?))
}

fn load_hierarchy(path: Option<&Path>) -> Result<Hierarchy, CliError> {
    match path {
        Some(p) => Hierarchy::load(existing(p)?).map_err(domain),
        None => Ok(Hierarchy::musical_instruments()),
    }
}

fn emit_json(out: &mut dyn Write, v: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(v).map_err(domain)?;
    writeln!(out, "{text}").map_err(domain)
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                out.write_all(text.as_bytes())
            } else {
                err.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command. `Ok` carries the exit code for commands that
/// report a domain failure after printing their output.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, CliError> {
    match &cli.command {
        Command::Validate(a) => validate(a, cli.json, out),
        Command::Simulate(a) => simulate(a, cli.json, out).map(|_| 0),
        Command::Alpha(a) => alpha(a, cli.json, out).map(|_| 0),
        Command::Audit(a) => audit(a, cli.json, out).map(|_| 0),
        Command::Serve(a) => serve(a, cli.json, out).map(|_| 0),
        Command::Tasks(a) => tasks(a, cli.json, out).map(|_| 0),
        Command::Export(a) => export(a, out).map(|_| 0),
    }
}

fn validate(a: &ValidateArgs, json: bool, out: &mut dyn Write) -> Result<i32, CliError> {
    let path = a
        .path
        .as_deref()
        .or(a.hierarchy.as_deref())
        .expect("clap requires one");
    let h = load_hierarchy(Some(path))?;
    let diags = h.validate();
    let errors = diags.iter().filter(|d| d.is_error()).count();
    let warnings = diags.len() - errors;
    if json {
        emit_json(
            out,
            &json!({
                "version": h.version(),
                "nodes": h.len(),
                "height": h.height(),
                "errors": errors,
                "warnings": warnings,
                "diagnostics": diags,
            }),
        )?;
    } else {
        for d in &diags {
            writeln!(out, "{d}").map_err(domain)?;
        }
        writeln!(
            out,
            "{} nodes, height {}: {errors} error(s), {warnings} warning(s)",
            h.len(),
            h.height()
        )
        .map_err(domain)?;
    }
    Ok(if errors > 0 { 1 } else { 0 })
}

fn simulate(a: &SimulateArgs, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let h = load_hierarchy(a.hierarchy.hierarchy.as_deref())?;
    let model: AnnotatorModel = a.model.parse().map_err(domain)?;
    let golds = match &a.gold {
        Some(p) => {
            resolve_golds(&h, &read_label_lines(open(p)?).map_err(domain)?).map_err(domain)?
        }
        None => gold_per_node(&h, 1),
    };
    let (records, report) =
        simulate_campaign(&h, &golds, model, a.annotators, a.seed).map_err(domain)?;
    if let Some(p) = &a.records_out {
        let mut f = File::create(p).map_err(domain)?;
        for r in &records {
            writeln!(f, "{}", serde_json::to_string(r).map_err(domain)?).map_err(domain)?;
        }
    }
    if json {
        return emit_json(out, &report);
    }
    writeln!(
        out,
        "model {} | {} annotator(s) | {} task(s) | seed {} ({})\n",
        report.model, report.annotators, report.tasks, report.seed, report.generator
    )
    .map_err(domain)?;
    match &report.agreement {
        Some(r) => write!(out, "{}", r.render(Some(&h))),
        None => writeln!(out, "alpha undefined (fewer than two values per task)"),
    }
    .map_err(domain)?;
    write!(out, "\n{}", report.audit.render(&h)).map_err(domain)
}

fn alpha(a: &AlphaArgs, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let h = a
        .hierarchy
        .hierarchy
        .as_deref()
        .map(|p| load_hierarchy(Some(p)))
        .transpose()?;
    let m = ReliabilityMatrix::from_csv(open(&a.matrix)?).map_err(domain)?;
    let opts = AlphaOptions {
        exclude_reserved: a.exclude_reserved,
    };
    let report = agreement_report_with(&m, h.as_ref(), opts).map_err(domain)?;
    if json {
        emit_json(out, &report)
    } else {
        write!(out, "{}", report.render(h.as_ref())).map_err(domain)
    }
}

fn audit(a: &AuditArgs, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let h = load_hierarchy(a.hierarchy.hierarchy.as_deref())?;
    let labels = resolve_labels(&h, &read_label_lines(open(&a.records)?).map_err(domain)?)
        .map_err(domain)?;
    let golds =
        resolve_golds(&h, &read_label_lines(open(&a.gold)?).map_err(domain)?).map_err(domain)?;
    let report = audit_report(&h, &labels, &golds).map_err(domain)?;
    if json {
        emit_json(out, &report)
    } else {
        write!(out, "{}", report.render(&h)).map_err(domain)
    }
}

fn tasks(a: &TasksArgs, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let images = read_manifest(open(&a.dataset)?).map_err(domain)?;
    let tasks = expand_dataset(&images, a.strategy).map_err(domain)?;
    let stats = dataset_stats(&images);
    if json {
        return emit_json(
            out,
            &json!({"strategy": a.strategy, "stats": stats, "tasks": tasks}),
        );
    }
    for t in &tasks {
        writeln!(out, "{}", serde_json::to_string(t).map_err(domain)?).map_err(domain)?;
    }
    writeln!(
        out,
        "# {} image(s) ({} multi-object), {} task(s), {} overlapping region pair(s)",
        stats.images,
        stats.multi_object_images,
        tasks.len(),
        stats.overlapping_region_pairs
    )
    .map_err(domain)
}

fn load_config(path: &Path) -> Result<ServiceConfig, CliError> {
    ServiceConfig::load(existing(path)?).map_err(domain)
}

fn open_store_error(cfg: &ServiceConfig, e: StoreError) -> CliError {
    match e {
        StoreError::CorruptJournal { line, message } => CliError::Domain(format!(
            "journal {} is corrupt at line {line}: {message}\n\
             hint: keep a copy, then truncate the file just before that line and restart; \
             events after it are lost",
            cfg.data_dir.join("journal.jsonl").display()
        )),
        other => domain(other),
    }
}

fn export(a: &ExportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&a.config)?;
    let store = CampaignStore::open(&cfg.data_dir).map_err(|e| open_store_error(&cfg, e))?;
    let lines = store
        .export_dataset(&a.campaign, a.scheme, a.seed)
        .map_err(domain)?;
    write!(out, "{}", export_jsonl(&lines)).map_err(domain)
}

fn serve(a: &ServeArgs, json: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = load_config(&a.config)?;
    let state = AppState::open(&cfg).map_err(|e| open_store_error(&cfg, e))?;
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(domain)?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(cfg.address())
            .await
            .map_err(|e| CliError::Domain(format!("cannot bind {}: {e}", cfg.address())))?;
        let addr = listener.local_addr().map_err(domain)?;
        if json {
            writeln!(out, "{}", json!({"listening": format!("http://{addr}")}))
        } else {
            writeln!(out, "listening on http://{addr}")
        }
        .and_then(|_| out.flush())
        .map_err(domain)?;
        crate::campaign::serve(listener, state, shutdown_signal())
            .await
            .map_err(domain)
    })
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    {
        let term = async {
            match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
                Ok(mut s) => {
                    s.recv().await;
                }
                Err(_) => std::future::pending().await,
            }
        };
        tokio::select! {
            _ = ctrl_c => {}
            _ = term => {}
        }
    }
    #[cfg(not(unix))]
    ctrl_c.await;
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
