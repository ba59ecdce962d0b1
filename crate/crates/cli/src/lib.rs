//! `morphalign` command implementations. `main.rs` only parses arguments and
//! maps [`CliError`] to the process exit code.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use morphalign::aligner::{align_corpus, AlignError, AlignedCorpus};
use morphalign::analysis::{render_report, render_summary, AlignmentReport, CountSide, ReportFormat, SummaryRow};
use morphalign::corpus::{read_parallel, read_tsv, Bitext, CorpusError, LoadOptions, RawPair, DEFAULT_MAX_LEN};
use morphalign::dump::{self, DumpError, JsonRecord};
use morphalign::ibm::serialize::{ModelFormatError, TrainedModel};
use morphalign::ibm::{train, IbmError, IterationRecord, ModelConfig, Stage, TrainSchedule};

pub const EXIT_INGEST: i32 = 2;
pub const EXIT_TRAIN: i32 = 3;
pub const EXIT_MODEL: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;
pub const EXIT_OTHER: i32 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        CliError { code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::UnknownToken(_) => EXIT_MODEL,
            _ => EXIT_INGEST,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<ModelFormatError> for CliError {
    fn from(e: ModelFormatError) -> Self {
        CliError::new(EXIT_MODEL, e.to_string())
    }
}

impl From<AlignError> for CliError {
    fn from(e: AlignError) -> Self {
        CliError::new(EXIT_MODEL, e.to_string())
    }
}

impl From<DumpError> for CliError {
    fn from(e: DumpError) -> Self {
        let code = match e {
            DumpError::Parse { .. } => EXIT_INGEST,
            DumpError::Mismatch(_) => EXIT_MISMATCH,
        };
        CliError::new(code, e.to_string())
    }
}

fn training_error(e: IbmError) -> CliError {
    let code = match e {
        IbmError::StageMismatch { .. } => EXIT_MODEL,
        _ => EXIT_TRAIN,
    };
    CliError::new(code, format!("training failed: {e}"))
}

#[derive(Parser, Debug)]
#[command(name = "morphalign", version, about = "Morpheme alignment with IBM Models 1-4 and non-alignment reports")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a direction model and write it as JSON.
    Train(TrainArgs),
    /// Align a bitext with a trained model and write text and JSON-lines dumps.
    Align(AlignArgs),
    /// Count non-aligned tokens in an alignment dump and write reports.
    Stats(StatsArgs),
    /// Run train, align and stats for every direction in a manifest.
    Replicate(ReplicateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct CorpusArgs {
    /// Source side, one sentence per line.
    #[arg(long, requires = "tgt", conflicts_with = "tsv")]
    pub src: Option<PathBuf>,
    /// Target side, line-aligned with --src.
    #[arg(long, requires = "src")]
    pub tgt: Option<PathBuf>,
    /// Single file with `source<TAB>target` lines.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
    /// Pairs longer than this on either side are skipped.
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
}

impl CorpusArgs {
    fn read(&self) -> Result<Vec<RawPair>, CliError> {
        match (&self.src, &self.tgt, &self.tsv) {
            (Some(src), Some(tgt), None) => Ok(read_parallel(src, tgt)?),
            (None, None, Some(tsv)) => Ok(read_tsv(tsv)?),
            _ => Err(CliError::new(EXIT_INGEST, "give either --src and --tgt, or --tsv")),
        }
    }

    fn default_label(&self) -> String {
        let name = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        match (&self.src, &self.tgt, &self.tsv) {
            (Some(src), Some(tgt), _) => format!("{}-{}", name(src), name(tgt)),
            (_, _, Some(tsv)) => name(tsv),
            _ => "direction".into(),
        }
    }

    fn options(&self) -> LoadOptions {
        LoadOptions { max_len: self.max_len }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Direction label used in file names and reports.
    #[arg(long)]
    pub label: Option<String>,
    /// Stages and iteration counts, e.g. `1:5,2:5,3:3,4:3`.
    #[arg(long, default_value = "1:5,2:5,3:3,4:3")]
    pub schedule: TrainSchedule,
    /// Recorded in the model file; training itself draws no random numbers.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Floor every probability lookup (default value 1e-12).
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-12")]
    pub prob_floor: Option<f64>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Model output path; defaults to `<out-dir>/<label>.model.json`.
    #[arg(long)]
    pub model: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct AlignArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub model: PathBuf,
    /// Stage to align with; defaults to the model's final stage.
    #[arg(long)]
    pub stage: Option<Stage>,
    /// NULL-align target tokens the model has never seen instead of failing.
    #[arg(long)]
    pub allow_unk: bool,
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-12")]
    pub prob_floor: Option<f64>,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    /// Dump path stem; `.txt` and `.jsonl` are appended.
    #[arg(long)]
    pub dump: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ReportArgs {
    /// Comma-separated list of tsv, json, md.
    #[arg(long, default_value = "tsv,json,md")]
    pub format: String,
    /// Show only the k most non-aligned tokens in tsv and md reports.
    #[arg(long)]
    pub top: Option<usize>,
    /// Count NULL-linked target tokens instead of unaligned source tokens.
    #[arg(long)]
    pub count_null_target: bool,
}

impl ReportArgs {
    fn formats(&self) -> Result<Vec<ReportFormat>, CliError> {
        ReportFormat::parse_list(&self.format).map_err(|e| CliError::new(EXIT_OTHER, e))
    }

    fn side(&self) -> CountSide {
        if self.count_null_target {
            CountSide::Target
        } else {
            CountSide::Source
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Alignment dump, text or JSON lines.
    #[arg(long)]
    pub dump: PathBuf,
    #[arg(long)]
    pub label: Option<String>,
    /// Stage recorded in the report; read from a JSON-lines dump when omitted.
    #[arg(long)]
    pub stage: Option<Stage>,
    #[command(flatten)]
    pub report: ReportArgs,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct ReplicateArgs {
    /// Tab-separated `label source target` lines; paths are relative to the manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "1:5,2:5,3:3,4:3")]
    pub schedule: TrainSchedule,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Stage whose alignments are counted; defaults to the schedule's last stage.
    #[arg(long)]
    pub stage: Option<Stage>,
    #[command(flatten)]
    pub report: ReportArgs,
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-12")]
    pub prob_floor: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    pub max_len: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => cmd_train(&args).map(|_| ()),
        Command::Align(args) => cmd_align(&args).map(|_| ()),
        Command::Stats(args) => cmd_stats(&args).map(|_| ()),
        Command::Replicate(args) => cmd_replicate(&args),
    }
}

/// Writes through a temporary file in the destination directory so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError::new(EXIT_OTHER, format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents.as_bytes()).map_err(io_err)?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file().set_permissions(fs::Permissions::from_mode(0o644)).map_err(io_err)?;
    }
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn file_label(label: &str) -> String {
    label.chars().map(|c| if c == '/' || c == '\\' || c.is_whitespace() { '_' } else { c }).collect()
}

fn train_model(
    raw: &[RawPair],
    label: &str,
    schedule: &TrainSchedule,
    seed: u64,
    config: &ModelConfig,
    mut telemetry: impl FnMut(&IterationRecord),
) -> Result<(TrainedModel, Bitext), CliError> {
    let bitext = Bitext::build(raw, label, LoadOptions { max_len: config.max_len });
    let outcome = train(&bitext, schedule, config, None, &mut telemetry).map_err(training_error)?;
    let model = TrainedModel {
        direction_label: label.to_string(),
        schedule: schedule.clone(),
        seed,
        src_vocab: bitext.src_vocab.clone(),
        tgt_vocab: bitext.tgt_vocab.clone(),
        params: outcome.params,
    };
    Ok((model, bitext))
}

fn print_telemetry(prefix: Option<&str>, r: &IterationRecord) {
    match prefix {
        Some(p) => eprintln!("{p} {} {} {:.6}", r.stage, r.iteration, r.log_likelihood),
        None => eprintln!("{} {} {:.6}", r.stage, r.iteration, r.log_likelihood),
    }
}

pub fn cmd_train(args: &TrainArgs) -> Result<PathBuf, CliError> {
    let raw = args.corpus.read()?;
    let label = args.label.clone().unwrap_or_else(|| args.corpus.default_label());
    let config = ModelConfig { prob_floor: args.prob_floor, max_len: args.corpus.max_len, ..ModelConfig::default() };
    let (model, _) = train_model(&raw, &label, &args.schedule, args.seed, &config, |r| print_telemetry(None, r))?;
    let path = args.model.clone().unwrap_or_else(|| args.out_dir.join(format!("{}.model.json", file_label(&label))));
    write_atomic(&path, &model.to_json())?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

pub fn load_model(path: &Path) -> Result<TrainedModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new(EXIT_MODEL, format!("{}: {e}", path.display())))?;
    TrainedModel::from_json(&text).map_err(|e| CliError::new(EXIT_MODEL, format!("{}: {e}", path.display())))
}

fn align_with(
    model: &TrainedModel,
    raw: &[RawPair],
    label: &str,
    stage: Stage,
    allow_unk: bool,
    opts: LoadOptions,
) -> Result<AlignedCorpus, CliError> {
    let bitext = Bitext::encode_with(raw, label, &model.src_vocab, &model.tgt_vocab, opts, allow_unk)?;
    Ok(align_corpus(&bitext, &model.params, stage)?)
}

fn write_dumps(stem: &Path, aligned: &AlignedCorpus, raw: &[RawPair]) -> Result<(PathBuf, PathBuf), CliError> {
    let with_ext = |ext: &str| {
        let mut s = stem.as_os_str().to_owned();
        s.push(ext);
        PathBuf::from(s)
    };
    let (txt, jsonl) = (with_ext(".txt"), with_ext(".jsonl"));
    write_atomic(&txt, &dump::write_text(aligned, raw))?;
    write_atomic(&jsonl, &dump::write_jsonl(aligned, raw))?;
    Ok((txt, jsonl))
}

pub fn cmd_align(args: &AlignArgs) -> Result<(PathBuf, PathBuf), CliError> {
    let mut model = load_model(&args.model)?;
    if args.prob_floor.is_some() {
        model.params.config.prob_floor = args.prob_floor;
    }
    let raw = args.corpus.read()?;
    let label = args.label.clone().unwrap_or_else(|| model.direction_label.clone());
    let stage = args.stage.unwrap_or(model.params.stage);
    let opts = LoadOptions { max_len: args.corpus.max_len.min(model.params.config.max_len) };
    let aligned = align_with(&model, &raw, &label, stage, args.allow_unk, opts)?;
    let stem = args.dump.clone().unwrap_or_else(|| args.out_dir.join(format!("{}.align", file_label(&label))));
    write_dumps(&stem, &aligned, &raw)
}

fn write_reports(
    report: &AlignmentReport,
    out_dir: &Path,
    formats: &[ReportFormat],
    top: Option<usize>,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for &format in formats {
        let path = out_dir.join(format!("{}.report.{}", file_label(&report.direction_label), format.extension()));
        write_atomic(&path, &render_report(report, format, top))?;
        written.push(path);
    }
    Ok(written)
}

fn stats_line(report: &AlignmentReport) -> String {
    let s = &report.stats;
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        report.direction_label,
        report.stage,
        s.tokens,
        s.na_tokens,
        s.na_words,
        s.na_morphemes,
        s.rate_3dp()
    )
}

pub fn cmd_stats(args: &StatsArgs) -> Result<Vec<PathBuf>, CliError> {
    let formats = args.report.formats()?;
    let raw = args.corpus.read()?;
    let text = fs::read_to_string(&args.dump)
        .map_err(|e| CliError::new(EXIT_INGEST, format!("{}: {e}", args.dump.display())))?;
    let records = dump::parse_any(&text)?;
    let stage = match args.stage {
        Some(s) => s,
        None => {
            text.lines().next().and_then(|l| serde_json::from_str::<JsonRecord>(l).ok()).map_or(Stage::M4, |r| r.stage)
        }
    };
    let label = args.label.clone().unwrap_or_else(|| args.corpus.default_label());
    let bitext = Bitext::build(&raw, &label, args.corpus.options());
    let aligned = dump::to_aligned(&records, &bitext, stage)?;
    let report = AlignmentReport::build(&aligned, &bitext, args.report.side())
        .map_err(|e| CliError::new(EXIT_MISMATCH, e.to_string()))?;
    let written = write_reports(&report, &args.out_dir, &formats, args.report.top)?;
    println!("{}", stats_line(&report));
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub label: String,
    pub source: PathBuf,
    pub target: PathBuf,
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::new(EXIT_INGEST, format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        let [label, source, target] = fields[..] else {
            return Err(CliError::new(
                EXIT_INGEST,
                format!("{}: line {}: expected `label<TAB>source<TAB>target`", path.display(), k + 1),
            ));
        };
        entries.push(ManifestEntry { label: label.to_string(), source: base.join(source), target: base.join(target) });
    }
    if entries.is_empty() {
        return Err(CliError::new(EXIT_INGEST, format!("{}: no directions listed", path.display())));
    }
    Ok(entries)
}

struct DirectionOutcome {
    report: AlignmentReport,
    log: Vec<IterationRecord>,
}

fn run_direction(entry: &ManifestEntry, args: &ReplicateArgs, stage: Stage) -> Result<DirectionOutcome, CliError> {
    let raw = read_parallel(&entry.source, &entry.target)?;
    let config = ModelConfig { prob_floor: args.prob_floor, max_len: args.max_len, ..ModelConfig::default() };
    let mut log = Vec::new();
    let (model, bitext) = train_model(&raw, &entry.label, &args.schedule, args.seed, &config, |r| log.push(*r))?;
    let name = file_label(&entry.label);
    write_atomic(&args.out_dir.join(format!("{name}.model.json")), &model.to_json())?;
    let aligned = align_corpus(&bitext, &model.params, stage)?;
    write_dumps(&args.out_dir.join(format!("{name}.align")), &aligned, &raw)?;
    let report = AlignmentReport::build(&aligned, &bitext, args.report.side())
        .map_err(|e| CliError::new(EXIT_MISMATCH, e.to_string()))?;
    write_reports(&report, &args.out_dir, &args.report.formats()?, args.report.top)?;
    Ok(DirectionOutcome { report, log })
}

/// Directions run concurrently; the summary is assembled afterwards in
/// manifest order. Returns the first failure's exit code after all
/// directions have been attempted.
pub fn cmd_replicate(args: &ReplicateArgs) -> Result<(), CliError> {
    let formats = args.report.formats()?;
    let entries = read_manifest(&args.manifest)?;
    let stage = args.stage.unwrap_or(args.schedule.final_stage());
    if stage > args.schedule.final_stage() {
        return Err(CliError::new(
            EXIT_MODEL,
            format!("--stage {stage} is above the schedule's last stage {}", args.schedule.final_stage()),
        ));
    }
    let outcomes: Vec<Result<DirectionOutcome, CliError>> =
        entries.par_iter().map(|e| run_direction(e, args, stage)).collect();

    let mut rows = Vec::with_capacity(entries.len());
    let mut first_error = None;
    for (entry, outcome) in entries.iter().zip(outcomes) {
        match outcome {
            Ok(o) => {
                for r in &o.log {
                    print_telemetry(Some(&entry.label), r);
                }
                println!("{}", stats_line(&o.report));
                rows.push(SummaryRow {
                    direction_label: entry.label.clone(),
                    stats: Some(o.report.stats),
                    error: None,
                });
            }
            Err(e) => {
                eprintln!("{}: {e}", entry.label);
                first_error.get_or_insert(e.code);
                rows.push(SummaryRow { direction_label: entry.label.clone(), stats: None, error: Some(e.message) });
            }
        }
    }
    for format in formats {
        let path = args.out_dir.join(format!("summary.{}", format.extension()));
        write_atomic(&path, &render_summary(&rows, format))?;
    }
    match first_error {
        None => Ok(()),
        Some(code) => Err(CliError::new(code, "one or more directions failed; see the summary")),
    }
}
