//! The `searchrag` command line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use super::backends::{BackendSpec, LlmSpec, SearchKind};
use super::dataset::load_dataset;
use super::summary::emit_summary;
use crate::error::Error;
use crate::pipeline::{run_dataset, Backends, RunOutcome, RunReport};
use crate::prompts::PromptSet;
use crate::types::{EntropySpace, Mode, Question, RunConfig};

pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_QUOTA: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "searchrag",
    version,
    about = "Search-augmented multiple-choice QA with entropy-based snippet selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a dataset through the pipeline and write report.json.
    Run(Box<RunArgs>),
    /// Compare saved reports against a baseline report.
    Summary(SummaryArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Cot,
    QuestionOnly,
    Searchrag,
    SearchragUnfiltered,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Cot => Mode::Cot,
            ModeArg::QuestionOnly => Mode::QuestionOnlyRetrieval,
            ModeArg::Searchrag => Mode::Searchrag,
            ModeArg::SearchragUnfiltered => Mode::SearchragUnfiltered,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EntropySpaceArg {
    Labels,
    Raw,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSONL dataset, one `{id, question, options, answer}` object per line.
    #[arg(long)]
    pub dataset: PathBuf,
    /// TOML file with run-configuration defaults; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Query samples per question (default 32)
    #[arg(long)]
    pub num_queries: Option<u32>,
    /// Sampling temperature for query generation.
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_gen_tokens: Option<u32>,
    #[arg(long)]
    pub top_logprobs: Option<u32>,
    /// Base seed; per-sample seeds are derived from it
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_snippet_chars: Option<usize>,
    /// Upper bound on kept snippets (default unlimited)
    #[arg(long)]
    pub max_kept: Option<usize>,
    #[arg(long, value_enum)]
    pub entropy_space: Option<EntropySpaceArg>,
    /// `http` or `mock:<script.json>`.
    #[arg(long, default_value = "http")]
    pub llm: LlmSpec,
    #[arg(long, value_enum)]
    pub search: Option<SearchKind>,
    /// Search cache directory
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// JSONL corpus of `{id, title, text}` documents
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Questions processed concurrently.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Directory of template overrides.
    #[arg(long)]
    pub prompt_dir: Option<PathBuf>,
    /// Output directory
    #[arg(short, long)]
    pub output: PathBuf,
    /// Also write traces/<question id>.json with prompts and timings.
    #[arg(long)]
    pub traces: bool,
    /// Repeat the run over several values, e.g. `num-queries=0,4,16,32`.
    #[arg(long)]
    pub sweep: Option<Sweep>,
    /// Report label; defaults to the mode name.
    #[arg(long)]
    pub label: Option<String>,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    /// Label of the baseline report.
    #[arg(long)]
    pub baseline: String,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
}

/// Values of `--sweep num-queries=...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sweep {
    pub num_queries: Vec<u32>,
}

impl std::str::FromStr for Sweep {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, values) = s
            .split_once('=')
            .ok_or("expected num-queries=<m>,<m>,...")?;
        if !matches!(key.trim(), "num-queries" | "num_queries") {
            return Err(format!("only num-queries can be swept, got {key:?}"));
        }
        let num_queries = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<u32>()
                    .map_err(|e| format!("bad value {v:?}: {e}"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if num_queries.is_empty() {
            return Err("sweep needs at least one value".into());
        }
        Ok(Sweep { num_queries })
    }
}

/// Optional overrides read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    mode: Option<Mode>,
    num_queries: Option<u32>,
    gen_temperature: Option<f64>,
    max_gen_tokens: Option<u32>,
    top_logprobs: Option<u32>,
    seed: Option<u64>,
    max_snippet_chars: Option<usize>,
    max_kept: Option<usize>,
    entropy_space: Option<EntropySpace>,
    parallelism: Option<usize>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl RunArgs {
    pub fn run_config(&self) -> Result<RunConfig, Error> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let raw = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let file: ConfigFile = toml::from_str(&raw)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            set(&mut cfg.mode, file.mode);
            set(&mut cfg.num_queries, file.num_queries);
            set(&mut cfg.gen_temperature, file.gen_temperature);
            set(&mut cfg.max_gen_tokens, file.max_gen_tokens);
            set(&mut cfg.top_logprobs, file.top_logprobs);
            set(&mut cfg.seed, file.seed);
            set(&mut cfg.max_snippet_chars, file.max_snippet_chars);
            set(&mut cfg.entropy_space, file.entropy_space);
            set(&mut cfg.parallelism, file.parallelism);
            if file.max_kept.is_some() {
                cfg.max_kept = file.max_kept;
            }
        }
        set(&mut cfg.mode, self.mode.map(Mode::from));
        set(&mut cfg.num_queries, self.num_queries);
        set(&mut cfg.gen_temperature, self.temperature);
        set(&mut cfg.max_gen_tokens, self.max_gen_tokens);
        set(&mut cfg.top_logprobs, self.top_logprobs);
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.max_snippet_chars, self.max_snippet_chars);
        set(
            &mut cfg.entropy_space,
            self.entropy_space.map(|e| match e {
                EntropySpaceArg::Labels => EntropySpace::Labels,
                EntropySpaceArg::Raw => EntropySpace::Raw,
            }),
        );
        set(&mut cfg.parallelism, self.parallelism);
        if self.max_kept.is_some() {
            cfg.max_kept = self.max_kept;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn backend_spec(&self) -> BackendSpec {
        BackendSpec {
            search: self.search,
            cache_dir: self.cache_dir.clone(),
            corpus: self.corpus.clone(),
            ..BackendSpec::new(self.llm.clone())
        }
    }
}

/// Parses arguments and runs, returning the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Summary(args) => cmd_summary(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::QuotaAbort(_) => EXIT_QUOTA,
        Error::Config(_) | Error::Type(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), Error> {
    fs::create_dir_all(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// File-name-safe form of a question id.
pub fn trace_file_name(qid: &str) -> String {
    let safe: String = qid
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.json")
}

/// Writes `report.json` and, if asked, one trace file per question.
pub fn write_outcome(dir: &Path, outcome: &RunOutcome, traces: bool) -> Result<(), Error> {
    create_dir(dir)?;
    write_json(&dir.join("report.json"), &outcome.report)?;
    if traces {
        let tdir = dir.join("traces");
        create_dir(&tdir)?;
        for t in &outcome.traces {
            write_json(&tdir.join(trace_file_name(&t.question_id)), t)?;
        }
    }
    Ok(())
}

pub fn describe(report: &RunReport) -> String {
    let a = &report.aggregate;
    let c = &a.calls;
    format!(
        "{}: accuracy {:.2}% ({}/{}), parse failures {}, errors {}; llm calls {} (query_gen {}, base_probe {}, \
         snippet_probe {}, final {}); search calls {} (live {}, cache {}, corpus {})",
        report.label,
        a.accuracy * 100.0,
        a.n_correct,
        a.n,
        a.n_parse_failures,
        a.n_errors,
        c.llm_total(),
        c.query_gen,
        c.base_probe,
        c.snippet_probe,
        c.final_answer,
        c.search,
        c.search_live,
        c.search_cache,
        c.search_corpus,
    )
}

/// Configurations of a `num-queries` sweep. Zero generated queries means
/// searching with the question itself.
pub fn sweep_configs(base: &RunConfig, sweep: &Sweep) -> Vec<(String, RunConfig)> {
    sweep
        .num_queries
        .iter()
        .map(|&m| {
            let mut cfg = base.clone();
            cfg.num_queries = m;
            if m == 0 && cfg.mode.uses_generated_queries() {
                cfg.mode = Mode::QuestionOnlyRetrieval;
            }
            (format!("m{m}"), cfg)
        })
        .collect()
}

fn run_labelled(
    label: &str,
    questions: &[Question],
    cfg: &RunConfig,
    backends: &Backends,
    prompts: &PromptSet,
) -> Result<RunOutcome, Error> {
    let mut outcome = run_dataset(questions, cfg, backends, prompts)?;
    outcome.report.label = label.to_string();
    Ok(outcome)
}

fn cmd_run(args: &RunArgs) -> Result<(), Error> {
    let cfg = args.run_config()?;
    let questions = load_dataset(&args.dataset)?;
    let prompts = match &args.prompt_dir {
        Some(dir) => PromptSet::from_dir(dir)?,
        None => PromptSet::builtin(),
    };
    let mut spec = args.backend_spec();
    if cfg.mode == Mode::Cot {
        spec.search = None;
    } else if spec.search.is_none() {
        return Err(Error::Config(format!("mode {} needs --search", cfg.mode)));
    }
    let backends = spec.build()?;

    match &args.sweep {
        None => {
            let label = args
                .label
                .clone()
                .unwrap_or_else(|| cfg.mode.as_str().to_string());
            let outcome = run_labelled(&label, &questions, &cfg, &backends, &prompts)?;
            write_outcome(&args.output, &outcome, args.traces)?;
            println!("{}", describe(&outcome.report));
        }
        Some(sweep) => {
            let mut reports = Vec::new();
            let mut outcomes = Vec::new();
            for (label, run_cfg) in sweep_configs(&cfg, sweep) {
                let outcome = run_labelled(&label, &questions, &run_cfg, &backends, &prompts)?;
                println!("{}", describe(&outcome.report));
                reports.push(outcome.report.clone());
                outcomes.push((label, outcome));
            }
            for (label, outcome) in &outcomes {
                write_outcome(&args.output.join(label), outcome, args.traces)?;
            }
            let baseline = &reports[0].label;
            match emit_summary(&reports, baseline) {
                Ok(summary) => {
                    print!("{}", summary.render_table());
                    write_json(&args.output.join("summary.json"), &summary)?;
                }
                Err(e) => eprintln!("summary skipped: {e}"),
            }
        }
    }
    Ok(())
}

fn cmd_summary(args: &SummaryArgs) -> Result<(), Error> {
    let reports = args
        .reports
        .iter()
        .map(|path| {
            let raw = fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            Ok(serde_json::from_str::<RunReport>(&raw)?)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    let summary = emit_summary(&reports, &args.baseline)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&summary)?);
    } else {
        print!("{}", summary.render_table());
    }
    Ok(())
}
