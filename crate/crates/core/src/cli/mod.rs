//! The `spc` command line.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 runtime failure.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use config::{RunConfig, OUTPUT_DIR_ENV};

use crate::corpus::{corpus_stats, krippendorff_alpha, load_annotations, load_corpus, parse_corpus, validate_annotations, Dialogue, Split};
use crate::discovery::{train_discovery, DiscoveryModel};
use crate::error::{Error, Result};
use crate::pipeline::{
    assemble_profiles, emit_report, render_report, run_pipeline, run_standalone, EvalOptions, EvalReport, Mode,
    SpeakerProfile, Stages,
};
use crate::training::TrainLog;
use crate::typeid::{train_typeid, TypeIdModel};
use crate::valueex::{train_valueex, value_examples, ValueExModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

pub const DISCOVERY_CHECKPOINT: &str = "discovery.json";
pub const TYPEID_CHECKPOINT: &str = "typeid.json";
pub const VALUEEX_CHECKPOINT: &str = "valueex.json";

#[derive(Debug, Parser)]
#[command(name = "spc", version, about = "Speaker persona profiling for multiparty dialogue")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Per-split corpus statistics.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// List annotation rule violations; exits 2 if there are any.
    Validate {
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Krippendorff's alpha (nominal) of an annotation file.
    Agreement {
        #[arg(long)]
        annotations: PathBuf,
    },
    /// Train the persona discovery model.
    TrainDiscovery(RunArgs),
    /// Train the persona type model.
    TrainTypeid(RunArgs),
    /// Train the persona value model.
    TrainValueex(RunArgs),
    /// Evaluate trained models in standalone or pipeline mode.
    Evaluate(RunArgs),
    /// Build speaker profiles with the full pipeline.
    Profile(RunArgs),
    /// Render the text table of a JSON report.
    Report {
        #[arg(long)]
        input: PathBuf,
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    split: Option<Split>,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to $SPC_OUTPUT_DIR, then `spc-out`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    /// Where to read checkpoints from; defaults to the output directory.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    disable_speaker_module: bool,
    #[arg(long)]
    disable_pretrained_context: bool,
    /// Override any config key, e.g. `--set typeid.epochs=5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(p) = &self.corpus {
            c.corpus = Some(p.clone());
        }
        if let Some(s) = self.split {
            c.split = s;
        }
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if let Some(d) = &self.output_dir {
            c.output_dir = Some(d.clone());
        }
        if let Some(m) = self.mode {
            c.mode = m;
        }
        c.disable_speaker_module |= self.disable_speaker_module;
        c.disable_pretrained_context |= self.disable_pretrained_context;
        c.resolved()
    }

    fn models_dir(&self, config: &RunConfig) -> PathBuf {
        self.models.clone().unwrap_or_else(|| config.output_dir())
    }
}

/// Exit status for an error.
pub fn exit_code(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Io { .. } | Error::Parse { .. } | Error::Invariant { .. } | Error::Data(_) | Error::Missing(_) => {
            EXIT_DATA
        }
        Error::Shape(_) | Error::Checkpoint(_) => EXIT_RUNTIME,
    }
}

/// Run `spc` with `argv` (program name first), printing to stdout/stderr.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    match execute(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn save_log(dir: &Path, name: &str, log: &TrainLog) -> Result<()> {
    let text = serde_json::to_string_pretty(log).map_err(|e| Error::Data(e.to_string()))?;
    write_file(&dir.join(name), &(text + "\n"))
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn execute(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Stats { corpus, json } => {
            let stats = corpus_stats(&load_corpus(&corpus)?);
            let text = if json {
                serde_json::to_string_pretty(&stats).map_err(|e| Error::Data(e.to_string()))? + "\n"
            } else {
                stats.render()
            };
            write_out(out, &text)?;
            Ok(EXIT_OK)
        }
        Command::Validate { corpus } => {
            let violations = validate_annotations(&parse_corpus(&corpus)?);
            let mut text = String::new();
            for v in &violations {
                text.push_str(&v.to_string());
                text.push('\n');
            }
            text.push_str(&format!("{} violation(s)\n", violations.len()));
            write_out(out, &text)?;
            Ok(if violations.is_empty() { EXIT_OK } else { EXIT_DATA })
        }
        Command::Agreement { annotations } => {
            let set = load_annotations(&annotations)?;
            let alpha = krippendorff_alpha(&set)?;
            write_out(
                out,
                &format!(
                    "items: {}\nannotators: {}\nalpha: {alpha:.6}\n",
                    set.item_ids().len(),
                    set.annotators().count()
                ),
            )?;
            Ok(EXIT_OK)
        }
        Command::TrainDiscovery(args) => {
            let config = args.config()?;
            let corpus = load_corpus(config.corpus()?)?;
            let dir = config.output_dir();
            prepare(&dir)?;
            let trained = train_discovery(&corpus, &config.discovery)?;
            trained.model.save(&dir.join(DISCOVERY_CHECKPOINT))?;
            save_log(&dir, "discovery.log.json", &trained.log)?;
            write_out(out, &summary("discovery", &trained.log, &dir.join(DISCOVERY_CHECKPOINT)))?;
            Ok(EXIT_OK)
        }
        Command::TrainTypeid(args) => {
            let config = args.config()?;
            let corpus = load_corpus(config.corpus()?)?;
            let dir = config.output_dir();
            prepare(&dir)?;
            let instances: Vec<_> = corpus.split(Split::Train).iter().flat_map(Dialogue::gold_instances).collect();
            let trained = train_typeid(&instances, &config.typeid)?;
            trained.model.save(&dir.join(TYPEID_CHECKPOINT))?;
            save_log(&dir, "typeid.log.json", &trained.log)?;
            write_out(out, &summary("typeid", &trained.log, &dir.join(TYPEID_CHECKPOINT)))?;
            Ok(EXIT_OK)
        }
        Command::TrainValueex(args) => {
            let config = args.config()?;
            let corpus = load_corpus(config.corpus()?)?;
            let dir = config.output_dir();
            prepare(&dir)?;
            let examples = value_examples(corpus.split(Split::Train));
            let trained = train_valueex(&examples, &config.valueex)?;
            trained.model.save(&dir.join(VALUEEX_CHECKPOINT))?;
            save_log(&dir, "valueex.log.json", &trained.log)?;
            write_out(out, &summary("valueex", &trained.log, &dir.join(VALUEEX_CHECKPOINT)))?;
            Ok(EXIT_OK)
        }
        Command::Evaluate(args) => {
            let config = args.config()?;
            let corpus = load_corpus(config.corpus()?)?;
            let models = Models::load(&args.models_dir(&config), &config)?;
            let report = evaluate(&corpus, &models, &config, config.mode)?;
            let dir = config.output_dir();
            let (json, text) = emit_report(&report, &dir.join(format!("report-{}", config.mode.as_str())))?;
            write_out(out, &render_report(&report))?;
            write_out(out, &format!("wrote {} and {}\n", json.display(), text.display()))?;
            Ok(EXIT_OK)
        }
        Command::Profile(args) => {
            let config = args.config()?;
            let corpus = load_corpus(config.corpus()?)?;
            let models = Models::load(&args.models_dir(&config), &config)?;
            let report = evaluate(&corpus, &models, &config, Mode::Pipeline)?;
            let mut lines = String::new();
            let mut shown = String::new();
            for (d, outputs) in corpus.split(config.split).iter().zip(&report.outputs.dialogues) {
                let profiles = assemble_profiles(d, outputs)?;
                lines.push_str(&profile_line(&d.id, &profiles)?);
                shown.push_str(&render_profiles(&d.id, &profiles));
            }
            let path = config.output_dir().join("profiles.jsonl");
            write_file(&path, &lines)?;
            write_out(out, &shown)?;
            write_out(out, &format!("wrote {}\n", path.display()))?;
            Ok(EXIT_OK)
        }
        Command::Report { input, output } => {
            let text = fs::read_to_string(&input).map_err(|e| Error::io(&input, e))?;
            let report: EvalReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: input.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            let table = render_report(&report);
            match output {
                Some(p) => write_file(&p, &table)?,
                None => write_out(out, &table)?,
            }
            Ok(EXIT_OK)
        }
    }
}

fn summary(name: &str, log: &TrainLog, path: &Path) -> String {
    let mut s = format!(
        "{name}: {} epoch(s), loss {:.6} -> {:.6}\n",
        log.epoch_losses.len(),
        log.initial_loss().unwrap_or(f64::NAN),
        log.final_loss().unwrap_or(f64::NAN)
    );
    for w in &log.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s.push_str(&format!("saved {}\n", path.display()));
    s
}

struct Models {
    discovery: DiscoveryModel,
    typeid: TypeIdModel,
    valueex: ValueExModel,
}

impl Models {
    fn load(dir: &Path, config: &RunConfig) -> Result<Self> {
        let path = |name: &str| {
            let p = dir.join(name);
            if p.exists() {
                Ok(p)
            } else {
                Err(Error::Missing(format!("model checkpoint {} not found", p.display())))
            }
        };
        let mut discovery = DiscoveryModel::load(&path(DISCOVERY_CHECKPOINT)?)?;
        discovery.set_decision_threshold(config.discovery.decision_threshold);
        let mut valueex = ValueExModel::load(&path(VALUEEX_CHECKPOINT)?)?;
        valueex.config_mut().decode = config.valueex.decode.clone();
        Ok(Self {
            discovery,
            typeid: TypeIdModel::load(&path(TYPEID_CHECKPOINT)?)?,
            valueex,
        })
    }
}

fn evaluate(corpus: &crate::Corpus, models: &Models, config: &RunConfig, mode: Mode) -> Result<EvalReport> {
    let stages = Stages {
        detector: &models.discovery,
        classifier: &models.typeid,
        generator: &models.valueex,
    };
    let options = EvalOptions {
        split: config.split,
        max_exemplars: config.max_exemplars,
    };
    let mut snapshot = config.clone();
    snapshot.mode = mode;
    match mode {
        Mode::Standalone => run_standalone(corpus, stages, &options, snapshot.snapshot()),
        Mode::Pipeline => run_pipeline(corpus, stages, &options, snapshot.snapshot()),
    }
}

fn profile_line(dialogue_id: &str, profiles: &[SpeakerProfile]) -> Result<String> {
    let v = serde_json::json!({ "dialogue": dialogue_id, "profiles": profiles });
    Ok(serde_json::to_string(&v).map_err(|e| Error::Data(e.to_string()))? + "\n")
}

fn render_profiles(dialogue_id: &str, profiles: &[SpeakerProfile]) -> String {
    let mut s = format!("{dialogue_id}\n");
    if profiles.is_empty() {
        s.push_str("  none\n");
    }
    for p in profiles {
        s.push_str(&format!("  {}\n", p.speaker_id));
        for e in &p.entries {
            s.push_str(&format!("    {} = {:?} (utterance {})\n", e.persona_type, e.value, e.evidence));
        }
    }
    s
}
