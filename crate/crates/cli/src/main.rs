use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use saas_core::environment::{ParametricProfile, Question, World};
use saas_core::io::{read_json, read_jsonl, write_atomic, write_csv, write_json, write_jsonl};
use saas_core::metrics::{EvalRecord, MetricsReport};
use saas_core::optimizer::{evaluate, train_run, TrainConfig, TrainOutcome, Variant};
use saas_core::policy::Checkpoint;
use saas_core::trajectory::{parse_transcript, Mode, ParseOptions, TrajectoryRecord};
use saas_core::{EnvConfig, Environment};

#[derive(Parser)]
#[command(
    name = "saas-lab",
    version,
    about = "Search-boundary-aware RL on a synthetic multi-hop QA world"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate world.json, profile.json and questions.jsonl.
    GenEnv {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one run and write its logs and checkpoint.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out a checkpoint on a question file and report metrics.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        questions: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score externally produced transcripts against gold answers.
    Audit {
        #[arg(long)]
        transcripts: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every (variant, seed) pair and compare final metrics.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        variants: Vec<Variant>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Join every training log under a directory into one per-step CSV.
    Report {
        log_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::GenEnv { .. } => "gen-env",
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Audit { .. } => "audit",
            Command::Ablate { .. } => "ablate",
            Command::Report { .. } => "report",
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ExperimentConfig {
    env: EnvConfig,
    train: TrainConfig,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(config)
}

/// Identity of one training run, stored next to its log.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunInfo {
    variant: Variant,
    seed: u64,
    switch_step: Option<usize>,
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    Ok(write_atomic(path, text.as_bytes())?)
}

fn gen_env(config: &ExperimentConfig, out: &Path) -> Result<()> {
    let env = config.env.build()?;
    write_json(&out.join("world.json"), &env.world)?;
    write_json(&out.join("profile.json"), &env.profile)?;
    write_jsonl(
        &out.join("questions.jsonl"),
        env.train.iter().chain(&env.validation),
    )?;
    Ok(())
}

fn write_run(
    out: &Path,
    config: &TrainConfig,
    env: &Environment,
    outcome: &TrainOutcome,
) -> Result<()> {
    write_text(&out.join("training_log.csv"), &outcome.log.to_csv())?;
    write_json(&out.join("checkpoint.json"), &outcome.checkpoint)?;
    write_jsonl(&out.join("boundary_log.jsonl"), &outcome.boundary_log)?;
    write_csv(&out.join("reward_log.csv"), &outcome.reward_log)?;
    write_json(&out.join("metrics.json"), &outcome.final_report)?;
    write_json(&out.join("world.json"), &env.world)?;
    write_json(&out.join("profile.json"), &env.profile)?;
    write_jsonl(&out.join("validation.jsonl"), &env.validation)?;
    write_json(
        &out.join("run.json"),
        &RunInfo {
            variant: config.variant,
            seed: config.seed,
            switch_step: outcome.log.switch_step(),
        },
    )?;
    Ok(())
}

fn train(config: &ExperimentConfig, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut train = config.train.clone();
    if let Some(seed) = seed {
        train.seed = seed;
    }
    let env = config.env.build()?;
    let outcome = train_run(&train, &env, workers())?;
    write_run(out, &train, &env, &outcome)
}

/// World and profile stored next to `file`.
fn sibling_context(file: &Path) -> Result<(World, ParametricProfile)> {
    let dir = file.parent().unwrap_or(Path::new("."));
    let world: World = read_json(&dir.join("world.json"))?;
    let profile: ParametricProfile = read_json(&dir.join("profile.json"))?;
    Ok((world, profile))
}

fn eval(
    config: &ExperimentConfig,
    checkpoint: &Path,
    questions: &Path,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let checkpoint: Checkpoint = read_json(checkpoint)?;
    let params = checkpoint.params()?;
    let (world, profile) = sibling_context(questions)?;
    let questions: Vec<Question> = read_jsonl(questions)?;
    if questions.is_empty() {
        bail!("question file is empty");
    }
    let env = Environment {
        world,
        profile,
        train: Vec::new(),
        validation: questions,
        retrieval: config.env.retrieval(),
    };
    let seed = seed.unwrap_or(config.train.seed);
    let records = evaluate(
        &params,
        &env.validation,
        &env,
        config.train.cap,
        config.train.eval_rollouts,
        seed,
    )?;
    let report = MetricsReport::compute(&records, &env.world, &env.profile)?;
    let transcripts: Vec<TrajectoryRecord> = records
        .iter()
        .map(|r| TrajectoryRecord::from_trajectory(&r.trajectory))
        .collect();
    write_jsonl(&out.join("transcripts.jsonl"), &transcripts)?;
    write_json(&out.join("metrics.json"), &report)?;
    write_text(&out.join("metrics.csv"), &report.to_csv())
}

#[derive(Debug, Clone, Deserialize)]
struct AuditTranscript {
    question_id: String,
    #[serde(default = "enabled")]
    mode: Mode,
    transcript: String,
    #[serde(default)]
    redundancy: Option<Vec<bool>>,
}

fn enabled() -> Mode {
    Mode::SearchEnabled
}

/// A gold line is either a full question record or a bare answer record.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum GoldLine {
    Question(Question),
    Answer {
        question_id: String,
        gold: String,
        #[serde(default)]
        parametric_answerable: bool,
    },
}

fn audit(config: &ExperimentConfig, transcripts: &Path, gold: &Path, out: &Path) -> Result<()> {
    let lines: Vec<AuditTranscript> = read_jsonl(transcripts)?;
    if lines.is_empty() {
        bail!("transcript file is empty");
    }
    let gold_lines: Vec<GoldLine> = read_jsonl(gold)?;
    let context = sibling_context(gold).ok();
    let mut golds: HashMap<String, (String, bool)> = HashMap::new();
    for g in gold_lines {
        let (id, answer, para) = match g {
            GoldLine::Question(q) => {
                let para = context
                    .as_ref()
                    .is_some_and(|(_, p)| p.answerable_without_search(&q));
                (q.id.clone(), q.gold_text(), para)
            }
            GoldLine::Answer {
                question_id,
                gold,
                parametric_answerable,
            } => (question_id, gold, parametric_answerable),
        };
        golds.insert(id, (answer, para));
    }

    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.into_iter().enumerate() {
        let options = ParseOptions {
            mode: line.mode,
            cap: Some(config.train.cap),
        };
        let trajectory = parse_transcript(&line.question_id, &line.transcript, options)
            .with_context(|| {
                format!(
                    "{}:{}: question {}",
                    transcripts.display(),
                    i + 1,
                    line.question_id
                )
            })?;
        let (answer, para) = golds
            .get(&line.question_id)
            .ok_or_else(|| anyhow!("no gold answer for question {}", line.question_id))?;
        if context.is_none()
            && line.redundancy.is_none()
            && trajectory.search_queries().next().is_some()
        {
            bail!(
                "question {}: unannotated searches need world.json and profile.json next to {}",
                line.question_id,
                gold.display()
            );
        }
        records.push(EvalRecord {
            question_id: line.question_id,
            trajectory,
            gold: answer.clone(),
            parametric_answerable: *para,
            redundancy: line.redundancy,
        });
    }
    let (world, profile) = match context {
        Some(c) => c,
        None => {
            let world = World::new(0, 0, 0, Vec::new())?;
            let profile = ParametricProfile::generate(&world, &Default::default(), 0)?;
            (world, profile)
        }
    };
    let report = MetricsReport::compute(&records, &world, &profile)?;
    write_json(&out.join("metrics.json"), &report)?;
    write_text(&out.join("metrics.csv"), &report.to_csv())
}

#[derive(Debug, Clone, Serialize)]
struct ComparisonRow {
    variant: String,
    runs: usize,
    acc: f64,
    sc: f64,
    qor: Option<f64>,
    sor: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct RunRow {
    variant: String,
    seed: u64,
    switch_step: Option<usize>,
    acc: f64,
    sc: f64,
    qor: Option<f64>,
    sor: Option<f64>,
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn ablate(
    config: &ExperimentConfig,
    variants: &[Variant],
    seeds: &[u64],
    out: &Path,
) -> Result<()> {
    let env = config.env.build()?;
    let cells: Vec<(Variant, u64)> = variants
        .iter()
        .flat_map(|v| seeds.iter().map(move |s| (*v, *s)))
        .collect();
    let runs: Vec<RunRow> = cells
        .par_iter()
        .map(|&(variant, seed)| -> Result<RunRow> {
            let train = TrainConfig {
                variant,
                seed,
                ..config.train.clone()
            };
            let outcome = train_run(&train, &env, 1)?;
            let dir = out.join(variant.name()).join(format!("seed_{seed}"));
            write_run(&dir, &train, &env, &outcome)?;
            let r = outcome.final_report;
            Ok(RunRow {
                variant: variant.name().to_string(),
                seed,
                switch_step: outcome.log.switch_step(),
                acc: r.acc,
                sc: r.sc,
                qor: r.qor,
                sor: r.sor,
            })
        })
        .collect::<Result<_>>()?;

    let comparison: Vec<ComparisonRow> = variants
        .iter()
        .map(|v| {
            let rows: Vec<&RunRow> = runs.iter().filter(|r| r.variant == v.name()).collect();
            let n = rows.len() as f64;
            ComparisonRow {
                variant: v.name().to_string(),
                runs: rows.len(),
                acc: rows.iter().map(|r| r.acc).sum::<f64>() / n,
                sc: rows.iter().map(|r| r.sc).sum::<f64>() / n,
                qor: mean_opt(rows.iter().map(|r| r.qor)),
                sor: mean_opt(rows.iter().map(|r| r.sor)),
            }
        })
        .collect();
    write_csv(&out.join("runs.csv"), &runs)?;
    write_csv(&out.join("comparison.csv"), &comparison)?;
    Ok(())
}

const REPORT_COLUMNS: [&str; 6] = [
    "step",
    "stage",
    "f1",
    "sc",
    "no_search_ratio",
    "redundant_search_ratio",
];

fn find_logs(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        if path.is_dir() {
            find_logs(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == "training_log.csv") {
            found.push(path);
        }
    }
    Ok(())
}

fn report(log_dir: &Path, out: &Path) -> Result<()> {
    let mut logs = Vec::new();
    find_logs(log_dir, &mut logs)?;
    if logs.is_empty() {
        bail!("no training_log.csv under {}", log_dir.display());
    }
    let mut rows: BTreeMap<(String, u64, usize), Vec<String>> = BTreeMap::new();
    for log in &logs {
        let info: RunInfo = read_json(&log.with_file_name("run.json"))?;
        let mut reader =
            csv::Reader::from_path(log).with_context(|| format!("reading {}", log.display()))?;
        let header = reader.headers()?.clone();
        let mut index = Vec::with_capacity(REPORT_COLUMNS.len());
        for col in REPORT_COLUMNS {
            let i = header
                .iter()
                .position(|h| h == col)
                .ok_or_else(|| anyhow!("{}: missing column {col}", log.display()))?;
            index.push(i);
        }
        for (line, record) in reader.records().enumerate() {
            let record = record.with_context(|| format!("{}: row {}", log.display(), line + 1))?;
            let step: usize = record[index[0]]
                .parse()
                .with_context(|| format!("{}: row {}: bad step", log.display(), line + 1))?;
            let key = (info.variant.name().to_string(), info.seed, step);
            let values = index.iter().map(|&i| record[i].to_string()).collect();
            if rows.insert(key, values).is_some() {
                bail!(
                    "duplicate ({}, {}, {step}) in {}",
                    info.variant,
                    info.seed,
                    log.display()
                );
            }
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["variant", "seed"];
    header.extend(REPORT_COLUMNS);
    w.write_record(&header)?;
    for ((variant, seed, _), values) in &rows {
        let mut record = vec![variant.clone(), seed.to_string()];
        record.extend(values.iter().cloned());
        w.write_record(&record)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow!("{}", e.error()))?;
    Ok(write_atomic(out, &bytes)?)
}

fn run(command: &Command) -> Result<()> {
    match command {
        Command::GenEnv { config, out } => gen_env(&load_config(config.as_deref())?, out),
        Command::Train { config, seed, out } => train(&load_config(config.as_deref())?, *seed, out),
        Command::Eval {
            checkpoint,
            questions,
            config,
            seed,
            out,
        } => eval(
            &load_config(config.as_deref())?,
            checkpoint,
            questions,
            *seed,
            out,
        ),
        Command::Audit {
            transcripts,
            gold,
            config,
            out,
        } => audit(&load_config(config.as_deref())?, transcripts, gold, out),
        Command::Ablate {
            config,
            variants,
            seeds,
            out,
        } => ablate(&load_config(config.as_deref())?, variants, seeds, out),
        Command::Report { log_dir, out } => report(log_dir, out),
    }
}

fn error_line(command: &str, err: &anyhow::Error) -> String {
    let message = format!("{err:#}").replace('\n', " ");
    serde_json::json!({ "error": message, "command": command }).to_string()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let first = message.lines().next().unwrap_or("invalid arguments");
            eprintln!(
                "{}",
                serde_json::json!({ "error": first, "command": "usage" })
            );
            return ExitCode::from(2);
        }
    };
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(cli.command.name(), &e));
            ExitCode::FAILURE
        }
    }
}
