//! Command-line front end.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use neurotrack_core::io::{read_models, read_session, write_atomic, write_models, write_session};
use neurotrack_core::task::{
    records_from_jsonl, records_to_jsonl, train_from_recording, Decoder, Engine, EpochLabel, TaskKind, TrialRecord,
};
use neurotrack_core::trca::{RhoVector, TemplateMatcher};
use neurotrack_core::{SessionConfig, Vec2};

use crate::runner::{run_batch, subject_metrics, subjects, to_json_text, BatchTask, SubjectMetrics, TaskOutput};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "neurotrack", version, about = "Visual tracking decoder: simulation, training, decoding and the live service")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Session configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration field, e.g. `--set task.fixed_blocks=1`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Seed for the stimulus bank, random targets and the cohort.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and run tasks for the default subject or a cohort.
    Simulate(SimulateArgs),
    /// Train one subject and write the model blob.
    Train(TrainArgs),
    /// Decode a recorded session with a trained model.
    Decode(DecodeArgs),
    /// Recompute metrics and per-subject tables from trial logs.
    Report(ReportArgs),
    /// Run the HTTP + websocket session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Cohort size; without it the default subject runs alone.
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Tasks to run after training (repeatable).
    #[arg(long = "task", value_enum, default_values = ["fixed"])]
    pub tasks: Vec<BatchTask>,
    /// Output directory for trials.jsonl, metrics.json, metrics.csv (and jitter.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Cohort size to pick the subject from; the default subject otherwise.
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Index into the cohort.
    #[arg(long, default_value_t = 0)]
    pub subject: usize,
    /// Train from a recorded session instead of simulating one.
    #[arg(long)]
    pub from_session: Option<PathBuf>,
    /// Also write the raw training recordings as a session file.
    #[arg(long)]
    pub export_session: Option<PathBuf>,
    /// Model blob path; metadata goes next to it as JSON.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub session: PathBuf,
    /// JSON-lines output of ρ and velocity per epoch; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Trial log (JSON lines) written by `simulate` or the service.
    #[arg(long)]
    pub log: PathBuf,
    /// Directory for itr_by_subject.csv, report.json and hold_rate.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "NEUROTRACK_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

impl GlobalArgs {
    pub fn config(&self) -> Result<SessionConfig, CliError> {
        let mut config = match &self.config {
            Some(p) => SessionConfig::load(p)?,
            None => SessionConfig::default(),
        };
        for o in &self.overrides {
            config.apply_override(o)?;
        }
        if let Some(seed) = self.seed {
            config.rng_seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    fn cohort_seed(&self, config: &SessionConfig) -> u64 {
        self.seed.unwrap_or(config.rng_seed)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = cli.global.config()?;
    match cli.command {
        Command::Simulate(a) => simulate(&config, cli.global.cohort_seed(&config), &a),
        Command::Train(a) => train(&config, cli.global.cohort_seed(&config), &a),
        Command::Decode(a) => decode(&config, &a),
        Command::Report(a) => report(&config, &a),
        Command::Serve(a) => serve(SocketAddr::new(a.host, a.port)),
    }
}

fn simulate(config: &SessionConfig, seed: u64, args: &SimulateArgs) -> Result<(), CliError> {
    std::fs::create_dir_all(&args.out)?;
    let cohort = subjects(config, args.subjects, seed)?;
    let mut log = String::new();
    let mut metrics = Vec::new();
    let mut jitter = Vec::new();
    for (i, subject) in cohort.iter().enumerate() {
        let engine = Engine::new(config, subject)?.with_subject_index(i);
        let training = engine.run_training()?;
        let decoder = Decoder::new(&training.models, config)?;
        for task in &args.tasks {
            match run_batch(&engine, &decoder, *task)? {
                TaskOutput::Trials { records } => {
                    log.push_str(&records_to_jsonl(&records));
                    metrics.push(subject_metrics(i, *task, &records, config)?);
                }
                TaskOutput::Jitter { report } => jitter.push(serde_json::json!({ "subject": i, "report": report })),
            }
        }
        log::info!("subject {i} done");
    }
    write_atomic(&args.out.join("trials.jsonl"), log.as_bytes())?;
    write_atomic(&args.out.join("metrics.json"), to_json_text(&metrics).as_bytes())?;
    write_atomic(&args.out.join("metrics.csv"), metrics_csv(&metrics).as_bytes())?;
    if !jitter.is_empty() {
        write_atomic(&args.out.join("jitter.json"), to_json_text(&jitter).as_bytes())?;
    }
    println!(
        "{} subjects, {} trials → {}",
        cohort.len(),
        log.lines().count(),
        args.out.display()
    );
    Ok(())
}

fn metrics_csv(metrics: &[SubjectMetrics]) -> String {
    let mut out = String::from("subject,task,metric,value\n");
    for m in metrics {
        let task = task_name(m.task);
        for line in m.metrics.to_csv().lines().skip(1) {
            out.push_str(&format!("{},{task},{line}\n", m.subject));
        }
    }
    out
}

fn task_name(task: BatchTask) -> &'static str {
    match task {
        BatchTask::Fixed => "fixed",
        BatchTask::Random => "random",
        BatchTask::Jitter => "jitter",
    }
}

fn train(config: &SessionConfig, seed: u64, args: &TrainArgs) -> Result<(), CliError> {
    let training = match &args.from_session {
        Some(path) => train_from_recording(&read_session(path)?, config)?,
        None => {
            let cohort = subjects(config, args.subjects, seed)?;
            let subject = cohort
                .get(args.subject)
                .ok_or_else(|| CliError::Usage(format!("subject {} not in a cohort of {}", args.subject, cohort.len())))?;
            let engine = Engine::new(config, subject)?.with_subject_index(args.subject);
            let recording = engine.record_training()?;
            if let Some(path) = &args.export_session {
                write_session(path, &recording)?;
            }
            train_from_recording(&recording, config)?
        }
    };
    write_models(&args.out, &training.models, &config.filter_bank)?;
    println!("{}", to_json_text(&crate::runner::TrainingSummary::of(&training)).trim_end());
    Ok(())
}

/// One line of `decode` output.
#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct DecodedEpoch {
    pub index: usize,
    pub label: EpochLabel,
    pub rho: RhoVector,
    pub velocity: Vec2,
}

fn decode(config: &SessionConfig, args: &DecodeArgs) -> Result<(), CliError> {
    let (models, _) = read_models(&args.model)?;
    let recording = read_session(&args.session)?;
    let decoder = Decoder::new(&models, config)?;
    let mut out = String::new();
    for (index, (label, epoch)) in recording.labels.iter().zip(&recording.epochs).enumerate() {
        let rho = decoder.matcher.match_raw(epoch)?;
        let velocity = decoder.velocity.decode(&rho);
        let line = DecodedEpoch {
            index,
            label: label.clone(),
            rho,
            velocity,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    match &args.out {
        Some(p) => write_atomic(p, out.as_bytes())?,
        None => print!("{out}"),
    }
    Ok(())
}

fn report(config: &SessionConfig, args: &ReportArgs) -> Result<(), CliError> {
    let records = records_from_jsonl(&std::fs::read_to_string(&args.log)?)?;
    let mut groups: BTreeMap<(usize, &'static str), (BatchTask, Vec<TrialRecord>)> = BTreeMap::new();
    for r in records {
        let task = match r.task {
            TaskKind::Fixed => BatchTask::Fixed,
            TaskKind::Random => BatchTask::Random,
            other => return Err(CliError::Usage(format!("no tracking metrics for {other:?} trials"))),
        };
        groups
            .entry((r.subject, task_name(task)))
            .or_insert_with(|| (task, Vec::new()))
            .1
            .push(r);
    }
    let metrics = groups
        .iter()
        .map(|((subject, _), (task, recs))| subject_metrics(*subject, *task, recs, config))
        .collect::<Result<Vec<_>, _>>()?;
    std::fs::create_dir_all(&args.out)?;
    write_atomic(&args.out.join("itr_by_subject.csv"), itr_table(&metrics).as_bytes())?;
    write_atomic(&args.out.join("report.json"), to_json_text(&metrics).as_bytes())?;
    write_atomic(&args.out.join("hold_rate.csv"), hold_table(&metrics).as_bytes())?;
    print!("{}", itr_table(&metrics));
    Ok(())
}

/// Per-subject Fitts ITR and success, one row per (subject, task).
pub fn itr_table(metrics: &[SubjectMetrics]) -> String {
    let mut out = String::from("subject,task,n_trials,success_rate,fitts_itr_mean,fitts_itr_sd,time_to_target_mean\n");
    for m in metrics {
        let r = &m.metrics;
        out.push_str(&format!(
            "{},{},{},{:.4},{:.4},{:.4},{:.4}\n",
            m.subject,
            task_name(m.task),
            r.n_trials,
            r.success_rate,
            r.fitts_itr_bps.mean,
            r.fitts_itr_bps.sd,
            r.time_to_target_s.mean
        ));
    }
    out
}

fn hold_table(metrics: &[SubjectMetrics]) -> String {
    let mut out = String::from("subject,task,dt_s,hold_rate\n");
    for m in metrics {
        for h in &m.metrics.post_hit_hold_rate {
            out.push_str(&format!("{},{},{:.4},{:.4}\n", m.subject, task_name(m.task), h.dt_s, h.rate));
        }
    }
    out
}

fn serve(addr: SocketAddr) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        println!("listening on http://{}", listener.local_addr()?);
        crate::service::serve(listener).await
    })?;
    Ok(())
}

/// Write `text` atomically, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_atomic(path, text.as_bytes())?;
    Ok(())
}
