//! The one engine path behind both the CLI and the service.

use serde::{Deserialize, Serialize};

use neurotrack_core::synth::{make_cohort, SyntheticSubject};
use neurotrack_core::task::{run_jitter_inspection, Decoder, Engine, JitterReport, MetricsReport, Training, TrialRecord};
use neurotrack_core::{Result, SessionConfig};

/// Batch tasks that produce trial logs or a jitter report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum BatchTask {
    Fixed,
    Random,
    Jitter,
}

/// The default subject, or a seeded cohort of `n`.
pub fn subjects(config: &SessionConfig, n: Option<usize>, seed: u64) -> Result<Vec<SyntheticSubject>> {
    match n {
        None => Ok(vec![SyntheticSubject::default_for(config)]),
        Some(n) => make_cohort(n, seed, config),
    }
}

/// What training produced, for logs and API replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub n_regions: usize,
    pub n_subbands: usize,
    pub filter_norms: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub regression_rows: usize,
    /// Frobenius norm of `D·V_w* − I`, px per step.
    pub regression_residual: f64,
}

impl TrainingSummary {
    pub fn of(training: &Training) -> Self {
        let t = &training.models.trca;
        let w = &training.models.velocity;
        let reg = &training.regression;
        let residual = reg
            .d
            .iter()
            .zip(&reg.i)
            .map(|(row, intended)| {
                let (mut x, mut y) = (0.0, 0.0);
                for (r, v) in row.iter().zip(&w.matrix) {
                    x += r * v[0];
                    y += r * v[1];
                }
                (x - intended.x).powi(2) + (y - intended.y).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        Self {
            n_regions: t.n_regions(),
            n_subbands: t.n_subbands(),
            filter_norms: t.filters.iter().map(|f| f.iter().map(|x| x * x).sum::<f64>().sqrt()).collect(),
            eigenvalues: t.eigenvalues.clone(),
            regression_rows: reg.len(),
            regression_residual: residual,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TaskOutput {
    Trials { records: Vec<TrialRecord> },
    Jitter { report: JitterReport },
}

pub fn run_batch(engine: &Engine, decoder: &Decoder, task: BatchTask) -> Result<TaskOutput> {
    Ok(match task {
        BatchTask::Fixed => TaskOutput::Trials {
            records: engine.run_fixed_task(decoder)?,
        },
        BatchTask::Random => TaskOutput::Trials {
            records: engine.run_random_task(decoder)?,
        },
        BatchTask::Jitter => TaskOutput::Jitter {
            report: run_jitter_inspection(engine, decoder)?,
        },
    })
}

/// Metrics of one subject on one task, as written by `simulate` and
/// returned by the service's metrics export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectMetrics {
    pub subject: usize,
    pub task: BatchTask,
    pub metrics: MetricsReport,
}

pub fn subject_metrics(subject: usize, task: BatchTask, records: &[TrialRecord], config: &SessionConfig) -> Result<SubjectMetrics> {
    Ok(SubjectMetrics {
        subject,
        task,
        metrics: MetricsReport::for_config(records, config)?,
    })
}

/// Stable text form shared by every writer, so equal metrics give equal bytes.
pub fn to_json_text<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("plain data serializes") + "\n"
}
