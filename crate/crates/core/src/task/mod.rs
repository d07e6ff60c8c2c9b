//! Closed-loop simulation of the training stages and tracking tasks.

mod jitter;
mod metrics;

pub use jitter::{jitter_targets, run_jitter_inspection, JitterReport};
pub use metrics::{
    fitts_itr, post_hit_hold_rate, velocity_errors, FirstStepErrors, MetricsReport, VelocityErrors,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::config::SessionConfig;
use crate::dsp::{preprocess_with, FilterChain};
use crate::eeg::EegEpoch;
use crate::error::{Error, Result};
use crate::layout::{hit_test, stage1_targets, stage2_targets, StimulusLayout, TargetSpec};
use crate::stats::CompensatedSum;
use crate::stimulus::{generate_wn_bank, visual_field_weights, VisualFieldWeights, WnSequence};
use crate::synth::{Simulator, SyntheticSubject};
use crate::trca::{train_trca_with, RhoVector, TemplateMatcher, TrcaDecoder, TrcaModel};
use crate::vec2::Vec2;
use crate::velocity::{
    decay_profile, initial_velocity_weight, train_velocity_weight, RegressionSet, VelocityDecoder,
    VelocityWeight,
};

/// How often per step the attention weights follow a moving cursor.
pub const WEIGHT_UPDATES_PER_STEP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Stage1,
    Stage2,
    Fixed,
    Random,
    Jitter,
}

impl TaskKind {
    /// Noise stream of the task; keeps realizations of different tasks apart.
    fn stream(self) -> u64 {
        match self {
            TaskKind::Stage1 => 1,
            TaskKind::Stage2 => 2,
            TaskKind::Fixed => 3,
            TaskKind::Random => 4,
            TaskKind::Jitter => 5,
        }
    }
}

/// Noise key of one step of one trial.
pub fn noise_key(task: TaskKind, trial: usize, step: usize) -> u64 {
    (task.stream() << 40) | ((trial as u64) << 16) | step as u64
}

/// Noise keys used by interactive sessions, disjoint from the task keys.
pub fn interactive_noise_key(step: u64) -> u64 {
    (6 << 40) | step
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Hit,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub rho: RhoVector,
    pub velocity: Vec2,
    /// Cursor at the end of the step.
    pub cursor: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub subject: usize,
    pub task: TaskKind,
    pub trial: usize,
    pub target: TargetSpec,
    pub start_px: Vec2,
    pub steps: Vec<StepRecord>,
    pub outcome: Outcome,
    /// Time of the first hit, or the timeout.
    pub time_to_target_s: f64,
    /// Cursor position at the hit frame; the last position on timeout.
    pub end_px: Vec2,
    /// Per-frame cursor positions after the hit frame, for hold analysis.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub post_hit: Vec<Vec2>,
}

impl TrialRecord {
    pub fn is_hit(&self) -> bool {
        self.outcome == Outcome::Hit
    }

    pub fn distance_px(&self) -> f64 {
        self.start_px.distance(self.target.position_px)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trial record serializes")
    }
}

/// Write records as line-delimited JSON.
pub fn records_to_jsonl(records: &[TrialRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}

pub fn records_from_jsonl(text: &str) -> Result<Vec<TrialRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Per-frame cursor motion inside the screen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CursorIntegrator {
    pub position: Vec2,
    half_width: f64,
    half_height: f64,
    frames: usize,
}

impl CursorIntegrator {
    pub fn new(start: Vec2, config: &SessionConfig) -> Self {
        Self {
            position: start,
            half_width: config.width() / 2.0,
            half_height: config.height() / 2.0,
            frames: config.frames_per_step(),
        }
    }

    fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(
            p.x.clamp(-self.half_width, self.half_width),
            p.y.clamp(-self.half_height, self.half_height),
        )
    }

    /// Move by `v` over one step; returns the cursor at the end of every frame.
    ///
    /// Positions are the start plus the compensated running displacement,
    /// so the final frame lands on `start + v` (clamped to the screen).
    pub fn step(&mut self, v: Vec2) -> Vec<Vec2> {
        let start = self.position;
        let (mut sx, mut sy) = (CompensatedSum::default(), CompensatedSum::default());
        let positions: Vec<Vec2> = decay_profile(v, self.frames)
            .into_iter()
            .map(|d| {
                sx.add(d.x);
                sy.add(d.y);
                self.clamp(start + Vec2::new(sx.value(), sy.value()))
            })
            .collect();
        self.position = *positions.last().expect("at least one frame");
        positions
    }
}

/// A running closed loop. The velocity decoded from the recording of step
/// k only plays out during step k + 1, so the cursor sits still for the
/// first step of every trial and each recording sees the cursor moving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopState {
    pub cursor: CursorIntegrator,
    /// Decoded but not yet played.
    pub pending: Vec2,
}

impl LoopState {
    pub fn new(start: Vec2, config: &SessionConfig) -> Self {
        Self {
            cursor: CursorIntegrator::new(start, config),
            pending: Vec2::ZERO,
        }
    }

    pub fn position(&self) -> Vec2 {
        self.cursor.position
    }
}

/// What one raw recording shows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLabel {
    pub task: TaskKind,
    /// Index into the stage's target list.
    pub target_index: usize,
    pub target: TargetSpec,
    pub rep: usize,
    pub cursor_px: Vec2,
    pub gaze_px: Vec2,
    pub noise_key: u64,
}

/// Labeled raw epochs, e.g. a training session.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Recording {
    pub labels: Vec<EpochLabel>,
    pub epochs: Vec<EegEpoch>,
}

impl Recording {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }
}

/// Train both decoders from Stage I and Stage II recordings.
///
/// Stage I epochs train TRCA (grouped by target index, which is the region);
/// every Stage II epoch adds one regression row with the intended velocity
/// from its cursor to its target.
pub fn train_from_recording(recording: &Recording, config: &SessionConfig) -> Result<Training> {
    if recording.labels.len() != recording.epochs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} epochs",
            recording.labels.len(),
            recording.epochs.len()
        )));
    }
    let chain = FilterChain::design(&config.filter_bank, config.processing_rate_hz)?;
    let mut trials: Vec<Vec<EegEpoch>> = vec![Vec::new(); config.n_regions];
    for (label, raw) in recording.labels.iter().zip(&recording.epochs) {
        if label.task == TaskKind::Stage1 {
            let slot = trials.get_mut(label.target_index).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "Stage I target {} out of range",
                    label.target_index
                ))
            })?;
            slot.push(preprocess_with(&chain, raw, config.processing_rate_hz)?);
        }
    }
    let trca = train_trca_with(&chain, &trials)?;
    let matcher = TrcaDecoder::new(trca.clone(), &config.filter_bank, config.processing_rate_hz)?;

    let mut regression = RegressionSet::default();
    for (label, raw) in recording.labels.iter().zip(&recording.epochs) {
        if label.task != TaskKind::Stage2 {
            continue;
        }
        let mut rho = matcher.match_raw(raw)?;
        if config.decoder.relu_before_corrected {
            rho = RhoVector::new(rho.rho.iter().map(|r| r.max(0.0)).collect());
        }
        regression.push(
            &rho,
            (label.target.position_px - label.cursor_px) * (1.0 / config.step_seconds),
        );
    }
    let velocity = train_velocity_weight(&regression)?;
    Ok(Training {
        models: Models { trca, velocity },
        regression,
    })
}

/// Both trained decoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub trca: TrcaModel,
    pub velocity: VelocityWeight,
}

/// Result of the two training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Training {
    pub models: Models,
    pub regression: RegressionSet,
}

/// Models ready to decode raw epochs.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub matcher: TrcaDecoder,
    pub velocity: VelocityDecoder,
}

impl Decoder {
    pub fn new(models: &Models, config: &SessionConfig) -> Result<Self> {
        Ok(Self {
            matcher: TrcaDecoder::new(
                models.trca.clone(),
                &config.filter_bank,
                config.processing_rate_hz,
            )?,
            velocity: VelocityDecoder::new(models.velocity.clone(), config),
        })
    }

    /// Same template matcher, different velocity weight.
    pub fn with_weight(&self, weight: VelocityWeight) -> Self {
        Self {
            matcher: self.matcher.clone(),
            velocity: VelocityDecoder {
                weight,
                ..self.velocity.clone()
            },
        }
    }
}

/// What one closed-loop step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// Decoded from this step's recording.
    pub rho: RhoVector,
    /// Played out during the next step.
    pub velocity: Vec2,
    /// Cursor at the end of each frame, driven by the previous decode.
    pub frames: Vec<Vec2>,
}

/// One subject in front of one stimulus bank.
#[derive(Debug)]
pub struct Engine {
    pub config: SessionConfig,
    pub subject: SyntheticSubject,
    pub subject_index: usize,
    pub layout: StimulusLayout,
    pub bank: Vec<WnSequence>,
    simulator: Simulator,
}

impl Engine {
    pub fn new(config: &SessionConfig, subject: &SyntheticSubject) -> Result<Self> {
        config.validate()?;
        let bank = generate_wn_bank(
            config.n_regions,
            config.frames_per_step() as i64,
            config.rng_seed,
        )?;
        Ok(Self {
            simulator: Simulator::for_config(subject, &bank, config)?,
            config: config.clone(),
            subject: subject.clone(),
            subject_index: 0,
            layout: StimulusLayout::for_config(config),
            bank,
        })
    }

    pub fn with_subject_index(mut self, index: usize) -> Self {
        self.subject_index = index;
        self
    }

    pub fn weights(&self, gaze: Vec2, cursor: Vec2) -> VisualFieldWeights {
        visual_field_weights(
            gaze,
            cursor,
            &self.layout,
            self.subject.attention_sigma_px(),
        )
    }

    /// Raw one-step recording while gazing at `gaze` with the cursor at `cursor`.
    pub fn epoch(&self, gaze: Vec2, cursor: Vec2, key: u64) -> Result<EegEpoch> {
        self.simulator.epoch(&self.weights(gaze, cursor), 1, key)
    }

    /// Recording while the cursor follows `path` (one position per frame).
    pub fn epoch_along(&self, gaze: Vec2, path: &[Vec2], key: u64) -> Result<EegEpoch> {
        let first = *path
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty cursor path".into()))?;
        if path.iter().all(|p| *p == first) {
            return self.epoch(gaze, first, key);
        }
        let n = WEIGHT_UPDATES_PER_STEP.min(path.len());
        let segments: Vec<VisualFieldWeights> = (0..n)
            .map(|j| self.weights(gaze, path[(2 * j + 1) * path.len() / (2 * n)]))
            .collect();
        self.simulator.varying_epoch(&segments, key)
    }

    fn gaze_for(&self, target: Vec2, key: u64) -> Vec2 {
        let sd = self.config.task.gaze_noise_px;
        if sd <= 0.0 {
            return target;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.subject.params.seed ^ 0x6a09_e667_f3bc_c908);
        rng.set_stream(key);
        let n = Normal::new(0.0, sd).expect("positive gaze noise");
        target + Vec2::new(n.sample(&mut rng), n.sample(&mut rng))
    }

    /// Play the pending velocity while recording, then decode the recording.
    /// `gaze = None` (no recent gaze) decodes nothing and leaves nothing
    /// pending.
    pub fn closed_loop_step(
        &self,
        decoder: &Decoder,
        state: &mut LoopState,
        gaze: Option<Vec2>,
        key: u64,
    ) -> Result<StepOutput> {
        let frames = state.cursor.step(state.pending);
        let (rho, velocity) = match gaze {
            Some(g) => {
                let epoch = self.epoch_along(g, &frames, key)?;
                let rho = decoder.matcher.match_raw(&epoch)?;
                let v = decoder.velocity.decode(&rho);
                (rho, v)
            }
            None => (RhoVector::new(vec![0.0; self.config.n_regions]), Vec2::ZERO),
        };
        state.pending = velocity;
        Ok(StepOutput {
            rho,
            velocity,
            frames,
        })
    }

    /// Stage I and Stage II: the subject fixates each target from the screen
    /// center without feedback. Stage I trains TRCA; Stage II ρ rows train the
    /// corrected velocity weight.
    pub fn run_training(&self) -> Result<Training> {
        train_from_recording(&self.record_training()?, &self.config)
    }

    /// The raw training recordings, Stage I first, repetition-major.
    pub fn record_training(&self) -> Result<Recording> {
        let reps = self.config.task.training_reps;
        let origin = Vec2::ZERO;
        let mut out = Recording::default();
        for (task, targets) in [
            (TaskKind::Stage1, stage1_targets(&self.config)),
            (TaskKind::Stage2, stage2_targets(&self.config)),
        ] {
            for rep in 0..reps {
                for (i, target) in targets.iter().enumerate() {
                    let key = noise_key(task, rep * targets.len() + i, 0);
                    let gaze = self.gaze_for(target.position_px, key);
                    out.epochs.push(self.epoch(gaze, origin, key)?);
                    out.labels.push(EpochLabel {
                        task,
                        target_index: i,
                        target: *target,
                        rep,
                        cursor_px: origin,
                        gaze_px: gaze,
                        noise_key: key,
                    });
                }
            }
        }
        Ok(out)
    }

    /// Held-out Stage I style epoch (noise stream distinct from training).
    pub fn stage1_test_epoch(&self, region: usize, rep: usize) -> Result<EegEpoch> {
        let target = stage1_targets(&self.config)[region];
        let key = noise_key(
            TaskKind::Stage1,
            1 << 20 | (rep * self.config.n_regions + region),
            0,
        );
        self.epoch(self.gaze_for(target.position_px, key), Vec2::ZERO, key)
    }

    /// Fixation epoch from the screen center on `target`, as in Stage II, with
    /// a caller-chosen repetition index.
    pub fn stage2_test_epoch(&self, target: &TargetSpec, rep: usize) -> Result<EegEpoch> {
        let key = noise_key(TaskKind::Stage2, 1 << 20 | rep, 0);
        self.epoch(self.gaze_for(target.position_px, key), Vec2::ZERO, key)
    }

    /// One closed-loop trial from `start` toward `target`.
    pub fn run_trial(
        &self,
        decoder: &Decoder,
        task: TaskKind,
        trial: usize,
        target: TargetSpec,
        start: Vec2,
    ) -> Result<TrialRecord> {
        let frames = self.config.frames_per_step();
        let dt_frame = self.config.step_seconds / frames as f64;
        let mut state = LoopState::new(start, &self.config);
        let mut steps = Vec::new();
        let mut hit: Option<(f64, Vec2)> = None;
        let mut post_hit = Vec::new();
        let post_frames = (self.config.task.post_hit_seconds / dt_frame).round() as usize;
        let mut step = 0;
        while step < self.config.max_steps() {
            let key = noise_key(task, trial, step);
            let gaze = self.gaze_for(target.position_px, key);
            let out = self.closed_loop_step(decoder, &mut state, Some(gaze), key)?;
            for (f, p) in out.frames.iter().enumerate() {
                if hit.is_none() {
                    if hit_test(*p, &target) {
                        let t = step as f64 * self.config.step_seconds + (f + 1) as f64 * dt_frame;
                        hit = Some((t, *p));
                    }
                } else if post_hit.len() < post_frames {
                    post_hit.push(*p);
                }
            }
            steps.push(StepRecord {
                rho: out.rho,
                velocity: out.velocity,
                cursor: state.position(),
            });
            step += 1;
            if hit.is_some() {
                break;
            }
        }
        // keep moving after the hit for the hold analysis
        while hit.is_some() && post_hit.len() < post_frames {
            let key = noise_key(task, trial, step);
            let gaze = self.gaze_for(target.position_px, key);
            let out = self.closed_loop_step(decoder, &mut state, Some(gaze), key)?;
            let need = post_frames - post_hit.len();
            post_hit.extend(out.frames.into_iter().take(need));
            step += 1;
        }
        let (outcome, time, end) = match hit {
            Some((t, p)) => (Outcome::Hit, t, p),
            None => (
                Outcome::Timeout,
                self.config.trial_timeout_seconds,
                state.position(),
            ),
        };
        Ok(TrialRecord {
            subject: self.subject_index,
            task,
            trial,
            target,
            start_px: start,
            steps,
            outcome,
            time_to_target_s: time,
            end_px: end,
            post_hit,
        })
    }

    /// Targets of the fixed task: every Stage II position once per block.
    pub fn fixed_targets(&self) -> Vec<TargetSpec> {
        let positions = stage2_targets(&self.config);
        (0..self.config.task.fixed_blocks)
            .flat_map(|_| positions.iter().copied())
            .collect()
    }

    /// Fixed task; the cursor restarts at the center every trial.
    pub fn run_fixed_task(&self, decoder: &Decoder) -> Result<Vec<TrialRecord>> {
        self.fixed_targets()
            .into_iter()
            .enumerate()
            .map(|(i, target)| self.run_trial(decoder, TaskKind::Fixed, i, target, Vec2::ZERO))
            .collect()
    }

    /// Seeded random targets, at least the margin away from the screen edges
    /// and not already hit from `start`.
    fn random_target(&self, rng: &mut ChaCha8Rng, start: Vec2) -> TargetSpec {
        let m = self.config.task.random_margin_px;
        let (hw, hh) = (
            self.config.width() / 2.0 - m,
            self.config.height() / 2.0 - m,
        );
        loop {
            let p = Vec2::new(rng.random_range(-hw..=hw), rng.random_range(-hh..=hh));
            let target = TargetSpec::free(p, self.config.target_radius_px);
            if !hit_test(start, &target) {
                return target;
            }
        }
    }

    /// Random task; each trial starts where the previous one ended.
    pub fn run_random_task(&self, decoder: &Decoder) -> Result<Vec<TrialRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.rng_seed);
        rng.set_stream(TaskKind::Random.stream());
        let mut start = Vec2::ZERO;
        let mut out = Vec::with_capacity(self.config.task.random_trials);
        for i in 0..self.config.task.random_trials {
            let target = self.random_target(&mut rng, start);
            let record = self.run_trial(decoder, TaskKind::Random, i, target, start)?;
            start = record.end_px;
            out.push(record);
        }
        Ok(out)
    }

    /// First-step ρ of every fixed-task trial, without running the loop.
    /// The noise realization equals the one the fixed task sees.
    pub fn fixed_first_steps(&self, decoder: &Decoder) -> Result<Vec<(TargetSpec, RhoVector)>> {
        self.fixed_targets()
            .into_iter()
            .enumerate()
            .map(|(i, target)| {
                let key = noise_key(TaskKind::Fixed, i, 0);
                let epoch = self.epoch(self.gaze_for(target.position_px, key), Vec2::ZERO, key)?;
                Ok((target, decoder.matcher.match_raw(&epoch)?))
            })
            .collect()
    }
}

/// The initial weight with the trained TRCA model.
pub fn initial_models(training: &Training, config: &SessionConfig) -> Models {
    Models {
        trca: training.models.trca.clone(),
        velocity: initial_velocity_weight(config),
    }
}

/// Train a subject from scratch.
pub fn run_training(subject: &SyntheticSubject, config: &SessionConfig) -> Result<Training> {
    Engine::new(config, subject)?.run_training()
}

pub fn run_fixed_task(
    subject: &SyntheticSubject,
    models: &Models,
    config: &SessionConfig,
) -> Result<Vec<TrialRecord>> {
    let engine = Engine::new(config, subject)?;
    engine.run_fixed_task(&Decoder::new(models, config)?)
}

pub fn run_random_task(
    subject: &SyntheticSubject,
    models: &Models,
    config: &SessionConfig,
) -> Result<Vec<TrialRecord>> {
    let engine = Engine::new(config, subject)?;
    engine.run_random_task(&Decoder::new(models, config)?)
}
