//! Messages on the per-session stream and the session snapshot.
//!
//! Positions are screen px with the origin at the center and y up, the same
//! frame the engine uses. Vectors go over the wire as `[x, y]`.

use serde::{Deserialize, Serialize};

use neurotrack_core::apps::{PaintingState, SnakeState};
use neurotrack_core::layout::TargetSpec;
use neurotrack_core::synth::SubjectParams;
use neurotrack_core::{SessionConfig, Vec2};

use crate::runner::TrainingSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Training,
    Fixed,
    Random,
    Jitter,
    Tracking,
    Painting,
    Snake,
}

impl Phase {
    /// Phases the step clock runs in.
    pub fn is_interactive(self) -> bool {
        matches!(self, Phase::Tracking | Phase::Painting | Phase::Snake)
    }
}

/// Client to server. `t` is accepted but the server stamps gaze on receipt.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Gaze {
        x: f64,
        y: f64,
        #[serde(default)]
        t: Option<f64>,
    },
    Brush {
        down: bool,
    },
    Command {
        #[serde(flatten)]
        command: ClientCommand,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum ClientCommand {
    /// Tracking target; the radius defaults to the configured one.
    SetTarget {
        x: f64,
        y: f64,
        #[serde(default)]
        radius: Option<f64>,
    },
    ClearTarget,
    ClearPainting,
    ResetSnake,
    /// Back to idle.
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    /// Sent on connect so a reconnecting client can resynchronize.
    State { session: SessionSnapshot },
    Frame {
        step_index: u64,
        frame_index: usize,
        cursor: [f64; 2],
        rho: Vec<f64>,
        velocity: [f64; 2],
    },
    SnakeState {
        step_index: u64,
        state: SnakeState,
        /// `None` when the step was held for lack of gaze.
        rho: Option<Vec<f64>>,
    },
    PaintState {
        step_index: u64,
        painting: PaintingState,
    },
    TrialEvent {
        step_index: u64,
        event: TrialEventKind,
        #[serde(skip_serializing_if = "Option::is_none")]
        target: Option<TargetSpec>,
        #[serde(skip_serializing_if = "Option::is_none")]
        time_s: Option<f64>,
    },
    Error { message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialEventKind {
    Start,
    Hit,
    Cleared,
}

impl ServerMessage {
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}

pub fn xy(v: Vec2) -> [f64; 2] {
    [v.x, v.y]
}

/// Copy of the session state served by `GET /sessions/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub phase: Phase,
    pub trained: bool,
    pub training: Option<TrainingSummary>,
    pub subject_index: usize,
    pub subject: SubjectParams,
    pub config: SessionConfig,
    pub n_trials: usize,
    pub step_index: u64,
    pub cursor: [f64; 2],
    pub target: Option<TargetSpec>,
    pub gaze: Option<[f64; 2]>,
    pub step_interval_ms: u64,
    pub stale_gaze_ms: u64,
    pub snake: Option<SnakeState>,
    pub last_error: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_client_messages() {
        let m: ClientMessage = serde_json::from_str(r#"{"type":"gaze","x":1.5,"y":-2,"t":0.1}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::Gaze {
                x: 1.5,
                y: -2.0,
                t: Some(0.1)
            }
        );
        let m: ClientMessage =
            serde_json::from_str(r#"{"type":"command","name":"set_target","x":3,"y":4}"#).unwrap();
        assert_eq!(
            m,
            ClientMessage::Command {
                command: ClientCommand::SetTarget {
                    x: 3.0,
                    y: 4.0,
                    radius: None
                }
            }
        );
        for bad in [r#"{"type":"gaze","x":1}"#, r#"{"type":"warp"}"#, "nope", r#"{"type":"command","name":"fly"}"#] {
            assert!(serde_json::from_str::<ClientMessage>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn frames_serialize_with_array_vectors() {
        let text = ServerMessage::Frame {
            step_index: 3,
            frame_index: 59,
            cursor: [1.0, 2.0],
            rho: vec![0.5],
            velocity: [0.0, -1.0],
        }
        .to_text();
        assert_eq!(
            text,
            r#"{"type":"frame","step_index":3,"frame_index":59,"cursor":[1.0,2.0],"rho":[0.5],"velocity":[0.0,-1.0]}"#
        );
    }
}
