use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::task::{Decoder, Engine, LoopState, StepOutput};
use crate::vec2::Vec2;

/// Strokes in screen px (origin at the center, y up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaintingState {
    pub width: f64,
    pub height: f64,
    pub strokes: Vec<Vec<Vec2>>,
    pub brush_down: bool,
}

impl PaintingState {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            strokes: Vec::new(),
            brush_down: false,
        }
    }

    /// Putting the brush down starts a new stroke.
    pub fn set_brush(&mut self, down: bool) {
        if down && !self.brush_down {
            self.strokes.push(Vec::new());
        }
        self.brush_down = down;
    }

    /// Adds a point to the open stroke; no-op while the brush is up.
    pub fn paint(&mut self, p: Vec2) {
        if !self.brush_down {
            return;
        }
        let p = Vec2::new(
            p.x.clamp(-self.width / 2.0, self.width / 2.0),
            p.y.clamp(-self.height / 2.0, self.height / 2.0),
        );
        self.strokes
            .last_mut()
            .expect("brush down opens a stroke")
            .push(p);
    }

    pub fn paint_frames(&mut self, frames: &[Vec2]) {
        frames.iter().for_each(|p| self.paint(*p));
    }

    /// Polylines in SVG user units, y flipped to point down.
    pub fn to_svg(&self) -> String {
        let (w, h) = (self.width, self.height);
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"{} {} {w} {h}\">\n",
            -w / 2.0,
            -h / 2.0
        );
        for stroke in self.strokes.iter().filter(|s| !s.is_empty()) {
            s.push_str("  <polyline fill=\"none\" stroke=\"black\" stroke-width=\"3\" points=\"");
            for (i, p) in stroke.iter().enumerate() {
                let sep = if i == 0 { "" } else { " " };
                write!(s, "{sep}{},{}", coord(p.x), coord(-p.y)).expect("write to string");
            }
            s.push_str("\"/>\n");
        }
        s.push_str("</svg>\n");
        s
    }
}

fn coord(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Painting driven by the closed loop: the brush follows exactly the frames
/// the tracking tasks produce.
#[derive(Debug, Clone)]
pub struct PaintSession {
    pub loop_state: LoopState,
    pub painting: PaintingState,
}

impl PaintSession {
    pub fn new(engine: &Engine) -> Self {
        Self {
            loop_state: LoopState::new(Vec2::ZERO, &engine.config),
            painting: PaintingState::new(engine.config.width(), engine.config.height()),
        }
    }

    pub fn step(
        &mut self,
        engine: &Engine,
        decoder: &Decoder,
        gaze: Option<Vec2>,
        key: u64,
    ) -> Result<StepOutput> {
        let out = engine.closed_loop_step(decoder, &mut self.loop_state, gaze, key)?;
        self.painting.paint_frames(&out.frames);
        Ok(out)
    }
}
