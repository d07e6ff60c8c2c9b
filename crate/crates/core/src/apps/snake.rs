use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::task::{Decoder, Engine};
use crate::trca::{RhoVector, TemplateMatcher};
use crate::vec2::Vec2;
use crate::velocity::{confidence_gate, GateDecision};

/// Grid cell; rows grow downward as on screen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub col: i32,
    pub row: i32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Right,
    Up,
    Left,
    Down,
}

impl Direction {
    /// Only regions whose center line is axis-aligned steer.
    pub fn of_region(region: usize, n_regions: usize) -> Option<Self> {
        if n_regions == 0 || (4 * region) % n_regions != 0 {
            return None;
        }
        match 4 * region / n_regions {
            0 => Some(Self::Right),
            1 => Some(Self::Up),
            2 => Some(Self::Left),
            3 => Some(Self::Down),
            _ => None,
        }
    }

    fn offset(self) -> (i32, i32) {
        match self {
            Self::Right => (1, 0),
            Self::Up => (0, -1),
            Self::Left => (-1, 0),
            Self::Down => (0, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnakeConfig {
    pub cols: i32,
    pub rows: i32,
    pub initial_len: usize,
    /// Seeds the food placements; the k-th food uses stream k.
    pub food_seed: u64,
}

impl Default for SnakeConfig {
    fn default() -> Self {
        Self {
            cols: 16,
            rows: 16,
            initial_len: 3,
            food_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnakeState {
    pub cols: i32,
    pub rows: i32,
    /// Head first.
    pub snake: Vec<Cell>,
    /// `None` once the board is full.
    pub food: Option<Cell>,
    pub score: usize,
    pub alive: bool,
    pub food_seed: u64,
    /// Foods placed so far, including the current one.
    pub foods_placed: u64,
}

impl SnakeState {
    /// Horizontal snake in the middle row, head at the center, facing right.
    pub fn new(config: &SnakeConfig) -> Result<Self> {
        let len = config.initial_len as i32;
        if config.cols < 2 || config.rows < 1 || len < 1 || len > config.cols / 2 + 1 {
            return Err(Error::InvalidArgument(format!(
                "snake of length {} does not fit a {}×{} grid",
                len, config.cols, config.rows
            )));
        }
        let head = Cell {
            col: config.cols / 2,
            row: config.rows / 2,
        };
        let snake = (0..len)
            .map(|i| Cell {
                col: head.col - i,
                row: head.row,
            })
            .collect();
        let mut state = Self {
            cols: config.cols,
            rows: config.rows,
            snake,
            food: None,
            score: 0,
            alive: true,
            food_seed: config.food_seed,
            foods_placed: 0,
        };
        state.place_food();
        Ok(state)
    }

    pub fn head(&self) -> Cell {
        self.snake[0]
    }

    pub fn len(&self) -> usize {
        self.snake.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snake.is_empty()
    }

    fn inside(&self, c: Cell) -> bool {
        (0..self.cols).contains(&c.col) && (0..self.rows).contains(&c.row)
    }

    /// Uniform over free cells, from the stream of this food's index.
    fn place_food(&mut self) {
        let free: Vec<Cell> = (0..self.rows)
            .flat_map(|row| (0..self.cols).map(move |col| Cell { col, row }))
            .filter(|c| !self.snake.contains(c))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.food_seed);
        rng.set_stream(self.foods_placed);
        self.foods_placed += 1;
        self.food = (!free.is_empty()).then(|| free[rng.random_range(0..free.len())]);
    }

    /// Center of the head cell in screen px (origin at the screen center,
    /// y up), for a board stretched over `width` × `height`.
    pub fn head_px(&self, width: f64, height: f64) -> Vec2 {
        let h = self.head();
        Vec2::new(
            (h.col as f64 + 0.5) * width / self.cols as f64 - width / 2.0,
            height / 2.0 - (h.row as f64 + 0.5) * height / self.rows as f64,
        )
    }

    /// Advance one cell.
    pub fn advance(&mut self, dir: Direction) {
        if !self.alive {
            return;
        }
        let (dc, dr) = dir.offset();
        let head = Cell {
            col: self.head().col + dc,
            row: self.head().row + dr,
        };
        let eats = self.food == Some(head);
        // the tail leaves its cell in the same move unless the snake grows
        let body = if eats {
            &self.snake[..]
        } else {
            &self.snake[..self.snake.len() - 1]
        };
        if !self.inside(head) || body.contains(&head) {
            self.alive = false;
            return;
        }
        self.snake.insert(0, head);
        if eats {
            self.score += 1;
            self.place_food();
        } else {
            self.snake.pop();
        }
    }
}

/// One decision step: the gate must be confident and the winning region
/// axis-aligned, otherwise the state is unchanged.
pub fn snake_step(state: &SnakeState, rho: &RhoVector, alpha: f64) -> Result<SnakeState> {
    let mut next = state.clone();
    if !state.alive {
        return Ok(next);
    }
    if let GateDecision::Move(region) = confidence_gate(rho, alpha)? {
        if let Some(dir) = Direction::of_region(region, rho.len()) {
            next.advance(dir);
        }
    }
    Ok(next)
}

/// Record one step with the stimulus centered on the snake's head, decode
/// it and apply the decision.
pub fn snake_closed_loop_step(
    engine: &Engine,
    decoder: &Decoder,
    state: &SnakeState,
    gaze: Vec2,
    key: u64,
) -> Result<(RhoVector, SnakeState)> {
    let head = state.head_px(engine.config.width(), engine.config.height());
    let rho = decoder.matcher.match_raw(&engine.epoch(gaze, head, key)?)?;
    let next = snake_step(state, &rho, engine.config.decoder.confidence_alpha)?;
    Ok((rho, next))
}

/// Every state after each ρ, stopping at the first death.
pub fn replay(initial: &SnakeState, rhos: &[RhoVector], alpha: f64) -> Result<Vec<SnakeState>> {
    let mut out = Vec::with_capacity(rhos.len());
    let mut state = initial.clone();
    for rho in rhos {
        state = snake_step(&state, rho, alpha)?;
        out.push(state.clone());
        if !state.alive {
            break;
        }
    }
    Ok(out)
}

pub fn rho_log_to_jsonl(rhos: &[RhoVector]) -> String {
    rhos.iter()
        .map(|r| serde_json::to_string(r).expect("ρ serializes") + "\n")
        .collect()
}

pub fn rho_log_from_jsonl(text: &str) -> Result<Vec<RhoVector>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
