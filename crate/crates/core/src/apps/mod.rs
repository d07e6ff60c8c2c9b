//! The two applications built on the decoder: a grid snake steered by
//! confident single-region decisions, and painting with the tracked cursor.

mod paint;
mod snake;

pub use paint::{PaintSession, PaintingState};
pub use snake::{
    replay, rho_log_from_jsonl, rho_log_to_jsonl, snake_closed_loop_step, snake_step, Cell,
    Direction, SnakeConfig, SnakeState,
};
