pub mod apps;
pub mod config;
pub mod dsp;
pub mod eeg;
pub mod error;
pub mod io;
pub mod layout;
pub mod stats;
pub mod stimulus;
pub mod synth;
pub mod task;
pub mod trca;
pub mod vec2;
pub mod velocity;

pub use config::SessionConfig;
pub use eeg::EegEpoch;
pub use error::{Error, Result};
pub use vec2::Vec2;
