//! Write a training session and the trained models to disk and read them back.

use neurotrack_core::io::{read_models, read_session, write_models, write_session};
use neurotrack_core::synth::SyntheticSubject;
use neurotrack_core::task::{train_from_recording, Engine};
use neurotrack_core::SessionConfig;

fn main() -> neurotrack_core::Result<()> {
    let config = SessionConfig::default();
    let engine = Engine::new(&config, &SyntheticSubject::default_for(&config))?;
    let recording = engine.record_training()?;
    let dir = tempfile::tempdir()?;
    let session = dir.path().join("training.bin");
    write_session(&session, &recording)?;
    let back = read_session(&session)?;
    println!("{} epochs written and read back, identical: {}", back.len(), back == recording);

    let training = train_from_recording(&back, &config)?;
    let model = dir.path().join("model.bin");
    write_models(&model, &training.models, &config.filter_bank)?;
    let (models, meta) = read_models(&model)?;
    println!("model round trip identical: {}", models == training.models);
    println!("{}", serde_json::to_string_pretty(&meta)?);
    Ok(())
}
