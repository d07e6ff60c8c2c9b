//! Simulate one recording while gazing right of the cursor, then preprocess
//! and split it into sub-bands.

use neurotrack_core::dsp::{preprocess, subband_decompose};
use neurotrack_core::synth::SyntheticSubject;
use neurotrack_core::task::Engine;
use neurotrack_core::{SessionConfig, Vec2};

fn main() -> neurotrack_core::Result<()> {
    let config = SessionConfig::default();
    let subject = SyntheticSubject::default_for(&config);
    let engine = Engine::new(&config, &subject)?;
    let weights = engine.weights(Vec2::new(200.0, 0.0), Vec2::ZERO);
    println!("visual field weights {:.3?}", weights.weights);
    println!("subject SNR {:.1} dB", subject.snr_db());

    let raw = engine.epoch(Vec2::new(200.0, 0.0), Vec2::ZERO, 1)?;
    println!("raw: {} channels × {} samples @ {} Hz", raw.channels(), raw.len(), raw.sample_rate_hz);
    let clean = preprocess(&raw, &config.filter_bank)?;
    let bands = subband_decompose(&clean, &config.filter_bank)?;
    for (m, b) in bands.iter().enumerate() {
        let power = b.samples[0].iter().map(|x| x * x).sum::<f64>() / b.len() as f64;
        println!("sub-band {}: channel 0 power {power:.4}", m + 1);
    }
    Ok(())
}
