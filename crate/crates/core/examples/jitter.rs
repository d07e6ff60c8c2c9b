//! How well the cursor stays on a point the subject keeps looking at.

use neurotrack_core::synth::SyntheticSubject;
use neurotrack_core::task::{run_jitter_inspection, Decoder, Engine};
use neurotrack_core::SessionConfig;

fn main() -> neurotrack_core::Result<()> {
    let mut config = SessionConfig::default();
    config.task.jitter_reps = 1;
    let engine = Engine::new(&config, &SyntheticSubject::default_for(&config))?;
    let decoder = Decoder::new(&engine.run_training()?.models, &config)?;
    let report = run_jitter_inspection(&engine, &decoder)?;
    println!(
        "{} trials; thresholds {:.0} px (raw) and {:.0} px (filtered)",
        report.n_trials, report.raw_diameter_px, report.filtered_diameter_px
    );
    for t in [1.0, 2.0, 5.0, 10.0] {
        let (raw, filtered) = report.at(t);
        println!("t = {t:4.1} s: within raw {raw:.2}, within filtered {filtered:.2}");
    }
    Ok(())
}
