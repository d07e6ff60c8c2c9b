//! Run the fixed and random tracking tasks on the default subject.

use neurotrack_core::synth::SyntheticSubject;
use neurotrack_core::task::{Decoder, Engine, MetricsReport};
use neurotrack_core::SessionConfig;

fn main() -> neurotrack_core::Result<()> {
    let config = SessionConfig::default();
    let engine = Engine::new(&config, &SyntheticSubject::default_for(&config))?;
    let decoder = Decoder::new(&engine.run_training()?.models, &config)?;
    for (name, records) in [
        ("fixed", engine.run_fixed_task(&decoder)?),
        ("random", engine.run_random_task(&decoder)?),
    ] {
        let m = MetricsReport::for_config(&records, &config)?;
        println!(
            "{name}: {} trials, success {:.3}, Fitts ITR {:.3} ± {:.3} bps, time to target {:.2} s",
            m.n_trials, m.success_rate, m.fitts_itr_bps.mean, m.fitts_itr_bps.sd, m.time_to_target_s.mean
        );
        let t = &records[0];
        println!("  first trial: {:?} after {} steps", t.outcome, t.steps.len());
        for s in &t.steps {
            println!("    cursor [{:7.1}, {:7.1}]", s.cursor.x, s.cursor.y);
        }
    }
    Ok(())
}
