//! Fixed-task performance across a small synthetic cohort.

use neurotrack_core::synth::make_cohort;
use neurotrack_core::task::{Decoder, Engine, MetricsReport};
use neurotrack_core::SessionConfig;

fn main() -> neurotrack_core::Result<()> {
    let mut config = SessionConfig::default();
    config.task.fixed_blocks = 1;
    for (i, subject) in make_cohort(5, 7, &config)?.iter().enumerate() {
        let engine = Engine::new(&config, subject)?.with_subject_index(i);
        let decoder = Decoder::new(&engine.run_training()?.models, &config)?;
        let m = MetricsReport::for_config(&engine.run_fixed_task(&decoder)?, &config)?;
        println!(
            "subject {i}: noise {:.3}, SNR {:5.1} dB, success {:.2}, ITR {:.2} bps",
            subject.params.noise_amplitude,
            subject.snr_db(),
            m.success_rate,
            m.fitts_itr_bps.mean
        );
    }
    Ok(())
}
