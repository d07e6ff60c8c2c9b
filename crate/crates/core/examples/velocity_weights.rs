//! Compare first-step errors of the initial and the least-squares velocity weight.

use neurotrack_core::layout::Ring;
use neurotrack_core::synth::SyntheticSubject;
use neurotrack_core::task::{initial_models, Decoder, Engine, FirstStepErrors};
use neurotrack_core::velocity::VelocityDecoder;
use neurotrack_core::SessionConfig;

fn main() -> neurotrack_core::Result<()> {
    let config = SessionConfig::default();
    let engine = Engine::new(&config, &SyntheticSubject::default_for(&config))?;
    let training = engine.run_training()?;
    let decoder = Decoder::new(&training.models, &config)?;
    let firsts = engine.fixed_first_steps(&decoder)?;
    for (name, weight) in [
        ("initial", initial_models(&training, &config).velocity),
        ("corrected", training.models.velocity.clone()),
    ] {
        for (i, row) in weight.matrix.iter().enumerate() {
            println!("{name} region {i}: [{:8.2}, {:8.2}]", row[0], row[1]);
        }
        let e = FirstStepErrors::from_decodes(
            &firsts,
            &VelocityDecoder::new(weight, &config),
            config.step_seconds,
            &engine.layout,
        )?;
        println!(
            "{name}: vector error {:.3} (inner {:.3}, outer {:.3}), angular error {:.1}°\n",
            e.mean_vector(None),
            e.mean_vector(Some(Ring::Inner)),
            e.mean_vector(Some(Ring::Outer)),
            e.mean_angular(None)
        );
    }
    Ok(())
}
