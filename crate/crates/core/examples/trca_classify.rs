//! Train TRCA on the Stage I recordings and classify held-out epochs.

use neurotrack_core::synth::SyntheticSubject;
use neurotrack_core::task::{Decoder, Engine};
use neurotrack_core::trca::TemplateMatcher;
use neurotrack_core::SessionConfig;

fn main() -> neurotrack_core::Result<()> {
    let config = SessionConfig::default();
    let engine = Engine::new(&config, &SyntheticSubject::default_for(&config))?;
    let training = engine.run_training()?;
    println!("eigenvalues per sub-band {:.3?}", training.models.trca.eigenvalues);
    let decoder = Decoder::new(&training.models, &config)?;
    let mut confusion = vec![vec![0usize; config.n_regions]; config.n_regions];
    for rep in 0..10 {
        for region in 0..config.n_regions {
            let rho = decoder.matcher.match_raw(&engine.stage1_test_epoch(region, rep)?)?;
            confusion[region][rho.argmax()] += 1;
        }
    }
    println!("confusion (rows: gazed region, columns: decoded)");
    for row in &confusion {
        println!("  {row:?}");
    }
    Ok(())
}
