//! Generate the white-noise code bank and show the first frames as gray levels.

use neurotrack_core::stimulus::{generate_wn_bank, luminance_frame};
use neurotrack_core::SessionConfig;

fn main() -> neurotrack_core::Result<()> {
    let config = SessionConfig::default();
    let bank = generate_wn_bank(config.n_regions, config.frames_per_step() as i64, config.rng_seed)?;
    for f in 0..6 {
        println!("frame {f}: {:?}", luminance_frame(&bank, f));
    }
    for code in &bank {
        println!("region {} mean luminance {:.3}", code.region_index, code.mean());
    }
    Ok(())
}
