//! Paint with the closed-loop cursor and print the SVG.

use neurotrack_core::apps::PaintSession;
use neurotrack_core::synth::SyntheticSubject;
use neurotrack_core::task::{interactive_noise_key, Decoder, Engine};
use neurotrack_core::{SessionConfig, Vec2};

fn main() -> neurotrack_core::Result<()> {
    let config = SessionConfig::default();
    let engine = Engine::new(&config, &SyntheticSubject::default_for(&config))?;
    let decoder = Decoder::new(&engine.run_training()?.models, &config)?;
    let mut session = PaintSession::new(&engine);
    let corners = [Vec2::new(200.0, 200.0), Vec2::new(-200.0, 200.0), Vec2::new(-200.0, -200.0)];
    let mut step = 0;
    for (i, corner) in corners.iter().enumerate() {
        session.painting.set_brush(i != 1);
        for _ in 0..5 {
            session.step(&engine, &decoder, Some(*corner), interactive_noise_key(step))?;
            step += 1;
        }
    }
    println!("{}", session.painting.to_svg());
    Ok(())
}
