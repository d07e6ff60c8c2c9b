//! Play snake from a scripted ρ log, then replay the log.

use neurotrack_core::apps::{replay, rho_log_from_jsonl, rho_log_to_jsonl, SnakeConfig, SnakeState};
use neurotrack_core::trca::RhoVector;

fn confident(region: usize) -> RhoVector {
    let mut rho = vec![0.1; 8];
    rho[region] = 0.9;
    RhoVector::new(rho)
}

fn main() -> neurotrack_core::Result<()> {
    let start = SnakeState::new(&SnakeConfig::default())?;
    // right, up (twice), a diagonal that holds, left, down
    let log: Vec<RhoVector> = [0, 2, 2, 1, 4, 6].into_iter().map(confident).collect();
    let states = replay(&start, &log, 0.05)?;
    for (rho, s) in log.iter().zip(&states) {
        println!("decoded region {} → head {:?}, length {}, alive {}", rho.argmax(), s.head(), s.len(), s.alive);
    }
    let text = rho_log_to_jsonl(&log);
    let again = replay(&start, &rho_log_from_jsonl(&text)?, 0.05)?;
    println!("replay identical: {}", again == states);
    Ok(())
}
