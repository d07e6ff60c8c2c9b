//! Print the canonical session configuration as JSON.
//!
//! ```bash
//! cargo run -p neurotrack-core --example print_default_config > config/default_session.json
//! ```

fn main() {
    println!(
        "{}",
        neurotrack_core::SessionConfig::default().to_json_pretty()
    );
}
