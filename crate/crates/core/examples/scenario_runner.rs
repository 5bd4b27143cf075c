//! Run the bundled demo scenarios in-process and print their reports.
//!
//! `cargo run --example scenario_runner -- oscillator-map` runs one of them.

use manifold_maps::scenario::{demo_scenario, run_scenario, RunOptions, DEMO_NAMES};

fn main() {
    let wanted: Vec<String> = std::env::args().skip(1).collect();
    for name in DEMO_NAMES
        .iter()
        .filter(|n| wanted.is_empty() || wanted.iter().any(|w| w == *n))
    {
        let report = demo_scenario(name).and_then(|s| run_scenario(&s, RunOptions::default()));
        match report.and_then(|r| r.to_text().map(|t| (r.duration, t))) {
            Ok((took, text)) => println!("## {name} ({took:.2?})\n{text}"),
            Err(e) => {
                eprintln!("{name}: {e}");
                std::process::exit(e.exit_code());
            }
        }
    }
}
