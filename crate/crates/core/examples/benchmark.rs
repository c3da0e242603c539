//! Trained policy against a random policy and a one-step greedy-oracle
//! baseline on the desk-scale similarity task, over several seeds.
//!
//! ```text
//! cargo run --release --example benchmark -- [seeds]
//! ```

use std::time::Instant;

use rxnopt::run::{compare_with_baselines, RunConfig, Session};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let seeds: u64 = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(5);
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/bench/run.toml");
    println!("{:>4} {:>9} {:>9} {:>9} {:>8}", "seed", "trained", "random", "greedy", "secs");
    for seed in 1..=seeds {
        let t = Instant::now();
        let mut cfg = RunConfig::load(path)?;
        cfg.seed = seed;
        let c = compare_with_baselines(&Session::new(cfg)?)?;
        println!(
            "{:>4} {:>9.4} {:>9.4} {:>9.4} {:>8.1}",
            seed,
            c.trained,
            c.random,
            c.greedy_oracle,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
