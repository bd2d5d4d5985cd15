//! Sweeps the default perplexity grid over a labelled CSV and prints the
//! KL and score curves.
//!
//! cargo run --release -p pbic-core --example sweep_csv -- data/digits.csv [seed] [--raw]

use pbic_core::data::{load_csv, IngestConfig};
use pbic_core::search::{default_grid, sweep, SweepConfig};
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let path = args.get(1).ok_or("usage: sweep_csv <csv> [seed] [--raw]")?;
    let seed: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0);
    let standardize = !args.iter().any(|a| a == "--raw");
    let cfg = IngestConfig { label_column: Some(0), standardize, ..Default::default() };
    let data = load_csv(path, &cfg)?;
    let grid = default_grid(data.n())?;
    let config = SweepConfig { base_seed: seed, ..Default::default() };
    let t = Instant::now();
    let result = sweep(&data, &grid, &config)?;
    println!("n = {}, {:.1}s", data.n(), t.elapsed().as_secs_f64());
    for i in 0..result.grid.len() {
        println!("perp {:>7.1}  kl {:?}  score {:?}", result.grid[i], result.kl[i], result.score[i]);
    }
    println!("selected {:?}", result.selected_perplexity());
    Ok(())
}
