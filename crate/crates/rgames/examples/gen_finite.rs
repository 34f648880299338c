//! Writes the generated finite games used by the benchmark manifest.
//!
//! Usage: `cargo run --example gen_finite -- DIR [COUNT] [VARS]`

use std::path::PathBuf;

use rgames::game::generate::{finite_game, FiniteGameConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "benchmarks/finite".into()));
    let count: u64 = args.next().and_then(|c| c.parse().ok()).unwrap_or(24);
    std::fs::create_dir_all(&dir).expect("cannot create output directory");
    let vars: usize = args.next().and_then(|c| c.parse().ok()).unwrap_or(1);
    let cfg = FiniteGameConfig { vars, ..FiniteGameConfig::default() };
    for seed in 0..count {
        let path = dir.join(format!("finite_{seed:02}.game"));
        std::fs::write(&path, finite_game(seed, &cfg)).expect("cannot write game");
        println!("{}", path.display());
    }
}
