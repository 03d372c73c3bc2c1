//! Writes a small deterministic synthetic corpus of MIDI files, handy for
//! trying the CLI without real piano data.
//!
//! Usage: cargo run -p iic-core --example demo_corpus -- <output-dir> [pieces]

use iic_core::midi::{save_midi, DEFAULT_TEMPO_US};
use iic_core::synth::pattern_corpus;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "demo_corpus".to_string());
    let pieces: usize = args
        .next()
        .map(|s| s.parse().expect("piece count must be a number"))
        .unwrap_or(8);
    std::fs::create_dir_all(&dir).expect("create output directory");
    for (i, piece) in pattern_corpus(7, pieces, 16).iter().enumerate() {
        let path = format!("{dir}/piece_{i:02}.mid");
        std::fs::write(&path, save_midi(piece, DEFAULT_TEMPO_US)).expect("write midi");
        println!("wrote {path} ({} notes)", piece.len());
    }
}
