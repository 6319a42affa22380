//! Generate a synthetic corpus and print its group counts.
//!
//! ```text
//! cargo run --release --example synth_corpus -- mascara 7 /tmp/mascara
//! ```
//! Arguments: preset (null, mascara, iris-signal, leakage), seed, and an
//! optional output directory for manifest.csv plus PGM images and masks.

use std::path::PathBuf;

use iclab::corpus::{corpus_stats, generate_synthetic, write_corpus, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "mascara".into());
    let seed: u64 = args.next().map_or(Ok(7), |s| s.parse())?;
    let out = args.next().map(PathBuf::from);

    let cfg = SynthConfig::preset(&preset).ok_or_else(|| format!("unknown preset {preset:?}"))?;
    let corpus = generate_synthetic(&cfg, seed)?;
    println!("{}", corpus_stats(&corpus));
    if let Some(f) = corpus_stats(&corpus).female_cosmetics_fraction() {
        println!("female images with cosmetics: {:.1}%", 100.0 * f);
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(&dir)?;
        println!("manifest: {}", write_corpus(&corpus, &dir)?.display());
    }
    Ok(())
}
