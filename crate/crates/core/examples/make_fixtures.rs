//! Regenerates the bundled fixture inputs.
//!
//! Usage: cargo run -p quizdim --example make_fixtures -- [OUT_DIR]

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use quizdim::synth::{synth_lexicon, LexiconSpec};

const SEED: u64 = 20_170_712;

fn main() -> quizdim::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&out)?;
    let lex = synth_lexicon(&LexiconSpec {
        words: 3000,
        dim: 24,
        topics: 60,
        spread: 1.0,
        zipf_exponent: 1.0,
        seed: SEED,
    })?;
    lex.space
        .write_text(BufWriter::new(File::create(out.join("embeddings.txt"))?))?;
    lex.write_frequencies(BufWriter::new(File::create(out.join("frequencies.tsv"))?))?;
    lex.write_crossword_csv(1500, SEED, BufWriter::new(File::create(out.join("crossword.csv"))?))?;
    lex.write_jeopardy_json(800, SEED, BufWriter::new(File::create(out.join("jeopardy.json"))?))?;
    println!("wrote fixtures to {}", out.display());
    Ok(())
}
