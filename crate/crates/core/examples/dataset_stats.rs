//! Sentence and triplet counts of the benchmark splits.
//!
//! Pass a directory containing `14res/`, `14lap/`, `15res/` and `16res/`,
//! each with `{train,dev,test}_triplets.txt`, to compare against the
//! published counts. Without an argument the built-in toy corpus is
//! summarized instead.
//!
//! Run with `cargo run --example dataset_stats -- /path/to/data`.

use std::path::PathBuf;

use aste_table::data::{read_split, split_file_name, CorpusStats, REFERENCE_STATS};
use aste_table::synthetic::overfit_raw;

fn row(label: &str, s: &CorpusStats) {
    println!(
        "{label:<14} {:>9} {:>6} {:>6} {:>6}",
        s.sentence_count, s.pos_count, s.neu_count, s.neg_count
    );
}

fn main() -> aste_table::Result<()> {
    println!("{:<14} {:>9} {:>6} {:>6} {:>6}", "split", "sentences", "pos", "neu", "neg");
    let Some(dir) = std::env::args().nth(1).map(PathBuf::from) else {
        let raw = overfit_raw();
        row("toy", &CorpusStats::from_triplets(raw.iter().map(|(_, t)| t.as_slice())));
        return Ok(());
    };
    let mut mismatches = 0;
    for (dataset, split, expected) in REFERENCE_STATS {
        let path = dir.join(dataset).join(split_file_name(split));
        let label = format!("{dataset}/{split}");
        match read_split(&path) {
            Ok(raw) => {
                let got = CorpusStats::from_triplets(raw.iter().map(|(_, t)| t.as_slice()));
                row(&label, &got);
                if got != expected {
                    mismatches += 1;
                    row("  expected", &expected);
                }
            }
            Err(e) => println!("{label:<14} {e}"),
        }
    }
    println!("{mismatches} mismatching splits");
    Ok(())
}
