//! Builds the word-pair relation table for one sentence and shows how each
//! multi-scale convolution block changes it.
//!
//! Prints the per-cell activation norm of the initial table and the mean
//! absolute change contributed by each refinement block.
//!
//! Run with `cargo run --release --example relation_table_mmcnn`.

use aste_table::encoder::Encoder;
use aste_table::mmcnn::{self, MmcnnConfig, DILATIONS, KERNEL_SIZES};
use aste_table::synthetic::{overfit_corpus, overfit_model_config};
use aste_table::table::{self, RelationTable};
use aste_table::tensor::{ParamStore, Tape};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cell_norms(tape: &Tape<f32>, t: &RelationTable) -> Vec<f32> {
    tape.value(t.values)
        .chunks(t.d)
        .map(|c| c.iter().map(|v| v * v).sum::<f32>().sqrt())
        .collect()
}

fn main() -> aste_table::Result<()> {
    let (vocab, examples) = overfit_corpus();
    let cfg = overfit_model_config(vocab.len());
    let ex = &examples[5];
    let words = &ex.sentence.tokens;
    let n = words.len();

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut store = ParamStore::<f32>::new();
    let encoder = Encoder::new(cfg.encoder.clone())?;
    encoder.init(&mut store, &mut rng)?;
    table::init(&cfg.table(), &mut store, &mut rng)?;
    let mcfg = MmcnnConfig {
        n_blocks: 3,
        channels: cfg.d_table,
    };
    mmcnn::init(&mcfg, &mut store, &mut rng)?;
    // the default init is deliberately small; widen it so the blocks show
    for (path, t) in store.iter_mut() {
        if path.starts_with("mmcnn.") {
            t.data_mut().iter_mut().for_each(|v| *v *= 20.0);
        }
    }

    let mut tape = Tape::new();
    let enc = encoder.encode(&mut tape, &store, &ex.sentence.ids, None)?;
    let t0 = table::build_table(&cfg.table(), &mut tape, &store, enc.words)?;
    println!("sentence: {}", words.join(" "));
    println!("table: {n} x {n} x {}", t0.d);
    println!(
        "branches per block: {}",
        KERNEL_SIZES
            .iter()
            .flat_map(|k| DILATIONS.iter().map(move |d| mmcnn::branch_name(*k, *d)))
            .collect::<Vec<_>>()
            .join(" ")
    );

    println!("\ncell norms of the initial table (rows: aspect word, cols: opinion word)");
    let norms = cell_norms(&tape, &t0);
    print!("{:>10}", "");
    for w in words {
        print!(" {w:>9.9}");
    }
    println!();
    for (i, w) in words.iter().enumerate() {
        print!("{w:>10.10}");
        for j in 0..n {
            print!(" {:>9.3}", norms[t0.cell(i, j)]);
        }
        println!();
    }

    println!("\n{:>5} {:>14}", "block", "mean |delta|");
    let mut t = t0;
    for l in 0..mcfg.n_blocks {
        let next = mmcnn::block(&mcfg, &mut tape, &store, l, t)?;
        let (a, b) = (tape.value(t.values), tape.value(next.values));
        let delta = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f32>() / a.len() as f32;
        println!("{l:>5} {delta:>14.5}");
        t = next;
    }
    Ok(())
}
