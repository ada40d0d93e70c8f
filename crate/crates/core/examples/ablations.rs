//! Component ablations on the toy corpus.
//!
//! Trains the same small model with and without the contrastive term and
//! with zero or two refinement blocks, and reports how fast each variant
//! memorizes the corpus. The toy set is far too small to rank variants; this
//! shows how the switches are wired, not their benchmark effect.
//!
//! Run with `cargo run --release --example ablations`.

use std::time::Instant;

use aste_table::model::Model;
use aste_table::synthetic::{overfit_corpus, overfit_model_config, overfit_train_config};
use aste_table::training::train;

fn main() -> aste_table::Result<()> {
    let (vocab, examples) = overfit_corpus();
    let mut tcfg = overfit_train_config();
    tcfg.epochs = 80;
    println!(
        "{:<6} {:>6} {:>8} {:>10} {:>9} {:>8}",
        "ccl", "blocks", "params", "first f1=1", "best f1", "secs"
    );
    for ccl in [true, false] {
        for blocks in [2, 0] {
            let mut cfg = overfit_model_config(vocab.len());
            cfg.ccl_enabled = ccl;
            cfg.mmcnn_blocks = blocks;
            let model = Model::new(cfg)?;
            let init = model.init_params(tcfg.seed)?;
            let params = init.num_scalars();
            let start = Instant::now();
            let out = train(&model, &tcfg, init, &examples, &examples, |_| {})?;
            let first = out
                .history
                .iter()
                .find(|h| h.valid.f1 == 1.0)
                .map_or("-".to_string(), |h| h.epoch.to_string());
            println!(
                "{:<6} {:>6} {:>8} {:>10} {:>9.3} {:>8.1}",
                ccl,
                blocks,
                params,
                first,
                out.best_f1,
                start.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}
