//! Memorizes the built-in eight-sentence corpus and reports training F1.
//!
//! Run with `cargo run --release --example overfit_toy`.

use std::time::Instant;

use aste_table::model::Model;
use aste_table::synthetic::{overfit_corpus, overfit_model_config, overfit_train_config};
use aste_table::training::train;

fn main() -> aste_table::Result<()> {
    let (vocab, examples) = overfit_corpus();
    let model = Model::new(overfit_model_config(vocab.len()))?;
    let tcfg = overfit_train_config();
    let init = model.init_params(tcfg.seed)?;
    let start = Instant::now();
    println!("{:>5} {:>8} {:>8} {:>8} {:>8} {:>6}", "epoch", "l_cl", "l_s", "l_e", "l_sp", "f1");
    let out = train(&model, &tcfg, init, &examples, &examples, |log| {
        if log.epoch % 10 == 0 || log.valid.f1 == 1.0 {
            println!(
                "{:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6.3}",
                log.epoch, log.loss.cl, log.loss.s, log.loss.e, log.loss.sp, log.valid.f1
            );
        }
    })?;
    println!(
        "best f1 {:.3} at epoch {} ({:.1}s)",
        out.best_f1,
        out.best_epoch,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
