//! The sentence-level contrastive objective on a real batch.
//!
//! Each sentence's pooled table is pulled towards its own sentence state and
//! pushed at least `margin` further away from the other tables in the batch.
//! Prints the distance matrix and the per-sentence hinge loss.
//!
//! Run with `cargo run --release --example contrastive`.

use aste_table::contrastive::{batch_negatives, contrastive_loss, pool_positive, project};
use aste_table::model::Model;
use aste_table::synthetic::{overfit_corpus, overfit_model_config};
use aste_table::tensor::Tape;

fn main() -> aste_table::Result<()> {
    let (vocab, examples) = overfit_corpus();
    let model = Model::new(overfit_model_config(vocab.len()))?;
    let cfg = model.config().contrastive();
    let store = model.init_params::<f32>(3)?;
    let batch = &examples[..4];

    let mut tape = Tape::new();
    let mut cls = Vec::new();
    let mut pooled = Vec::new();
    for ex in batch {
        let fwd = model.forward(&mut tape, &store, &ex.sentence.ids, None)?;
        let p = pool_positive(&mut tape, &fwd.table)?;
        cls.push(fwd.cls);
        pooled.push(project(&cfg, &mut tape, &store, p)?);
    }
    println!(
        "d_table {} -> d_model {} (projection: {})",
        cfg.d_table,
        cfg.d_model,
        cfg.needs_projection()
    );

    println!("\ndistance from sentence state (row) to pooled table (col)");
    print!("{:>4}", "");
    for j in 0..batch.len() {
        print!(" {j:>8}");
    }
    println!();
    for (i, &c) in cls.iter().enumerate() {
        print!("{i:>4}");
        for &p in &pooled {
            let d = tape.distance(c, p)?;
            print!(" {:>8.4}", tape.scalar(d));
        }
        println!();
    }

    println!("\n{:>4} {:>8} {:>8}", "i", "margin", "loss");
    for margin in [0.0, cfg.margin, 5.0] {
        for (i, &c) in cls.iter().enumerate() {
            let negs = batch_negatives(&pooled, i)?;
            let l = contrastive_loss(&mut tape, c, pooled[i], &negs, margin)?;
            println!("{i:>4} {margin:>8.2} {:>8.4}", tape.scalar(l));
        }
    }
    let single = contrastive_loss(&mut tape, cls[0], pooled[0], &[], cfg.margin)?;
    println!("\nbatch of one (no negatives): loss {}", tape.scalar(single));
    Ok(())
}
