//! Compares analytic gradients of the full training loss with central
//! finite differences.
//!
//! All four loss terms are active. The check runs in `f64`; the same model
//! code trains in `f32`.

use std::time::Instant;

use aste_table::synthetic::GradFixture;
use aste_table::tensor::{grad_check_with, GradCheck, Tape};

fn main() -> aste_table::Result<()> {
    let fx = GradFixture::new();
    let params = fx.params::<f64>(11)?;

    let mut tape = Tape::new();
    let batch: Vec<_> = fx.batch.iter().collect();
    let parts = aste_table::training::batch_loss(&fx.model, &fx.train, &mut tape, &params, &batch, None)?;
    let v = parts.values(&tape);
    println!("l_cl {:.6}  l_s {:.6}  l_e {:.6}  l_sp {:.6}  total {:.6}", v.cl, v.s, v.e, v.sp, v.total);
    println!("{} parameter tensors, {} scalars", params.len(), params.num_scalars());

    let cfg = GradCheck {
        eps: 1e-5,
        samples: 400,
        seed: 3,
        ..GradCheck::default()
    };
    let start = Instant::now();
    let report = grad_check_with(|t, s| fx.loss(t, s), &params, &cfg)?;
    println!(
        "checked {} coordinates in {:.2}s, max relative error {:.3e}",
        report.checked,
        start.elapsed().as_secs_f64(),
        report.max_rel_error
    );
    if let Some((path, i, a, n)) = report.worst {
        println!("worst: {path}[{i}] analytic {a:.6e} numeric {n:.6e}");
    }
    Ok(())
}
