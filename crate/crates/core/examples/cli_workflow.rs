//! The train / eval / predict / inspect workflow behind the `aste` binary,
//! driven from library code in a temporary directory.
//!
//! Run with `cargo run --release --example cli_workflow`.

use std::fs;
use std::io;

use aste_table::cli::{cmd_eval, cmd_predict, cmd_train, inspect_checkpoint, inspect_data};
use aste_table::synthetic::OVERFIT_LINES;

const CONFIG: &str = "\
# small model for the toy corpus
d_model = 32
n_layers = 1
n_heads = 2
d_ff = 64
max_len = 16
dropout = 0.0
d_table = 16
n_interactions = 8
epochs = 60
batch_size = 4
learning_rate = 0.003
train = toy.txt
valid = toy.txt
checkpoint = model.btf
";

fn main() -> aste_table::Result<()> {
    let dir = std::env::temp_dir().join(format!("aste-workflow-{}", std::process::id()));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("toy.txt"), OVERFIT_LINES.join("\n") + "\n")?;
    fs::write(dir.join("run.cfg"), CONFIG)?;
    let mut out = io::stdout();

    println!("== train");
    let summary = cmd_train(&dir.join("run.cfg"), &mut out)?;

    println!("\n== inspect");
    inspect_checkpoint(&summary.checkpoint, &mut out)?;
    println!();
    inspect_data(&dir.join("toy.txt"), None, &mut out)?;

    println!("\n== eval");
    let preds = dir.join("predictions.txt");
    cmd_eval(&summary.checkpoint, &dir.join("toy.txt"), Some(&preds), &mut out)?;
    println!("\npredictions written to {}:", preds.display());
    print!("{}", fs::read_to_string(&preds)?);

    println!("\n== predict");
    for text in ["the waiter seemed rude", "fantastic dessert and friendly staff", "nothing to see here"] {
        println!("> {text}");
        cmd_predict(&summary.checkpoint, text, &mut out)?;
    }

    fs::remove_dir_all(&dir)?;
    Ok(())
}
