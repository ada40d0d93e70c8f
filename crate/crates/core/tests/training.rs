//! Training-loop properties on the built-in toy corpus.

use aste_table::model::Model;
use aste_table::synthetic::{overfit_corpus, overfit_model_config};
use aste_table::training::{train, TrainConfig};

#[test]
fn windowed_loss_never_increases() {
    let (vocab, examples) = overfit_corpus();
    let model = Model::new(overfit_model_config(vocab.len())).unwrap();
    let tcfg = TrainConfig {
        epochs: 100,
        ..TrainConfig::default()
    };
    let init = model.init_params(tcfg.seed).unwrap();
    let out = train(&model, &tcfg, init, &examples, &examples, |_| {}).unwrap();
    let losses: Vec<f64> = out.history.iter().map(|h| h.loss.total).collect();
    // means over consecutive non-overlapping 10-epoch windows
    let means: Vec<f64> = losses.chunks(10).map(|w| w.iter().sum::<f64>() / w.len() as f64).collect();
    assert_eq!(means.len(), 10);
    for (i, w) in means.windows(2).enumerate() {
        assert!(w[1] <= w[0], "window {} mean {} > window {i} mean {}", i + 1, w[1], w[0]);
    }
}
