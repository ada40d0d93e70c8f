//! A tiny hand-written corpus for overfit checks, demos and smoke tests.
//!
//! Every aspect and opinion is a single token and no token plays both roles,
//! so a working model can memorize the set exactly.

use crate::data::{parse_line, Example, Triplet, Vocab};
use crate::encoder::EncoderConfig;
use crate::error::Result;
use crate::model::{Model, ModelConfig};
use crate::tensor::{ParamStore, Real, Tape, Var};
use crate::training::{batch_loss, TrainConfig};

pub const OVERFIT_LINES: [&str; 8] = [
    "the pasta was delicious####[([1], [3], 'POS')]",
    "the waiter seemed rude####[([1], [3], 'NEG')]",
    "awful coffee at breakfast####[([1], [0], 'NEG')]",
    "the screen is bright####[([1], [3], 'POS')]",
    "this keyboard feels ordinary####[([1], [3], 'NEU')]",
    "fantastic dessert and friendly staff####[([1], [0], 'POS'), ([4], [3], 'POS')]",
    "the battery drains terribly fast####[([1], [3], 'NEG')]",
    "the price seems average####[([1], [3], 'NEU')]",
];

/// Parsed tokens and gold triplets of [`OVERFIT_LINES`].
pub fn overfit_raw() -> Vec<(Vec<String>, Vec<Triplet>)> {
    OVERFIT_LINES
        .iter()
        .enumerate()
        .map(|(i, l)| parse_line(i + 1, l).expect("built-in corpus parses"))
        .collect()
}

/// Vocabulary and encoded examples of the overfit corpus.
pub fn overfit_corpus() -> (Vocab, Vec<Example>) {
    let raw = overfit_raw();
    let tokens: Vec<Vec<String>> = raw.iter().map(|(t, _)| t.clone()).collect();
    let vocab = Vocab::build(&tokens, 1);
    let examples = raw
        .into_iter()
        .map(|(t, triplets)| Example {
            sentence: vocab.encode(&t),
            triplets,
        })
        .collect();
    (vocab, examples)
}

/// A model small enough to memorize the corpus in seconds.
pub fn overfit_model_config(vocab_size: usize) -> ModelConfig {
    ModelConfig {
        encoder: EncoderConfig {
            vocab_size,
            d_model: 32,
            n_layers: 1,
            n_heads: 2,
            d_ff: 64,
            max_len: 16,
            dropout: 0.0,
        },
        d_table: 16,
        n_interactions: 8,
        mmcnn_blocks: 2,
        ..ModelConfig::default()
    }
}

pub fn overfit_train_config() -> TrainConfig {
    TrainConfig {
        epochs: 200,
        batch_size: 4,
        learning_rate: 3e-3,
        seed: 7,
        ..TrainConfig::default()
    }
}

/// A small model and a two-sentence batch of 3-token sentences on which
/// every loss term is active: both sentences carry a triplet, the batch
/// provides a contrastive negative, and `d_table != d_model` so the
/// projection participates.
pub struct GradFixture {
    pub model: Model,
    pub train: TrainConfig,
    pub batch: Vec<Example>,
}

impl GradFixture {
    pub fn new() -> Self {
        let lines = ["the food great####[([1], [2], 'POS')]", "service was slow####[([0], [2], 'NEG')]"];
        let raw: Vec<_> = lines
            .iter()
            .enumerate()
            .map(|(i, l)| parse_line(i + 1, l).expect("fixture parses"))
            .collect();
        let tokens: Vec<Vec<String>> = raw.iter().map(|(t, _)| t.clone()).collect();
        let vocab = Vocab::build(&tokens, 1);
        let batch = raw
            .into_iter()
            .map(|(t, triplets)| Example {
                sentence: vocab.encode(&t),
                triplets,
            })
            .collect();
        let cfg = ModelConfig {
            encoder: EncoderConfig {
                vocab_size: vocab.len(),
                d_model: 8,
                n_layers: 1,
                n_heads: 2,
                d_ff: 12,
                max_len: 8,
                dropout: 0.0,
            },
            d_table: 6,
            n_interactions: 3,
            mmcnn_blocks: 2,
            ..ModelConfig::default()
        };
        GradFixture {
            model: Model::new(cfg).expect("fixture config is valid"),
            train: TrainConfig::default(),
            batch,
        }
    }

    pub fn params<T: Real>(&self, seed: u64) -> Result<ParamStore<T>> {
        let mut store = self.model.init_params::<T>(seed)?;
        // lift the near-zero convolution init so the refinement stack
        // contributes gradients well above the comparison floor
        for (path, t) in store.iter_mut() {
            if path.starts_with("mmcnn.") {
                t.data_mut().iter_mut().for_each(|v| *v = *v * T::of(20.0));
            }
        }
        Ok(store)
    }

    /// Total loss over the batch in evaluation mode.
    pub fn loss<T: Real>(&self, tape: &mut Tape<T>, store: &ParamStore<T>) -> Result<Var> {
        let batch: Vec<&Example> = self.batch.iter().collect();
        Ok(batch_loss(&self.model, &self.train, tape, store, &batch, None)?.total)
    }
}

impl Default for GradFixture {
    fn default() -> Self {
        Self::new()
    }
}
