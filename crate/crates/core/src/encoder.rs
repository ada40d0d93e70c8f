//! Small transformer encoder producing word states `H` and a sentence state.
//!
//! A CLS sentinel is prepended to every input; its final state is the
//! sentence representation and is excluded from `H`.

use rand::RngCore;

use crate::data::CLS;
use crate::error::{Error, Result};
use crate::nn::{self, DropoutRng};
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_ff: 128,
            max_len: 100,
            dropout: 0.1,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("max_len", self.max_len),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Output of [`Encoder::encode`].
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `[n, d_model]`
    pub words: Var,
    /// `[d_model]`
    pub cls: Var,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Encoder { cfg })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn init<T: Real>(&self, store: &mut ParamStore<T>, rng: &mut dyn RngCore) -> Result<()> {
        let c = &self.cfg;
        store.insert("encoder.tok_emb", Tensor::uniform(&[c.vocab_size, c.d_model], 0.1, rng))?;
        store.insert("encoder.pos_emb", Tensor::uniform(&[c.max_len + 1, c.d_model], 0.1, rng))?;
        for l in 0..c.n_layers {
            let p = format!("encoder.layer{l}");
            nn::init_layer_norm(store, &format!("{p}.ln1"), c.d_model)?;
            for proj in ["q", "k", "v", "o"] {
                nn::init_linear(store, &format!("{p}.attn.{proj}"), c.d_model, c.d_model, rng)?;
            }
            nn::init_layer_norm(store, &format!("{p}.ln2"), c.d_model)?;
            nn::init_linear(store, &format!("{p}.ffn.in"), c.d_model, c.d_ff, rng)?;
            nn::init_linear(store, &format!("{p}.ffn.out"), c.d_ff, c.d_model, rng)?;
        }
        nn::init_layer_norm(store, "encoder.ln_f", c.d_model)
    }

    fn attention<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        prefix: &str,
        x: Var,
    ) -> Result<Var> {
        let c = &self.cfg;
        let dh = c.d_model / c.n_heads;
        let q = nn::linear(tape, store, &format!("{prefix}.attn.q"), x)?;
        let k = nn::linear(tape, store, &format!("{prefix}.attn.k"), x)?;
        let v = nn::linear(tape, store, &format!("{prefix}.attn.v"), x)?;
        let scale = T::of(1.0 / (dh as f64).sqrt());
        let mut heads = Vec::with_capacity(c.n_heads);
        for h in 0..c.n_heads {
            let qh = tape.slice_cols(q, h * dh, dh)?;
            let kh = tape.slice_cols(k, h * dh, dh)?;
            let vh = tape.slice_cols(v, h * dh, dh)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let scores = tape.scale(scores, scale);
            let attn = tape.softmax(scores);
            heads.push(tape.matmul(attn, vh)?);
        }
        let merged = tape.concat_cols(&heads)?;
        nn::linear(tape, store, &format!("{prefix}.attn.o"), merged)
    }

    /// Encodes one sentence of vocabulary ids.
    pub fn encode<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        ids: &[usize],
        mut rng: DropoutRng<'_>,
    ) -> Result<Encoded> {
        let c = &self.cfg;
        let n = ids.len();
        if n == 0 || n > c.max_len {
            return Err(Error::Length {
                len: n,
                max: c.max_len,
            });
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= c.vocab_size) {
            return Err(Error::Domain(format!("token id {bad} outside vocabulary of {}", c.vocab_size)));
        }
        let mut seq = Vec::with_capacity(n + 1);
        seq.push(CLS);
        seq.extend_from_slice(ids);
        let positions: Vec<usize> = (0..=n).collect();

        let tok = tape.param(store, "encoder.tok_emb")?;
        let pos = tape.param(store, "encoder.pos_emb")?;
        let te = tape.gather_rows(tok, &seq)?;
        let pe = tape.gather_rows(pos, &positions)?;
        let mut x = tape.add(te, pe)?;
        x = nn::dropout(tape, x, c.dropout, &mut rng);

        for l in 0..c.n_layers {
            let p = format!("encoder.layer{l}");
            let h = nn::layer_norm(tape, store, &format!("{p}.ln1"), x)?;
            let a = self.attention(tape, store, &p, h)?;
            let a = nn::dropout(tape, a, c.dropout, &mut rng);
            x = tape.add(x, a)?;

            let h = nn::layer_norm(tape, store, &format!("{p}.ln2"), x)?;
            let f = nn::linear(tape, store, &format!("{p}.ffn.in"), h)?;
            let f = tape.relu(f);
            let f = nn::linear(tape, store, &format!("{p}.ffn.out"), f)?;
            let f = nn::dropout(tape, f, c.dropout, &mut rng);
            x = tape.add(x, f)?;
        }
        let x = nn::layer_norm(tape, store, "encoder.ln_f", x)?;

        let cls = tape.gather_rows(x, &[0])?;
        let cls = tape.reshape(cls, &[c.d_model])?;
        let words: Vec<usize> = (1..=n).collect();
        let words = tape.gather_rows(x, &words)?;
        Ok(Encoded { words, cls })
    }
}
