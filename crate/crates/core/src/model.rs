//! The full extraction model: encoder, relation table, MMCNN refinement,
//! boundary heads and region classifier.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::contrastive::{self, ContrastiveConfig};
use crate::data::Triplet;
use crate::decode::decode;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::mmcnn::{self, MmcnnConfig};
use crate::nn::DropoutRng;
use crate::region::{self, BoundaryMaps, CandidateRegion, DecodeConfig};
use crate::table::{self, RelationTable, TableConfig};
use crate::tensor::{ParamStore, Real, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub d_table: usize,
    pub n_interactions: usize,
    pub mmcnn_blocks: usize,
    pub margin: f64,
    pub ccl_enabled: bool,
    pub decode: DecodeConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            d_table: 64,
            n_interactions: 32,
            mmcnn_blocks: 2,
            margin: 1.0,
            ccl_enabled: true,
            decode: DecodeConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn table(&self) -> TableConfig {
        TableConfig {
            d_model: self.encoder.d_model,
            d_table: self.d_table,
            n_interactions: self.n_interactions,
        }
    }

    pub fn mmcnn(&self) -> MmcnnConfig {
        MmcnnConfig {
            n_blocks: self.mmcnn_blocks,
            channels: self.d_table,
        }
    }

    pub fn contrastive(&self) -> ContrastiveConfig {
        ContrastiveConfig {
            margin: self.margin,
            enabled: self.ccl_enabled,
            d_table: self.d_table,
            d_model: self.encoder.d_model,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.d_table == 0 || self.n_interactions == 0 {
            return Err(Error::Config("d_table and n_interactions must be positive".into()));
        }
        self.contrastive().validate()?;
        self.decode.validate()
    }
}

/// Tape handles produced by one forward pass over a sentence.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// Sentence state `[d_model]`.
    pub cls: Var,
    /// Refined table `T^(L)`.
    pub table: RelationTable,
    pub logit_s: Var,
    pub logit_e: Var,
}

/// Decoded output for one sentence.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub maps: BoundaryMaps,
    pub candidates: Vec<CandidateRegion>,
    pub triplets: Vec<Triplet>,
}

#[derive(Debug, Clone)]
pub struct Model {
    cfg: ModelConfig,
    encoder: Encoder,
}

impl Model {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let encoder = Encoder::new(cfg.encoder.clone())?;
        Ok(Model { cfg, encoder })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Fresh parameters drawn from a stream seeded with `seed`.
    pub fn init_params<T: Real>(&self, seed: u64) -> Result<ParamStore<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        self.encoder.init(&mut store, &mut rng)?;
        table::init(&self.cfg.table(), &mut store, &mut rng)?;
        mmcnn::init(&self.cfg.mmcnn(), &mut store, &mut rng)?;
        contrastive::init(&self.cfg.contrastive(), &mut store, &mut rng)?;
        region::init(self.cfg.d_table, &mut store, &mut rng)?;
        Ok(store)
    }

    pub fn forward<T: Real>(
        &self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        ids: &[usize],
        rng: DropoutRng<'_>,
    ) -> Result<Forward> {
        let enc = self.encoder.encode(tape, store, ids, rng)?;
        let t0 = table::build_table(&self.cfg.table(), tape, store, enc.words)?;
        let table = mmcnn::stack(&self.cfg.mmcnn(), tape, store, t0)?;
        let (logit_s, logit_e) = region::boundary_logits(tape, store, &table)?;
        Ok(Forward {
            cls: enc.cls,
            table,
            logit_s,
            logit_e,
        })
    }

    /// Runs the model in evaluation mode and decodes triplets.
    pub fn predict<T: Real>(&self, store: &ParamStore<T>, ids: &[usize]) -> Result<Prediction> {
        let dc = &self.cfg.decode;
        let mut tape = Tape::new();
        let fwd = self.forward(&mut tape, store, ids, None)?;
        let maps = region::boundary_probs(&mut tape, ids.len(), fwd.logit_s, fwd.logit_e)?;
        let cands = region::enumerate_candidates(&maps, dc.tau_s, dc.tau_e, dc.max_span);
        let mut candidates = region::cap_candidates(cands, dc.max_candidates);
        region::classify_candidates(&mut tape, store, &fwd.table, &mut candidates)?;
        let triplets = decode(&candidates);
        Ok(Prediction {
            maps,
            candidates,
            triplets,
        })
    }
}
