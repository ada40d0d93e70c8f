//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown keys are errors. Every
//! key has a default, and [`RunConfig::to_text`] writes all of them so a
//! checkpoint records the complete run.
//!
//! | key | default |
//! |---|---|
//! | `d_model`, `n_layers`, `n_heads`, `d_ff`, `max_len`, `dropout` | 64, 2, 4, 128, 100, 0.1 |
//! | `d_table`, `n_interactions`, `mmcnn_blocks` | 64, 32, 2 |
//! | `margin`, `ccl_enabled` | 1.0, true |
//! | `tau_s`, `tau_e`, `max_span`, `max_candidates` | 0.5, 0.5, 8, 1000 |
//! | `epochs`, `batch_size`, `learning_rate`, `seed`, `grad_clip` | 10, 8, 0.001, 42, 5.0 |
//! | `neg_ratio`, `neg_cap`, `min_freq` | 3, 50, 1 |
//! | `train`, `valid`, `test`, `checkpoint`, `output` | unset |
//!
//! Relative paths are resolved against the directory of the config file.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// `encoder.vocab_size` is not a config key; it comes from the data.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub min_freq: usize,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            min_freq: 1,
            paths: Paths::default(),
        }
    }
}

/// Splits config text into `(line, key, value)` entries.
pub fn entries(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        out.push((i + 1, k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(line: usize, key: &str, v: &str) -> Result<T>
where
    T::Err: Display,
{
    v.parse()
        .map_err(|e| Error::Config(format!("line {line}: bad value `{v}` for `{key}`: {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        for (line, key, v) in entries(text)? {
            c.set(line, &key, &v)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in c.paths_mut() {
            if let Some(p) = p.as_mut() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(c)
    }

    fn paths_mut(&mut self) -> [&mut Option<PathBuf>; 5] {
        let p = &mut self.paths;
        [&mut p.train, &mut p.valid, &mut p.test, &mut p.checkpoint, &mut p.output]
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let (m, t) = (&mut self.model, &mut self.train);
        let e = &mut m.encoder;
        match key {
            "d_model" => e.d_model = parse(line, key, v)?,
            "n_layers" => e.n_layers = parse(line, key, v)?,
            "n_heads" => e.n_heads = parse(line, key, v)?,
            "d_ff" => e.d_ff = parse(line, key, v)?,
            "max_len" => e.max_len = parse(line, key, v)?,
            "dropout" => e.dropout = parse(line, key, v)?,
            "d_table" => m.d_table = parse(line, key, v)?,
            "n_interactions" => m.n_interactions = parse(line, key, v)?,
            "mmcnn_blocks" => m.mmcnn_blocks = parse(line, key, v)?,
            "margin" => m.margin = parse(line, key, v)?,
            "ccl_enabled" => m.ccl_enabled = parse(line, key, v)?,
            "tau_s" => m.decode.tau_s = parse(line, key, v)?,
            "tau_e" => m.decode.tau_e = parse(line, key, v)?,
            "max_span" => m.decode.max_span = parse(line, key, v)?,
            "max_candidates" => m.decode.max_candidates = parse(line, key, v)?,
            "epochs" => t.epochs = parse(line, key, v)?,
            "batch_size" => t.batch_size = parse(line, key, v)?,
            "learning_rate" => t.learning_rate = parse(line, key, v)?,
            "seed" => t.seed = parse(line, key, v)?,
            "grad_clip" => t.grad_clip = parse(line, key, v)?,
            "neg_ratio" => t.neg_ratio = parse(line, key, v)?,
            "neg_cap" => t.neg_cap = parse(line, key, v)?,
            "min_freq" => self.min_freq = parse(line, key, v)?,
            "train" => self.paths.train = Some(v.into()),
            "valid" => self.paths.valid = Some(v.into()),
            "test" => self.paths.test = Some(v.into()),
            "checkpoint" => self.paths.checkpoint = Some(v.into()),
            "output" => self.paths.output = Some(v.into()),
            _ => return Err(Error::Config(format!("line {line}: unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Checks everything except `vocab_size`, which is only known later.
    pub fn validate(&self) -> Result<()> {
        let mut m = self.model.clone();
        m.encoder.vocab_size = m.encoder.vocab_size.max(1);
        m.validate()?;
        self.train.validate()
    }

    /// Every key in a fixed order; [`RunConfig::parse`] reads it back.
    pub fn to_text(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        let e = &m.encoder;
        let mut lines = vec![
            format!("d_model = {}", e.d_model),
            format!("n_layers = {}", e.n_layers),
            format!("n_heads = {}", e.n_heads),
            format!("d_ff = {}", e.d_ff),
            format!("max_len = {}", e.max_len),
            format!("dropout = {:?}", e.dropout),
            format!("d_table = {}", m.d_table),
            format!("n_interactions = {}", m.n_interactions),
            format!("mmcnn_blocks = {}", m.mmcnn_blocks),
            format!("margin = {:?}", m.margin),
            format!("ccl_enabled = {}", m.ccl_enabled),
            format!("tau_s = {:?}", m.decode.tau_s),
            format!("tau_e = {:?}", m.decode.tau_e),
            format!("max_span = {}", m.decode.max_span),
            format!("max_candidates = {}", m.decode.max_candidates),
            format!("epochs = {}", t.epochs),
            format!("batch_size = {}", t.batch_size),
            format!("learning_rate = {:?}", t.learning_rate),
            format!("seed = {}", t.seed),
            format!("grad_clip = {:?}", t.grad_clip),
            format!("neg_ratio = {}", t.neg_ratio),
            format!("neg_cap = {}", t.neg_cap),
            format!("min_freq = {}", self.min_freq),
        ];
        let p = &self.paths;
        for (k, v) in [
            ("train", &p.train),
            ("valid", &p.valid),
            ("test", &p.test),
            ("checkpoint", &p.checkpoint),
            ("output", &p.output),
        ] {
            if let Some(v) = v {
                lines.push(format!("{k} = {}", v.display()));
            }
        }
        lines.join("\n") + "\n"
    }
}
