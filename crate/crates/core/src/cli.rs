//! Command implementations behind the `aste` binary.
//!
//! Each command writes its report to the given writer and returns a typed
//! result, so the same code drives the binary, the examples and the tests.
//! Errors map to process exit codes through [`Error::exit_code`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::checkpoint::Checkpoint;
use crate::config::{self, RunConfig};
use crate::data::{format_line, load_split, read_split, reference_stats, Example, Triplet, Vocab};
use crate::decode::ScoreReport;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::tensor::ParamStore;
use crate::training::{evaluate, train, EpochLog};

fn io(e: std::io::Error) -> Error {
    Error::Io(e)
}

fn required<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::MissingData {
        key: key.into(),
        msg: "no path given in the config".into(),
    })
}

fn check_lengths(examples: &[Example], max_len: usize, path: &Path) -> Result<()> {
    for ex in examples {
        let n = ex.sentence.len();
        if n == 0 || n > max_len {
            return Err(Error::Data {
                path: path.to_path_buf(),
                source: Box::new(Error::Length { len: n, max: max_len }),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub best_epoch: usize,
    pub best_f1: f64,
    pub checkpoint: PathBuf,
    pub history: Vec<EpochLog>,
}

/// `train --config PATH`.
pub fn cmd_train(config_path: &Path, out: &mut dyn Write) -> Result<TrainSummary> {
    run_training(&RunConfig::load(config_path)?, out)
}

/// Trains from a parsed config and writes the best checkpoint.
pub fn run_training(cfg: &RunConfig, out: &mut dyn Write) -> Result<TrainSummary> {
    let train_path = required(&cfg.paths.train, "train")?;
    let valid_path = required(&cfg.paths.valid, "valid")?;
    let ckpt_path = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| Error::Config("no `checkpoint` path given".into()))?;

    let raw = read_split(train_path)?;
    let tokens: Vec<Vec<String>> = raw.iter().map(|(t, _)| t.clone()).collect();
    let vocab = Vocab::build(&tokens, cfg.min_freq);
    let (train_set, _) = load_split(train_path, &vocab)?;
    let (valid_set, _) = load_split(valid_path, &vocab)?;
    let max_len = cfg.model.encoder.max_len;
    check_lengths(&train_set, max_len, train_path)?;
    check_lengths(&valid_set, max_len, valid_path)?;

    let mut mcfg = cfg.model.clone();
    mcfg.encoder.vocab_size = vocab.len();
    let model = Model::new(mcfg)?;
    let init = model.init_params(cfg.train.seed)?;

    writeln!(
        out,
        "{:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "epoch", "l_cl", "l_s", "l_e", "l_sp", "total", "valid_p", "valid_r", "valid_f1"
    )
    .map_err(io)?;
    let mut write_err = None;
    let outcome = train(&model, &cfg.train, init, &train_set, &valid_set, |log| {
        let l = &log.loss;
        let v = &log.valid;
        if let Err(e) = writeln!(
            out,
            "{:>5} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
            log.epoch, l.cl, l.s, l.e, l.sp, l.total, v.precision, v.recall, v.f1
        ) {
            write_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = write_err {
        return Err(io(e));
    }

    let config = format!(
        "{}meta.best_valid_f1 = {:?}\nmeta.best_epoch = {}\n",
        cfg.to_text(),
        outcome.best_f1,
        outcome.best_epoch
    );
    Checkpoint::new(config, &vocab, outcome.best).save(&ckpt_path)?;
    writeln!(
        out,
        "best epoch {} valid f1 {:.4} checkpoint {}",
        outcome.best_epoch,
        outcome.best_f1,
        ckpt_path.display()
    )
    .map_err(io)?;
    Ok(TrainSummary {
        best_epoch: outcome.best_epoch,
        best_f1: outcome.best_f1,
        checkpoint: ckpt_path,
        history: outcome.history,
    })
}

/// Model, vocabulary and parameters restored from a checkpoint.
pub struct Loaded {
    pub model: Model,
    pub vocab: Vocab,
    pub params: ParamStore<f32>,
    pub config: RunConfig,
}

pub fn load_checkpoint(path: &Path) -> Result<Loaded> {
    let ckpt = Checkpoint::load(path)?;
    let text: String = config::entries(&ckpt.config)?
        .into_iter()
        .filter(|(_, k, _)| !k.starts_with("meta."))
        .map(|(_, k, v)| format!("{k} = {v}\n"))
        .collect();
    let config = RunConfig::parse(&text)?;
    let vocab = ckpt.vocab();
    let mut mcfg = config.model.clone();
    mcfg.encoder.vocab_size = vocab.len();
    let model = Model::new(mcfg)?;
    let expected = model.init_params::<f32>(0)?;
    for (p, t) in expected.iter() {
        let got = ckpt
            .params
            .get(p)
            .map_err(|_| Error::Checkpoint(format!("missing parameter `{p}`")))?;
        if got.shape() != t.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter `{p}` has shape {:?}, expected {:?}",
                got.shape(),
                t.shape()
            )));
        }
    }
    if expected.len() != ckpt.params.len() {
        return Err(Error::Checkpoint("unexpected extra parameters".into()));
    }
    Ok(Loaded {
        model,
        vocab,
        params: ckpt.params,
        config,
    })
}

/// `eval --checkpoint PATH --data PATH [--output PATH]`.
pub fn cmd_eval(checkpoint: &Path, data: &Path, output: Option<&Path>, out: &mut dyn Write) -> Result<ScoreReport> {
    let loaded = load_checkpoint(checkpoint)?;
    let (examples, _) = load_split(data, &loaded.vocab)?;
    check_lengths(&examples, loaded.model.config().encoder.max_len, data)?;
    let (report, preds) = evaluate(&loaded.model, &loaded.params, &examples)?;
    if let Some(path) = output {
        let text: String = examples
            .iter()
            .zip(&preds)
            .map(|(ex, p)| format_line(&ex.sentence.tokens, p) + "\n")
            .collect();
        fs::write(path, text).map_err(io)?;
    }
    writeln!(out, "{report}").map_err(io)?;
    Ok(report)
}

/// Renders a triplet with the words it covers.
pub fn render_triplet(tokens: &[String], t: &Triplet) -> String {
    let words = |s: crate::data::Span| tokens[s.start..=s.end].join(" ");
    format!("({}, {}, {})", words(t.aspect), words(t.opinion), t.sentiment.tag())
}

/// `predict --checkpoint PATH --text "sentence"`.
pub fn cmd_predict(checkpoint: &Path, text: &str, out: &mut dyn Write) -> Result<Vec<Triplet>> {
    let loaded = load_checkpoint(checkpoint)?;
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let max = loaded.model.config().encoder.max_len;
    if tokens.is_empty() || tokens.len() > max {
        return Err(Error::Length {
            len: tokens.len(),
            max,
        });
    }
    let sentence = loaded.vocab.encode(&tokens);
    let pred = loaded.model.predict(&loaded.params, &sentence.ids)?;
    if pred.triplets.is_empty() {
        writeln!(out, "(no triplets)").map_err(io)?;
    }
    for t in &pred.triplets {
        writeln!(out, "{}", render_triplet(&tokens, t)).map_err(io)?;
    }
    Ok(pred.triplets)
}

/// `inspect --checkpoint PATH`: header, selection metadata and parameters.
pub fn inspect_checkpoint(path: &Path, out: &mut dyn Write) -> Result<()> {
    let ckpt = Checkpoint::load(path)?;
    let loaded = load_checkpoint(path)?;
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(io);
    w(out, format!("{:<16} {}", "format", "BTF1 v1"))?;
    w(out, format!("{:<16} {}", "vocab", loaded.vocab.len()))?;
    w(out, format!("{:<16} {}", "parameters", loaded.params.num_scalars()))?;
    w(out, format!("{:<16} {}", "best_epoch", ckpt.meta("best_epoch").unwrap_or("-")))?;
    w(out, format!("{:<16} {}", "best_valid_f1", ckpt.meta("best_valid_f1").unwrap_or("-")))?;
    w(out, String::new())?;
    w(out, format!("{:<40} {:>16} {:>10}", "path", "shape", "size"))?;
    for (p, t) in loaded.params.iter() {
        let shape = format!("{:?}", t.shape());
        w(out, format!("{p:<40} {shape:>16} {:>10}", t.numel()))?;
    }
    Ok(())
}

/// `inspect --data PATH [--dataset NAME --split SPLIT]`: corpus statistics,
/// optionally compared against the published counts.
pub fn inspect_data(path: &Path, reference: Option<(&str, &str)>, out: &mut dyn Write) -> Result<bool> {
    let raw = read_split(path)?;
    let stats = crate::data::CorpusStats::from_triplets(raw.iter().map(|(_, t)| t.as_slice()));
    let row = |out: &mut dyn Write, label: &str, s: &crate::data::CorpusStats| {
        writeln!(
            out,
            "{label:<10} {:>10} {:>8} {:>8} {:>8}",
            s.sentence_count, s.pos_count, s.neu_count, s.neg_count
        )
        .map_err(io)
    };
    writeln!(out, "{:<10} {:>10} {:>8} {:>8} {:>8}", "", "sentences", "pos", "neu", "neg").map_err(io)?;
    row(out, "found", &stats)?;
    let Some((dataset, split)) = reference else {
        return Ok(true);
    };
    let expected = reference_stats(dataset, split).ok_or_else(|| Error::MissingData {
        key: format!("{dataset}/{split}"),
        msg: "no published statistics for this split".into(),
    })?;
    row(out, "expected", &expected)?;
    let ok = stats == expected;
    writeln!(out, "{}", if ok { "match" } else { "MISMATCH" }).map_err(io)?;
    Ok(ok)
}
