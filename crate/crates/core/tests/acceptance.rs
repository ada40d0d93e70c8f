//! Acceptance criteria, one line each.
//!
//! Runs without the libtest harness so every verdict is printed by a plain
//! `cargo test`. Exits non-zero if any criterion fails; a criterion that needs
//! user-supplied data reports SKIP when the data is absent.
//!
//! Set `ASTE_DATA_DIR` to a directory holding `14res/`, `14lap/`, `15res/` and
//! `16res/`, each with `{train,dev,test}_triplets.txt`, to enable the corpus
//! statistics check.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use aste_table::cli::run_training;
use aste_table::config::RunConfig;
use aste_table::contrastive::contrastive_loss;
use aste_table::data::{read_split, split_file_name, CorpusStats, Sentiment, Span, Triplet, REFERENCE_STATS};
use aste_table::decode::{decode, score};
use aste_table::mmcnn::{self, MmcnnConfig};
use aste_table::model::{Model, ModelConfig};
use aste_table::region::{enumerate_candidates, BoundaryMaps, CandidateRegion, Region, RegionClass};
use aste_table::synthetic::{overfit_corpus, overfit_raw, GradFixture, OVERFIT_LINES};
use aste_table::table::RelationTable;
use aste_table::tensor::{grad_check_with, GradCheck, ParamStore, Tape, Tensor};
use aste_table::training::{batch_loss, evaluate, train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

use Verdict::*;

type Criterion = (&'static str, fn() -> Verdict);

fn check(cond: bool, detail: String) -> Verdict {
    if cond {
        Pass(detail)
    } else {
        Fail(detail)
    }
}

// ---------------------------------------------------------------------------

fn gradient_integrity() -> Verdict {
    let start = Instant::now();
    let fx = GradFixture::new();
    let params = match fx.params::<f64>(11) {
        Ok(p) => p,
        Err(e) => return Fail(e.to_string()),
    };
    let mut tape = Tape::new();
    let batch: Vec<_> = fx.batch.iter().collect();
    let terms = match batch_loss(&fx.model, &fx.train, &mut tape, &params, &batch, None) {
        Ok(l) => l.values(&tape),
        Err(e) => return Fail(e.to_string()),
    };
    let all_active = terms.cl > 0.0 && terms.s > 0.0 && terms.e > 0.0 && terms.sp > 0.0;
    let n_tokens = fx.batch[0].sentence.len();
    let cfg = GradCheck {
        eps: 1e-5,
        samples: 256,
        seed: 3,
        ..GradCheck::default()
    };
    let report = match grad_check_with(|t, s| fx.loss(t, s), &params, &cfg) {
        Ok(r) => r,
        Err(e) => return Fail(e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    check(
        all_active && n_tokens == 3 && report.checked >= 200 && report.max_rel_error < 1e-3 && secs < 60.0,
        format!(
            "max rel error {:.2e} over {} coords (< 1e-3, >= 200), terms cl/s/e/sp = {:.3}/{:.3}/{:.3}/{:.3}, {secs:.2}s (< 60s)",
            report.max_rel_error, report.checked, terms.cl, terms.s, terms.e, terms.sp
        ),
    )
}

// ---------------------------------------------------------------------------

/// Direct same-padded dilated convolution over `[n, n, c]`.
#[allow(clippy::too_many_arguments)]
fn naive_conv(x: &[f64], n: usize, c: usize, w: &[f64], b: &[f64], k: usize, dil: usize) -> Vec<f64> {
    let half = (k as isize - 1) / 2;
    let mut out = vec![0.0; n * n * c];
    for i in 0..n as isize {
        for j in 0..n as isize {
            for o in 0..c {
                let mut acc = b[o];
                for u in 0..k as isize {
                    for v in 0..k as isize {
                        let ii = i + (u - half) * dil as isize;
                        let jj = j + (v - half) * dil as isize;
                        if ii < 0 || jj < 0 || ii >= n as isize || jj >= n as isize {
                            continue;
                        }
                        for ci in 0..c {
                            let xv = x[((ii as usize) * n + jj as usize) * c + ci];
                            let wv = w[(((u as usize) * k + v as usize) * c + ci) * c + o];
                            acc += xv * wv;
                        }
                    }
                }
                out[((i as usize) * n + j as usize) * c + o] = acc;
            }
        }
    }
    out
}

fn relu(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.max(0.0)).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn straight_line_block(x: &[f64], n: usize, c: usize, p: &ParamStore<f64>) -> Vec<f64> {
    let conv = |x: &[f64], name: &str, k: usize, d: usize| {
        let w = p.get(&format!("mmcnn.block0.{name}.kernel")).unwrap().data();
        let b = p.get(&format!("mmcnn.block0.{name}.bias")).unwrap().data();
        relu(naive_conv(x, n, c, w, b, k, d))
    };
    let t1 = conv(x, "in", 1, 1);
    let scale = |k: usize| {
        let mut acc = vec![0.0; n * n * c];
        for d in [1, 2, 3] {
            acc = add(&acc, &conv(&t1, &format!("k{k}d{d}"), k, d));
        }
        acc
    };
    let t2 = add(&scale(3), &scale(5));
    let t3 = conv(&t2, "out", 1, 1);
    add(&t3, x)
}

fn mmcnn_oracle() -> Verdict {
    let (n, c) = (4, 8);
    let cfg = MmcnnConfig {
        n_blocks: 1,
        channels: c,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut store32 = ParamStore::<f32>::new();
    mmcnn::init(&cfg, &mut store32, &mut rng).unwrap();
    // widen the init so every branch visibly contributes
    for (_, t) in store32.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v *= 15.0);
    }
    let x32 = Tensor::<f32>::uniform(&[n, n, c], 1.0, &mut rng);
    let run = |store: &ParamStore<f32>| {
        let mut tape = Tape::new();
        let v = tape.leaf(&x32, false);
        let y = mmcnn::block(&cfg, &mut tape, store, 0, RelationTable { values: v, n, d: c }).unwrap();
        tape.value(y.values).to_vec()
    };
    let got = run(&store32);
    let x64: Vec<f64> = x32.data().iter().map(|&v| v as f64).collect();
    let want = straight_line_block(&x64, n, c, &store32.cast());
    let max_err = got
        .iter()
        .zip(&want)
        .map(|(&a, &b)| (a as f64 - b).abs())
        .fold(0.0, f64::max);
    let moved = got.iter().zip(x32.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);

    let mut zero = store32.clone();
    for (_, t) in zero.iter_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let identity = run(&zero) == x32.data();
    check(
        max_err < 1e-5 && identity && moved > 1e-3,
        format!("4x4x8 block vs loop oracle max abs error {max_err:.2e} (< 1e-5); zero-weight block is exact identity: {identity}"),
    )
}

// ---------------------------------------------------------------------------

fn enumeration_oracle() -> Verdict {
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut total = 0;
    for trial in 0..100 {
        let ps: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
        let pe: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>()).collect();
        let (ts, te) = (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9));
        let span = [8, 3, 1, 6][trial % 4];
        let maps = BoundaryMaps::new(n, ps.clone(), pe.clone()).unwrap();
        let got = enumerate_candidates(&maps, ts, te, span);
        let got_set: BTreeSet<(usize, usize, usize, usize)> =
            got.iter().map(|c| (c.region.a, c.region.b, c.region.c, c.region.d)).collect();
        let mut want = BTreeSet::new();
        for (s, &p_s) in ps.iter().enumerate() {
            for (e, &p_e) in pe.iter().enumerate() {
                let (a, b, c, d) = (s / n, s % n, e / n, e % n);
                if p_s >= ts && p_e >= te && a <= c && b <= d && c - a < span && d - b < span {
                    want.insert((a, b, c, d));
                }
            }
        }
        total += want.len();
        if got_set != want || got_set.len() != got.len() {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0,
        format!("100 random 6x6 maps, {total} candidates in total, {mismatches} set mismatches"),
    )
}

// ---------------------------------------------------------------------------

fn hinge(cls: &[f64], pos: &[f64], neg: &[f64], m: f64) -> f64 {
    let mut t = Tape::new();
    let d = cls.len();
    let c = t.constant(&[d], cls.to_vec()).unwrap();
    let p = t.constant(&[d], pos.to_vec()).unwrap();
    let n = t.constant(&[d], neg.to_vec()).unwrap();
    let l = contrastive_loss(&mut t, c, p, &[n], m).unwrap();
    t.scalar(l)
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn contrastive_contracts() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let vec = |d: usize, r: &mut ChaCha8Rng| (0..d).map(|_| r.gen_range(-3.0..3.0)).collect::<Vec<f64>>();
    let (mut negative, mut satisfied_nonzero, mut satisfied_cases, mut equal_off) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let d = rng.gen_range(1..8);
        let m = rng.gen_range(0.1..2.0);
        let (c, p, n) = (vec(d, &mut rng), vec(d, &mut rng), vec(d, &mut rng));
        let l = hinge(&c, &p, &n, m);
        if l < 0.0 {
            negative += 1;
        }
        if dist(&c, &p) + m <= dist(&c, &n) {
            satisfied_cases += 1;
            if l != 0.0 {
                satisfied_nonzero += 1;
            }
        }
        if hinge(&c, &p, &p, m) != m {
            equal_off += 1;
        }
        // push the negative far out along (n - c) so the margin holds
        let far: Vec<f64> = c
            .iter()
            .zip(&n)
            .map(|(ci, ni)| ci + (ni - ci + 1e-3) * (dist(&c, &p) + m + 1.0) / (dist(&c, &n) + 1e-3))
            .collect();
        if dist(&c, &p) + m <= dist(&c, &far) {
            satisfied_cases += 1;
            if hinge(&c, &p, &far, m) != 0.0 {
                satisfied_nonzero += 1;
            }
        }
    }

    // ablation: with the contrastive term off, the total is exactly the sum
    // of the other three
    let (vocab, examples) = overfit_corpus();
    let mut cfg = ModelConfig::default();
    cfg.encoder.vocab_size = vocab.len();
    cfg.ccl_enabled = false;
    let model = Model::new(cfg).unwrap();
    let store: ParamStore<f32> = model.init_params(1).unwrap();
    let batch: Vec<_> = examples.iter().take(4).collect();
    let mut tape = Tape::new();
    let l = batch_loss(&model, &TrainConfig::default(), &mut tape, &store, &batch, None).unwrap();
    let sum = tape.scalar(l.s) + tape.scalar(l.e) + tape.scalar(l.sp);
    let bitwise = l.cl.is_none() && tape.scalar(l.total).to_bits() == sum.to_bits();

    check(
        negative == 0 && satisfied_nonzero == 0 && satisfied_cases > 0 && equal_off == 0 && bitwise,
        format!(
            "1000 random triples: {negative} negative, {satisfied_nonzero}/{satisfied_cases} margin-satisfied non-zero, \
             {equal_off} h_pos == h_neg cases != m; ablation total == L_S+L_E+L_SP bitwise: {bitwise}"
        ),
    )
}

// ---------------------------------------------------------------------------

fn overfit_sanity() -> Verdict {
    let start = Instant::now();
    let (vocab, examples) = overfit_corpus();
    let mut cfg = ModelConfig::default();
    cfg.encoder.vocab_size = vocab.len();
    let model = Model::new(cfg).unwrap();
    let tcfg = TrainConfig {
        epochs: 200,
        ..TrainConfig::default()
    };
    let init = model.init_params(tcfg.seed).unwrap();
    let out = match train(&model, &tcfg, init, &examples, &examples, |_| {}) {
        Ok(o) => o,
        Err(e) => return Fail(e.to_string()),
    };
    let (rescored, _) = evaluate(&model, &out.best, &examples).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let first = out.history.iter().find(|h| h.valid.f1 == 1.0).map(|h| h.epoch);
    check(
        rescored.f1 == 1.0 && first.is_some() && secs < 300.0,
        format!(
            "default model on {} sentences: first F1 = 1.0 at epoch {}, best-checkpoint F1 {:.3}, {secs:.1}s (< 300s)",
            examples.len(),
            first.map_or("never".to_string(), |e| e.to_string()),
            rescored.f1
        ),
    )
}

// ---------------------------------------------------------------------------

fn oracle_decode(n: usize, gold: &[Triplet]) -> Vec<Triplet> {
    let mut ps = vec![0.0; n * n];
    let mut pe = vec![0.0; n * n];
    for t in gold {
        ps[t.aspect.start * n + t.opinion.start] = 1.0;
        pe[t.aspect.end * n + t.opinion.end] = 1.0;
    }
    let maps = BoundaryMaps::new(n, ps, pe).unwrap();
    let mut cands: Vec<CandidateRegion> = enumerate_candidates(&maps, 0.5, 0.5, n.max(1));
    for c in &mut cands {
        let r = c.region;
        let class = gold
            .iter()
            .find(|t| Region::new(t.aspect.start, t.opinion.start, t.aspect.end, t.opinion.end) == r)
            .map_or(RegionClass::Invalid, |t| t.sentiment.into());
        c.sentiment_dist = [0.0; 4];
        c.sentiment_dist[class.index()] = 1.0;
    }
    decode(&cands)
}

fn random_sentence(rng: &mut ChaCha8Rng) -> (usize, Vec<Triplet>) {
    let n = rng.gen_range(1..=25);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for _ in 0..rng.gen_range(1..=4) {
        let span = |r: &mut ChaCha8Rng| {
            let s = r.gen_range(0..n);
            Span::new(s, (s + r.gen_range(0..3)).min(n - 1))
        };
        let (a, o) = (span(rng), span(rng));
        if seen.insert((a, o)) {
            out.push(Triplet::new(a, o, Sentiment::ALL[rng.gen_range(0..3)]));
        }
    }
    (n, out)
}

fn end_to_end_identity() -> Verdict {
    let mut corpus: Vec<(usize, Vec<Triplet>)> = overfit_raw().into_iter().map(|(t, g)| (t.len(), g)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    corpus.extend((0..500).map(|_| random_sentence(&mut rng)));
    let mut failures = 0;
    for (n, gold) in &corpus {
        let mut want = gold.clone();
        want.sort_by_key(|t| (t.aspect.start, t.opinion.start, t.aspect.end, t.opinion.end));
        if oracle_decode(*n, gold) != want {
            failures += 1;
        }
    }
    check(
        failures == 0,
        format!("{} sentences ({} built-in, 500 random multi-triplet), {failures} mismatches", corpus.len(), OVERFIT_LINES.len()),
    )
}

// ---------------------------------------------------------------------------

fn scoring_arithmetic() -> Verdict {
    let t = |a: usize, o: usize, s| Triplet::new(Span::new(a, a), Span::new(o, o), s);
    let gold = [t(0, 2, Sentiment::Positive), t(3, 5, Sentiment::Negative)];
    let pred = [t(0, 2, Sentiment::Positive), t(3, 5, Sentiment::Neutral)];
    let r = score(&pred, &gold);
    let hand = r.precision == 0.5 && r.recall == 0.5 && r.f1 == 0.5;
    let e1 = score(&[], &gold);
    let e2 = score(&pred, &[]);
    let e3 = score(&[], &[]);
    let degenerate = [e1, e2, e3].iter().all(|r| r.precision == 0.0 && r.recall == 0.0 && r.f1 == 0.0);
    check(
        hand && degenerate,
        format!(
            "hand case P/R/F1 = {}/{}/{}; empty-pred, empty-gold, both-empty all zero: {degenerate}",
            r.precision, r.recall, r.f1
        ),
    )
}

// ---------------------------------------------------------------------------

fn table_one() -> Verdict {
    let Some(dir) = std::env::var_os("ASTE_DATA_DIR").map(PathBuf::from) else {
        return Skip("ASTE_DATA_DIR not set; official splits not available".into());
    };
    let mut mismatches = Vec::new();
    for (dataset, split, expected) in REFERENCE_STATS.iter() {
        let path: PathBuf = [dir.as_path(), Path::new(dataset), Path::new(&split_file_name(split))]
            .iter()
            .collect();
        match read_split(&path) {
            Ok(raw) => {
                let got = CorpusStats::from_triplets(raw.iter().map(|(_, t)| t.as_slice()));
                if got != *expected {
                    mismatches.push(format!(
                        "{dataset}/{split}: got {}/{}/{}/{} want {}/{}/{}/{}",
                        got.sentence_count,
                        got.pos_count,
                        got.neu_count,
                        got.neg_count,
                        expected.sentence_count,
                        expected.pos_count,
                        expected.neu_count,
                        expected.neg_count
                    ));
                }
            }
            Err(e) => mismatches.push(format!("{dataset}/{split}: {e}")),
        }
    }
    check(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            "all 12 splits match the published counts".into()
        } else {
            mismatches.join("; ")
        },
    )
}

// ---------------------------------------------------------------------------

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("train.txt");
    std::fs::write(&data, OVERFIT_LINES.join("\n")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.model.encoder.d_model = 32;
    cfg.model.encoder.n_heads = 2;
    cfg.model.encoder.d_ff = 64;
    cfg.model.d_table = 16;
    cfg.model.n_interactions = 8;
    cfg.train.epochs = 4;
    cfg.train.batch_size = 3;
    cfg.train.seed = 2024;
    cfg.paths.train = Some(data.clone());
    cfg.paths.valid = Some(data);
    cfg.paths.checkpoint = Some(dir.path().join("model.btf"));
    let run = || -> aste_table::Result<Vec<u8>> {
        run_training(&cfg, &mut Vec::new())?;
        Ok(std::fs::read(dir.path().join("model.btf"))?)
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => check(
            a == b,
            format!("two seeded runs (dropout on): {} vs {} bytes, identical: {}", a.len(), b.len(), a == b),
        ),
        (Err(e), _) | (_, Err(e)) => Fail(e.to_string()),
    }
}

// ---------------------------------------------------------------------------

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("gradient integrity", gradient_integrity),
        ("mmcnn oracle equivalence", mmcnn_oracle),
        ("enumeration oracle", enumeration_oracle),
        ("contrastive contracts", contrastive_contracts),
        ("overfit sanity", overfit_sanity),
        ("end-to-end identity", end_to_end_identity),
        ("scoring arithmetic", scoring_arithmetic),
        ("corpus statistics", table_one),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Pass(d) => println!("PASS  {name}: {d}"),
            Fail(d) => {
                failed += 1;
                println!("FAIL  {name}: {d}");
            }
            Skip(d) => println!("SKIP  {name}: {d}"),
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
