//! Loss assembly, optimization and validation-based model selection.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contrastive::{self, batch_negatives};
use crate::data::{Example, Triplet};
use crate::decode::{score, ScoreReport};
use crate::error::{Error, Result};
use crate::model::Model;
use crate::region::{self, Region, RegionClass};
use crate::tensor::{ParamStore, Real, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Global gradient-norm ceiling.
    pub grad_clip: f64,
    /// Invalid regions sampled per gold region.
    pub neg_ratio: usize,
    /// Upper bound on Invalid regions per sentence.
    pub neg_cap: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            batch_size: 8,
            learning_rate: 1e-3,
            seed: 42,
            grad_clip: 5.0,
            neg_ratio: 3,
            neg_cap: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning_rate {}", self.learning_rate)));
        }
        if self.grad_clip.is_nan() || self.grad_clip <= 0.0 {
            return Err(Error::Config(format!("grad_clip must be positive, got {}", self.grad_clip)));
        }
        Ok(())
    }
}

/// Corner labels: `y_s` marks `(aspect.start, opinion.start)`, `y_e` marks
/// `(aspect.end, opinion.end)` of every gold triplet.
pub fn boundary_labels<T: Real>(n: usize, triplets: &[Triplet]) -> (Vec<T>, Vec<T>) {
    let mut ys = vec![T::zero(); n * n];
    let mut ye = vec![T::zero(); n * n];
    for t in triplets {
        ys[t.aspect.start * n + t.opinion.start] = T::one();
        ye[t.aspect.end * n + t.opinion.end] = T::one();
    }
    (ys, ye)
}

pub fn gold_region(t: &Triplet) -> Region {
    Region::new(t.aspect.start, t.opinion.start, t.aspect.end, t.opinion.end)
}

/// Gold regions with their classes followed by sampled Invalid regions.
///
/// Negatives are drawn first from mismatched gold corners (the start of one
/// triplet with the end of another), then from uniformly random rectangles.
pub fn training_regions<R: Rng + ?Sized>(
    n: usize,
    triplets: &[Triplet],
    max_span: usize,
    neg_ratio: usize,
    neg_cap: usize,
    rng: &mut R,
) -> Vec<(Region, RegionClass)> {
    let mut out: Vec<(Region, RegionClass)> = Vec::new();
    let mut seen = BTreeSet::new();
    for t in triplets {
        let r = gold_region(t);
        if seen.insert(r) {
            out.push((r, t.sentiment.into()));
        }
    }
    let want = (neg_ratio * out.len()).min(neg_cap);
    let fits = |r: &Region| r.is_well_formed() && r.c - r.a < max_span && r.d - r.b < max_span;

    let golds: Vec<Region> = out.iter().map(|(r, _)| *r).collect();
    let mut cross: Vec<Region> = Vec::new();
    for s in &golds {
        for e in &golds {
            let r = Region::new(s.a, s.b, e.c, e.d);
            if fits(&r) && !seen.contains(&r) && !cross.contains(&r) {
                cross.push(r);
            }
        }
    }
    cross.shuffle(rng);
    let mut negs = 0;
    for r in cross.into_iter().take(want) {
        seen.insert(r);
        out.push((r, RegionClass::Invalid));
        negs += 1;
    }

    let mut attempts = 0;
    while negs < want && attempts < 20 * want.max(1) {
        attempts += 1;
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let c = rng.gen_range(a..n.min(a + max_span));
        let d = rng.gen_range(b..n.min(b + max_span));
        let r = Region::new(a, b, c, d);
        if seen.insert(r) {
            out.push((r, RegionClass::Invalid));
            negs += 1;
        }
    }
    out
}

/// Mean BCE-with-logits over all cells, separately for `S` and `E`.
pub fn boundary_loss<T: Real>(
    tape: &mut Tape<T>,
    logit_s: Var,
    logit_e: Var,
    y_s: &[T],
    y_e: &[T],
) -> Result<(Var, Var)> {
    Ok((tape.bce_with_logits(logit_s, y_s)?, tape.bce_with_logits(logit_e, y_e)?))
}

/// Mean negative log-likelihood over regions; an empty set contributes 0.
pub fn region_loss<T: Real>(tape: &mut Tape<T>, logits: Option<Var>, targets: &[RegionClass]) -> Result<Var> {
    match logits {
        Some(l) if !targets.is_empty() => {
            let idx: Vec<usize> = targets.iter().map(|c| c.index()).collect();
            tape.cross_entropy(l, &idx)
        }
        _ => tape.constant(&[], vec![T::zero()]),
    }
}

/// `L_CL + L_S + L_E + L_SP`; a disabled contrastive term is left out of
/// the sum entirely.
pub fn total_loss<T: Real>(tape: &mut Tape<T>, cl: Option<Var>, s: Var, e: Var, sp: Var) -> Result<Var> {
    let head = match cl {
        Some(cl) => tape.add(cl, s)?,
        None => s,
    };
    let head = tape.add(head, e)?;
    tape.add(head, sp)
}

/// Scalar values of the four loss terms and their sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossValues {
    pub cl: f64,
    pub s: f64,
    pub e: f64,
    pub sp: f64,
    pub total: f64,
}

impl LossValues {
    fn add_scaled(&mut self, o: &LossValues, w: f64) {
        self.cl += w * o.cl;
        self.s += w * o.s;
        self.e += w * o.e;
        self.sp += w * o.sp;
        self.total += w * o.total;
    }
}

/// Handles to the loss terms of one batch on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BatchLoss {
    pub cl: Option<Var>,
    pub s: Var,
    pub e: Var,
    pub sp: Var,
    pub total: Var,
}

impl BatchLoss {
    pub fn values<T: Real>(&self, tape: &Tape<T>) -> LossValues {
        LossValues {
            cl: self.cl.map_or(0.0, |v| tape.scalar(v).as_f64()),
            s: tape.scalar(self.s).as_f64(),
            e: tape.scalar(self.e).as_f64(),
            sp: tape.scalar(self.sp).as_f64(),
            total: tape.scalar(self.total).as_f64(),
        }
    }
}

fn mean_of<T: Real>(tape: &mut Tape<T>, vars: &[Var]) -> Result<Var> {
    let mut acc = vars[0];
    for &v in &vars[1..] {
        acc = tape.add(acc, v)?;
    }
    Ok(tape.scale(acc, T::of(1.0 / vars.len() as f64)))
}

/// Builds the full loss for a batch on `tape`.
///
/// Every term is computed per sentence and averaged over the batch. The
/// negatives for the contrastive term are the other sentences of the batch.
/// With `rng` set, dropout is active and Invalid regions are sampled from
/// it; without it, sampling uses a fixed stream and dropout is off.
pub fn batch_loss<T: Real>(
    model: &Model,
    tcfg: &TrainConfig,
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    batch: &[&Example],
    mut rng: Option<&mut dyn RngCore>,
) -> Result<BatchLoss> {
    if batch.is_empty() {
        return Err(Error::Domain("empty batch".into()));
    }
    let mcfg = model.config();
    let ccfg = mcfg.contrastive();
    let mut fixed = ChaCha8Rng::seed_from_u64(0);
    let (mut ls, mut le, mut lsp, mut cls, mut pos) = (vec![], vec![], vec![], vec![], vec![]);
    for ex in batch {
        let ids = &ex.sentence.ids;
        let n = ids.len();
        let drop: Option<&mut dyn RngCore> = match rng.as_mut() {
            Some(r) => Some(&mut **r),
            None => None,
        };
        let fwd = model.forward(tape, store, ids, drop)?;
        let (ys, ye) = boundary_labels::<T>(n, &ex.triplets);
        let (s, e) = boundary_loss(tape, fwd.logit_s, fwd.logit_e, &ys, &ye)?;
        ls.push(s);
        le.push(e);

        let sampler: &mut dyn RngCore = match rng.as_mut() {
            Some(r) => &mut **r,
            None => &mut fixed,
        };
        let regions = training_regions(n, &ex.triplets, mcfg.decode.max_span, tcfg.neg_ratio, tcfg.neg_cap, sampler);
        let (rs, cs): (Vec<Region>, Vec<RegionClass>) = regions.into_iter().unzip();
        let logits = if rs.is_empty() {
            None
        } else {
            let repr = region::region_repr(tape, &fwd.table, &rs)?;
            Some(region::classify_logits(tape, store, repr)?)
        };
        lsp.push(region_loss(tape, logits, &cs)?);

        if ccfg.enabled {
            let p = contrastive::pool_positive(tape, &fwd.table)?;
            pos.push(contrastive::project(&ccfg, tape, store, p)?);
            cls.push(fwd.cls);
        }
    }
    let s = mean_of(tape, &ls)?;
    let e = mean_of(tape, &le)?;
    let sp = mean_of(tape, &lsp)?;
    let cl = if ccfg.enabled {
        let mut terms = Vec::with_capacity(batch.len());
        for i in 0..batch.len() {
            let negs = batch_negatives(&pos, i)?;
            terms.push(contrastive::contrastive_loss(tape, cls[i], pos[i], &negs, ccfg.margin)?);
        }
        Some(mean_of(tape, &terms)?)
    } else {
        None
    };
    let total = total_loss(tape, cl, s, e, sp)?;
    if !tape.scalar(total).is_finite() {
        return Err(Error::NonFinite(format!("training loss = {}", tape.scalar(total))));
    }
    Ok(BatchLoss { cl, s, e, sp, total })
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Applies one update from the gradients stored in `store`.
    pub fn step<T: Real>(&mut self, store: &mut ParamStore<T>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for (path, tensor) in store.iter_mut() {
            let Some(g) = tensor.grad().map(|g| g.iter().map(|v| v.as_f64()).collect::<Vec<_>>()) else {
                continue;
            };
            let m = self.m.entry(path.to_string()).or_insert_with(|| vec![0.0; g.len()]);
            let v = self.v.entry(path.to_string()).or_insert_with(|| vec![0.0; g.len()]);
            for (k, p) in tensor.data_mut().iter_mut().enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let update = self.lr * (m[k] / bc1) / ((v[k] / bc2).sqrt() + self.eps);
                *p = T::of(p.as_f64() - update);
            }
        }
    }
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<T: Real>(store: &mut ParamStore<T>, max_norm: f64) -> f64 {
    let norm = store.grad_norm();
    if norm > max_norm {
        store.scale_grads(T::of(max_norm / norm));
    }
    norm
}

/// Decodes every example and scores against gold.
pub fn evaluate<T: Real>(
    model: &Model,
    store: &ParamStore<T>,
    examples: &[Example],
) -> Result<(ScoreReport, Vec<Vec<Triplet>>)> {
    let mut report = ScoreReport::default();
    let mut preds = Vec::with_capacity(examples.len());
    for ex in examples {
        let p = model.predict(store, &ex.sentence.ids)?;
        report = report.merge(&score(&p.triplets, &ex.triplets));
        preds.push(p.triplets);
    }
    Ok((report, preds))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean over batches.
    pub loss: LossValues,
    pub valid: ScoreReport,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch.
    pub best: ParamStore<f32>,
    pub best_epoch: usize,
    pub best_f1: f64,
    pub history: Vec<EpochLog>,
}

/// Runs one epoch of minibatch updates and returns the mean batch losses.
pub fn train_epoch(
    model: &Model,
    tcfg: &TrainConfig,
    store: &mut ParamStore<f32>,
    opt: &mut Adam,
    examples: &[Example],
    rng: &mut ChaCha8Rng,
) -> Result<LossValues> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let n_batches = order.len().div_ceil(tcfg.batch_size);
    let mut mean = LossValues::default();
    for chunk in order.chunks(tcfg.batch_size) {
        let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
        let mut tape = Tape::new();
        let loss = batch_loss(model, tcfg, &mut tape, store, &batch, Some(rng))?;
        let grads = tape.backward(loss.total)?;
        store.zero_grad();
        store.accumulate(&tape, &grads)?;
        clip_grad_norm(store, tcfg.grad_clip);
        opt.step(store);
        mean.add_scaled(&loss.values(&tape), 1.0 / n_batches as f64);
    }
    if store.iter().any(|(_, t)| !t.is_finite()) {
        return Err(Error::NonFinite("parameters after update".into()));
    }
    Ok(mean)
}

/// Trains from `init` and keeps the parameters with the best validation F1
/// (ties go to the earlier epoch). `on_epoch` sees every epoch's log.
pub fn train(
    model: &Model,
    tcfg: &TrainConfig,
    init: ParamStore<f32>,
    train_set: &[Example],
    valid_set: &[Example],
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    tcfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::MissingData {
            key: "train".into(),
            msg: "training set is empty".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
    let mut store = init;
    let mut opt = Adam::new(tcfg.learning_rate);
    let mut outcome = TrainOutcome {
        best: store.clone(),
        best_epoch: 0,
        best_f1: f64::NEG_INFINITY,
        history: Vec::with_capacity(tcfg.epochs),
    };
    for epoch in 1..=tcfg.epochs {
        let loss = train_epoch(model, tcfg, &mut store, &mut opt, train_set, &mut rng)?;
        let (valid, _) = evaluate(model, &store, valid_set)?;
        let log = EpochLog { epoch, loss, valid };
        on_epoch(&log);
        if valid.f1 > outcome.best_f1 {
            outcome.best_f1 = valid.f1;
            outcome.best_epoch = epoch;
            outcome.best = store.clone();
        }
        outcome.history.push(log);
    }
    Ok(outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Sentence, Sentiment, Span};
    use crate::model::tests::tiny_config;

    fn example(ids: &[usize], triplets: &[Triplet]) -> Example {
        Example {
            sentence: Sentence {
                tokens: ids.iter().map(|i| format!("w{i}")).collect(),
                ids: ids.to_vec(),
            },
            triplets: triplets.to_vec(),
        }
    }

    fn trip(a: (usize, usize), o: (usize, usize), s: Sentiment) -> Triplet {
        Triplet::new(Span::new(a.0, a.1), Span::new(o.0, o.1), s)
    }

    #[test]
    fn corner_labels() {
        let (ys, ye) = boundary_labels::<f64>(4, &[trip((0, 1), (2, 3), Sentiment::Positive)]);
        assert_eq!(ys.iter().sum::<f64>(), 1.0);
        assert_eq!(ys[2], 1.0);
        assert_eq!(ye[4 + 3], 1.0);
    }

    #[test]
    fn sampled_regions_are_valid_and_distinct() {
        let gold = [
            trip((0, 0), (2, 2), Sentiment::Positive),
            trip((4, 5), (7, 7), Sentiment::Negative),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = training_regions(9, &gold, 8, 3, 50, &mut rng);
        assert_eq!(r.len(), 2 + 6);
        assert_eq!(r[0], (gold_region(&gold[0]), RegionClass::Positive));
        assert_eq!(r[1], (gold_region(&gold[1]), RegionClass::Negative));
        // the mismatched-corner rectangle comes before random ones
        assert!(r[2..4].iter().any(|(x, _)| *x == Region::new(0, 2, 5, 7)));
        let set: BTreeSet<Region> = r.iter().map(|(x, _)| *x).collect();
        assert_eq!(set.len(), r.len());
        for (x, c) in &r[2..] {
            assert_eq!(*c, RegionClass::Invalid);
            assert!(x.is_well_formed() && x.c < 9 && x.d < 9 && x.c - x.a < 8 && x.d - x.b < 8);
        }
        let capped = training_regions(30, &[gold[0]; 1], 8, 100, 50, &mut rng);
        assert_eq!(capped.len(), 1 + 50);
        // a 1-token sentence has a single cell, so nothing to sample
        let one = training_regions(1, &[trip((0, 0), (0, 0), Sentiment::Neutral)], 8, 3, 50, &mut rng);
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn boundary_loss_examples() {
        let mut t = Tape::<f64>::new();
        let z = t.constant(&[1, 1], vec![0.0]).unwrap();
        let (s, _) = boundary_loss(&mut t, z, z, &[1.0], &[0.0]).unwrap();
        assert!((t.scalar(s) - 2f64.ln()).abs() < 1e-12);
        let big = t.constant(&[1, 2], vec![40.0, -40.0]).unwrap();
        let (s, _) = boundary_loss(&mut t, big, big, &[1.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(t.scalar(s) < 1e-15);
        assert!(boundary_loss(&mut t, z, z, &[0.5], &[0.0]).is_err());

        let logits = [0.3, -1.2, 2.0, 0.0, -0.4, 1.1, -2.5, 0.7, 0.05];
        let labels = [1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0];
        let x = t.constant(&[3, 3], logits.to_vec()).unwrap();
        let (s, _) = boundary_loss(&mut t, x, x, &labels, &labels).unwrap();
        let direct: f64 = logits
            .iter()
            .zip(&labels)
            .map(|(&z, &y)| {
                let p = 1.0 / (1.0 + (-z).exp());
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum::<f64>()
            / 9.0;
        assert!((t.scalar(s) - direct).abs() < 1e-5);
    }

    #[test]
    fn region_loss_examples() {
        let mut t = Tape::<f64>::new();
        let uniform = t.constant(&[1, 4], vec![0.0; 4]).unwrap();
        let l = region_loss(&mut t, Some(uniform), &[RegionClass::Neutral]).unwrap();
        assert!((t.scalar(l) - 4f64.ln()).abs() < 1e-12);
        let sure = t.constant(&[1, 4], vec![0.0, 0.0, 0.0, 80.0]).unwrap();
        let l = region_loss(&mut t, Some(sure), &[RegionClass::Invalid]).unwrap();
        assert!(t.scalar(l) < 1e-30);
        let l = region_loss(&mut t, None, &[]).unwrap();
        assert_eq!(t.scalar(l), 0.0);

        let rows = [[0.2, -0.1, 1.0, 0.4], [1.5, 0.0, -0.3, 0.2]];
        let x = t.constant(&[2, 4], rows.concat()).unwrap();
        let l = region_loss(&mut t, Some(x), &[RegionClass::Neutral, RegionClass::Positive]).unwrap();
        let nll = |r: &[f64; 4], k: usize| -(r[k].exp() / r.iter().map(|v| v.exp()).sum::<f64>()).ln();
        let oracle = (nll(&rows[0], 2) + nll(&rows[1], 0)) / 2.0;
        assert!((t.scalar(l) - oracle).abs() < 1e-12);
    }

    #[test]
    fn total_loss_is_a_plain_sum() {
        let mut t = Tape::<f64>::new();
        let v: Vec<Var> = (1..=4).map(|k| t.constant(&[], vec![k as f64]).unwrap()).collect();
        let l = total_loss(&mut t, Some(v[0]), v[1], v[2], v[3]).unwrap();
        assert_eq!(t.scalar(l), 10.0);
        let z = t.constant(&[], vec![0.0]).unwrap();
        let l = total_loss(&mut t, Some(z), z, z, z).unwrap();
        assert_eq!(t.scalar(l), 0.0);
        let l = total_loss(&mut t, None, v[1], v[2], v[3]).unwrap();
        assert_eq!(t.scalar(l), 9.0);
    }

    fn corpus() -> Vec<Example> {
        vec![
            example(&[3, 4, 5], &[trip((0, 0), (2, 2), Sentiment::Positive)]),
            example(&[6, 7, 8, 9], &[trip((1, 1), (3, 3), Sentiment::Negative)]),
        ]
    }

    #[test]
    fn ablation_drops_contrastive_term_exactly() {
        let mut cfg = tiny_config(12);
        cfg.ccl_enabled = false;
        let model = Model::new(cfg).unwrap();
        let store: ParamStore<f32> = model.init_params(5).unwrap();
        let data = corpus();
        let batch: Vec<&Example> = data.iter().collect();
        let mut t = Tape::new();
        let l = batch_loss(&model, &TrainConfig::default(), &mut t, &store, &batch, None).unwrap();
        assert!(l.cl.is_none());
        let v = l.values(&t);
        assert_eq!(v.cl, 0.0);
        let (s, e, sp) = (t.scalar(l.s), t.scalar(l.e), t.scalar(l.sp));
        assert_eq!(t.scalar(l.total).to_bits(), (s + e + sp).to_bits());
    }

    #[test]
    fn zero_learning_rate_leaves_parameters() {
        let model = Model::new(tiny_config(12)).unwrap();
        let init: ParamStore<f32> = model.init_params(6).unwrap();
        let tcfg = TrainConfig {
            epochs: 1,
            batch_size: 2,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let out = train(&model, &tcfg, init.clone(), &corpus(), &corpus(), |_| {}).unwrap();
        assert!(out.best.values_equal(&init));
        assert_eq!(out.history.len(), 1);
    }

    #[test]
    fn best_epoch_selection_and_determinism() {
        let model = Model::new(tiny_config(12)).unwrap();
        let tcfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let run = || {
            let init: ParamStore<f32> = model.init_params(7).unwrap();
            train(&model, &tcfg, init, &corpus(), &corpus(), |_| {}).unwrap()
        };
        let (a, b) = (run(), run());
        assert!(a.best.values_equal(&b.best));
        assert_eq!(a.history, b.history);
        let best = a.history.iter().map(|h| h.valid.f1).fold(f64::NEG_INFINITY, f64::max);
        let first = a.history.iter().find(|h| h.valid.f1 == best).unwrap().epoch;
        assert_eq!(a.best_epoch, first);
        assert_eq!(a.best_f1, best);
    }

    #[test]
    fn empty_training_set_is_a_data_error() {
        let model = Model::new(tiny_config(12)).unwrap();
        let init: ParamStore<f32> = model.init_params(1).unwrap();
        let err = train(&model, &TrainConfig::default(), init, &[], &[], |_| {}).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn clipping_bounds_the_norm() {
        let mut store = ParamStore::<f64>::new();
        store
            .insert("w", crate::tensor::Tensor::new(vec![2], vec![0.0, 0.0]).unwrap())
            .unwrap();
        store.get_mut("w").unwrap().grad_mut().unwrap().copy_from_slice(&[30.0, 40.0]);
        assert_eq!(clip_grad_norm(&mut store, 5.0), 50.0);
        assert!((store.grad_norm() - 5.0).abs() < 1e-12);
    }
}
