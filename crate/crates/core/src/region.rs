//! Boundary detection, candidate regions and region classification.
//!
//! A triplet is a rectangle in the relation table: its upper-left cell
//! `(a, b)` carries the `S` tag and its lower-right cell `(c, d)` the `E`
//! tag. Rows `a..=c` are the aspect span, columns `b..=d` the opinion span.

use rand::RngCore;

use crate::data::Sentiment;
use crate::error::{Error, Result};
use crate::nn;
use crate::table::RelationTable;
use crate::tensor::{ParamStore, Real, Tape, Var};

pub const START_PATH: &str = "region.start";
pub const END_PATH: &str = "region.end";
pub const CLS_PATH: &str = "region.cls";
pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RegionClass {
    Positive = 0,
    Negative = 1,
    Neutral = 2,
    Invalid = 3,
}

impl RegionClass {
    pub const ALL: [RegionClass; N_CLASSES] = [
        RegionClass::Positive,
        RegionClass::Negative,
        RegionClass::Neutral,
        RegionClass::Invalid,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn sentiment(self) -> Option<Sentiment> {
        match self {
            RegionClass::Positive => Some(Sentiment::Positive),
            RegionClass::Negative => Some(Sentiment::Negative),
            RegionClass::Neutral => Some(Sentiment::Neutral),
            RegionClass::Invalid => None,
        }
    }
}

impl From<Sentiment> for RegionClass {
    fn from(s: Sentiment) -> Self {
        match s {
            Sentiment::Positive => RegionClass::Positive,
            Sentiment::Negative => RegionClass::Negative,
            Sentiment::Neutral => RegionClass::Neutral,
        }
    }
}

/// Rectangle with corners `S = (a, b)` and `E = (c, d)`, inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Region {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub d: usize,
}

impl Region {
    pub fn new(a: usize, b: usize, c: usize, d: usize) -> Self {
        Region { a, b, c, d }
    }

    pub fn is_well_formed(&self) -> bool {
        self.a <= self.c && self.b <= self.d
    }

    /// Flat row-major indices of every covered cell.
    pub fn cells(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity((self.c - self.a + 1) * (self.d - self.b + 1));
        for i in self.a..=self.c {
            for j in self.b..=self.d {
                out.push(i * n + j);
            }
        }
        out
    }
}

/// Sigmoid boundary probabilities, row-major `[n, n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMaps {
    pub n: usize,
    pub p_s: Vec<f64>,
    pub p_e: Vec<f64>,
}

impl BoundaryMaps {
    pub fn new(n: usize, p_s: Vec<f64>, p_e: Vec<f64>) -> Result<Self> {
        if p_s.len() != n * n || p_e.len() != n * n {
            return Err(Error::shape("boundary maps", &[n, n], &[p_s.len(), p_e.len()]));
        }
        if p_s.iter().chain(&p_e).any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain("boundary probability outside [0, 1]".into()));
        }
        Ok(BoundaryMaps { n, p_s, p_e })
    }

    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.p_s[i * self.n + j]
    }

    pub fn e(&self, i: usize, j: usize) -> f64 {
        self.p_e[i * self.n + j]
    }
}

/// A candidate rectangle with its boundary scores and class distribution.
///
/// Freshly enumerated candidates carry the uniform distribution until
/// [`classify_candidates`] fills it in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateRegion {
    pub region: Region,
    pub score_s: f64,
    pub score_e: f64,
    pub sentiment_dist: [f64; N_CLASSES],
}

impl CandidateRegion {
    pub fn argmax(&self) -> RegionClass {
        let mut best = 0;
        for k in 1..N_CLASSES {
            if self.sentiment_dist[k] > self.sentiment_dist[best] {
                best = k;
            }
        }
        RegionClass::ALL[best]
    }

    pub fn max_prob(&self) -> f64 {
        self.sentiment_dist.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Decoding thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub tau_s: f64,
    pub tau_e: f64,
    /// Maximum span length on either side of a region.
    pub max_span: usize,
    /// Upper bound on classified candidates per sentence.
    pub max_candidates: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            tau_s: 0.5,
            tau_e: 0.5,
            max_span: 8,
            max_candidates: 1000,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        for (k, v) in [("tau_s", self.tau_s), ("tau_e", self.tau_e)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{k} must lie in (0, 1), got {v}")));
            }
        }
        if self.max_span == 0 || self.max_candidates == 0 {
            return Err(Error::Config("max_span and max_candidates must be positive".into()));
        }
        Ok(())
    }
}

pub fn init<T: Real>(d_table: usize, store: &mut ParamStore<T>, rng: &mut dyn RngCore) -> Result<()> {
    nn::init_linear(store, START_PATH, d_table, 1, rng)?;
    nn::init_linear(store, END_PATH, d_table, 1, rng)?;
    nn::init_linear(store, CLS_PATH, 3 * d_table, N_CLASSES, rng)
}

/// `S` and `E` logits, each `[n, n]`.
pub fn boundary_logits<T: Real>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    table: &RelationTable,
) -> Result<(Var, Var)> {
    let n = table.n;
    let flat = tape.reshape(table.values, &[n * n, table.d])?;
    let s = nn::linear(tape, store, START_PATH, flat)?;
    let e = nn::linear(tape, store, END_PATH, flat)?;
    Ok((tape.reshape(s, &[n, n])?, tape.reshape(e, &[n, n])?))
}

pub fn boundary_probs<T: Real>(tape: &mut Tape<T>, n: usize, logit_s: Var, logit_e: Var) -> Result<BoundaryMaps> {
    let s = tape.sigmoid(logit_s);
    let e = tape.sigmoid(logit_e);
    let f = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
    BoundaryMaps::new(n, f(tape.value(s)), f(tape.value(e)))
}

/// All `(S, E)` pairs forming a well-formed rectangle of at most `max_span`
/// rows and columns. Order: row-major over `S`, then row-major over `E`.
pub fn enumerate_candidates(maps: &BoundaryMaps, tau_s: f64, tau_e: f64, max_span: usize) -> Vec<CandidateRegion> {
    let n = maps.n;
    let uniform = [1.0 / N_CLASSES as f64; N_CLASSES];
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            let score_s = maps.s(a, b);
            if score_s < tau_s {
                continue;
            }
            for c in a..n.min(a + max_span) {
                for d in b..n.min(b + max_span) {
                    let score_e = maps.e(c, d);
                    if score_e >= tau_e {
                        out.push(CandidateRegion {
                            region: Region::new(a, b, c, d),
                            score_s,
                            score_e,
                            sentiment_dist: uniform,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Keeps the `limit` candidates with the highest `score_s * score_e`,
/// preserving enumeration order among the survivors.
pub fn cap_candidates(mut cands: Vec<CandidateRegion>, limit: usize) -> Vec<CandidateRegion> {
    if cands.len() <= limit {
        return cands;
    }
    let mut order: Vec<usize> = (0..cands.len()).collect();
    order.sort_by(|&x, &y| {
        let (sx, sy) = (cands[x].score_s * cands[x].score_e, cands[y].score_s * cands[y].score_e);
        sy.total_cmp(&sx).then(x.cmp(&y))
    });
    let mut keep = vec![false; cands.len()];
    order[..limit].iter().for_each(|&i| keep[i] = true);
    let mut i = 0;
    cands.retain(|_| {
        i += 1;
        keep[i - 1]
    });
    cands
}

/// `[r_ab; r_cd; maxpool(region)]` for every region, shape `[m, 3 * d_table]`.
pub fn region_repr<T: Real>(tape: &mut Tape<T>, table: &RelationTable, regions: &[Region]) -> Result<Var> {
    let n = table.n;
    if let Some(r) = regions.iter().find(|r| !r.is_well_formed() || r.c >= n || r.d >= n) {
        return Err(Error::Domain(format!("region {r:?} outside a {n}x{n} table")));
    }
    if regions.is_empty() {
        return Err(Error::Domain("no regions to represent".into()));
    }
    let flat = tape.reshape(table.values, &[n * n, table.d])?;
    let s_idx: Vec<usize> = regions.iter().map(|r| r.a * n + r.b).collect();
    let e_idx: Vec<usize> = regions.iter().map(|r| r.c * n + r.d).collect();
    let sets: Vec<Vec<usize>> = regions.iter().map(|r| r.cells(n)).collect();
    let rs = tape.gather_rows(flat, &s_idx)?;
    let re = tape.gather_rows(flat, &e_idx)?;
    let pooled = tape.max_pool_rows(flat, &sets)?;
    tape.concat_cols(&[rs, re, pooled])
}

/// Class logits `[m, 4]` for region representations `[m, 3 * d_table]`.
pub fn classify_logits<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, repr: Var) -> Result<Var> {
    nn::linear(tape, store, CLS_PATH, repr)
}

/// Softmax class distributions `[m, 4]`.
pub fn classify_region<T: Real>(tape: &mut Tape<T>, store: &ParamStore<T>, repr: Var) -> Result<Var> {
    let logits = classify_logits(tape, store, repr)?;
    Ok(tape.softmax(logits))
}

/// Fills in `sentiment_dist` for every candidate.
pub fn classify_candidates<T: Real>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    table: &RelationTable,
    cands: &mut [CandidateRegion],
) -> Result<()> {
    if cands.is_empty() {
        return Ok(());
    }
    let regions: Vec<Region> = cands.iter().map(|c| c.region).collect();
    let repr = region_repr(tape, table, &regions)?;
    let dist = classify_region(tape, store, repr)?;
    for (cand, row) in cands.iter_mut().zip(tape.value(dist).chunks(N_CLASSES)) {
        for (o, v) in cand.sentiment_dist.iter_mut().zip(row) {
            *o = v.as_f64();
        }
    }
    Ok(())
}
