//! Turning classified regions into triplets, and exact-match scoring.

use std::collections::BTreeMap;
use std::fmt;

use crate::data::{Span, Triplet};
use crate::region::CandidateRegion;

/// Maps classified candidates to triplets.
///
/// Candidates whose most likely class is Invalid are dropped. When several
/// candidates produce the same (aspect, opinion) pair, the one with the
/// highest class probability wins; ties keep the earlier candidate. The
/// result is sorted by aspect start, then opinion start.
pub fn decode(candidates: &[CandidateRegion]) -> Vec<Triplet> {
    let mut best: BTreeMap<(Span, Span), (f64, Triplet)> = BTreeMap::new();
    for cand in candidates {
        let Some(sentiment) = cand.argmax().sentiment() else {
            continue;
        };
        let r = cand.region;
        let t = Triplet::new(Span::new(r.a, r.c), Span::new(r.b, r.d), sentiment);
        let p = cand.max_prob();
        best.entry((t.aspect, t.opinion))
            .and_modify(|e| {
                if p > e.0 {
                    *e = (p, t);
                }
            })
            .or_insert((p, t));
    }
    let mut out: Vec<Triplet> = best.into_values().map(|(_, t)| t).collect();
    out.sort_by_key(|t| (t.aspect.start, t.opinion.start, t.aspect.end, t.opinion.end));
    out
}

/// Exact-match precision, recall and F1 with the underlying counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ScoreReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ScoreReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        ScoreReport {
            precision,
            recall,
            f1,
            tp,
            fp,
            fn_,
        }
    }

    /// Pools the counts of two reports.
    pub fn merge(&self, other: &ScoreReport) -> ScoreReport {
        ScoreReport::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }
}

impl fmt::Display for ScoreReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>8}", "metric", "value")?;
        writeln!(f, "{:<10} {:>8.4}", "precision", self.precision)?;
        writeln!(f, "{:<10} {:>8.4}", "recall", self.recall)?;
        writeln!(f, "{:<10} {:>8.4}", "f1", self.f1)?;
        writeln!(f, "{:<10} {:>8}", "tp", self.tp)?;
        writeln!(f, "{:<10} {:>8}", "fp", self.fp)?;
        write!(f, "{:<10} {:>8}", "fn", self.fn_)
    }
}

/// Scores one sentence. Each gold triplet can be matched at most once.
pub fn score(pred: &[Triplet], gold: &[Triplet]) -> ScoreReport {
    let mut used = vec![false; gold.len()];
    let mut tp = 0;
    for p in pred {
        if let Some(k) = (0..gold.len()).find(|&k| !used[k] && gold[k] == *p) {
            used[k] = true;
            tp += 1;
        }
    }
    ScoreReport::from_counts(tp, pred.len() - tp, gold.len() - tp)
}

/// Micro-averaged score over many sentences.
pub fn score_corpus<'a>(pairs: impl IntoIterator<Item = (&'a [Triplet], &'a [Triplet])>) -> ScoreReport {
    pairs
        .into_iter()
        .map(|(p, g)| score(p, g))
        .fold(ScoreReport::default(), |acc, r| acc.merge(&r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Sentiment::{self, *};
    use crate::region::{Region, RegionClass};
    use proptest::prelude::*;

    fn cand(a: usize, b: usize, c: usize, d: usize, class: RegionClass, p: f64) -> CandidateRegion {
        let mut dist = [(1.0 - p) / 3.0; 4];
        dist[class.index()] = p;
        CandidateRegion {
            region: Region::new(a, b, c, d),
            score_s: 1.0,
            score_e: 1.0,
            sentiment_dist: dist,
        }
    }

    fn trip(a: (usize, usize), o: (usize, usize), s: Sentiment) -> Triplet {
        Triplet::new(Span::new(a.0, a.1), Span::new(o.0, o.1), s)
    }

    #[test]
    fn region_maps_rows_to_aspect_and_columns_to_opinion() {
        let got = decode(&[cand(0, 2, 1, 3, RegionClass::Positive, 0.9)]);
        assert_eq!(got, vec![trip((0, 1), (2, 3), Positive)]);
    }

    #[test]
    fn invalid_candidates_are_dropped() {
        let c = [
            cand(0, 1, 0, 1, RegionClass::Invalid, 0.6),
            cand(2, 3, 2, 3, RegionClass::Invalid, 0.9),
        ];
        assert!(decode(&c).is_empty());
    }

    #[test]
    fn duplicates_keep_the_most_confident() {
        let c = [
            cand(1, 3, 1, 3, RegionClass::Negative, 0.6),
            cand(1, 3, 1, 3, RegionClass::Positive, 0.9),
            cand(0, 4, 0, 4, RegionClass::Neutral, 0.5),
        ];
        assert_eq!(
            decode(&c),
            vec![trip((0, 0), (4, 4), Neutral), trip((1, 1), (3, 3), Positive)]
        );
        let tie = [
            cand(1, 3, 1, 3, RegionClass::Negative, 0.7),
            cand(1, 3, 1, 3, RegionClass::Positive, 0.7),
        ];
        assert_eq!(decode(&tie), vec![trip((1, 1), (3, 3), Negative)]);
    }

    #[test]
    fn overlapping_regions_are_all_kept() {
        let c = [
            cand(0, 2, 1, 3, RegionClass::Positive, 0.9),
            cand(0, 2, 0, 2, RegionClass::Positive, 0.8),
        ];
        assert_eq!(decode(&c).len(), 2);
    }

    #[test]
    fn scoring_cases() {
        let g = vec![trip((0, 0), (2, 2), Positive), trip((3, 3), (5, 5), Negative)];
        let r = score(&g, &g);
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));

        let r = score(&[], &g);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let r = score(&g, &[]);
        assert_eq!((r.precision, r.recall, r.f1, r.fp), (0.0, 0.0, 0.0, 2));
        let r = score(&[], &[]);
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));

        let pred = vec![g[0], trip((3, 3), (5, 5), Positive)];
        let r = score(&pred, &g);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn duplicate_predictions_match_gold_once() {
        let g = vec![trip((0, 0), (1, 1), Positive)];
        let r = score(&[g[0], g[0]], &g);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 0));
    }

    #[test]
    fn corpus_score_pools_counts() {
        let a = vec![trip((0, 0), (1, 1), Positive)];
        let b = vec![trip((0, 0), (1, 1), Negative)];
        let r = score_corpus([(a.as_slice(), a.as_slice()), (b.as_slice(), a.as_slice())]);
        assert_eq!((r.tp, r.fp, r.fn_), (1, 1, 1));
    }

    fn triplets() -> impl Strategy<Value = Vec<Triplet>> {
        prop::collection::vec((0usize..4, 0usize..4, 0usize..3), 0..6).prop_map(|v| {
            v.into_iter()
                .map(|(a, o, s)| trip((a, a), (o, o), Sentiment::ALL[s]))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn swapping_pred_and_gold_swaps_p_and_r(p in triplets(), g in triplets()) {
            let a = score(&p, &g);
            let b = score(&g, &p);
            prop_assert_eq!(a.tp, b.tp);
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            prop_assert!(a.tp <= p.len() && a.tp <= g.len());
        }
    }
}
