//! Boundary maps to triplets, without a trained model.
//!
//! Hand-written start/end probability maps and class distributions walk
//! through candidate enumeration, the candidate cap, decoding and scoring.
//!
//! Run with `cargo run --example region_decoding`.

use aste_table::data::{Sentiment, Span, Triplet};
use aste_table::decode::{decode, score};
use aste_table::region::{cap_candidates, enumerate_candidates, BoundaryMaps, Region, RegionClass};

fn main() -> aste_table::Result<()> {
    let words = ["the", "hot", "dogs", "are", "top", "notch", "but", "staff", "rude"];
    let n = words.len();
    let gold = vec![
        Triplet::new(Span::new(1, 2), Span::new(4, 5), Sentiment::Positive),
        Triplet::new(Span::new(7, 7), Span::new(8, 8), Sentiment::Negative),
    ];

    // start corners high at (1,4) and (7,8), end corners at (2,5) and (7,8),
    // plus a distractor start at (1,8)
    let mut p_s = vec![0.05; n * n];
    let mut p_e = vec![0.05; n * n];
    p_s[n + 4] = 0.92;
    p_s[7 * n + 8] = 0.81;
    p_s[n + 8] = 0.55;
    p_e[2 * n + 5] = 0.88;
    p_e[7 * n + 8] = 0.77;
    let maps = BoundaryMaps::new(n, p_s, p_e)?;

    let cands = enumerate_candidates(&maps, 0.5, 0.5, 8);
    println!("{} candidates above threshold:", cands.len());
    for c in &cands {
        let r = c.region;
        println!(
            "  rows {}..={} cols {}..={}  s {:.2} e {:.2}",
            r.a, r.c, r.b, r.d, c.score_s, c.score_e
        );
    }
    let mut cands = cap_candidates(cands, 3);
    println!("after keeping the top 3 by s*e: {}", cands.len());

    // stand-in classifier: confident on the gold regions, Invalid elsewhere
    for c in &mut cands {
        let class = gold
            .iter()
            .find(|t| Region::new(t.aspect.start, t.opinion.start, t.aspect.end, t.opinion.end) == c.region)
            .map_or(RegionClass::Invalid, |t| t.sentiment.into());
        c.sentiment_dist = [0.02; 4];
        c.sentiment_dist[class.index()] = 0.94;
    }

    let triplets = decode(&cands);
    for t in &triplets {
        println!(
            "({}, {}, {})",
            words[t.aspect.start..=t.aspect.end].join(" "),
            words[t.opinion.start..=t.opinion.end].join(" "),
            t.sentiment.tag()
        );
    }
    println!("\n{}", score(&triplets, &gold));
    Ok(())
}
