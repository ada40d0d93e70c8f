//! Triplet corpora: line grammar, vocabulary and corpus statistics.
//!
//! One example per line:
//!
//! ```text
//! hot dogs are top notch####[([0, 1], [3, 4], 'POS')]
//! ```
//!
//! Tokens are whitespace separated. Index lists name contiguous, ascending
//! token positions.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const CLS: usize = 2;

const SEPARATOR: &str = "####";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sentiment {
    Positive,
    Negative,
    Neutral,
}

impl Sentiment {
    pub const ALL: [Sentiment; 3] = [Sentiment::Positive, Sentiment::Negative, Sentiment::Neutral];

    pub fn tag(self) -> &'static str {
        match self {
            Sentiment::Positive => "POS",
            Sentiment::Negative => "NEG",
            Sentiment::Neutral => "NEU",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "POS" => Some(Sentiment::Positive),
            "NEG" => Some(Sentiment::Negative),
            "NEU" => Some(Sentiment::Neutral),
            _ => None,
        }
    }
}

/// Inclusive token span `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub aspect: Span,
    pub opinion: Span,
    pub sentiment: Sentiment,
}

impl Triplet {
    pub fn new(aspect: Span, opinion: Span, sentiment: Sentiment) -> Self {
        Triplet {
            aspect,
            opinion,
            sentiment,
        }
    }
}

/// Surface tokens and their vocabulary ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub sentence: Sentence,
    pub triplets: Vec<Triplet>,
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.s.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        match self.peek() {
            Some(b) if b == c => {
                self.pos += 1;
                Ok(())
            }
            Some(b) => Err(self.err(format!(
                "expected `{}` at column {}, found `{}`",
                c as char,
                self.pos + 1,
                b as char
            ))),
            None => Err(self.err(format!("expected `{}`, found end of line", c as char))),
        }
    }

    fn int(&mut self) -> Result<usize> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err(format!("expected an index at column {}", start + 1)));
        }
        std::str::from_utf8(&self.s[start..self.pos])
            .ok()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("index does not fit in usize"))
    }

    fn int_list(&mut self) -> Result<Vec<usize>> {
        self.expect(b'[')?;
        let mut out = Vec::new();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            out.push(self.int()?);
            match self.peek() {
                Some(b',') => self.pos += 1,
                Some(b']') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.err("malformed index list")),
            }
        }
    }

    fn quoted(&mut self) -> Result<&'a str> {
        let q = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return Err(self.err("expected quoted sentiment tag")),
        };
        self.pos += 1;
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos] != q {
            self.pos += 1;
        }
        if self.pos == self.s.len() {
            return Err(self.err("unterminated sentiment tag"));
        }
        let tag = std::str::from_utf8(&self.s[start..self.pos]).map_err(|_| self.err("invalid utf-8"))?;
        self.pos += 1;
        Ok(tag)
    }
}

fn to_span(indices: &[usize], n: usize, what: &str, line: usize) -> Result<Span> {
    let err = |msg: String| Error::Parse { line, msg };
    let (&first, &last) = match (indices.first(), indices.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(err(format!("empty {what} index list"))),
    };
    if indices.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(err(format!("{what} indices {indices:?} are not contiguous")));
    }
    if last >= n {
        return Err(err(format!("{what} index {last} out of range for {n} tokens")));
    }
    Ok(Span::new(first, last))
}

/// Parses one corpus line into tokens and gold triplets.
///
/// `line_no` is reported in errors.
pub fn parse_line(line_no: usize, line: &str) -> Result<(Vec<String>, Vec<Triplet>)> {
    let err = |msg: &str| Error::Parse {
        line: line_no,
        msg: msg.to_string(),
    };
    let (text, labels) = line
        .split_once(SEPARATOR)
        .ok_or_else(|| err("missing `####` separator"))?;
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    if tokens.is_empty() {
        return Err(err("sentence has no tokens"));
    }
    let mut cur = Cursor {
        s: labels.as_bytes(),
        pos: 0,
        line: line_no,
    };
    let mut triplets = Vec::new();
    cur.expect(b'[')?;
    if cur.peek() == Some(b']') {
        cur.pos += 1;
    } else {
        loop {
            cur.expect(b'(')?;
            let aspect = cur.int_list()?;
            cur.expect(b',')?;
            let opinion = cur.int_list()?;
            cur.expect(b',')?;
            let tag = cur.quoted()?;
            cur.expect(b')')?;
            let sentiment = Sentiment::from_tag(tag)
                .ok_or_else(|| err(&format!("unknown polarity `{tag}`")))?;
            triplets.push(Triplet::new(
                to_span(&aspect, tokens.len(), "aspect", line_no)?,
                to_span(&opinion, tokens.len(), "opinion", line_no)?,
                sentiment,
            ));
            match cur.peek() {
                Some(b',') => cur.pos += 1,
                Some(b']') => {
                    cur.pos += 1;
                    break;
                }
                _ => return Err(err("malformed triplet list")),
            }
        }
    }
    if cur.peek().is_some() {
        return Err(err("trailing characters after triplet list"));
    }
    Ok((tokens, triplets))
}

fn index_list(span: Span) -> String {
    let items: Vec<String> = (span.start..=span.end).map(|i| i.to_string()).collect();
    format!("[{}]", items.join(", "))
}

/// Serializes tokens and triplets in the corpus line grammar.
pub fn format_line<S: AsRef<str>>(tokens: &[S], triplets: &[Triplet]) -> String {
    let text: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    let items: Vec<String> = triplets
        .iter()
        .map(|t| {
            format!(
                "({}, {}, '{}')",
                index_list(t.aspect),
                index_list(t.opinion),
                t.sentiment.tag()
            )
        })
        .collect();
    format!("{}{SEPARATOR}[{}]", text.join(" "), items.join(", "))
}

/// Lowercased surface-form vocabulary with reserved PAD, UNK and CLS ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Counts lowercased tokens; ids follow descending frequency, then
    /// lexicographic order. Tokens seen fewer than `min_freq` times are left
    /// out and encode as UNK.
    pub fn build<S: AsRef<str>>(corpus: &[Vec<S>], min_freq: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for tok in corpus.iter().flatten() {
            *counts.entry(tok.as_ref().to_lowercase()).or_default() += 1;
        }
        let mut entries: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_freq.max(1))
            .collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens = vec!["<pad>".to_string(), "<unk>".to_string(), "<cls>".to_string()];
        tokens.extend(entries.into_iter().map(|(t, _)| t));
        Self::from_tokens(tokens)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .skip(3)
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(&token.to_lowercase()).copied().unwrap_or(UNK)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Sentence {
        Sentence {
            tokens: tokens.iter().map(|t| t.as_ref().to_string()).collect(),
            ids: tokens.iter().map(|t| self.id(t.as_ref())).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub sentence_count: usize,
    pub pos_count: usize,
    pub neu_count: usize,
    pub neg_count: usize,
}

impl CorpusStats {
    pub fn from_triplets<'a>(sentences: impl IntoIterator<Item = &'a [Triplet]>) -> Self {
        let mut stats = CorpusStats::default();
        for triplets in sentences {
            stats.sentence_count += 1;
            for t in triplets {
                match t.sentiment {
                    Sentiment::Positive => stats.pos_count += 1,
                    Sentiment::Neutral => stats.neu_count += 1,
                    Sentiment::Negative => stats.neg_count += 1,
                }
            }
        }
        stats
    }

    pub fn triplet_count(&self) -> usize {
        self.pos_count + self.neu_count + self.neg_count
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>10} {:>8} {:>8} {:>8}", "sentences", "pos", "neu", "neg")?;
        write!(
            f,
            "{:>10} {:>8} {:>8} {:>8}",
            self.sentence_count, self.pos_count, self.neu_count, self.neg_count
        )
    }
}

/// Published statistics of the four benchmark corpora, keyed by
/// (dataset, split). Splits are `train`, `dev` and `test`.
pub const REFERENCE_STATS: [(&str, &str, CorpusStats); 12] = {
    const fn s(sentence_count: usize, pos: usize, neu: usize, neg: usize) -> CorpusStats {
        CorpusStats {
            sentence_count,
            pos_count: pos,
            neu_count: neu,
            neg_count: neg,
        }
    }
    [
        ("14res", "train", s(1266, 1692, 166, 480)),
        ("14res", "dev", s(310, 404, 54, 119)),
        ("14res", "test", s(492, 773, 66, 155)),
        ("14lap", "train", s(906, 817, 126, 517)),
        ("14lap", "dev", s(219, 169, 36, 141)),
        ("14lap", "test", s(328, 364, 63, 116)),
        ("15res", "train", s(605, 783, 25, 205)),
        ("15res", "dev", s(148, 185, 11, 53)),
        ("15res", "test", s(322, 317, 25, 143)),
        ("16res", "train", s(857, 1015, 506, 329)),
        ("16res", "dev", s(210, 252, 11, 76)),
        ("16res", "test", s(326, 407, 29, 78)),
    ]
};

pub fn reference_stats(dataset: &str, split: &str) -> Option<CorpusStats> {
    REFERENCE_STATS
        .iter()
        .find(|(d, s, _)| d.eq_ignore_ascii_case(dataset) && *s == split)
        .map(|(_, _, st)| *st)
}

/// Conventional file name of a split inside a dataset directory.
pub fn split_file_name(split: &str) -> String {
    format!("{split}_triplets.txt")
}

/// Reads a corpus file without encoding it. Blank lines are skipped.
pub fn read_split(path: &Path) -> Result<Vec<(Vec<String>, Vec<Triplet>)>> {
    let wrap = |e: Error| Error::Data {
        path: path.to_path_buf(),
        source: Box::new(e),
    };
    let text = fs::read_to_string(path).map_err(|e| wrap(Error::Io(e)))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_line(i + 1, l).map_err(wrap))
        .collect()
}

/// Reads and encodes a corpus file, returning its examples and statistics.
pub fn load_split(path: &Path, vocab: &Vocab) -> Result<(Vec<Example>, CorpusStats)> {
    let raw = read_split(path)?;
    let examples: Vec<Example> = raw
        .into_iter()
        .map(|(tokens, triplets)| Example {
            sentence: vocab.encode(&tokens),
            triplets,
        })
        .collect();
    let stats = CorpusStats::from_triplets(examples.iter().map(|e| e.triplets.as_slice()));
    Ok((examples, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_single_token_spans() {
        let (tokens, t) = parse_line(1, "The food is great####[([1], [3], 'POS')]").unwrap();
        assert_eq!(tokens.len(), 4);
        assert_eq!(t, vec![Triplet::new(Span::new(1, 1), Span::new(3, 3), Sentiment::Positive)]);
    }

    #[test]
    fn parses_multi_token_spans() {
        let (_, t) = parse_line(1, "hot dogs are top notch####[([0,1], [3,4], 'POS')]").unwrap();
        assert_eq!(t[0].aspect, Span::new(0, 1));
        assert_eq!(t[0].opinion, Span::new(3, 4));
        assert_eq!(t[0].sentiment, Sentiment::Positive);
    }

    #[test]
    fn rejects_malformed_lines() {
        let cases = [
            ("a b####[([0], [1], 'BAD')]", "unknown polarity"),
            ("a b [([0], [1], 'POS')]", "separator"),
            ("a b c####[([0, 2], [1], 'POS')]", "contiguous"),
            ("a b####[([0], [5], 'NEG')]", "out of range"),
            ("a b####[([0], [1], 'NEU')", "malformed"),
            ("####[]", "no tokens"),
        ];
        for (line, needle) in cases {
            match parse_line(7, line) {
                Err(Error::Parse { line: 7, msg }) => assert!(msg.contains(needle), "{msg}"),
                other => panic!("{line}: {other:?}"),
            }
        }
    }

    #[test]
    fn accepts_multiple_triplets_and_double_quotes() {
        let line = "the fish and chips were bland####[([1], [4], \"NEG\"), ([3], [4], 'NEG')]";
        let (_, t) = parse_line(1, line).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].aspect, Span::new(3, 3));
    }

    #[test]
    fn vocab_order_and_threshold() {
        let corpus = vec![vec!["a", "a", "b"]];
        let v = Vocab::build(&corpus, 1);
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "<cls>", "a", "b"]);
        assert_eq!(v.id("A"), 3);
        let v2 = Vocab::build(&corpus, 2);
        assert_eq!(v2.id("b"), UNK);
        assert_eq!(v2.encode(&["a", "b", "zzz"]).ids, vec![3, UNK, UNK]);
    }

    #[test]
    fn vocab_is_order_independent() {
        let corpus = vec![
            vec!["x", "y", "z", "y"],
            vec!["w", "Z"],
            vec!["a", "b", "a"],
        ];
        let mut shuffled = corpus.clone();
        shuffled.reverse();
        shuffled.swap(0, 1);
        assert_eq!(Vocab::build(&corpus, 1), Vocab::build(&shuffled, 1));
    }

    #[test]
    fn empty_file_gives_zero_stats() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        fs::write(&path, "").unwrap();
        let vocab = Vocab::build::<String>(&[], 1);
        let (ex, stats) = load_split(&path, &vocab).unwrap();
        assert!(ex.is_empty());
        assert_eq!(stats, CorpusStats::default());
    }

    #[test]
    fn load_split_reports_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.txt");
        fs::write(&path, "a b####[([0], [1], 'POS')]\n\na b####[([0], [1], 'XX')]\n").unwrap();
        let vocab = Vocab::build::<String>(&[], 1);
        match load_split(&path, &vocab) {
            Err(Error::Data { path: p, source }) => {
                assert_eq!(p, path);
                assert!(matches!(*source, Error::Parse { line: 3, .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stats_match_recount() {
        let lines = [
            "a b c####[([0], [1], 'POS'), ([2], [1], 'NEG')]",
            "d e####[([0], [1], 'NEU')]",
            "f g####[([1], [0], 'POS')]",
        ];
        let parsed: Vec<_> = lines.iter().map(|l| parse_line(1, l).unwrap().1).collect();
        let stats = CorpusStats::from_triplets(parsed.iter().map(Vec::as_slice));
        assert_eq!(
            stats,
            CorpusStats {
                sentence_count: 3,
                pos_count: 2,
                neu_count: 1,
                neg_count: 1
            }
        );
        assert_eq!(stats.triplet_count(), parsed.iter().map(Vec::len).sum::<usize>());
    }

    #[test]
    fn reference_table_lookup() {
        let s = reference_stats("14Res", "train").unwrap();
        assert_eq!((s.sentence_count, s.pos_count, s.neu_count, s.neg_count), (1266, 1692, 166, 480));
        let s = reference_stats("16res", "test").unwrap();
        assert_eq!((s.sentence_count, s.pos_count, s.neu_count, s.neg_count), (326, 407, 29, 78));
        assert!(reference_stats("17res", "train").is_none());
    }

    fn arb_example() -> impl Strategy<Value = (Vec<String>, Vec<Triplet>)> {
        (1usize..12).prop_flat_map(|n| {
            let tokens = prop::collection::vec("[a-z]{1,6}", n);
            let span = (0..n).prop_flat_map(move |s| (Just(s), s..n)).prop_map(|(s, e)| Span::new(s, e));
            let sentiment = prop::sample::select(Sentiment::ALL.to_vec());
            let triplets = prop::collection::vec(
                (span.clone(), span, sentiment).prop_map(|(a, o, s)| Triplet::new(a, o, s)),
                0..4,
            );
            (tokens, triplets)
        })
    }

    proptest! {
        #[test]
        fn parse_inverts_format((tokens, triplets) in arb_example()) {
            let line = format_line(&tokens, &triplets);
            let (t2, tr2) = parse_line(1, &line).unwrap();
            prop_assert_eq!(t2, tokens);
            prop_assert_eq!(tr2, triplets);
        }
    }
}
