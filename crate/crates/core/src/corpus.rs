//! Topic-labelled transcripts, the closed vocabulary, and the empirical
//! bigram-event counts the model is fitted to.
//!
//! Every utterance with topic `t` and tokens `w_1 .. w_n` contributes the
//! prediction events `(<s>, t, w_1), (w_1, t, w_2), ..., (w_n, t, <s>)`:
//! the boundary token opens the utterance as a predecessor and closes it as
//! a predicted word.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type WordId = u32;
pub type TopicId = u32;

pub const BOUNDARY: WordId = 0;
pub const UNKNOWN: WordId = 1;
pub const BOUNDARY_TOKEN: &str = "<s>";
pub const UNKNOWN_TOKEN: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Utterance {
    pub topic: TopicId,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    topic_names: BTreeMap<TopicId, String>,
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub lowercase: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions { lowercase: true }
    }
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if let Some(pos) = utterances.iter().position(|u| u.tokens.is_empty()) {
            return Err(Error::Parse { line: pos + 1, msg: "utterance has no tokens".into() });
        }
        let topic_names = utterances.iter().map(|u| (u.topic, u.topic.to_string())).collect();
        Ok(Corpus { utterances, topic_names })
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn topic_names(&self) -> &BTreeMap<TopicId, String> {
        &self.topic_names
    }

    /// One past the largest topic id in use.
    pub fn num_topics(&self) -> usize {
        self.topic_names.keys().next_back().map_or(0, |&t| t as usize + 1)
    }

    pub fn num_tokens(&self) -> usize {
        self.utterances.iter().map(|u| u.tokens.len()).sum()
    }

    /// Serializes in the same line format `parse_corpus` reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for u in &self.utterances {
            let _ = writeln!(out, "{}\t{}", u.topic, u.tokens.join(" "));
        }
        out
    }
}

pub fn load_corpus(path: impl AsRef<Path>, opts: LoadOptions) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    parse_corpus(&text, opts)
}

pub fn parse_corpus(text: &str, opts: LoadOptions) -> Result<Corpus> {
    let mut utterances = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        if raw.trim().is_empty() || raw.starts_with('#') {
            continue;
        }
        let (topic, rest) = raw
            .split_once('\t')
            .ok_or_else(|| Error::Parse { line, msg: "missing TAB after topic id".into() })?;
        let topic: TopicId = topic.trim().parse().map_err(|_| Error::Parse {
            line,
            msg: format!("topic id {topic:?} is not a nonnegative integer"),
        })?;
        let tokens: Vec<String> = rest
            .split_whitespace()
            .map(|tok| if opts.lowercase { tok.to_lowercase() } else { tok.to_owned() })
            .collect();
        if tokens.is_empty() {
            return Err(Error::Parse { line, msg: "utterance has no tokens".into() });
        }
        utterances.push(Utterance { topic, tokens });
    }
    Corpus::new(utterances)
}

/// Closed vocabulary with the boundary and unknown tokens at fixed ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Vocabulary {
    /// Rebuilds a vocabulary from its id-ordered word list.
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.len() < 2 || words[0] != BOUNDARY_TOKEN || words[1] != UNKNOWN_TOKEN {
            return Err(Error::Format("vocabulary must start with <s> and <unk>".into()));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (id, w) in words.iter().enumerate() {
            if index.insert(w.clone(), id as WordId).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary word {w:?}")));
            }
        }
        Ok(Vocabulary { words, index })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: WordId) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn get(&self, token: &str) -> Option<WordId> {
        self.index.get(token).copied()
    }

    /// Maps a token to its id, falling back to `<unk>`.
    pub fn id(&self, token: &str) -> WordId {
        self.get(token).unwrap_or(UNKNOWN)
    }
}

/// Tokens with corpus frequency `>= min_count` get ids (in lexicographic
/// order after the two reserved tokens); everything else maps to `<unk>`.
pub fn build_vocabulary(corpus: &Corpus, min_count: u64) -> Vocabulary {
    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for u in corpus.utterances() {
        for tok in &u.tokens {
            *freq.entry(tok.as_str()).or_default() += 1;
        }
    }
    let mut words = vec![BOUNDARY_TOKEN.to_owned(), UNKNOWN_TOKEN.to_owned()];
    words.extend(
        freq.into_iter()
            .filter(|&(w, c)| c >= min_count && w != BOUNDARY_TOKEN && w != UNKNOWN_TOKEN)
            .map(|(w, _)| w.to_owned()),
    );
    Vocabulary::from_words(words).expect("reserved tokens are filtered out")
}

/// A single prediction: `word` follows `prev` under `topic`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Event {
    pub prev: WordId,
    pub topic: TopicId,
    pub word: WordId,
}

/// The event stream of one utterance given its word ids.
pub fn utterance_events(topic: TopicId, ids: &[WordId]) -> impl Iterator<Item = Event> + '_ {
    let prevs = std::iter::once(BOUNDARY).chain(ids.iter().copied());
    let words = ids.iter().copied().chain(std::iter::once(BOUNDARY));
    prevs.zip(words).map(move |(prev, word)| Event { prev, topic, word })
}

/// Sparse `count(i, t, j)` table plus every marginal the model needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalCounts {
    vocab_size: usize,
    num_topics: usize,
    total: u64,
    events: Vec<(Event, u64)>,
    context: BTreeMap<(WordId, TopicId), u64>,
    bigram: BTreeMap<(WordId, WordId), u64>,
    topic_word: BTreeMap<(TopicId, WordId), u64>,
    word: Vec<u64>,
    topic: Vec<u64>,
}

impl EmpiricalCounts {
    pub fn from_events(
        vocab_size: usize,
        num_topics: usize,
        events: impl IntoIterator<Item = Event>,
    ) -> Result<Self> {
        let mut table: BTreeMap<Event, u64> = BTreeMap::new();
        for ev in events {
            if ev.prev as usize >= vocab_size || ev.word as usize >= vocab_size {
                return Err(Error::Domain(format!("word id in {ev:?} >= V={vocab_size}")));
            }
            if ev.topic as usize >= num_topics {
                return Err(Error::Domain(format!("topic id in {ev:?} >= T={num_topics}")));
            }
            *table.entry(ev).or_default() += 1;
        }
        Ok(Self::from_table(vocab_size, num_topics, table.into_iter().collect()))
    }

    fn from_table(vocab_size: usize, num_topics: usize, events: Vec<(Event, u64)>) -> Self {
        let mut counts = EmpiricalCounts {
            vocab_size,
            num_topics,
            total: 0,
            context: BTreeMap::new(),
            bigram: BTreeMap::new(),
            topic_word: BTreeMap::new(),
            word: vec![0; vocab_size],
            topic: vec![0; num_topics],
            events: Vec::new(),
        };
        for &(ev, c) in &events {
            counts.total += c;
            *counts.context.entry((ev.prev, ev.topic)).or_default() += c;
            *counts.bigram.entry((ev.prev, ev.word)).or_default() += c;
            *counts.topic_word.entry((ev.topic, ev.word)).or_default() += c;
            counts.word[ev.word as usize] += c;
            counts.topic[ev.topic as usize] += c;
        }
        counts.events = events;
        counts
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn num_topics(&self) -> usize {
        self.num_topics
    }

    /// Total number of events `N`.
    pub fn total(&self) -> u64 {
        self.total
    }

    /// `(event, count)` pairs in ascending `(prev, topic, word)` order.
    pub fn events(&self) -> &[(Event, u64)] {
        &self.events
    }

    pub fn count(&self, prev: WordId, topic: TopicId, word: WordId) -> u64 {
        let key = Event { prev, topic, word };
        self.events
            .binary_search_by(|(ev, _)| ev.cmp(&key))
            .map_or(0, |pos| self.events[pos].1)
    }

    pub fn contexts(&self) -> &BTreeMap<(WordId, TopicId), u64> {
        &self.context
    }

    pub fn context_count(&self, prev: WordId, topic: TopicId) -> u64 {
        self.context.get(&(prev, topic)).copied().unwrap_or(0)
    }

    pub fn bigrams(&self) -> &BTreeMap<(WordId, WordId), u64> {
        &self.bigram
    }

    pub fn bigram_count(&self, prev: WordId, word: WordId) -> u64 {
        self.bigram.get(&(prev, word)).copied().unwrap_or(0)
    }

    pub fn topic_word_count(&self, topic: TopicId, word: WordId) -> u64 {
        self.topic_word.get(&(topic, word)).copied().unwrap_or(0)
    }

    pub fn word_count(&self, word: WordId) -> u64 {
        self.word.get(word as usize).copied().unwrap_or(0)
    }

    pub fn topic_count(&self, topic: TopicId) -> u64 {
        self.topic.get(topic as usize).copied().unwrap_or(0)
    }
}

/// Tokenizes `corpus` against `vocab` and tallies the event stream.
pub fn extract_counts(corpus: &Corpus, vocab: &Vocabulary) -> EmpiricalCounts {
    let num_topics = corpus.num_topics();
    let mut ids = Vec::new();
    let mut table: BTreeMap<Event, u64> = BTreeMap::new();
    for u in corpus.utterances() {
        ids.clear();
        ids.extend(u.tokens.iter().map(|t| vocab.id(t)));
        for ev in utterance_events(u.topic, &ids) {
            *table.entry(ev).or_default() += 1;
        }
    }
    EmpiricalCounts::from_table(vocab.len(), num_topics, table.into_iter().collect())
}

/// Mutual information (nats) between the binary indicators "event has topic
/// `t`" and "event predicts word `j`" under the empirical joint.
pub fn mutual_information(counts: &EmpiricalCounts, t: TopicId, j: WordId) -> Result<f64> {
    if t as usize >= counts.num_topics() {
        return Err(Error::Domain(format!("topic {t} >= T={}", counts.num_topics())));
    }
    if j as usize >= counts.vocab_size() {
        return Err(Error::Domain(format!("word {j} >= V={}", counts.vocab_size())));
    }
    let n = counts.total();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let n11 = counts.topic_word_count(t, j);
    let nt = counts.topic_count(t);
    let nw = counts.word_count(j);
    Ok(mi_from_table(n11, nt, nw, n))
}

fn mi_from_table(n11: u64, nt: u64, nw: u64, n: u64) -> f64 {
    // Exactly zero when the table factorizes.
    if n11 as u128 * n as u128 == nt as u128 * nw as u128 {
        return 0.0;
    }
    let cells = [
        (n11, nt, nw),
        (nt - n11, nt, n - nw),
        (nw - n11, n - nt, nw),
        (n + n11 - nt - nw, n - nt, n - nw),
    ];
    let nf = n as f64;
    let mi: f64 = cells
        .iter()
        .filter(|&&(c, _, _)| c > 0)
        .map(|&(c, row, col)| {
            let p = c as f64 / nf;
            p * ((c as f64 * nf) / (row as f64 * col as f64)).ln()
        })
        .sum();
    mi.max(0.0)
}

/// Per topic, the selected words and their MI scores, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicWordSets {
    sets: Vec<Vec<(WordId, f64)>>,
}

impl TopicWordSets {
    pub fn empty(num_topics: usize) -> Self {
        TopicWordSets { sets: vec![Vec::new(); num_topics] }
    }

    pub fn num_topics(&self) -> usize {
        self.sets.len()
    }

    pub fn words(&self, t: TopicId) -> &[(WordId, f64)] {
        self.sets.get(t as usize).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, t: TopicId, j: WordId) -> bool {
        self.words(t).iter().any(|&(w, _)| w == j)
    }
}

/// Selects, per topic, the `k` words of highest mutual information among
/// those with `count(j) >= min_count`; ties go to the lower word id.
pub fn select_topic_words(counts: &EmpiricalCounts, k: usize, min_count: u64) -> TopicWordSets {
    let n = counts.total();
    let eligible: Vec<WordId> = (0..counts.vocab_size() as WordId)
        .filter(|&j| counts.word_count(j) >= min_count)
        .collect();
    let sets = (0..counts.num_topics() as TopicId)
        .map(|t| {
            if n == 0 {
                return Vec::new();
            }
            let nt = counts.topic_count(t);
            let mut scored: Vec<(WordId, f64)> = eligible
                .iter()
                .map(|&j| (j, mi_from_table(counts.topic_word_count(t, j), nt, counts.word_count(j), n)))
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            scored.truncate(k);
            scored
        })
        .collect();
    TopicWordSets { sets }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(text: &str) -> Corpus {
        parse_corpus(text, LoadOptions::default()).unwrap()
    }

    #[test]
    fn parses_topics_and_tokens() {
        let c = corpus("0\ta b\n1\tc\n");
        assert_eq!(c.utterances().len(), 2);
        assert_eq!(c.topic_names().keys().copied().collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(c.utterances()[0].tokens, vec!["a", "b"]);
    }

    #[test]
    fn comments_and_case_folding() {
        let c = corpus("# header\n3\tHello World\n");
        assert_eq!(c.utterances()[0].tokens, vec!["hello", "world"]);
        assert_eq!(c.num_topics(), 4);
        let raw = parse_corpus("3\tHello\n", LoadOptions { lowercase: false }).unwrap();
        assert_eq!(raw.utterances()[0].tokens, vec!["Hello"]);
    }

    #[test]
    fn empty_file_is_an_error() {
        assert!(matches!(parse_corpus("", LoadOptions::default()), Err(Error::EmptyCorpus)));
        assert!(matches!(parse_corpus("# only\n\n", LoadOptions::default()), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let err = parse_corpus("0\ta\n5\t\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("line 2"));
        let err = parse_corpus("0 a b\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_corpus("x\ta\n", LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn vocabulary_threshold() {
        let c = corpus("0\ta a a b\n");
        let v = build_vocabulary(&c, 2);
        assert_eq!(v.words(), &["<s>", "<unk>", "a"]);
        assert_eq!(v.id("b"), UNKNOWN);
        let all = build_vocabulary(&c, 0);
        assert_eq!(all.len(), 4);
        let one = build_vocabulary(&corpus("0\tx x x\n1\tx\n"), 1);
        assert_eq!(one.len(), 3);
    }

    #[test]
    fn event_stream_of_one_utterance() {
        let c = corpus("0\ta b\n");
        let v = build_vocabulary(&c, 0);
        let (a, b) = (v.id("a"), v.id("b"));
        let counts = extract_counts(&c, &v);
        assert_eq!(counts.total(), 3);
        assert_eq!(counts.count(BOUNDARY, 0, a), 1);
        assert_eq!(counts.count(a, 0, b), 1);
        assert_eq!(counts.count(b, 0, BOUNDARY), 1);
    }

    #[test]
    fn duplicated_utterances_double_counts() {
        let once = corpus("0\ta b c\n");
        let twice = corpus("0\ta b c\n0\ta b c\n");
        let v = build_vocabulary(&once, 0);
        let c1 = extract_counts(&once, &v);
        let c2 = extract_counts(&twice, &v);
        assert_eq!(c2.total(), 2 * c1.total());
        for ((e1, n1), (e2, n2)) in c1.events().iter().zip(c2.events()) {
            assert_eq!(e1, e2);
            assert_eq!(2 * n1, *n2);
        }
    }

    #[test]
    fn mutual_information_of_perfectly_associated_pair() {
        // Topic 1 always predicts x and x only occurs under topic 1.
        let events = [
            Event { prev: 0, topic: 0, word: 2 },
            Event { prev: 2, topic: 0, word: 3 },
            Event { prev: 0, topic: 0, word: 3 },
            Event { prev: 0, topic: 1, word: 4 },
        ];
        let counts = EmpiricalCounts::from_events(5, 2, events).unwrap();
        let p: f64 = 0.25;
        let entropy = -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        let mi = mutual_information(&counts, 1, 4).unwrap();
        assert!((mi - entropy).abs() < 1e-15, "{mi} vs {entropy}");
    }

    #[test]
    fn mutual_information_is_zero_under_independence() {
        // x is 1/2 of every topic's events.
        let events = [
            Event { prev: 0, topic: 0, word: 2 },
            Event { prev: 0, topic: 0, word: 3 },
            Event { prev: 0, topic: 1, word: 2 },
            Event { prev: 0, topic: 1, word: 3 },
        ];
        let counts = EmpiricalCounts::from_events(4, 2, events).unwrap();
        assert_eq!(mutual_information(&counts, 0, 2).unwrap(), 0.0);
        assert_eq!(mutual_information(&counts, 1, 3).unwrap(), 0.0);
    }

    #[test]
    fn mutual_information_rejects_bad_indices() {
        let counts = EmpiricalCounts::from_events(3, 1, [Event { prev: 0, topic: 0, word: 2 }]).unwrap();
        assert!(matches!(mutual_information(&counts, 1, 0), Err(Error::Domain(_))));
        assert!(matches!(mutual_information(&counts, 0, 3), Err(Error::Domain(_))));
    }

    #[test]
    fn topic_words_tie_break_and_saturation() {
        // Words 2 and 3 have identical tables; 4 is topic-neutral.
        let events = [
            Event { prev: 0, topic: 0, word: 2 },
            Event { prev: 0, topic: 0, word: 3 },
            Event { prev: 0, topic: 1, word: 4 },
            Event { prev: 0, topic: 0, word: 4 },
            Event { prev: 0, topic: 1, word: 1 },
            Event { prev: 0, topic: 1, word: 1 },
        ];
        let counts = EmpiricalCounts::from_events(5, 2, events).unwrap();
        let one = select_topic_words(&counts, 1, 1);
        // Word 1 (absent from topic 0) carries the most information.
        assert_eq!(one.words(0)[0].0, 1);
        let ranked = select_topic_words(&counts, 10, 1);
        let words: Vec<WordId> = ranked.words(0).iter().map(|&(w, _)| w).collect();
        // Word 0 never occurs, so only 1..=4 are eligible.
        assert_eq!(words.len(), 4);
        let pos2 = words.iter().position(|&w| w == 2).unwrap();
        let pos3 = words.iter().position(|&w| w == 3).unwrap();
        assert_eq!(pos3, pos2 + 1);
        assert_eq!(ranked.words(0)[pos2].1, ranked.words(0)[pos3].1);
    }
}
