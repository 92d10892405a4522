//! Sentence corpus: tokenization, vocabulary, per-sentence concept sets and
//! the positive/negative pair index behind triplet sampling.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::lexicon::{Concept, ConceptLexicon, ConceptSet};

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

/// Lowercases and splits on whitespace and punctuation. Apostrophes are kept
/// inside tokens (`don't`) and stripped at token edges.
pub fn tokenize(sentence: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let flush = |cur: &mut String, out: &mut Vec<String>| {
        let t = cur.trim_matches('\'');
        if !t.is_empty() {
            out.push(t.to_string());
        }
        cur.clear();
    };
    for ch in sentence.chars() {
        if ch.is_alphanumeric() || ch == '\'' {
            cur.extend(ch.to_lowercase());
        } else {
            flush(&mut cur, &mut out);
        }
    }
    flush(&mut cur, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, u32>,
    min_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VocabError {
    #[error("vocabulary must start with the reserved tokens {RESERVED:?}")]
    MissingReserved,
    #[error("duplicate vocabulary token `{0}`")]
    Duplicate(String),
}

impl Vocabulary {
    /// Keeps tokens seen at least `min_count` times. Ids are assigned by
    /// descending frequency, ties in lexicographic order.
    pub fn from_counts(counts: &BTreeMap<String, usize>, min_count: usize) -> Self {
        let mut kept: Vec<(&String, usize)> = counts
            .iter()
            .filter(|(t, &n)| n >= min_count && !RESERVED.contains(&t.as_str()))
            .map(|(t, &n)| (t, n))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        tokens.extend(kept.into_iter().map(|(t, _)| t.clone()));
        let mut v = Self::from_tokens(tokens).expect("reserved prefix and unique keys");
        v.min_count = min_count;
        v
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self, VocabError> {
        if tokens.len() < RESERVED.len() || tokens[..4].iter().zip(RESERVED).any(|(a, b)| a != b) {
            return Err(VocabError::MissingReserved);
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(VocabError::Duplicate(t.clone()));
            }
        }
        Ok(Self {
            tokens,
            index,
            min_count: 1,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED.len()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// `bos w1 .. wn eos`.
    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<u32> {
        let mut ids = Vec::with_capacity(words.len() + 2);
        ids.push(BOS);
        ids.extend(words.iter().map(|w| self.id(w.as_ref())));
        ids.push(EOS);
        ids
    }

    /// Space-joined words; reserved ids other than unk are dropped.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == PAD || id == BOS || id == EOS {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(self.token(id));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceRecord {
    /// Position in the corpus; graph and pair index refer to sentences by it.
    pub id: u32,
    /// 0-based line in the source file.
    pub line: usize,
    /// `bos .. eos` token ids after unk replacement.
    pub tokens: Vec<u32>,
    /// Surface words before unk replacement, after truncation.
    pub words: Vec<String>,
    pub concepts: ConceptSet,
}

impl SentenceRecord {
    /// Number of words, excluding bos and eos.
    pub fn len(&self) -> usize {
        self.tokens.len() - 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Words without bos/eos, as fed to the encoder.
    pub fn content(&self) -> &[u32] {
        &self.tokens[1..self.tokens.len() - 1]
    }

    pub fn text(&self) -> String {
        self.words.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CorpusOptions {
    pub min_count: usize,
    pub max_len: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        Self {
            min_count: 5,
            max_len: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CorpusError {
    #[error("corpus contains no non-empty sentences")]
    Empty,
    #[error("max_len must be at least 4, got {0}")]
    MaxLen(usize),
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub records: Vec<SentenceRecord>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn concept_sets(&self) -> Vec<ConceptSet> {
        self.records.iter().map(|r| r.concepts.clone()).collect()
    }
}

/// Tokenizes, truncates to `max_len` words, extracts concepts from the
/// pre-unk words, then maps rare words to unk. Lines that tokenize to
/// nothing are skipped.
pub fn build_corpus<'a, I>(
    lines: I,
    lex: &ConceptLexicon,
    opts: CorpusOptions,
) -> Result<Corpus, CorpusError>
where
    I: IntoIterator<Item = &'a str>,
{
    if opts.max_len < 4 {
        return Err(CorpusError::MaxLen(opts.max_len));
    }
    let mut pending = Vec::new();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (line, text) in lines.into_iter().enumerate() {
        let mut words = tokenize(text);
        if words.is_empty() {
            if !text.trim().is_empty() {
                log::warn!("line {} has no tokens, skipped", line + 1);
            }
            continue;
        }
        words.truncate(opts.max_len);
        for w in &words {
            *counts.entry(w.clone()).or_default() += 1;
        }
        let concepts = lex.extract_concepts(&words);
        pending.push((line, words, concepts));
    }
    if pending.is_empty() {
        return Err(CorpusError::Empty);
    }
    let vocab = Vocabulary::from_counts(&counts, opts.min_count);
    let records = pending
        .into_iter()
        .enumerate()
        .map(|(id, (line, words, concepts))| SentenceRecord {
            id: id as u32,
            line,
            tokens: vocab.encode(&words),
            words,
            concepts,
        })
        .collect();
    Ok(Corpus { vocab, records })
}

/// Per-concept postings lists over a slice of concept sets.
pub(crate) fn inverted_index(sets: &[ConceptSet], concept_count: usize) -> Vec<Vec<u32>> {
    let mut postings = vec![Vec::new(); concept_count];
    for (j, set) in sets.iter().enumerate() {
        for c in set.iter() {
            postings[c.index()].push(j as u32);
        }
    }
    postings
}

fn concept_bound(sets: &[ConceptSet]) -> usize {
    sets.iter()
        .flat_map(|s| s.iter())
        .map(|c| c.index() + 1)
        .max()
        .unwrap_or(0)
}

/// Positive pairs (`overlap >= 2`) stored explicitly with their overlap,
/// negative pairs (`overlap == 0`) stored only as a count and sampled by
/// rejection against the concept sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairIndex {
    concepts: Vec<ConceptSet>,
    positives: Vec<Vec<(u32, u32)>>,
    cumulative: Vec<Vec<u64>>,
    negative_counts: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum TripletError {
    #[error("sentence {0} has no positive partner")]
    NoPositive(u32),
    #[error("sentence {0} has no negative partner")]
    NoNegative(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TripletSample {
    pub anchor: u32,
    pub positive: u32,
    pub negative: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairIndexError {
    #[error("pair index has {0} sentences but {1} positive lists")]
    Length(usize, usize),
    #[error("positive ({0}, {1}) is invalid: {2}")]
    Positive(u32, u32, &'static str),
}

impl PairIndex {
    pub fn build(sets: &[ConceptSet]) -> Self {
        let n = sets.len();
        let postings = inverted_index(sets, concept_bound(sets));
        let mut counter = vec![0u32; n];
        let mut touched = Vec::new();
        let mut positives = Vec::with_capacity(n);
        let mut negative_counts = Vec::with_capacity(n);
        for (j, set) in sets.iter().enumerate() {
            for c in set.iter() {
                for &k in &postings[c.index()] {
                    if counter[k as usize] == 0 {
                        touched.push(k);
                    }
                    counter[k as usize] += 1;
                }
            }
            touched.sort_unstable();
            let mut pos = Vec::new();
            for &k in &touched {
                let overlap = counter[k as usize];
                if k as usize != j && overlap >= 2 {
                    pos.push((k, overlap));
                }
                counter[k as usize] = 0;
            }
            // an empty concept set overlaps nothing, itself included
            negative_counts.push((n - touched.len()) as u32);
            touched.clear();
            positives.push(pos);
        }
        Self::assemble(sets.to_vec(), positives, negative_counts)
    }

    fn assemble(
        concepts: Vec<ConceptSet>,
        positives: Vec<Vec<(u32, u32)>>,
        negative_counts: Vec<u32>,
    ) -> Self {
        let cumulative = positives
            .iter()
            .map(|p| {
                p.iter()
                    .scan(0u64, |acc, &(_, w)| {
                        *acc += w as u64;
                        Some(*acc)
                    })
                    .collect()
            })
            .collect();
        Self {
            concepts,
            positives,
            cumulative,
            negative_counts,
        }
    }

    /// Reassembles a persisted index, checking each stored positive against
    /// the concept sets.
    pub fn from_parts(
        concepts: Vec<ConceptSet>,
        positives: Vec<Vec<(u32, u32)>>,
        negative_counts: Vec<u32>,
    ) -> Result<Self, PairIndexError> {
        let n = concepts.len();
        if positives.len() != n || negative_counts.len() != n {
            return Err(PairIndexError::Length(n, positives.len()));
        }
        for (j, list) in positives.iter().enumerate() {
            for &(k, w) in list {
                if k as usize >= n {
                    return Err(PairIndexError::Positive(j as u32, k, "out of range"));
                }
                if k as usize == j || concepts[j].overlap(&concepts[k as usize]) != w as usize || w < 2
                {
                    return Err(PairIndexError::Positive(j as u32, k, "overlap mismatch"));
                }
            }
        }
        Ok(Self::assemble(concepts, positives, negative_counts))
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    pub fn concepts(&self, j: u32) -> &ConceptSet {
        &self.concepts[j as usize]
    }

    pub fn positives(&self, j: u32) -> &[(u32, u32)] {
        &self.positives[j as usize]
    }

    pub fn negative_count(&self, j: u32) -> u32 {
        self.negative_counts[j as usize]
    }

    pub fn is_negative(&self, j: u32, k: u32) -> bool {
        self.concepts[j as usize].overlap(&self.concepts[k as usize]) == 0
    }

    /// Sentences usable as triplet anchors (non-empty positive and negative sets).
    pub fn has_triplet(&self, j: u32) -> bool {
        !self.positives[j as usize].is_empty() && self.negative_counts[j as usize] > 0
    }

    pub fn triplet_anchor_count(&self) -> usize {
        (0..self.len() as u32).filter(|&j| self.has_triplet(j)).count()
    }

    pub fn sample_positive<R: Rng + ?Sized>(&self, j: u32, rng: &mut R) -> Option<u32> {
        let cum = &self.cumulative[j as usize];
        let total = *cum.last()?;
        let draw = rng.random_range(0..total);
        let slot = cum.partition_point(|&c| c <= draw);
        Some(self.positives[j as usize][slot].0)
    }

    pub fn sample_negative<R: Rng + ?Sized>(&self, j: u32, rng: &mut R) -> Option<u32> {
        let count = self.negative_counts[j as usize] as usize;
        let n = self.len();
        if count == 0 {
            return None;
        }
        if count * 4 >= n {
            // at least a quarter of draws accepted
            loop {
                let k = rng.random_range(0..n as u32);
                if self.is_negative(j, k) {
                    return Some(k);
                }
            }
        }
        let pick = rng.random_range(0..count);
        (0..n as u32).filter(|&k| self.is_negative(j, k)).nth(pick)
    }

    /// Positive drawn proportionally to concept overlap, negative uniformly.
    pub fn sample_triplet<R: Rng + ?Sized>(
        &self,
        j: u32,
        rng: &mut R,
    ) -> Result<TripletSample, TripletError> {
        let positive = self.sample_positive(j, rng).ok_or(TripletError::NoPositive(j))?;
        let negative = self.sample_negative(j, rng).ok_or(TripletError::NoNegative(j))?;
        Ok(TripletSample {
            anchor: j,
            positive,
            negative,
        })
    }
}

/// Dominant-concept label per sentence: the member concept that is most
/// frequent over the whole collection (ties to the smaller id).
pub fn dominant_concepts(sets: &[ConceptSet]) -> Vec<Option<Concept>> {
    let mut freq = vec![0usize; concept_bound(sets)];
    for s in sets {
        for c in s.iter() {
            freq[c.index()] += 1;
        }
    }
    sets.iter()
        .map(|s| {
            s.iter()
                .fold(None, |best: Option<Concept>, c| match best {
                    Some(b) if freq[b.index()] >= freq[c.index()] => Some(b),
                    _ => Some(c),
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lex() -> ConceptLexicon {
        ConceptLexicon::parse("dog\tdog.n.01\npuppy\tdog.n.01\nball\tball.n.01\ncar\tcar.n.01\n")
            .unwrap()
    }

    fn set(ids: &[u32]) -> ConceptSet {
        ids.iter().map(|&i| Concept(i)).collect()
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("A dog, running!"), ["a", "dog", "running"]);
        assert_eq!(tokenize("don't 'quote' it's"), ["don't", "quote", "it's"]);
        assert_eq!(tokenize("  ...  "), Vec::<String>::new());
    }

    #[test]
    fn duplicate_sentences_share_vocab() {
        let c = build_corpus(["a dog runs", "a dog runs"], &lex(), CorpusOptions { min_count: 1, max_len: 20 })
            .unwrap();
        assert_eq!(c.vocab.len(), 4 + 3);
        for t in ["a", "dog", "runs"] {
            assert!(c.vocab.get(t).is_some());
        }
        assert_eq!(c.records.len(), 2);
        let dog = lex().concept("dog.n.01").unwrap();
        for r in &c.records {
            assert_eq!(r.concepts.as_slice(), &[dog]);
            assert_eq!(r.tokens.first(), Some(&BOS));
            assert_eq!(r.tokens.last(), Some(&EOS));
            assert_eq!(r.len(), 3);
        }
    }

    #[test]
    fn rare_token_becomes_unk() {
        let c = build_corpus(["a dog", "a cat"], &lex(), CorpusOptions { min_count: 2, max_len: 20 })
            .unwrap();
        assert_eq!(c.records[0].tokens, [BOS, c.vocab.id("a"), UNK, EOS]);
        assert_eq!(c.vocab.get("dog"), None);
    }

    #[test]
    fn concepts_extracted_before_unk() {
        // "puppy" occurs once and is unk'd at min_count = 2, its concept survives
        let c = build_corpus(
            ["puppy sleeps", "a ball sleeps", "a ball"],
            &lex(),
            CorpusOptions { min_count: 2, max_len: 20 },
        )
        .unwrap();
        assert_eq!(c.records[0].tokens[1], UNK);
        let dog = lex().concept("dog.n.01").unwrap();
        assert_eq!(c.records[0].concepts.as_slice(), &[dog]);
    }

    #[test]
    fn truncation_and_errors() {
        let c = build_corpus(["one two three four five six"], &lex(), CorpusOptions { min_count: 1, max_len: 4 })
            .unwrap();
        assert_eq!(c.records[0].len(), 4);
        assert_eq!(*c.records[0].tokens.last().unwrap(), EOS);
        assert_eq!(
            build_corpus(["", "  ,"], &lex(), CorpusOptions::default()).unwrap_err(),
            CorpusError::Empty
        );
        assert_eq!(
            build_corpus(["a"], &lex(), CorpusOptions { min_count: 1, max_len: 3 }).unwrap_err(),
            CorpusError::MaxLen(3)
        );
    }

    #[test]
    fn skipped_lines_keep_line_numbers() {
        let c = build_corpus(["a dog", "", "a ball"], &lex(), CorpusOptions { min_count: 1, max_len: 8 })
            .unwrap();
        assert_eq!(c.records[1].id, 1);
        assert_eq!(c.records[1].line, 2);
    }

    #[test]
    fn pair_index_small_cases() {
        // dog=0 ball=1 car=2
        let idx = PairIndex::build(&[set(&[0, 1]), set(&[0, 1]), set(&[2])]);
        assert_eq!(idx.positives(0), &[(1, 2)]);
        assert_eq!(idx.negative_count(0), 1);
        assert!(idx.is_negative(0, 2));

        let idx = PairIndex::build(&[set(&[0, 1]), set(&[0])]);
        assert!(idx.positives(0).is_empty());
        assert_eq!(idx.negative_count(0), 0);
        assert!(!idx.is_negative(0, 1));
    }

    fn brute_force(sets: &[ConceptSet]) -> (Vec<Vec<(u32, u32)>>, Vec<u32>) {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for (j, a) in sets.iter().enumerate() {
            let mut p = Vec::new();
            let mut nc = 0;
            for (k, b) in sets.iter().enumerate() {
                let o = a.iter().filter(|c| b.as_slice().contains(c)).count();
                if o == 0 {
                    nc += 1;
                }
                if k != j && o >= 2 {
                    p.push((k as u32, o as u32));
                }
            }
            pos.push(p);
            neg.push(nc);
        }
        (pos, neg)
    }

    #[test]
    fn pair_index_matches_brute_force_on_four_sentences() {
        let sets = [set(&[0, 1, 2]), set(&[1, 2]), set(&[3]), set(&[0, 2, 3])];
        let idx = PairIndex::build(&sets);
        let (pos, neg) = brute_force(&sets);
        for j in 0..4u32 {
            assert_eq!(idx.positives(j), pos[j as usize].as_slice());
            assert_eq!(idx.negative_count(j), neg[j as usize]);
        }
        assert_eq!(idx.positives(0), &[(1, 2), (3, 2)]);
    }

    #[test]
    fn positive_frequencies_follow_overlap() {
        // anchor 0 overlaps sentence 1 in 2 concepts and sentence 2 in 4
        let sets = [set(&[0, 1, 2, 3]), set(&[0, 1]), set(&[0, 1, 2, 3, 4]), set(&[9])];
        let idx = PairIndex::build(&sets);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let hits = (0..n).filter(|_| idx.sample_positive(0, &mut rng) == Some(1)).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 1.0 / 3.0).abs() < 0.02, "{freq}");
    }

    #[test]
    fn single_positive_always_chosen_and_errors() {
        let sets = [set(&[0, 1]), set(&[0, 1]), set(&[5])];
        let idx = PairIndex::build(&sets);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = idx.sample_triplet(0, &mut rng).unwrap();
            assert_eq!((t.positive, t.negative), (1, 2));
        }
        assert_eq!(idx.sample_triplet(2, &mut rng), Err(TripletError::NoPositive(2)));
        let idx = PairIndex::build(&[set(&[0, 1]), set(&[0, 1])]);
        assert_eq!(idx.sample_triplet(0, &mut rng), Err(TripletError::NoNegative(0)));
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let sets: Vec<ConceptSet> = (0..30u32).map(|i| set(&[i % 3, i % 5 + 3, 9 + i % 2])).collect();
        let idx = PairIndex::build(&sets);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..30u32).filter_map(|j| idx.sample_triplet(j, &mut rng).ok()).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert!(!run(3).is_empty());
    }

    #[test]
    fn negative_sampling_with_few_negatives_is_uniform() {
        // 40 sentences share concept 0, only sentences 40 and 41 are negatives of 0
        let mut sets: Vec<ConceptSet> = (0..40).map(|_| set(&[0, 1])).collect();
        sets.push(set(&[2]));
        sets.push(set(&[3]));
        let idx = PairIndex::build(&sets);
        assert_eq!(idx.negative_count(0), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hits = (0..20_000).filter(|_| idx.sample_negative(0, &mut rng) == Some(40)).count();
        assert!((hits as f64 / 20_000.0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn from_parts_rejects_inconsistent_positive() {
        let sets = vec![set(&[0, 1]), set(&[0])];
        assert!(PairIndex::from_parts(sets, vec![vec![(1, 2)], vec![]], vec![0, 0]).is_err());
    }

    #[test]
    fn dominant_concept_prefers_frequent() {
        // concept 1 appears three times, 0 twice
        let sets = [set(&[0, 1]), set(&[1]), set(&[]), set(&[0, 2]), set(&[1, 2])];
        assert_eq!(
            dominant_concepts(&sets),
            [Some(Concept(1)), Some(Concept(1)), None, Some(Concept(0)), Some(Concept(1))]
        );
        // 0 and 2 tie at two mentions, the smaller id wins
        assert_eq!(dominant_concepts(&sets[3..4]), [Some(Concept(0))]);
    }

    fn concept_sets() -> impl Strategy<Value = Vec<ConceptSet>> {
        prop::collection::vec(prop::collection::vec(0u32..6, 0..4), 1..20)
            .prop_map(|v| v.into_iter().map(|ids| set(&ids)).collect())
    }

    proptest! {
        #[test]
        fn pair_index_agrees_with_brute_force(sets in concept_sets()) {
            let idx = PairIndex::build(&sets);
            let (pos, neg) = brute_force(&sets);
            for j in 0..sets.len() as u32 {
                prop_assert_eq!(idx.positives(j), pos[j as usize].as_slice());
                prop_assert_eq!(idx.negative_count(j), neg[j as usize]);
            }
        }

        #[test]
        fn pair_relation_is_symmetric_and_disjoint(sets in concept_sets()) {
            let idx = PairIndex::build(&sets);
            for j in 0..sets.len() as u32 {
                for &(k, w) in idx.positives(j) {
                    prop_assert!(idx.positives(k).contains(&(j, w)));
                    prop_assert!(!idx.is_negative(j, k));
                }
                for k in 0..sets.len() as u32 {
                    prop_assert_eq!(idx.is_negative(j, k), idx.is_negative(k, j));
                }
            }
        }
    }
}
