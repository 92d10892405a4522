//! Caption metrics and embedding diagnostics.
//!
//! BLEU is corpus-level (clipped n-gram counts summed over the corpus,
//! closest-reference brevity penalty, no smoothing). ROUGE-L is the LCS
//! F-measure with β = 1.2, best over references, averaged over candidates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::align::AssignmentGraph;

fn ngram_counts<T: Ord>(tokens: &[T], n: usize) -> BTreeMap<&[T], usize> {
    let mut counts = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus statistics from which every BLEU-n is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct BleuStats {
    /// Clipped matches per order 1..=max_n.
    pub matches: Vec<usize>,
    /// Candidate n-gram totals per order.
    pub totals: Vec<usize>,
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn collect<T: Ord>(candidates: &[Vec<T>], references: &[Vec<Vec<T>>], max_n: usize) -> Self {
        assert_eq!(candidates.len(), references.len(), "bleu: one reference list per candidate");
        let mut s = BleuStats {
            matches: alloc::vec![0; max_n],
            totals: alloc::vec![0; max_n],
            candidate_len: 0,
            reference_len: 0,
        };
        for (cand, refs) in candidates.iter().zip(references) {
            assert!(!refs.is_empty(), "bleu: candidate without references");
            s.candidate_len += cand.len();
            let c = cand.len();
            // closest reference length, ties to the shorter one
            s.reference_len += refs
                .iter()
                .map(|r| r.len())
                .min_by_key(|&r| (r.abs_diff(c), r))
                .unwrap_or(0);
            for n in 1..=max_n {
                let cand_counts = ngram_counts(cand, n);
                let mut max_ref: BTreeMap<&[T], usize> = BTreeMap::new();
                for r in refs {
                    for (g, k) in ngram_counts(r, n) {
                        let e = max_ref.entry(g).or_insert(0);
                        *e = (*e).max(k);
                    }
                }
                for (g, k) in cand_counts {
                    s.totals[n - 1] += k;
                    s.matches[n - 1] += k.min(max_ref.get(g).copied().unwrap_or(0));
                }
            }
        }
        s
    }

    pub fn precision(&self, n: usize) -> f64 {
        if self.totals[n - 1] == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / self.totals[n - 1] as f64
        }
    }

    /// `exp(1 − r/c)` when the candidates are shorter than the references, else 1.
    pub fn brevity_penalty(&self) -> f64 {
        let (c, r) = (self.candidate_len as f64, self.reference_len as f64);
        if self.candidate_len == 0 {
            0.0
        } else if c < r {
            libm::exp(1.0 - r / c)
        } else {
            1.0
        }
    }

    /// BLEU with uniform weights over orders `1..=n`.
    pub fn bleu(&self, n: usize) -> f64 {
        let mut log_sum = 0.0;
        for k in 1..=n {
            let p = self.precision(k);
            if p == 0.0 {
                return 0.0;
            }
            log_sum += libm::log(p);
        }
        self.brevity_penalty() * libm::exp(log_sum / n as f64)
    }
}

pub fn bleu<T: Ord>(candidates: &[Vec<T>], references: &[Vec<Vec<T>>], n: usize) -> f64 {
    BleuStats::collect(candidates, references, n).bleu(n)
}

/// Add-one smoothed sentence BLEU for per-caption debugging output. Not the
/// corpus metric.
pub fn sentence_bleu_smoothed<T: Ord>(candidate: &[T], references: &[Vec<T>], n: usize) -> f64
where
    T: Clone,
{
    let s = BleuStats::collect(&[candidate.to_vec()], &[references.to_vec()], n);
    let mut log_sum = 0.0;
    for k in 1..=n {
        log_sum += libm::log((s.matches[k - 1] as f64 + 1.0) / (s.totals[k - 1] as f64 + 1.0));
    }
    s.brevity_penalty() * libm::exp(log_sum / n as f64)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = alloc::vec![0usize; b.len() + 1];
    let mut cur = alloc::vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub const ROUGE_BETA: f64 = 1.2;

/// ROUGE-L F-measure of one candidate, maximized over references.
pub fn rouge_l<T: PartialEq>(candidate: &[T], references: &[Vec<T>]) -> f64 {
    let b2 = ROUGE_BETA * ROUGE_BETA;
    references
        .iter()
        .map(|r| {
            let l = lcs_len(candidate, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / candidate.len() as f64;
            let rec = l / r.len() as f64;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

pub fn corpus_rouge_l<T: PartialEq>(candidates: &[Vec<T>], references: &[Vec<Vec<T>>]) -> f64 {
    if candidates.is_empty() {
        return 0.0;
    }
    candidates
        .iter()
        .zip(references)
        .map(|(c, r)| rouge_l(c, r))
        .sum::<f64>()
        / candidates.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CaptionScores {
    pub bleu: [f64; 4],
    pub rouge_l: f64,
}

pub fn score_captions<T: Ord>(candidates: &[Vec<T>], references: &[Vec<Vec<T>>]) -> CaptionScores {
    let stats = BleuStats::collect(candidates, references, 4);
    CaptionScores {
        bleu: [stats.bleu(1), stats.bleu(2), stats.bleu(3), stats.bleu(4)],
        rouge_l: corpus_rouge_l(candidates, references),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalReport {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub unique_rate: f64,
    pub novel_rate: f64,
    pub mixing_score: Option<f64>,
}

impl EvalReport {
    pub fn new(scores: CaptionScores, unique_rate: f64, novel_rate: f64, mixing_score: Option<f64>) -> Self {
        Self {
            bleu1: scores.bleu[0],
            bleu2: scores.bleu[1],
            bleu3: scores.bleu[2],
            bleu4: scores.bleu[3],
            rouge_l: scores.rouge_l,
            unique_rate,
            novel_rate,
            mixing_score,
        }
    }

    pub fn in_range(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        [self.bleu1, self.bleu2, self.bleu3, self.bleu4, self.rouge_l, self.unique_rate, self.novel_rate]
            .into_iter()
            .all(unit)
            && self.mixing_score.is_none_or(unit)
    }
}

/// `(distinct / total, fraction not found verbatim among training captions)`.
pub fn unique_novel_rates<S: AsRef<str>>(generated: &[S], training: &[S]) -> (f64, f64) {
    if generated.is_empty() {
        return (0.0, 0.0);
    }
    let n = generated.len() as f64;
    let distinct: BTreeSet<&str> = generated.iter().map(AsRef::as_ref).collect();
    let train: BTreeSet<&str> = training.iter().map(AsRef::as_ref).collect();
    let novel = generated.iter().filter(|g| !train.contains(g.as_ref())).count();
    (distinct.len() as f64 / n, novel as f64 / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub best: CaptionScores,
    pub best_run: usize,
    /// BLEU-4 of every run, in order.
    pub run_bleu4: Vec<f64>,
    /// Images without edges, left out of scoring.
    pub excluded: usize,
    /// Sentence chosen per scored image in the best run, as `(image, sentence)`.
    pub chosen: Vec<(u32, u32)>,
}

/// Upper bound of the weak assignment: per image, a uniformly drawn caption
/// among those tied at the maximal edge weight. Scores `runs` independent
/// draws against the references and keeps the best by BLEU-4.
///
/// `references[i]` are the reference captions of image `i`; `sentences[j]`
/// the words of sentence `j`.
pub fn oracle_baseline<R: Rng + ?Sized>(
    graph: &AssignmentGraph,
    sentences: &[Vec<String>],
    references: &[Vec<Vec<String>>],
    runs: usize,
    rng: &mut R,
) -> OracleResult {
    let rows: Vec<(u32, Vec<u32>)> = graph
        .rows()
        .iter()
        .filter(|r| !references[r.image as usize].is_empty())
        .map(|r| (r.image, r.argmax_sentences()))
        .collect();
    let excluded = references.iter().filter(|r| !r.is_empty()).count() - rows.len();
    let refs: Vec<Vec<Vec<String>>> = rows
        .iter()
        .map(|(i, _)| references[*i as usize].clone())
        .collect();
    let mut best: Option<(f64, CaptionScores, usize, Vec<(u32, u32)>)> = None;
    let mut run_bleu4 = Vec::with_capacity(runs);
    for run in 0..runs.max(1) {
        let chosen: Vec<(u32, u32)> = rows
            .iter()
            .map(|(i, tied)| (*i, tied[rng.random_range(0..tied.len())]))
            .collect();
        let cands: Vec<Vec<String>> = chosen.iter().map(|&(_, j)| sentences[j as usize].clone()).collect();
        let scores = score_captions(&cands, &refs);
        run_bleu4.push(scores.bleu[3]);
        let better = best.as_ref().is_none_or(|(b, s, _, _)| {
            scores.bleu[3] > *b || (scores.bleu[3] == *b && scores.rouge_l > s.rouge_l)
        });
        if better {
            best = Some((scores.bleu[3], scores, run, chosen));
        }
    }
    let (_, best_scores, best_run, chosen) = best.expect("at least one run");
    OracleResult {
        best: best_scores,
        best_run,
        run_bleu4,
        excluded,
        chosen,
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Mean over image embeddings of the fraction of their `k` nearest
/// neighbours (same cluster label, L2) that are text embeddings. Clusters
/// with fewer than `k + 1` members are skipped; `None` when nothing is scored.
pub fn mixing_score(
    text: &[Vec<f64>],
    text_labels: &[Option<u32>],
    images: &[Vec<f64>],
    image_labels: &[Option<u32>],
    k: usize,
) -> Option<f64> {
    let mut total = 0.0;
    let mut scored = 0usize;
    for (i, (v, lab)) in images.iter().zip(image_labels).enumerate() {
        let Some(lab) = lab else { continue };
        // (distance, is_image, index): ties resolved text first, then by index
        let mut pool: Vec<(f64, bool, usize)> = text
            .iter()
            .zip(text_labels)
            .enumerate()
            .filter(|(_, (_, l))| **l == Some(*lab))
            .map(|(j, (t, _))| (dist2(v, t), false, j))
            .collect();
        pool.extend(
            images
                .iter()
                .zip(image_labels)
                .enumerate()
                .filter(|(j, (_, l))| *j != i && **l == Some(*lab))
                .map(|(j, (w, _))| (dist2(v, w), true, j)),
        );
        if pool.len() < k {
            continue;
        }
        pool.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let texts = pool[..k].iter().filter(|p| !p.1).count();
        total += texts as f64 / k as f64;
        scored += 1;
    }
    (scored > 0).then(|| total / scored as f64)
}

/// Mean intra-cluster over mean inter-cluster pairwise L2 distance. Items
/// without a label are ignored; `None` if either pair set is empty.
pub fn intra_inter_ratio(embeddings: &[Vec<f64>], labels: &[Option<u32>]) -> Option<f64> {
    let (mut intra, mut intra_n, mut inter, mut inter_n) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..embeddings.len() {
        let Some(a) = labels[i] else { continue };
        for j in i + 1..embeddings.len() {
            let Some(b) = labels[j] else { continue };
            let d = libm::sqrt(dist2(&embeddings[i], &embeddings[j]));
            if a == b {
                intra += d;
                intra_n += 1;
            } else {
                inter += d;
                inter_n += 1;
            }
        }
    }
    (intra_n > 0 && inter_n > 0 && inter > 0.0)
        .then(|| (intra / intra_n as f64) / (inter / inter_n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(|x| x.to_string()).collect()
    }

    #[test]
    fn identical_candidate_scores_one() {
        let c = vec![w("a dog runs on the grass")];
        let r = vec![vec![w("a dog runs on the grass")]];
        assert_eq!(bleu(&c, &r, 4), 1.0);
        assert_eq!(rouge_l(&c[0], &r[0]), 1.0);
    }

    #[test]
    fn clipping_without_penalty() {
        // "the" clipped to one match out of three; c = 3 > r = 2 so no penalty
        let s = BleuStats::collect(&[w("the the the")], &[vec![w("the cat")]], 1);
        assert_eq!(s.matches[0], 1);
        assert_eq!(s.brevity_penalty(), 1.0);
        assert!((s.bleu(1) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn brevity_penalty_for_short_candidate() {
        // p1 = 1, c = 2, r = 6: BLEU-1 = exp(1 - 6/2)
        let b = bleu(&[w("the cat")], &[vec![w("the cat sat on the mat")]], 1);
        assert!((b - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn closest_reference_length_prefers_shorter_on_tie() {
        let s = BleuStats::collect(&[w("a b c d")], &[vec![w("a b c"), w("a b c d e")]], 1);
        assert_eq!(s.reference_len, 3);
    }

    #[test]
    fn disjoint_vocabulary_is_zero() {
        assert_eq!(bleu(&[w("x y z")], &[vec![w("a b c")]], 4), 0.0);
        assert_eq!(rouge_l(&w("x y z"), &[w("a b c")]), 0.0);
    }

    #[test]
    fn rouge_l_hand_lcs() {
        // LCS(a b c d, a c d e) = 3, P = R = 3/4, F = 3/4
        assert_eq!(lcs_len(&w("a b c d"), &w("a c d e")), 3);
        assert!((rouge_l(&w("a b c d"), &[w("a c d e")]) - 0.75).abs() < 1e-12);
        // P = 3/4, R = 3/5: F = 2.44·0.45 / (0.6 + 1.44·0.75)
        let f = rouge_l(&w("a b c d"), &[w("a c d e f")]);
        assert!((f - 2.44 * 0.45 / (0.6 + 1.08)).abs() < 1e-12);
    }

    #[test]
    fn smoothed_sentence_bleu_is_positive() {
        let v = sentence_bleu_smoothed(&w("a cat"), &[w("a dog")], 4);
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn unique_novel_fixture() {
        let g = ["a b", "a b", "c d", "e f", "a b", "c d", "g h", "i j", "k l", "a b"];
        let train = ["a b", "g h", "x y"];
        // distinct: a b, c d, e f, g h, i j, k l = 6; in training: 4×"a b" + "g h" = 5
        assert_eq!(unique_novel_rates(&g, &train), (0.6, 0.5));
        assert_eq!(unique_novel_rates(&["s"; 4], &["t"; 1]), (0.25, 1.0));
        assert_eq!(unique_novel_rates(&["a", "b"], &["c"]), (1.0, 1.0));
    }

    #[test]
    fn ratio_and_mixing_basic_cases() {
        let e = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
        let l = [Some(0), Some(0), Some(1), Some(1)];
        let r = intra_inter_ratio(&e, &l).unwrap();
        assert!((r - 1.0 / 10.0).abs() < 1e-12);

        // separated: images at 100+, texts near 0, all one cluster
        let text: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 * 0.01]).collect();
        let imgs: Vec<Vec<f64>> = (0..20).map(|i| vec![100.0 + i as f64 * 0.01]).collect();
        let tl = vec![Some(0); 20];
        assert_eq!(mixing_score(&text, &tl, &imgs, &tl, 10), Some(0.0));
        // interleaved: image i at 2i, text i at 2i + 1; away from the ends the
        // ten nearest are texts at 1, 3, 5 and images at 2, 4

        let text: Vec<Vec<f64>> = (0..40).map(|i| vec![2.0 * i as f64 + 1.0]).collect();
        let imgs: Vec<Vec<f64>> = (0..40).map(|i| vec![2.0 * i as f64]).collect();
        let tl = vec![Some(0); 40];
        let m = mixing_score(&text, &tl, &imgs, &tl, 10).unwrap();
        assert!((m - 0.6).abs() < 0.02, "{m}");
        // cluster too small
        assert_eq!(mixing_score(&text[..3], &tl[..3], &imgs[..3], &tl[..3], 10), None);
    }
}
