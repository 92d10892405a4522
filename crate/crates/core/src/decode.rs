//! Greedy and beam search over any left-to-right token model.
//!
//! Hypotheses are scored by their summed log-probability. Equal scores are
//! ordered by the token sequence, so the earlier token id wins. A
//! hypothesis finishes when it emits `eos`; one still open after `max_len`
//! steps is truncated and gets `eos` appended without scoring it.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::lm::Decoder;
use crate::nn::ops::log_softmax;
use crate::nn::{ParameterStore, Real};
use crate::text::{BOS, EOS, PAD, UNK};

pub trait StepModel {
    type State: Clone;

    fn start(&self) -> Self::State;

    /// Log-probabilities of the next token; `f64::NEG_INFINITY` forbids a token.
    fn next(&self, state: &Self::State) -> Vec<f64>;

    fn advance(&self, state: &Self::State, token: u32) -> Self::State;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamOptions {
    pub width: usize,
    /// Maximum number of decoding steps, `eos` included.
    pub max_len: usize,
    pub eos: u32,
    /// Rank finished hypotheses by mean instead of summed log-probability.
    pub length_normalize: bool,
}

impl BeamOptions {
    pub fn new(width: usize, max_len: usize) -> Self {
        Self {
            width,
            max_len,
            eos: EOS,
            length_normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Tokens, always ending with `eos`.
    pub tokens: Vec<u32>,
    /// Summed log-probability of the scored tokens.
    pub score: f64,
    /// False when the hypothesis was cut at `max_len`.
    pub finished: bool,
}

impl Hypothesis {
    /// Tokens without the final `eos`.
    pub fn content(&self) -> &[u32] {
        &self.tokens[..self.tokens.len() - 1]
    }

    fn rank_score(&self, normalize: bool) -> f64 {
        if normalize {
            self.score / self.tokens.len() as f64
        } else {
            self.score
        }
    }
}

/// Best first: higher score, then lexicographically smaller tokens.
fn rank(a_score: f64, a: &[u32], b_score: f64, b: &[u32]) -> Ordering {
    b_score
        .partial_cmp(&a_score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.cmp(b))
}

/// Argmax decoding; the lowest id wins ties.
pub fn greedy<M: StepModel>(model: &M, max_len: usize, eos: u32) -> Hypothesis {
    let mut state = model.start();
    let mut tokens = Vec::new();
    let mut score = 0.0;
    for _ in 0..max_len {
        let lp = model.next(&state);
        let (tok, &best) = lp
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |acc, (k, v)| if *v > *acc.1 { (k, v) } else { acc });
        if best == f64::NEG_INFINITY {
            break;
        }
        score += best;
        tokens.push(tok as u32);
        if tok as u32 == eos {
            return Hypothesis {
                tokens,
                score,
                finished: true,
            };
        }
        state = model.advance(&state, tok as u32);
    }
    tokens.push(eos);
    Hypothesis {
        tokens,
        score,
        finished: false,
    }
}

struct Open<S> {
    tokens: Vec<u32>,
    score: f64,
    state: S,
}

/// Beam search of width `opts.width`. Each step expands every open
/// hypothesis by every allowed token and keeps the best `width`
/// expansions; those ending in `eos` leave the beam as finished.
pub fn beam_search<M: StepModel>(model: &M, opts: &BeamOptions) -> Hypothesis {
    assert!(opts.width >= 1, "beam width must be at least 1");
    let mut open = alloc::vec![Open {
        tokens: Vec::new(),
        score: 0.0,
        state: model.start(),
    }];
    let mut done: Vec<Hypothesis> = Vec::new();
    for _ in 0..opts.max_len {
        if open.is_empty() {
            break;
        }
        let best_done = done
            .iter()
            .map(|h| h.score)
            .fold(f64::NEG_INFINITY, f64::max);
        // scores only decrease, so open hypotheses below the best finished one are dead
        if !opts.length_normalize && open.iter().all(|o| o.score < best_done) {
            open.clear();
            break;
        }
        let mut cands: Vec<(usize, u32, f64)> = Vec::new();
        for (k, o) in open.iter().enumerate() {
            for (tok, &lp) in model.next(&o.state).iter().enumerate() {
                if lp != f64::NEG_INFINITY {
                    cands.push((k, tok as u32, o.score + lp));
                }
            }
        }
        cands.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(Ordering::Equal)
                .then_with(|| open[a.0].tokens.cmp(&open[b.0].tokens))
                .then_with(|| a.1.cmp(&b.1))
        });
        cands.truncate(opts.width);
        let mut next = Vec::with_capacity(cands.len());
        for (k, tok, score) in cands {
            let mut tokens = open[k].tokens.clone();
            tokens.push(tok);
            if tok == opts.eos {
                done.push(Hypothesis {
                    tokens,
                    score,
                    finished: true,
                });
            } else {
                let state = model.advance(&open[k].state, tok);
                next.push(Open { tokens, score, state });
            }
        }
        open = next;
    }
    done.extend(open.into_iter().map(|o| {
        let mut tokens = o.tokens;
        tokens.push(opts.eos);
        Hypothesis {
            tokens,
            score: o.score,
            finished: false,
        }
    }));
    done.into_iter()
        .min_by(|a, b| {
            rank(
                a.rank_score(opts.length_normalize),
                &a.tokens,
                b.rank_score(opts.length_normalize),
                &b.tokens,
            )
        })
        .unwrap_or(Hypothesis {
            tokens: alloc::vec![opts.eos],
            score: 0.0,
            finished: false,
        })
}

/// The language model decoder conditioned on an embedding, with pad, bos
/// and unk masked out.
pub struct DecoderModel<'a, T> {
    decoder: &'a Decoder,
    store: &'a ParameterStore<T>,
    t: Vec<T>,
}

impl<'a, T: Real> DecoderModel<'a, T> {
    pub fn new(decoder: &'a Decoder, store: &'a ParameterStore<T>, t: Vec<T>) -> Self {
        Self { decoder, store, t }
    }
}

impl<T: Real> StepModel for DecoderModel<'_, T> {
    /// Hidden state after the last fed token and the logits it produced.
    type State = (Vec<T>, Vec<T>);

    fn start(&self) -> Self::State {
        let h = self.decoder.start(self.store, &self.t);
        self.decoder.step(self.store, &h, BOS)
    }

    fn next(&self, state: &Self::State) -> Vec<f64> {
        let mut lp: Vec<f64> = log_softmax(&state.1).into_iter().map(Real::as_f64).collect();
        for banned in [PAD, BOS, UNK] {
            if let Some(v) = lp.get_mut(banned as usize) {
                *v = f64::NEG_INFINITY;
            }
        }
        lp
    }

    fn advance(&self, state: &Self::State, token: u32) -> Self::State {
        self.decoder.step(self.store, &state.0, token)
    }
}

/// Caption token ids for embedding `t`; width 1 is greedy decoding.
pub fn caption_embedding<T: Real>(
    decoder: &Decoder,
    store: &ParameterStore<T>,
    t: Vec<T>,
    width: usize,
    max_len: usize,
) -> Hypothesis {
    let model = DecoderModel::new(decoder, store, t);
    if width == 1 {
        greedy(&model, max_len, EOS)
    } else {
        beam_search(&model, &BeamOptions::new(width, max_len))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{LanguageModel, LmConfig};
    use alloc::collections::BTreeMap;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Next-token distribution per prefix.
    struct Table {
        vocab: usize,
        rows: BTreeMap<Vec<u32>, Vec<f64>>,
    }

    impl Table {
        fn random(seed: u64, vocab: usize, max_len: usize) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut rows = BTreeMap::new();
            let mut prefixes = vec![Vec::new()];
            for _ in 0..max_len {
                let mut next = Vec::new();
                for p in prefixes {
                    let w: Vec<f64> = (0..vocab).map(|_| rng.random_range(0.05..1.0)).collect();
                    let s: f64 = w.iter().sum();
                    rows.insert(p.clone(), w.iter().map(|x| (x / s).ln()).collect());
                    for t in 0..vocab as u32 {
                        let mut q = p.clone();
                        q.push(t);
                        next.push(q);
                    }
                }
                prefixes = next;
            }
            Self { vocab, rows }
        }
    }

    impl StepModel for Table {
        type State = Vec<u32>;
        fn start(&self) -> Vec<u32> {
            Vec::new()
        }
        fn next(&self, s: &Vec<u32>) -> Vec<f64> {
            self.rows.get(s).cloned().unwrap_or_else(|| vec![f64::NEG_INFINITY; self.vocab])
        }
        fn advance(&self, s: &Vec<u32>, t: u32) -> Vec<u32> {
            let mut s = s.clone();
            s.push(t);
            s
        }
    }

    fn exhaustive(table: &Table, max_len: usize, eos: u32) -> Hypothesis {
        let mut best: Option<Hypothesis> = None;
        let mut stack = vec![(Vec::<u32>::new(), 0.0)];
        while let Some((prefix, score)) = stack.pop() {
            let mut consider = |h: Hypothesis| {
                let better = best.as_ref().is_none_or(|b| {
                    h.score > b.score || (h.score == b.score && h.tokens < b.tokens)
                });
                if better {
                    best = Some(h);
                }
            };
            if prefix.len() == max_len {
                let mut tokens = prefix;
                tokens.push(eos);
                consider(Hypothesis { tokens, score, finished: false });
                continue;
            }
            for (t, lp) in table.next(&prefix).into_iter().enumerate() {
                let mut tokens = prefix.clone();
                tokens.push(t as u32);
                if t as u32 == eos {
                    consider(Hypothesis { tokens, score: score + lp, finished: true });
                } else {
                    stack.push((tokens, score + lp));
                }
            }
        }
        best.unwrap()
    }

    #[test]
    fn wide_beam_equals_exhaustive_search() {
        for seed in 0..200 {
            let table = Table::random(seed, 4, 3);
            let exact = exhaustive(&table, 3, 2);
            let beam = beam_search(&table, &BeamOptions { eos: 2, ..BeamOptions::new(64, 3) });
            assert_eq!(beam.tokens, exact.tokens, "seed {seed}");
            assert!((beam.score - exact.score).abs() < 1e-12);
        }
    }

    #[test]
    fn width_one_is_greedy() {
        for seed in 0..100 {
            let table = Table::random(seed, 4, 3);
            let g = greedy(&table, 3, 2);
            let b = beam_search(&table, &BeamOptions { eos: 2, ..BeamOptions::new(1, 3) });
            assert_eq!(g, b, "seed {seed}");
        }
    }

    #[test]
    fn hand_table_beam_two() {
        // vocabulary {a=0, b=1, eos=2}; greedy picks a, but b leads to a much
        // better continuation that width 2 keeps alive
        let l = |p: f64| p.ln();
        let mut rows = BTreeMap::new();
        rows.insert(vec![], vec![l(0.5), l(0.4), l(0.1)]);
        rows.insert(vec![0], vec![l(0.3), l(0.3), l(0.4)]);
        rows.insert(vec![1], vec![l(0.05), l(0.05), l(0.9)]);
        for p in [vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]] {
            rows.insert(p, vec![l(0.3), l(0.3), l(0.4)]);
        }
        let table = Table { vocab: 3, rows };
        let opts = BeamOptions { eos: 2, ..BeamOptions::new(2, 3) };
        let b = beam_search(&table, &opts);
        assert_eq!(b.tokens, vec![1, 2]);
        assert!((b.score - (0.4f64 * 0.9).ln()).abs() < 1e-12);
        assert_eq!(greedy(&table, 3, 2).tokens, vec![0, 2]);
        assert_eq!(exhaustive(&table, 3, 2).tokens, vec![1, 2]);
    }

    #[test]
    fn truncation_appends_eos() {
        let mut rows = BTreeMap::new();
        rows.insert(vec![], vec![0.0, f64::NEG_INFINITY]);
        rows.insert(vec![0], vec![0.0, f64::NEG_INFINITY]);
        let table = Table { vocab: 2, rows };
        let h = beam_search(&table, &BeamOptions { eos: 1, ..BeamOptions::new(3, 2) });
        assert_eq!(h.tokens, vec![0, 0, 1]);
        assert!(!h.finished);
        assert_eq!(h.content(), &[0, 0]);
    }

    #[test]
    fn length_normalization_prefers_longer_captions() {
        let l = |p: f64| p.ln();
        let mut rows = BTreeMap::new();
        // [eos]: ln 0.55 ≈ -0.60; [0, eos]: ln 0.45 ≈ -0.80, or -0.40 per token
        rows.insert(vec![], vec![l(0.45), l(0.55)]);
        rows.insert(vec![0], vec![f64::NEG_INFINITY, 0.0]);
        let table = Table { vocab: 2, rows };
        let plain = beam_search(&table, &BeamOptions { eos: 1, ..BeamOptions::new(2, 2) });
        assert_eq!(plain.tokens, vec![1]);
        let norm = beam_search(
            &table,
            &BeamOptions {
                eos: 1,
                length_normalize: true,
                ..BeamOptions::new(2, 2)
            },
        );
        assert_eq!(norm.tokens, vec![0, 1]);
    }

    #[test]
    fn decoder_captions_skip_reserved_tokens_and_repeat() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = LmConfig {
            word_dim: 6,
            hidden: 8,
            embed_dim: 8,
            ..LmConfig::default()
        };
        let lm = LanguageModel::<f64>::new(12, &cfg, &mut rng);
        for seed in 0..20 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let t: Vec<f64> = (0..8).map(|_| r.random_range(-2.0..2.0)).collect();
            for width in [1, 3] {
                let h = caption_embedding(&lm.decoder, &lm.dec_store, t.clone(), width, 10);
                assert!(h.content().iter().all(|&k| k != PAD && k != BOS && k != UNK && k != EOS));
                assert_eq!(*h.tokens.last().unwrap(), EOS);
                assert_eq!(h, caption_embedding(&lm.decoder, &lm.dec_store, t.clone(), width, 10));
            }
        }
    }
}
