//! Sentence autoencoder whose embedding space is structured by visual
//! concepts.
//!
//! The encoder runs a GRU over word vectors and projects the last hidden
//! state to the embedding `t`. The decoder starts from a linear map of `t`
//! and reconstructs the sentence with teacher forcing. Training minimizes
//! `L_CE + λ_t · L_t`, where `L_t` is a squared-L2 triplet loss over
//! concept-sharing (positive) and concept-disjoint (negative) sentences.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::eval::intra_inter_ratio;
use crate::nn::ops::{softmax_cross_entropy, squared_distance};
use crate::nn::{Adam, Embedding, Gru, GruStep, Linear, ParameterStore, Real, StoreError};
use crate::text::{Corpus, PairIndex, SentenceRecord, TripletSample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmConfig {
    pub word_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub margin: f64,
    pub lambda_t: f64,
    pub batch: usize,
    pub lr_enc: f64,
    pub lr_dec: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            word_dim: 200,
            hidden: 200,
            embed_dim: 256,
            margin: 0.5,
            lambda_t: 0.1,
            batch: 64,
            lr_enc: 1e-4,
            lr_dec: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Encoder {
    pub embed: Embedding,
    pub gru: Gru,
    pub proj: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderTrace<T> {
    tokens: Vec<u32>,
    steps: Vec<GruStep<T>>,
    pub embedding: Vec<T>,
}

impl Encoder {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        vocab: usize,
        word_dim: usize,
        hidden: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self, StoreError> {
        Ok(Self {
            embed: Embedding::new(store, "embed", vocab, word_dim, rng)?,
            gru: Gru::new(store, "gru", word_dim, hidden, rng)?,
            proj: Linear::new(store, "proj", hidden, embed_dim, rng)?,
        })
    }

    pub fn bind<T: Real>(store: &ParameterStore<T>) -> Result<Self, StoreError> {
        Ok(Self {
            embed: Embedding::bind(store, "embed")?,
            gru: Gru::bind(store, "gru")?,
            proj: Linear::bind(store, "proj")?,
        })
    }

    pub fn embed_dim(&self) -> usize {
        self.proj.out_dim
    }

    pub fn forward<T: Real>(&self, store: &ParameterStore<T>, tokens: &[u32]) -> EncoderTrace<T> {
        assert!(!tokens.is_empty(), "encoder input must contain at least one token");
        let mut h = vec![T::zero(); self.gru.hidden];
        let mut steps = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            let step = self.gru.step(store, self.embed.lookup(store, tok), &h);
            h.clone_from(&step.h);
            steps.push(step);
        }
        EncoderTrace {
            tokens: tokens.to_vec(),
            embedding: self.proj.forward(store, &h),
            steps,
        }
    }

    pub fn encode<T: Real>(&self, store: &ParameterStore<T>, tokens: &[u32]) -> Vec<T> {
        self.forward(store, tokens).embedding
    }

    pub fn backward<T: Real>(&self, store: &mut ParameterStore<T>, trace: &EncoderTrace<T>, d_embedding: &[T]) {
        let last = &trace.steps.last().expect("non-empty trace").h;
        let mut dh = self.proj.backward(store, last, d_embedding);
        for (step, &tok) in trace.steps.iter().zip(&trace.tokens).rev() {
            let (dx, dh_prev) = self.gru.step_backward(store, step, &dh);
            self.embed.backward(store, tok, &dx);
            dh = dh_prev;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decoder {
    pub embed: Embedding,
    pub init: Linear,
    pub gru: Gru,
    pub out: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderTrace<T> {
    t: Vec<T>,
    inputs: Vec<u32>,
    steps: Vec<GruStep<T>>,
    dlogits: Vec<Vec<T>>,
    /// Mean per-word negative log-likelihood.
    pub loss: T,
}

impl Decoder {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        vocab: usize,
        word_dim: usize,
        hidden: usize,
        embed_dim: usize,
        rng: &mut R,
    ) -> Result<Self, StoreError> {
        Ok(Self {
            embed: Embedding::new(store, "embed", vocab, word_dim, rng)?,
            init: Linear::new(store, "init", embed_dim, hidden, rng)?,
            gru: Gru::new(store, "gru", word_dim, hidden, rng)?,
            out: Linear::new(store, "out", hidden, vocab, rng)?,
        })
    }

    pub fn bind<T: Real>(store: &ParameterStore<T>) -> Result<Self, StoreError> {
        Ok(Self {
            embed: Embedding::bind(store, "embed")?,
            init: Linear::bind(store, "init")?,
            gru: Gru::bind(store, "gru")?,
            out: Linear::bind(store, "out")?,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.out.out_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.init.in_dim
    }

    /// Initial hidden state for embedding `t`.
    pub fn start<T: Real>(&self, store: &ParameterStore<T>, t: &[T]) -> Vec<T> {
        self.init.forward(store, t)
    }

    /// Feeds `token` and returns the next state with its output logits.
    pub fn step<T: Real>(&self, store: &ParameterStore<T>, h: &[T], token: u32) -> (Vec<T>, Vec<T>) {
        let s = self.gru.step(store, self.embed.lookup(store, token), h);
        let logits = self.out.forward(store, &s.h);
        (s.h, logits)
    }

    /// Teacher-forced pass over `target = bos w1 .. wn eos`: the gold previous
    /// token is fed at each step and every following token is scored.
    pub fn teacher_forced<T: Real>(
        &self,
        store: &ParameterStore<T>,
        t: &[T],
        target: &[u32],
    ) -> DecoderTrace<T> {
        assert!(target.len() >= 2, "decoder target needs at least bos and eos");
        let mut h = self.start(store, t);
        let n = target.len() - 1;
        let mut steps = Vec::with_capacity(n);
        let mut dlogits = Vec::with_capacity(n);
        let mut total = T::zero();
        for k in 0..n {
            let s = self.gru.step(store, self.embed.lookup(store, target[k]), &h);
            let logits = self.out.forward(store, &s.h);
            let (loss, grad) = softmax_cross_entropy(&logits, target[k + 1] as usize);
            total += loss;
            h.clone_from(&s.h);
            steps.push(s);
            dlogits.push(grad);
        }
        DecoderTrace {
            t: t.to_vec(),
            inputs: target[..n].to_vec(),
            steps,
            dlogits,
            loss: total / T::lit(n as f64),
        }
    }

    /// Backpropagates `scale · loss` and returns its gradient with respect to `t`.
    pub fn backward<T: Real>(&self, store: &mut ParameterStore<T>, trace: &DecoderTrace<T>, scale: T) -> Vec<T> {
        let per_step = scale / T::lit(trace.steps.len() as f64);
        let mut dh = vec![T::zero(); self.gru.hidden];
        for k in (0..trace.steps.len()).rev() {
            let s = &trace.steps[k];
            let dl: Vec<T> = trace.dlogits[k].iter().map(|&g| g * per_step).collect();
            self.out.backward_into(store, &s.h, &dl, Some(&mut dh));
            let (dx, dh_prev) = self.gru.step_backward(store, s, &dh);
            self.embed.backward(store, trace.inputs[k], &dx);
            dh = dh_prev;
        }
        self.init.backward(store, &trace.t, &dh)
    }
}

/// `max(0, ‖t − t⁺‖² − ‖t − t⁻‖² + m)`.
pub fn triplet_loss<T: Real>(t: &[T], pos: &[T], neg: &[T], margin: T) -> T {
    let v = squared_distance(t, pos) - squared_distance(t, neg) + margin;
    v.max(T::zero())
}

/// Gradients of the triplet loss with respect to `(t, t⁺, t⁻)`, scaled; all
/// zero when the margin is satisfied.
pub fn triplet_grad<T: Real>(t: &[T], pos: &[T], neg: &[T], margin: T, scale: T) -> [Vec<T>; 3] {
    let d = t.len();
    if triplet_loss(t, pos, neg, margin) <= T::zero() {
        return [vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d]];
    }
    let two = T::lit(2.0) * scale;
    let dt = (0..d).map(|k| two * (neg[k] - pos[k])).collect();
    let dp = (0..d).map(|k| -two * (t[k] - pos[k])).collect();
    let dn = (0..d).map(|k| two * (t[k] - neg[k])).collect();
    [dt, dp, dn]
}

/// Encoder and decoder with their separate parameter stores.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel<T> {
    pub encoder: Encoder,
    pub decoder: Decoder,
    pub enc_store: ParameterStore<T>,
    pub dec_store: ParameterStore<T>,
}

impl<T: Real> LanguageModel<T> {
    pub fn new<R: Rng + ?Sized>(vocab: usize, cfg: &LmConfig, rng: &mut R) -> Self {
        let mut enc_store = ParameterStore::new();
        let mut dec_store = ParameterStore::new();
        let encoder = Encoder::new(&mut enc_store, vocab, cfg.word_dim, cfg.hidden, cfg.embed_dim, rng)
            .expect("fresh store");
        let decoder = Decoder::new(&mut dec_store, vocab, cfg.word_dim, cfg.hidden, cfg.embed_dim, rng)
            .expect("fresh store");
        Self {
            encoder,
            decoder,
            enc_store,
            dec_store,
        }
    }

    pub fn from_stores(enc_store: ParameterStore<T>, dec_store: ParameterStore<T>) -> Result<Self, StoreError> {
        let encoder = Encoder::bind(&enc_store)?;
        let decoder = Decoder::bind(&dec_store)?;
        if encoder.embed_dim() != decoder.embed_dim() {
            return Err(StoreError::Shape {
                name: "init.w".into(),
                expected: vec![decoder.gru.hidden, encoder.embed_dim()],
                actual: vec![decoder.gru.hidden, decoder.embed_dim()],
            });
        }
        Ok(Self {
            encoder,
            decoder,
            enc_store,
            dec_store,
        })
    }

    pub fn encode(&self, tokens: &[u32]) -> Vec<T> {
        self.encoder.encode(&self.enc_store, tokens)
    }

    pub fn cast<U: Real>(&self) -> LanguageModel<U> {
        LanguageModel {
            encoder: self.encoder,
            decoder: self.decoder,
            enc_store: self.enc_store.cast(),
            dec_store: self.dec_store.cast(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.enc_store.zero_grad();
        self.dec_store.zero_grad();
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmLoss {
    /// Batch mean of the per-sentence reconstruction loss.
    pub ce: f64,
    /// Mean triplet loss over anchors that had a triplet (0 when none).
    pub triplet: f64,
    pub triplets: usize,
    /// `mean(L_CE + λ_t · L_t)`, the optimized quantity.
    pub total: f64,
}

/// Batch loss `mean_j(L_CE(j) + λ_t · L_t(j))`, accumulating gradients into
/// both stores when `backprop` is set. Anchors without a triplet contribute
/// reconstruction only.
pub fn lm_batch_loss<T: Real>(
    model: &mut LanguageModel<T>,
    records: &[SentenceRecord],
    batch: &[(u32, Option<TripletSample>)],
    margin: f64,
    lambda_t: f64,
    backprop: bool,
) -> LmLoss {
    let b = T::lit(batch.len() as f64);
    let lam = T::lit(lambda_t);
    let m = T::lit(margin);
    let (mut ce_sum, mut trip_sum, mut total_sum) = (T::zero(), T::zero(), T::zero());
    let mut triplets = 0;
    for &(anchor, triplet) in batch {
        let rec = &records[anchor as usize];
        let enc = model.encoder.forward(&model.enc_store, rec.content());
        let dec = model.decoder.teacher_forced(&model.dec_store, &enc.embedding, &rec.tokens);
        let mut item = dec.loss;
        ce_sum += dec.loss;
        let mut dt = if backprop {
            model.decoder.backward(&mut model.dec_store, &dec, T::one() / b)
        } else {
            Vec::new()
        };
        if let (Some(tr), true) = (triplet, lambda_t != 0.0) {
            let pos = model.encoder.forward(&model.enc_store, records[tr.positive as usize].content());
            let neg = model.encoder.forward(&model.enc_store, records[tr.negative as usize].content());
            let lt = triplet_loss(&enc.embedding, &pos.embedding, &neg.embedding, m);
            trip_sum += lt;
            triplets += 1;
            item += lam * lt;
            if backprop && lt > T::zero() {
                let [ga, gp, gn] = triplet_grad(&enc.embedding, &pos.embedding, &neg.embedding, m, lam / b);
                for (d, g) in dt.iter_mut().zip(&ga) {
                    *d += *g;
                }
                model.encoder.backward(&mut model.enc_store, &pos, &gp);
                model.encoder.backward(&mut model.enc_store, &neg, &gn);
            }
        }
        if backprop {
            model.encoder.backward(&mut model.enc_store, &enc, &dt);
        }
        total_sum += item;
    }
    LmLoss {
        ce: (ce_sum / b).as_f64(),
        triplet: if triplets > 0 {
            trip_sum.as_f64() / triplets as f64
        } else {
            0.0
        },
        triplets,
        total: (total_sum / b).as_f64(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub ce: f64,
    pub triplet: f64,
    pub ratio_intra_inter: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TrainError {
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

/// Embeddings of every corpus sentence.
pub fn embed_corpus<T: Real>(model: &LanguageModel<T>, records: &[SentenceRecord]) -> Vec<Vec<T>> {
    records.iter().map(|r| model.encode(r.content())).collect()
}

/// Adam state for language model training; one optimizer per store so the
/// encoder and decoder keep their own learning rates.
#[derive(Debug, Clone)]
pub struct LmTrainer<T> {
    pub config: LmConfig,
    enc_opt: Adam<T>,
    dec_opt: Adam<T>,
    epoch: usize,
}

impl<T: Real> LmTrainer<T> {
    pub fn new(model: &LanguageModel<T>, config: LmConfig) -> Self {
        Self {
            enc_opt: Adam::new(&model.enc_store, config.lr_enc),
            dec_opt: Adam::new(&model.dec_store, config.lr_dec),
            config,
            epoch: 0,
        }
    }

    /// One pass over the corpus in shuffled order. `labels` (cluster label per
    /// sentence) enables the intra/inter distance ratio in the log.
    pub fn epoch<R: Rng + ?Sized>(
        &mut self,
        model: &mut LanguageModel<T>,
        corpus: &Corpus,
        index: &PairIndex,
        labels: Option<&[Option<u32>]>,
        rng: &mut R,
    ) -> Result<EpochLog, TrainError> {
        self.epoch += 1;
        let cfg = self.config;
        let mut order: Vec<u32> = (0..corpus.len() as u32).collect();
        order.shuffle(rng);
        let (mut ce, mut trip, mut trip_n, mut batches) = (0.0, 0.0, 0usize, 0usize);
        for chunk in order.chunks(cfg.batch.max(1)) {
            let batch: Vec<(u32, Option<TripletSample>)> = chunk
                .iter()
                .map(|&j| {
                    let tr = if cfg.lambda_t != 0.0 && index.has_triplet(j) {
                        index.sample_triplet(j, rng).ok()
                    } else {
                        None
                    };
                    (j, tr)
                })
                .collect();
            model.zero_grad();
            let loss = lm_batch_loss(model, &corpus.records, &batch, cfg.margin, cfg.lambda_t, true);
            if !loss.total.is_finite() {
                return Err(TrainError::Diverged {
                    epoch: self.epoch,
                    loss: loss.total,
                });
            }
            self.enc_opt.step(&mut model.enc_store);
            self.dec_opt.step(&mut model.dec_store);
            ce += loss.ce;
            trip += loss.triplet * loss.triplets as f64;
            trip_n += loss.triplets;
            batches += 1;
        }
        let ratio = labels.and_then(|l| {
            let emb: Vec<Vec<f64>> = embed_corpus(model, &corpus.records)
                .into_iter()
                .map(|e| e.into_iter().map(Real::as_f64).collect())
                .collect();
            intra_inter_ratio(&emb, l)
        });
        Ok(EpochLog {
            epoch: self.epoch,
            ce: ce / batches as f64,
            triplet: if trip_n > 0 { trip / trip_n as f64 } else { 0.0 },
            ratio_intra_inter: ratio,
        })
    }
}

/// Trains for `epochs` passes, reporting each epoch to `on_epoch`.
pub fn train_lm<T: Real, R: Rng + ?Sized>(
    model: &mut LanguageModel<T>,
    corpus: &Corpus,
    index: &PairIndex,
    config: &LmConfig,
    epochs: usize,
    labels: Option<&[Option<u32>]>,
    rng: &mut R,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<Vec<EpochLog>, TrainError> {
    let mut trainer = LmTrainer::new(model, *config);
    let mut logs = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let log = trainer.epoch(model, corpus, index, labels, rng)?;
        on_epoch(&log);
        logs.push(log);
    }
    Ok(logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::ConceptLexicon;
    use crate::nn::{gradient_check, GradCheckOptions};
    use crate::text::{build_corpus, CorpusOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg() -> LmConfig {
        LmConfig {
            word_dim: 6,
            hidden: 8,
            embed_dim: 8,
            margin: 0.5,
            lambda_t: 0.1,
            batch: 4,
            lr_enc: 1e-3,
            lr_dec: 1e-3,
        }
    }

    fn tiny_corpus() -> (Corpus, PairIndex) {
        let lex = ConceptLexicon::parse(
            "dog\tdog.n.01\nball\tball.n.01\ngrass\tgrass.n.01\ncar\tcar.n.01\nroad\troad.n.01\n",
        )
        .unwrap();
        let corpus = build_corpus(
            [
                "a dog with a ball on grass",
                "the dog chases the ball",
                "a car on the road",
                "the red car drives on a road",
                "grass and a ball",
            ],
            &lex,
            CorpusOptions { min_count: 1, max_len: 10 },
        )
        .unwrap();
        let idx = PairIndex::build(&corpus.concept_sets());
        (corpus, idx)
    }

    #[test]
    fn triplet_loss_cases() {
        // ‖t−t⁺‖² = 0.1, ‖t−t⁻‖² = 0.5
        let t = [0.0f64];
        let p = [0.1f64.sqrt()];
        let n = [0.5f64.sqrt()];
        assert_eq!(triplet_loss(&t, &p, &n, 0.2), 0.0);
        let v = triplet_loss(&t, &n, &p, 0.2);
        assert!((v - 0.6).abs() < 1e-12);
        assert!((triplet_loss(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0], 0.2f64) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn triplet_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |v: &[f64]| triplet_loss(&v[..4], &v[4..8], &v[8..], 3.0);
            let num = crate::nn::finite_difference(f, &x, 1e-6);
            let [a, b, c] = triplet_grad(&x[..4], &x[4..8], &x[8..], 3.0, 1.0);
            let ana: Vec<f64> = a.into_iter().chain(b).chain(c).collect();
            for (u, v) in num.iter().zip(&ana) {
                assert!((u - v).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn encoding_is_deterministic_and_batch_independent() {
        let (corpus, _) = tiny_corpus();
        let model = LanguageModel::<f32>::new(corpus.vocab.len(), &tiny_cfg(), &mut ChaCha8Rng::seed_from_u64(1));
        let again = LanguageModel::<f32>::new(corpus.vocab.len(), &tiny_cfg(), &mut ChaCha8Rng::seed_from_u64(1));
        let a = embed_corpus(&model, &corpus.records);
        let mut rev = corpus.records.clone();
        rev.reverse();
        let mut b = embed_corpus(&again, &rev);
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_lambda_loss_is_reconstruction_only() {
        let (corpus, idx) = tiny_corpus();
        let mut model = LanguageModel::<f64>::new(corpus.vocab.len(), &tiny_cfg(), &mut ChaCha8Rng::seed_from_u64(2));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let batch: Vec<_> = (0..5u32).map(|j| (j, idx.sample_triplet(j, &mut rng).ok())).collect();
        assert!(batch.iter().any(|b| b.1.is_some()));
        let loss = lm_batch_loss(&mut model, &corpus.records, &batch, 0.5, 0.0, false);
        assert_eq!(loss.total.to_bits(), loss.ce.to_bits());
        assert_eq!(loss.triplet, 0.0);
    }

    #[test]
    fn lm_loss_gradient_matches_central_differences() {
        let (corpus, idx) = tiny_corpus();
        for seed in 0..3 {
            let model = LanguageModel::<f64>::new(corpus.vocab.len(), &tiny_cfg(), &mut ChaCha8Rng::seed_from_u64(seed));
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 50);
            let batch: Vec<_> = (0..5u32).map(|j| (j, idx.sample_triplet(j, &mut rng).ok())).collect();
            let (encoder, decoder) = (model.encoder, model.decoder);
            let mut stores = [model.enc_store, model.dec_store];
            // margin large enough that every triplet is active
            let report = gradient_check(
                &mut stores,
                |s| {
                    let [e, d] = s else { unreachable!() };
                    let mut m = LanguageModel {
                        encoder,
                        decoder,
                        enc_store: core::mem::take(e),
                        dec_store: core::mem::take(d),
                    };
                    let loss = lm_batch_loss(&mut m, &corpus.records, &batch, 5.0, 0.7, true);
                    *e = m.enc_store;
                    *d = m.dec_store;
                    loss.total
                },
                GradCheckOptions::default(),
            );
            assert!(report.passed(), "seed {seed}: {:?}", report.failures().collect::<Vec<_>>());
        }
    }

    #[test]
    fn training_reduces_reconstruction_loss() {
        let (corpus, idx) = tiny_corpus();
        let cfg = LmConfig { lr_enc: 1e-2, lr_dec: 1e-2, ..tiny_cfg() };
        let mut model = LanguageModel::<f32>::new(corpus.vocab.len(), &cfg, &mut ChaCha8Rng::seed_from_u64(4));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let logs = train_lm(&mut model, &corpus, &idx, &cfg, 60, None, &mut rng, |_| {}).unwrap();
        assert!(logs.last().unwrap().ce < 0.5 * logs[0].ce, "{:?}", (logs[0], logs.last()));
    }

    #[test]
    fn zero_lambda_training_logs_no_triplet_term() {
        let (corpus, idx) = tiny_corpus();
        let cfg = LmConfig { lambda_t: 0.0, ..tiny_cfg() };
        let mut model = LanguageModel::<f32>::new(corpus.vocab.len(), &cfg, &mut ChaCha8Rng::seed_from_u64(4));
        let logs = train_lm(&mut model, &corpus, &idx, &cfg, 3, None, &mut ChaCha8Rng::seed_from_u64(0), |_| {}).unwrap();
        assert!(logs.iter().all(|l| l.triplet == 0.0));
    }
}
