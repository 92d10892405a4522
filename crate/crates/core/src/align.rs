//! Weak image/sentence assignment and training of the feature translator.
//!
//! Images and sentences are linked by the number of visual concepts they
//! share. The translator `T` (a one-hidden-layer MLP) maps image features
//! into the sentence embedding space and is trained with
//!
//! `λ_CE · L_CE + λ_R · L_R + λ_adv · L_adv`
//!
//! where `L_CE` decodes a sampled caption from `T(v)` with teacher forcing,
//! `L_R` is the squared distance to the nearest of `K` sampled sentence
//! embeddings, and `L_adv` comes from a concept-conditioned WGAN-GP critic.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::lexicon::ConceptSet;
use crate::lm::{Decoder, TrainError};
use crate::nn::ops::{concat, squared_distance, squared_distance_grad};
use crate::nn::{Adam, Mlp, MlpTrace, ParameterStore, Real, StoreError};
use crate::text::{inverted_index, SentenceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Edge {
    pub sentence: u32,
    /// Number of shared concepts, at least 1.
    pub weight: u32,
}

/// Outgoing edges of one image, sorted by sentence id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphRow {
    pub image: u32,
    edges: Vec<Edge>,
    cumulative: Vec<u64>,
}

impl GraphRow {
    fn new(image: u32, edges: Vec<Edge>) -> Self {
        let mut acc = 0u64;
        let cumulative = edges
            .iter()
            .map(|e| {
                acc += e.weight as u64;
                acc
            })
            .collect();
        Self {
            image,
            edges,
            cumulative,
        }
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn row_sum(&self) -> u64 {
        self.cumulative.last().copied().unwrap_or(0)
    }

    /// `p(S_j | I_i)` as the exact fraction `(weight, row_sum)`.
    pub fn probability_ratio(&self, sentence: u32) -> (u64, u64) {
        let w = self
            .edges
            .binary_search_by_key(&sentence, |e| e.sentence)
            .map_or(0, |k| self.edges[k].weight as u64);
        (w, self.row_sum())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        let total = self.row_sum() as f64;
        self.edges.iter().map(|e| e.weight as f64 / total).collect()
    }

    /// One draw from `p(S_j | I_i)`. A single-edge row returns without
    /// touching the generator.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.edges.len() == 1 {
            return self.edges[0].sentence;
        }
        let draw = rng.random_range(0..self.row_sum());
        self.edges[self.cumulative.partition_point(|&c| c <= draw)].sentence
    }

    /// `k` independent draws with replacement.
    pub fn sample_k<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<u32> {
        (0..k).map(|_| self.sample(rng)).collect()
    }

    /// Sentences tied at the maximal weight.
    pub fn argmax_sentences(&self) -> Vec<u32> {
        let best = self.edges.iter().map(|e| e.weight).max().unwrap_or(0);
        self.edges
            .iter()
            .filter(|e| e.weight == best)
            .map(|e| e.sentence)
            .collect()
    }
}

/// Sparse bipartite graph with edge weight `|C_i ∩ W_j|`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentGraph {
    image_count: usize,
    sentence_count: usize,
    rows: Vec<GraphRow>,
    dropped: Vec<u32>,
}

impl AssignmentGraph {
    /// Images without any overlapping sentence are dropped with a warning.
    pub fn build(images: &[ConceptSet], sentences: &[ConceptSet]) -> Self {
        let bound = images
            .iter()
            .chain(sentences)
            .flat_map(|s| s.iter())
            .map(|c| c.index() + 1)
            .max()
            .unwrap_or(0);
        let postings = inverted_index(sentences, bound);
        let mut rows = Vec::new();
        let mut dropped = Vec::new();
        let mut counts = vec![0u32; sentences.len()];
        let mut touched = Vec::new();
        for (i, set) in images.iter().enumerate() {
            for c in set.iter() {
                for &j in &postings[c.index()] {
                    if counts[j as usize] == 0 {
                        touched.push(j);
                    }
                    counts[j as usize] += 1;
                }
            }
            touched.sort_unstable();
            let edges: Vec<Edge> = touched
                .iter()
                .map(|&j| Edge {
                    sentence: j,
                    weight: core::mem::take(&mut counts[j as usize]),
                })
                .collect();
            touched.clear();
            if edges.is_empty() {
                log::warn!("image {i} shares no concept with any sentence; dropped");
                dropped.push(i as u32);
            } else {
                rows.push(GraphRow::new(i as u32, edges));
            }
        }
        Self {
            image_count: images.len(),
            sentence_count: sentences.len(),
            rows,
            dropped,
        }
    }

    /// Graph with unit-weight edges from explicit `(image, sentence)` pairs,
    /// e.g. ground-truth captions.
    pub fn from_pairs(pairs: &[(u32, u32)], image_count: usize, sentence_count: usize) -> Self {
        let mut unique: Vec<(u32, u32)> = pairs.to_vec();
        unique.sort_unstable();
        unique.dedup();
        let edges: Vec<(u32, u32, u32)> = unique.into_iter().map(|(i, j)| (i, j, 1)).collect();
        Self::from_edges(&edges, image_count, sentence_count)
    }

    /// Graph from `(image, sentence, weight)` triples, e.g. a saved graph
    /// listing. Repeated edges add up; zero weights are ignored.
    pub fn from_edges(edges: &[(u32, u32, u32)], image_count: usize, sentence_count: usize) -> Self {
        let mut per_image: Vec<BTreeMap<u32, u32>> = vec![BTreeMap::new(); image_count];
        for &(i, j, w) in edges {
            assert!((i as usize) < image_count && (j as usize) < sentence_count, "edge ({i}, {j}) out of range");
            if w > 0 {
                *per_image[i as usize].entry(j).or_default() += w;
            }
        }
        let mut rows = Vec::new();
        let mut dropped = Vec::new();
        for (i, js) in per_image.into_iter().enumerate() {
            if js.is_empty() {
                dropped.push(i as u32);
            } else {
                let edges = js.into_iter().map(|(sentence, weight)| Edge { sentence, weight }).collect();
                rows.push(GraphRow::new(i as u32, edges));
            }
        }
        Self {
            image_count,
            sentence_count,
            rows,
            dropped,
        }
    }

    pub fn image_count(&self) -> usize {
        self.image_count
    }

    pub fn sentence_count(&self) -> usize {
        self.sentence_count
    }

    pub fn rows(&self) -> &[GraphRow] {
        &self.rows
    }

    pub fn row(&self, image: u32) -> Option<&GraphRow> {
        self.rows
            .binary_search_by_key(&image, |r| r.image)
            .ok()
            .map(|k| &self.rows[k])
    }

    /// Images left without edges.
    pub fn dropped(&self) -> &[u32] {
        &self.dropped
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.edges.len()).sum()
    }
}

/// Squared distance to the nearest candidate and its index; ties go to the
/// lowest index.
pub fn robust_loss<T: Real>(t: &[T], candidates: &[Vec<T>]) -> (T, usize) {
    assert!(!candidates.is_empty(), "robust_loss needs at least one candidate");
    let mut best = (squared_distance(t, &candidates[0]), 0);
    for (k, c) in candidates.iter().enumerate().skip(1) {
        let d = squared_distance(t, c);
        if d < best.0 {
            best = (d, k);
        }
    }
    best
}

/// Mean squared distance over the candidates.
pub fn mean_loss<T: Real>(t: &[T], candidates: &[Vec<T>]) -> T {
    assert!(!candidates.is_empty(), "mean_loss needs at least one candidate");
    candidates.iter().map(|c| squared_distance(t, c)).sum::<T>() / T::lit(candidates.len() as f64)
}

fn mean_loss_grad<T: Real>(t: &[T], candidates: &[Vec<T>], scale: T) -> Vec<T> {
    let k = T::lit(candidates.len() as f64);
    let two = T::lit(2.0) * scale;
    (0..t.len())
        .map(|d| {
            let mean = candidates.iter().map(|c| c[d]).sum::<T>() / k;
            two * (t[d] - mean)
        })
        .collect()
}

/// Which alignment term the `λ_R` weight applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignLoss {
    /// Minimum over the `K` candidates.
    Robust,
    /// Mean over the `K` candidates (plain L2 alignment).
    Mean,
}

/// Role of translated features in the critic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Critic minimizes its output on translated features ("real") and
    /// maximizes it on sentence embeddings ("fake"); the translator
    /// minimizes `−D(T(v))`.
    Paper,
    /// Roles exchanged: critic maximizes on translated features and the
    /// translator minimizes `+D(T(v))`.
    Swapped,
}

impl Polarity {
    /// Sign of `D(T(v))` in the critic loss.
    fn real_sign(self) -> f64 {
        match self {
            Polarity::Paper => 1.0,
            Polarity::Swapped => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignConfig {
    pub k: usize,
    pub lambda_ce: f64,
    pub lambda_r: f64,
    pub lambda_adv: f64,
    pub gp_coeff: f64,
    pub critic_steps: usize,
    pub hidden: usize,
    pub critic_hidden: usize,
    pub lr: f64,
    pub critic_lr: f64,
    pub batch: usize,
    pub loss: AlignLoss,
    pub train_decoder: bool,
    pub polarity: Polarity,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            k: 10,
            lambda_ce: 1.0,
            lambda_r: 1.0,
            lambda_adv: 0.1,
            gp_coeff: 10.0,
            critic_steps: 5,
            hidden: 512,
            critic_hidden: 256,
            lr: 1e-3,
            critic_lr: 1e-4,
            batch: 64,
            loss: AlignLoss::Robust,
            train_decoder: true,
            polarity: Polarity::Paper,
        }
    }
}

/// Rows of the component ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    /// Translator only with the L2 alignment; decoder frozen.
    AlignOnly,
    /// Teacher-forced captioning from weak pairs only.
    Mle,
    /// Captioning plus L2 alignment.
    JointL2,
    /// Captioning plus min-of-K alignment.
    JointRobust,
    /// Captioning, min-of-K alignment and the adversarial term.
    JointAdv,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [
        Ablation::AlignOnly,
        Ablation::Mle,
        Ablation::JointL2,
        Ablation::JointRobust,
        Ablation::JointAdv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::AlignOnly => "align-only",
            Ablation::Mle => "mle",
            Ablation::JointL2 => "joint-l2",
            Ablation::JointRobust => "joint-robust",
            Ablation::JointAdv => "joint-adv",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    /// Switches the loss terms of `base`; weights that stay on keep their
    /// configured values.
    pub fn apply(self, base: AlignConfig) -> AlignConfig {
        let mut c = base;
        match self {
            Ablation::AlignOnly => {
                c.lambda_ce = 0.0;
                c.lambda_adv = 0.0;
                c.loss = AlignLoss::Mean;
                c.train_decoder = false;
            }
            Ablation::Mle => {
                c.lambda_r = 0.0;
                c.lambda_adv = 0.0;
            }
            Ablation::JointL2 => {
                c.loss = AlignLoss::Mean;
                c.lambda_adv = 0.0;
            }
            Ablation::JointRobust => {
                c.loss = AlignLoss::Robust;
                c.lambda_adv = 0.0;
            }
            Ablation::JointAdv => c.loss = AlignLoss::Robust,
        }
        c
    }
}

/// Image with its feature vector and detected (hyponym-expanded) concepts.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: String,
    pub feature: Vec<f32>,
    pub concepts: ConceptSet,
}

/// Multi-hot encoding of a concept set.
pub fn multi_hot<T: Real>(concepts: &ConceptSet, concept_count: usize) -> Vec<T> {
    let mut v = vec![T::zero(); concept_count];
    for c in concepts.iter() {
        if c.index() < concept_count {
            v[c.index()] = T::one();
        }
    }
    v
}

/// Conditional critic `D(e, c)`: an MLP over `concat(e, c)` with a scalar output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Critic {
    pub mlp: Mlp,
    pub embed_dim: usize,
}

impl Critic {
    pub fn new<T: Real, R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        embed_dim: usize,
        concept_count: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self, StoreError> {
        Ok(Self {
            mlp: Mlp::new(store, "critic", embed_dim + concept_count, hidden, 1, rng)?,
            embed_dim,
        })
    }

    pub fn bind<T: Real>(store: &ParameterStore<T>, embed_dim: usize) -> Result<Self, StoreError> {
        Ok(Self {
            mlp: Mlp::bind(store, "critic")?,
            embed_dim,
        })
    }

    pub fn concept_count(&self) -> usize {
        self.mlp.input_dim() - self.embed_dim
    }

    pub fn forward<T: Real>(&self, store: &ParameterStore<T>, e: &[T], concepts: &[T]) -> MlpTrace<T> {
        assert_eq!(e.len() + concepts.len(), self.mlp.input_dim(), "critic input size");
        self.mlp.forward(store, &concat(e, concepts))
    }

    pub fn score<T: Real>(&self, store: &ParameterStore<T>, e: &[T], concepts: &[T]) -> T {
        self.forward(store, e, concepts).out[0]
    }

    /// `∇_e D` at `x = concat(e, c)` and the hidden-unit weights `u = 1[pre > 0] ⊙ w₂`.
    fn embedding_grad<T: Real>(&self, store: &ParameterStore<T>, x: &[T]) -> (Vec<T>, Vec<T>) {
        let l1 = self.mlp.l1;
        let pre = l1.forward(store, x);
        let w2 = store.value(self.mlp.l2.w);
        let u: Vec<T> = pre
            .iter()
            .zip(w2)
            .map(|(&p, &w)| if p > T::zero() { w } else { T::zero() })
            .collect();
        let w1 = store.value(l1.w);
        let mut g = vec![T::zero(); self.embed_dim];
        for (h, &uh) in u.iter().enumerate() {
            if uh == T::zero() {
                continue;
            }
            let row = &w1[h * l1.in_dim..h * l1.in_dim + self.embed_dim];
            for (gk, &w) in g.iter_mut().zip(row) {
                *gk += uh * w;
            }
        }
        (g, u)
    }

    /// Gradient of the score with respect to the embedding part of the input.
    pub fn input_grad<T: Real>(&self, store: &ParameterStore<T>, e: &[T], concepts: &[T]) -> Vec<T> {
        self.embedding_grad(store, &concat(e, concepts)).0
    }

    /// `coeff · (‖∇_e D(x)‖ − 1)²`.
    pub fn gradient_penalty<T: Real>(&self, store: &ParameterStore<T>, x: &[T], coeff: T) -> T {
        let (g, _) = self.embedding_grad(store, x);
        let n = g.iter().map(|&v| v * v).sum::<T>().sqrt();
        coeff * (n - T::one()) * (n - T::one())
    }

    /// Accumulates `scale ·` the parameter gradient of the penalty. The ReLU
    /// mask is piecewise constant, so only the first-layer embedding columns
    /// and the output weights receive gradient.
    pub fn gradient_penalty_backward<T: Real>(&self, store: &mut ParameterStore<T>, x: &[T], coeff: T, scale: T) {
        let (g, u) = self.embedding_grad(store, x);
        let n = g.iter().map(|&v| v * v).sum::<T>().sqrt();
        if n == T::zero() {
            return;
        }
        let f = T::lit(2.0) * coeff * (n - T::one()) / n * scale;
        let q: Vec<T> = g.iter().map(|&v| v * f).collect();
        let l1 = self.mlp.l1;
        let in_dim = l1.in_dim;
        let d = self.embed_dim;
        // dGP/dw2_h = 1[pre_h > 0] · (A q)_h with A the embedding columns of W1
        let aq: Vec<T> = {
            let w1 = store.value(l1.w);
            (0..l1.out_dim)
                .map(|h| w1[h * in_dim..h * in_dim + d].iter().zip(&q).map(|(&a, &b)| a * b).sum())
                .collect()
        };
        {
            let gw1 = store.grad_mut(l1.w);
            for (h, &uh) in u.iter().enumerate() {
                if uh == T::zero() {
                    continue;
                }
                for (gk, &qk) in gw1[h * in_dim..h * in_dim + d].iter_mut().zip(&q) {
                    *gk += uh * qk;
                }
            }
        }
        let pre = l1.forward(store, x);
        let gw2 = store.grad_mut(self.mlp.l2.w);
        for ((gh, &p), &a) in gw2.iter_mut().zip(&pre).zip(&aq) {
            if p > T::zero() {
                *gh += a;
            }
        }
    }
}

/// Translator, critic and finetuned decoder, each with its own store.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignModel<T> {
    pub translator: Mlp,
    pub critic: Critic,
    pub decoder: Decoder,
    pub tr_store: ParameterStore<T>,
    pub critic_store: ParameterStore<T>,
    pub dec_store: ParameterStore<T>,
}

impl<T: Real> AlignModel<T> {
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        concept_count: usize,
        decoder: Decoder,
        dec_store: ParameterStore<T>,
        cfg: &AlignConfig,
        rng: &mut R,
    ) -> Self {
        let d = decoder.embed_dim();
        let mut tr_store = ParameterStore::new();
        let translator = Mlp::new(&mut tr_store, "tr", feature_dim, cfg.hidden, d, rng).expect("fresh store");
        let mut critic_store = ParameterStore::new();
        let critic = Critic::new(&mut critic_store, d, concept_count, cfg.critic_hidden, rng).expect("fresh store");
        Self {
            translator,
            critic,
            decoder,
            tr_store,
            critic_store,
            dec_store,
        }
    }

    pub fn from_stores(
        tr_store: ParameterStore<T>,
        critic_store: ParameterStore<T>,
        dec_store: ParameterStore<T>,
    ) -> Result<Self, StoreError> {
        let translator = Mlp::bind(&tr_store, "tr")?;
        let decoder = Decoder::bind(&dec_store)?;
        let critic = Critic::bind(&critic_store, decoder.embed_dim())?;
        if translator.output_dim() != decoder.embed_dim() {
            return Err(StoreError::Shape {
                name: "tr.l2.w".into(),
                expected: vec![decoder.embed_dim(), translator.l2.in_dim],
                actual: vec![translator.output_dim(), translator.l2.in_dim],
            });
        }
        Ok(Self {
            translator,
            critic,
            decoder,
            tr_store,
            critic_store,
            dec_store,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.translator.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.translator.output_dim()
    }

    /// `T(v)`. Panics when the feature dimension does not match.
    pub fn translate(&self, feature: &[f32]) -> Vec<T> {
        assert_eq!(
            feature.len(),
            self.feature_dim(),
            "feature has {} values, translator expects {}",
            feature.len(),
            self.feature_dim()
        );
        let v: Vec<T> = feature.iter().map(|&x| T::lit(x as f64)).collect();
        self.translator.forward(&self.tr_store, &v).out
    }

    pub fn cast<U: Real>(&self) -> AlignModel<U> {
        AlignModel {
            translator: self.translator,
            critic: self.critic,
            decoder: self.decoder,
            tr_store: self.tr_store.cast(),
            critic_store: self.critic_store.cast(),
            dec_store: self.dec_store.cast(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.tr_store.zero_grad();
        self.critic_store.zero_grad();
        self.dec_store.zero_grad();
    }
}

/// Everything the alignment objectives read. Sentence embeddings come from
/// the frozen encoder and are computed once.
#[derive(Debug, Clone, Copy)]
pub struct AlignData<'a, T> {
    pub images: &'a [ImageRecord],
    pub records: &'a [SentenceRecord],
    pub text_embeddings: &'a [Vec<T>],
    pub graph: &'a AssignmentGraph,
    pub concept_count: usize,
}

/// Draws for one image in a generator step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenSample {
    pub image: u32,
    /// Caption for the reconstruction term.
    pub caption: Option<u32>,
    /// `K` alignment candidates, drawn independently of the caption.
    pub candidates: Vec<u32>,
}

/// Draws for one image in a critic step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticSample {
    pub image: u32,
    pub fake: u32,
    /// Interpolation weight of the translated feature.
    pub eps: f64,
}

pub fn sample_generator_batch<R: Rng + ?Sized>(
    graph: &AssignmentGraph,
    images: &[u32],
    cfg: &AlignConfig,
    rng: &mut R,
) -> Vec<GenSample> {
    images
        .iter()
        .map(|&i| {
            let row = graph.row(i).expect("image with edges");
            let caption = (cfg.lambda_ce != 0.0).then(|| row.sample(rng));
            let candidates = if cfg.lambda_r != 0.0 {
                row.sample_k(cfg.k, rng)
            } else {
                Vec::new()
            };
            GenSample {
                image: i,
                caption,
                candidates,
            }
        })
        .collect()
}

pub fn sample_critic_batch<R: Rng + ?Sized>(graph: &AssignmentGraph, images: &[u32], rng: &mut R) -> Vec<CriticSample> {
    images
        .iter()
        .map(|&i| {
            let fake = graph.row(i).expect("image with edges").sample(rng);
            CriticSample {
                image: i,
                fake,
                eps: rng.random::<f64>(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GenLoss {
    pub ce: f64,
    pub align: f64,
    pub adv: f64,
    /// Batch mean of the weighted sum.
    pub total: f64,
}

/// Generator objective over pre-drawn samples. With `backprop` set,
/// gradients go to the translator and decoder stores; the critic is only
/// read.
pub fn generator_loss<T: Real>(
    model: &mut AlignModel<T>,
    data: &AlignData<'_, T>,
    samples: &[GenSample],
    cfg: &AlignConfig,
    backprop: bool,
) -> GenLoss {
    let b = T::lit(samples.len() as f64);
    let (l_ce, l_r, l_adv) = (T::lit(cfg.lambda_ce), T::lit(cfg.lambda_r), T::lit(cfg.lambda_adv));
    let adv_sign = T::lit(-cfg.polarity.real_sign());
    let (mut ce_sum, mut r_sum, mut adv_sum, mut total) = (T::zero(), T::zero(), T::zero(), T::zero());
    for s in samples {
        let img = &data.images[s.image as usize];
        let v: Vec<T> = img.feature.iter().map(|&x| T::lit(x as f64)).collect();
        let trace = model.translator.forward(&model.tr_store, &v);
        let e = &trace.out;
        let mut de = vec![T::zero(); e.len()];
        if let (Some(j), true) = (s.caption, cfg.lambda_ce != 0.0) {
            let dec = model
                .decoder
                .teacher_forced(&model.dec_store, e, &data.records[j as usize].tokens);
            ce_sum += dec.loss;
            total += l_ce * dec.loss;
            if backprop {
                let g = model.decoder.backward(&mut model.dec_store, &dec, l_ce / b);
                for (d, g) in de.iter_mut().zip(&g) {
                    *d += *g;
                }
            }
        }
        if cfg.lambda_r != 0.0 && !s.candidates.is_empty() {
            let cands: Vec<Vec<T>> = s
                .candidates
                .iter()
                .map(|&j| data.text_embeddings[j as usize].clone())
                .collect();
            let (l, g) = match cfg.loss {
                AlignLoss::Robust => {
                    let (l, k) = robust_loss(e, &cands);
                    (l, backprop.then(|| squared_distance_grad(e, &cands[k], l_r / b)))
                }
                AlignLoss::Mean => (mean_loss(e, &cands), backprop.then(|| mean_loss_grad(e, &cands, l_r / b))),
            };
            r_sum += l;
            total += l_r * l;
            if let Some(g) = g {
                for (d, g) in de.iter_mut().zip(&g) {
                    *d += *g;
                }
            }
        }
        if cfg.lambda_adv != 0.0 {
            let c = multi_hot::<T>(&img.concepts, data.concept_count);
            let x = concat(e, &c);
            let score = model.critic.mlp.forward(&model.critic_store, &x).out[0];
            let adv = adv_sign * score;
            adv_sum += adv;
            total += l_adv * adv;
            if backprop {
                let (g, _) = model.critic.embedding_grad(&model.critic_store, &x);
                let f = adv_sign * l_adv / b;
                for (d, g) in de.iter_mut().zip(&g) {
                    *d += *g * f;
                }
            }
        }
        if backprop {
            model.translator.backward(&mut model.tr_store, &trace, &de, false);
        }
    }
    GenLoss {
        ce: (ce_sum / b).as_f64(),
        align: (r_sum / b).as_f64(),
        adv: (adv_sum / b).as_f64(),
        total: (total / b).as_f64(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CriticMetrics {
    /// Critic loss including the penalty.
    pub loss: f64,
    /// Mean critic margin of sentence embeddings over translations (for the
    /// paper polarity); the Wasserstein estimate.
    pub wasserstein: f64,
    pub gp: f64,
}

/// Critic objective over pre-drawn samples; translations are treated as
/// constants. Gradients go to the critic store when `backprop` is set.
pub fn critic_loss<T: Real>(
    model: &mut AlignModel<T>,
    data: &AlignData<'_, T>,
    samples: &[CriticSample],
    cfg: &AlignConfig,
    backprop: bool,
) -> CriticMetrics {
    let b = T::lit(samples.len() as f64);
    let sign = T::lit(cfg.polarity.real_sign());
    let coeff = T::lit(cfg.gp_coeff);
    let (mut margin, mut gp) = (T::zero(), T::zero());
    for s in samples {
        let img = &data.images[s.image as usize];
        let real = model.translate(&img.feature);
        let fake = &data.text_embeddings[s.fake as usize];
        let c = multi_hot::<T>(&img.concepts, data.concept_count);
        let tr_real = model.critic.forward(&model.critic_store, &real, &c);
        let tr_fake = model.critic.forward(&model.critic_store, fake, &c);
        margin += tr_real.out[0] - tr_fake.out[0];
        let eps = T::lit(s.eps);
        let mix: Vec<T> = real
            .iter()
            .zip(fake)
            .map(|(&r, &f)| eps * r + (T::one() - eps) * f)
            .collect();
        let x = concat(&mix, &c);
        gp += model.critic.gradient_penalty(&model.critic_store, &x, coeff);
        if backprop {
            model.critic.mlp.backward(&mut model.critic_store, &tr_real, &[sign / b], false);
            model.critic.mlp.backward(&mut model.critic_store, &tr_fake, &[-sign / b], false);
            model
                .critic
                .gradient_penalty_backward(&mut model.critic_store, &x, coeff, T::one() / b);
        }
    }
    let margin = (margin / b).as_f64();
    let gp = (gp / b).as_f64();
    let s = cfg.polarity.real_sign();
    CriticMetrics {
        loss: s * margin + gp,
        wasserstein: -s * margin,
        gp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AlignEpochLog {
    pub epoch: usize,
    pub ce: f64,
    pub align: f64,
    pub adv: f64,
    pub total: f64,
    pub critic: CriticMetrics,
    pub critic_updates: usize,
}

/// Optimizer state for alignment training.
#[derive(Debug, Clone)]
pub struct AlignTrainer<T> {
    pub config: AlignConfig,
    tr_opt: Adam<T>,
    dec_opt: Adam<T>,
    critic_opt: Adam<T>,
    epoch: usize,
}

impl<T: Real> AlignTrainer<T> {
    pub fn new(model: &AlignModel<T>, config: AlignConfig) -> Self {
        Self {
            tr_opt: Adam::new(&model.tr_store, config.lr),
            dec_opt: Adam::new(&model.dec_store, config.lr),
            critic_opt: Adam::new(&model.critic_store, config.critic_lr).with_betas(0.5, 0.9),
            config,
            epoch: 0,
        }
    }

    /// One pass over the images that have edges, in shuffled order. Per
    /// batch the critic is updated `critic_steps` times (only when the
    /// adversarial term is on), then translator and decoder once.
    pub fn epoch<R: Rng + ?Sized>(
        &mut self,
        model: &mut AlignModel<T>,
        data: &AlignData<'_, T>,
        rng: &mut R,
        mut on_critic: impl FnMut(&CriticMetrics),
    ) -> Result<AlignEpochLog, TrainError> {
        self.epoch += 1;
        let cfg = self.config;
        let mut order: Vec<u32> = data
            .graph
            .rows()
            .iter()
            .map(|r| r.image)
            .filter(|&i| !data.images[i as usize].concepts.is_empty())
            .collect();
        order.shuffle(rng);
        let mut log = AlignEpochLog {
            epoch: self.epoch,
            ..Default::default()
        };
        let mut batches = 0usize;
        let diverged = |loss: f64| TrainError::Diverged {
            epoch: self.epoch,
            loss,
        };
        for chunk in order.chunks(cfg.batch.max(1)) {
            if cfg.lambda_adv != 0.0 {
                for _ in 0..cfg.critic_steps.max(1) {
                    let samples = sample_critic_batch(data.graph, chunk, rng);
                    model.critic_store.zero_grad();
                    let m = critic_loss(model, data, &samples, &cfg, true);
                    if !m.loss.is_finite() {
                        return Err(diverged(m.loss));
                    }
                    self.critic_opt.step(&mut model.critic_store);
                    on_critic(&m);
                    log.critic.loss += m.loss;
                    log.critic.wasserstein += m.wasserstein;
                    log.critic.gp += m.gp;
                    log.critic_updates += 1;
                }
            }
            let samples = sample_generator_batch(data.graph, chunk, &cfg, rng);
            model.tr_store.zero_grad();
            model.dec_store.zero_grad();
            let l = generator_loss(model, data, &samples, &cfg, true);
            if !l.total.is_finite() {
                return Err(diverged(l.total));
            }
            self.tr_opt.step(&mut model.tr_store);
            if cfg.train_decoder {
                self.dec_opt.step(&mut model.dec_store);
            } else {
                model.dec_store.zero_grad();
            }
            log.ce += l.ce;
            log.align += l.align;
            log.adv += l.adv;
            log.total += l.total;
            batches += 1;
        }
        if batches > 0 {
            let n = batches as f64;
            log.ce /= n;
            log.align /= n;
            log.adv /= n;
            log.total /= n;
        }
        if log.critic_updates > 0 {
            let n = log.critic_updates as f64;
            log.critic.loss /= n;
            log.critic.wasserstein /= n;
            log.critic.gp /= n;
        }
        Ok(log)
    }
}

/// Trains for `epochs` passes, reporting each epoch to `on_epoch`.
pub fn train_align<T: Real, R: Rng + ?Sized>(
    model: &mut AlignModel<T>,
    data: &AlignData<'_, T>,
    config: &AlignConfig,
    epochs: usize,
    rng: &mut R,
    mut on_epoch: impl FnMut(&AlignEpochLog, &AlignModel<T>),
) -> Result<Vec<AlignEpochLog>, TrainError> {
    let mut trainer = AlignTrainer::new(model, *config);
    let mut logs = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let log = trainer.epoch(model, data, rng, |_| {})?;
        on_epoch(&log, model);
        logs.push(log);
    }
    Ok(logs)
}
