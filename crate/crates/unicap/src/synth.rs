//! Synthetic captioning world for desk-scale runs.
//!
//! Concepts are grouped into clusters. A scene picks a primary concept and
//! adds other members of its cluster at random. Sentences name every concept
//! of their scene surrounded by filler words; image features are a fixed
//! random linear map of the noisy concept indicator. A simulated detector
//! reports a subset of the visible concepts.
//!
//! Unless co-occurrence is the identity, concepts 0 and 1 form the discovery
//! probe: 0 is detectable, 1 never is, and 1 accompanies every scene with 0
//! (or never does, in the control world).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::formats::{save_detections, save_features, save_pairs_tsv, write_atomic};

const NOUNS: &[&str] = &[
    "dog", "cat", "horse", "boat", "water", "bridge", "pizza", "plate", "table", "train", "track",
    "station", "kite", "beach", "sky", "bus", "street", "sign", "giraffe", "tree", "fence", "clock",
    "tower", "building", "skier", "snow", "mountain", "laptop", "desk", "chair", "elephant", "river",
    "grass", "surfer", "wave", "board", "cake", "candle", "knife", "bird", "branch", "nest",
    "bicycle", "helmet", "road", "umbrella", "rain", "crowd", "sheep", "field", "barn", "airplane",
    "runway", "cloud", "bench", "park", "pigeon", "toilet", "sink", "mirror",
];
const ADJECTIVES: &[&str] = &[
    "small", "large", "old", "young", "red", "blue", "green", "white", "black", "brown", "tall",
    "tiny", "shiny", "dirty", "quiet", "busy", "pale", "bright", "dark", "wet", "dry", "soft",
    "heavy", "plain",
];
const VERBS: &[&str] = &[
    "stands", "sits", "rests", "waits", "appears", "lies", "stays", "remains", "moves", "turns",
    "leans", "hides", "shows", "glows", "sleeps", "rolls", "shines", "floats", "drifts", "lingers",
];
const PLACES: &[&str] = &[
    "in the city", "near the house", "by the road", "on a hill", "in a yard", "at the corner",
    "behind a wall", "under a roof", "in the open", "at the market", "beside a lake", "in a garden",
    "near a gate", "by the shore", "in a square", "on the lawn",
];
const TIMES: &[&str] = &[
    "at night", "in the morning", "during the day", "at dusk", "at noon", "in winter", "in summer",
    "after lunch", "before dawn", "on sunday", "in spring", "at sunset",
];
const MANNERS: &[&str] = &[
    "quietly", "calmly", "together", "alone", "slowly", "happily", "patiently", "still", "idly",
    "gently", "proudly", "silently",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cooccurrence {
    /// Cluster members join the primary concept with this probability.
    Clustered(f64),
    /// Every scene holds exactly its primary concept.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Probe {
    /// Concept 1 is present whenever concept 0 is.
    Discovery,
    /// No co-occurrence at all: every scene holds one concept. Concept 1
    /// stays undetectable, so it never shares a scene with concept 0.
    Control,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_images: usize,
    pub n_sentences: usize,
    pub n_concepts: usize,
    pub cluster_size: usize,
    pub cooccurrence: Cooccurrence,
    pub probe: Probe,
    pub feature_dim: usize,
    pub noise: f64,
    pub references_per_image: usize,
    /// Probability that the detector misses a visible detectable concept.
    pub miss_rate: f64,
    /// Probability that the detector adds one spurious detectable concept.
    pub false_positive_rate: f64,
    /// Concepts the detector never reports besides the probe's hidden one.
    pub hidden: Vec<usize>,
}

impl SynthConfig {
    pub fn new(seed: u64, n_images: usize, n_sentences: usize, n_concepts: usize) -> Self {
        Self {
            seed,
            n_images,
            n_sentences,
            n_concepts,
            cluster_size: 3,
            cooccurrence: Cooccurrence::Clustered(0.6),
            probe: Probe::Discovery,
            feature_dim: 2048,
            noise: 0.1,
            references_per_image: 5,
            miss_rate: 0.0,
            false_positive_rate: 0.0,
            hidden: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_concepts < 4 {
            bail!("n_concepts must be at least 4, got {}", self.n_concepts);
        }
        if self.cluster_size == 0 {
            bail!("cluster_size must be at least 1");
        }
        if self.references_per_image == 0 {
            bail!("references_per_image must be at least 1");
        }
        if self.feature_dim == 0 {
            bail!("feature_dim must be at least 1");
        }
        if self.n_images > self.n_sentences {
            bail!(
                "n_sentences ({}) must be at least n_images ({}) since every image contributes one corpus sentence",
                self.n_sentences,
                self.n_images
            );
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if let Cooccurrence::Clustered(p) = self.cooccurrence {
            if !unit(p) {
                bail!("co-occurrence probability {p} outside [0, 1]");
            }
        }
        if !unit(self.miss_rate) || !unit(self.false_positive_rate) {
            bail!("detector rates must lie in [0, 1]");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            bail!("noise must be a non-negative number");
        }
        if let Some(c) = self.hidden.iter().find(|&&c| c >= self.n_concepts) {
            bail!("hidden concept {c} out of range");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConceptInfo {
    pub id: String,
    pub word: String,
    pub cluster: u32,
    pub detectable: bool,
}

/// Concept inventory, scene model, feature map and detector of one seed.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub config: SynthConfig,
    pub concepts: Vec<ConceptInfo>,
    /// `(detectable, hidden)` concept pair, absent for identity co-occurrence.
    pub probe: Option<(usize, usize)>,
    /// Row-major `feature_dim x n_concepts`.
    projection: Vec<f32>,
}

fn noun(i: usize) -> String {
    let base = NOUNS[i % NOUNS.len()];
    match i / NOUNS.len() {
        0 => base.to_string(),
        k => format!("{base}{}", k + 1),
    }
}

/// Independent generator streams derived from the world seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

impl SyntheticWorld {
    pub fn new(config: SynthConfig) -> Result<Self> {
        config.validate()?;
        let n = config.n_concepts;
        let probe = match config.cooccurrence {
            Cooccurrence::Identity => None,
            Cooccurrence::Clustered(_) => Some((0, 1)),
        };
        let concepts = (0..n)
            .map(|i| {
                let word = noun(i);
                ConceptInfo {
                    id: format!("{word}.n.01"),
                    word,
                    cluster: (i / config.cluster_size) as u32,
                    detectable: probe.is_none_or(|(_, b)| b != i) && !config.hidden.contains(&i),
                }
            })
            .collect();
        let mut rng = stream(config.seed, 1);
        let normal = Normal::new(0.0, 1.0 / (n as f64).sqrt()).expect("valid normal");
        let projection = (0..config.feature_dim * n)
            .map(|_| normal.sample(&mut rng) as f32)
            .collect();
        Ok(Self {
            config,
            concepts,
            probe,
            projection,
        })
    }

    pub fn cluster_count(&self) -> usize {
        self.concepts.len().div_ceil(self.config.cluster_size)
    }

    fn cluster_members(&self, cluster: u32) -> std::ops::Range<usize> {
        let s = self.config.cluster_size;
        let lo = cluster as usize * s;
        lo..(lo + s).min(self.concepts.len())
    }

    /// Sorted concept indices of one random scene.
    pub fn sample_scene<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let cluster = rng.random_range(0..self.cluster_count()) as u32;
        let members = self.cluster_members(cluster);
        let primary = rng.random_range(members.clone());
        let mut scene = BTreeSet::from([primary]);
        if let Cooccurrence::Clustered(p) = self.config.cooccurrence {
            if self.config.probe == Probe::Discovery {
                for c in members {
                    if c != primary && rng.random_bool(p) {
                        scene.insert(c);
                    }
                }
                if let Some((a, b)) = self.probe {
                    if scene.contains(&a) {
                        scene.insert(b);
                    }
                }
            }
        }
        scene.into_iter().collect()
    }

    /// One sentence naming every concept of the scene in random order.
    pub fn sentence<R: Rng + ?Sized>(&self, scene: &[usize], rng: &mut R) -> String {
        let mut order = scene.to_vec();
        order.shuffle(rng);
        let mut np = String::new();
        for (i, &c) in order.iter().enumerate() {
            if i > 0 {
                np.push_str(" and ");
            }
            np.push_str("a ");
            np.push_str(ADJECTIVES.choose(rng).unwrap());
            np.push(' ');
            np.push_str(&self.concepts[c].word);
        }
        let verb = VERBS.choose(rng).unwrap();
        let place = PLACES.choose(rng).unwrap();
        let time = TIMES.choose(rng).unwrap();
        let manner = MANNERS.choose(rng).unwrap();
        match rng.random_range(0..4) {
            0 => format!("{np} {verb} {manner} {place} {time}"),
            1 => format!("there is {np} {manner} {place} {time}"),
            2 => format!("{time} {np} {verb} {manner} {place}"),
            _ => format!("{place} {np} {verb} {manner} {time}"),
        }
    }

    /// `W (indicator + noise)`.
    pub fn features<R: Rng + ?Sized>(&self, scene: &[usize], rng: &mut R) -> Vec<f32> {
        let n = self.concepts.len();
        let noise = Normal::new(0.0, self.config.noise).expect("valid normal");
        let mut v = vec![0.0f64; n];
        for x in v.iter_mut() {
            *x = noise.sample(rng);
        }
        for &c in scene {
            v[c] += 1.0;
        }
        self.projection
            .chunks(n)
            .map(|row| row.iter().zip(&v).map(|(w, x)| *w as f64 * x).sum::<f64>() as f32)
            .collect()
    }

    /// Detector output as concept indices, sorted.
    pub fn detect<R: Rng + ?Sized>(&self, scene: &[usize], rng: &mut R) -> Vec<usize> {
        let mut out: BTreeSet<usize> = scene
            .iter()
            .copied()
            .filter(|&c| self.concepts[c].detectable && !rng.random_bool(self.config.miss_rate))
            .collect();
        if rng.random_bool(self.config.false_positive_rate) {
            let pool: Vec<usize> = (0..self.concepts.len())
                .filter(|&c| self.concepts[c].detectable)
                .collect();
            if let Some(&c) = pool.choose(rng) {
                out.insert(c);
            }
        }
        out.into_iter().collect()
    }

    pub fn lexicon_text(&self) -> String {
        let mut s = String::from("# synthetic lexicon\n");
        for c in &self.concepts {
            s.push_str(&format!("{}\t{}\n", c.word, c.id));
        }
        s
    }

    pub fn generate(&self) -> SynthData {
        let cfg = &self.config;
        let mut scene_rng = stream(cfg.seed, 2);
        let mut text_rng = stream(cfg.seed, 3);
        let mut image_rng = stream(cfg.seed, 4);
        let mut order_rng = stream(cfg.seed, 5);

        let mut image_scenes = Vec::with_capacity(cfg.n_images);
        let mut references = Vec::new();
        let mut sentences: Vec<(String, Vec<usize>, Option<usize>)> = Vec::new();
        for i in 0..cfg.n_images {
            let scene = self.sample_scene(&mut scene_rng);
            for r in 0..cfg.references_per_image {
                let s = self.sentence(&scene, &mut text_rng);
                if r == 0 {
                    sentences.push((s.clone(), scene.clone(), Some(i)));
                }
                references.push((image_id(i), s));
            }
            image_scenes.push(scene);
        }
        while sentences.len() < cfg.n_sentences {
            let scene = self.sample_scene(&mut scene_rng);
            let s = self.sentence(&scene, &mut text_rng);
            sentences.push((s, scene, None));
        }
        sentences.shuffle(&mut order_rng);

        let mut gt_pairs = Vec::new();
        let mut corpus = Vec::with_capacity(sentences.len());
        let mut sentence_scenes = Vec::with_capacity(sentences.len());
        for (line, (s, scene, image)) in sentences.into_iter().enumerate() {
            if let Some(i) = image {
                gt_pairs.push((image_id(i), line));
            }
            corpus.push(s);
            sentence_scenes.push(scene);
        }
        gt_pairs.sort();

        let mut features = Vec::with_capacity(cfg.n_images);
        let mut detections = Vec::with_capacity(cfg.n_images);
        for (i, scene) in image_scenes.iter().enumerate() {
            features.push(self.features(scene, &mut image_rng));
            let labels = self
                .detect(scene, &mut image_rng)
                .into_iter()
                .map(|c| self.concepts[c].word.clone())
                .collect();
            detections.push((image_id(i), labels));
        }

        SynthData {
            lexicon: self.lexicon_text(),
            corpus,
            image_ids: (0..cfg.n_images).map(image_id).collect(),
            features,
            detections,
            gt_pairs,
            references,
            image_scenes,
            sentence_scenes,
            concept_clusters: self
                .concepts
                .iter()
                .map(|c| (c.id.clone(), c.cluster))
                .collect(),
        }
    }
}

pub fn image_id(i: usize) -> String {
    format!("img{i:04}")
}

/// Everything one world generates, in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub lexicon: String,
    pub corpus: Vec<String>,
    pub image_ids: Vec<String>,
    pub features: Vec<Vec<f32>>,
    pub detections: Vec<(String, Vec<String>)>,
    /// `(image id, 0-based corpus line)` of each image's own sentence.
    pub gt_pairs: Vec<(String, usize)>,
    pub references: Vec<(String, String)>,
    pub image_scenes: Vec<Vec<usize>>,
    pub sentence_scenes: Vec<Vec<usize>>,
    pub concept_clusters: Vec<(String, u32)>,
}

/// File names written by [`SynthData::write`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFiles {
    pub lexicon: PathBuf,
    pub corpus: PathBuf,
    pub features: PathBuf,
    pub ids: PathBuf,
    pub detections: PathBuf,
    pub pairs: PathBuf,
    pub references: PathBuf,
    pub clusters: PathBuf,
}

impl SynthFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            lexicon: dir.join("lexicon.tsv"),
            corpus: dir.join("corpus.txt"),
            features: dir.join("features.imgf"),
            ids: dir.join("features.ids"),
            detections: dir.join("detections.tsv"),
            pairs: dir.join("pairs.tsv"),
            references: dir.join("references.tsv"),
            clusters: dir.join("clusters.tsv"),
        }
    }
}

impl SynthData {
    pub fn write(&self, dir: &Path) -> Result<SynthFiles> {
        std::fs::create_dir_all(dir)?;
        let f = SynthFiles::in_dir(dir);
        write_atomic(&f.lexicon, self.lexicon.as_bytes())?;
        let mut corpus = self.corpus.join("\n");
        corpus.push('\n');
        write_atomic(&f.corpus, corpus.as_bytes())?;
        save_features(&f.features, &f.ids, &self.image_ids, &self.features)?;
        save_detections(&f.detections, &self.detections)?;
        let pairs: Vec<(String, String)> = self
            .gt_pairs
            .iter()
            .map(|(id, j)| (id.clone(), j.to_string()))
            .collect();
        save_pairs_tsv(&f.pairs, &pairs)?;
        save_pairs_tsv(&f.references, &self.references)?;
        let clusters: Vec<(String, String)> = self
            .concept_clusters
            .iter()
            .map(|(c, k)| (c.clone(), k.to_string()))
            .collect();
        save_pairs_tsv(&f.clusters, &clusters)?;
        Ok(f)
    }

    /// Scene cluster of every corpus sentence.
    pub fn sentence_clusters(&self, world: &SyntheticWorld) -> Vec<Option<u32>> {
        self.sentence_scenes
            .iter()
            .map(|s| s.first().map(|&c| world.concepts[c].cluster))
            .collect()
    }
}

/// Empirical `P(j present | i present)` over a list of scenes; rows of
/// absent concepts are zero.
pub fn cooccurrence(scenes: &[Vec<usize>], n: usize) -> Vec<Vec<f64>> {
    let mut joint = vec![vec![0usize; n]; n];
    for s in scenes {
        for &i in s {
            for &j in s {
                joint[i][j] += 1;
            }
        }
    }
    (0..n)
        .map(|i| {
            let ni = joint[i][i];
            (0..n)
                .map(|j| if ni == 0 { 0.0 } else { joint[i][j] as f64 / ni as f64 })
                .collect()
        })
        .collect()
}
