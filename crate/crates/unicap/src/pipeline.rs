//! Stage functions and the resumable end-to-end runner.
//!
//! `run_pipeline` executes train-lm, build-graph, train-align, caption and
//! evaluate in order. Each stage writes its outputs atomically and then a
//! stamp holding a fingerprint of everything it read (file contents and the
//! config keys it uses). A rerun skips stages whose stamp still matches.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicap_core::align::{train_align, AlignData, AlignEpochLog, AlignModel, AssignmentGraph, ImageRecord};
use unicap_core::decode::{beam_search, greedy, BeamOptions, DecoderModel};
use unicap_core::eval::{
    intra_inter_ratio, mixing_score, oracle_baseline, score_captions, unique_novel_rates, EvalReport,
};
use unicap_core::lm::{embed_corpus, train_lm, EpochLog, LanguageModel, TrainError};
use unicap_core::text::{build_corpus, dominant_concepts, tokenize, Corpus, PairIndex, Vocabulary, EOS};
use unicap_core::{ConceptLexicon, ConceptSet, ParameterStore};

use crate::config::RunConfig;
use crate::formats::{
    encode_checkpoint, encode_pair_index, load_captions, load_checkpoint, load_detections, load_features,
    load_graph, load_lexicon, load_lines, load_pairs_tsv, load_references, load_vocab, read_bytes, save_checkpoint,
    save_graph, save_json, save_pairs_tsv, save_vocab, vocab_path, write_atomic, ReportFile,
};

/// Inputs that are present but inconsistent.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct InputError(pub String);

fn input_error(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

// Generator streams, one per stage, so skipping a stage leaves the others
// unchanged.
const LM_STREAM: u64 = 1;
const ALIGN_STREAM: u64 = 2;
const EVAL_STREAM: u64 = 3;

pub fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

// ---------------------------------------------------------------- text

pub struct TextData {
    pub lexicon: ConceptLexicon,
    pub corpus: Corpus,
}

impl TextData {
    pub fn from_lines<S: AsRef<str>>(lexicon: ConceptLexicon, lines: &[S], cfg: &RunConfig) -> Result<Self> {
        let lexicon = lexicon.with_plural_strip(cfg.plural_strip);
        let corpus = build_corpus(lines.iter().map(AsRef::as_ref), &lexicon, cfg.corpus_options())
            .map_err(|e| input_error(format!("corpus: {e}")))?;
        Ok(Self { lexicon, corpus })
    }

    pub fn load(lexicon: &Path, corpus: &Path, cfg: &RunConfig) -> Result<Self> {
        let lex = load_lexicon(lexicon)?;
        let lines = load_lines(corpus)?;
        Self::from_lines(lex, &lines, cfg).with_context(|| corpus.display().to_string())
    }

    /// 0-based corpus line of every sentence id.
    pub fn sentence_lines(&self) -> Vec<usize> {
        self.corpus.records.iter().map(|r| r.line).collect()
    }

    pub fn sentences(&self) -> Vec<String> {
        self.corpus.records.iter().map(|r| r.text()).collect()
    }
}

/// `concept_id<TAB>cluster` file as a per-concept lookup.
pub fn load_concept_clusters(path: &Path, lex: &ConceptLexicon) -> Result<Vec<Option<u32>>> {
    let mut out = vec![None; lex.concept_count()];
    for (name, k) in load_pairs_tsv(path)? {
        let c = lex
            .concept(&name)
            .ok_or_else(|| input_error(format!("{}: concept {name} is not in the lexicon", path.display())))?;
        let k: u32 = k
            .trim()
            .parse()
            .map_err(|_| input_error(format!("{}: cluster `{k}` is not a number", path.display())))?;
        out[c.index()] = Some(k);
    }
    Ok(out)
}

/// Cluster label per set: its dominant concept, mapped through `clusters`
/// when given. Dominance is decided over all sets together.
pub fn cluster_labels(sets: &[ConceptSet], clusters: Option<&[Option<u32>]>) -> Vec<Option<u32>> {
    dominant_concepts(sets)
        .into_iter()
        .map(|c| {
            c.and_then(|c| match clusters {
                Some(m) => m.get(c.index()).copied().flatten(),
                None => Some(c.0),
            })
        })
        .collect()
}

// ---------------------------------------------------------------- language model

pub fn train_language_model(
    text: &TextData,
    index: &PairIndex,
    cfg: &RunConfig,
    labels: Option<&[Option<u32>]>,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<LanguageModel<f32>, TrainError> {
    let mut rng = stage_rng(cfg.seed, LM_STREAM);
    let lcfg = cfg.lm_config();
    let mut model = LanguageModel::new(text.corpus.vocab.len(), &lcfg, &mut rng);
    train_lm(&mut model, &text.corpus, index, &lcfg, cfg.lm_epochs, labels, &mut rng, on_epoch)?;
    Ok(model)
}

pub fn lm_log_line(log: &EpochLog) -> String {
    let ratio = log.ratio_intra_inter.map_or("nan".to_string(), |r| format!("{r:.6}"));
    format!("{}, {:.6}, {:.6}, {}", log.epoch, log.ce, log.triplet, ratio)
}

fn combine(parts: &[(&str, &ParameterStore<f32>)]) -> ParameterStore<f32> {
    let mut s = ParameterStore::new();
    for (prefix, store) in parts {
        s.absorb_prefixed(prefix, store).expect("distinct prefixes");
    }
    s
}

pub fn save_lm(path: &Path, model: &LanguageModel<f32>, vocab: &Vocabulary) -> Result<()> {
    save_checkpoint(path, &combine(&[("encoder/", &model.enc_store), ("decoder/", &model.dec_store)]))?;
    save_vocab(&vocab_path(path), vocab)?;
    Ok(())
}

pub fn load_lm(path: &Path) -> Result<(LanguageModel<f32>, Vocabulary)> {
    let store = load_checkpoint(path)?;
    let model = LanguageModel::from_stores(store.extract_prefixed("encoder/"), store.extract_prefixed("decoder/"))
        .map_err(|e| input_error(format!("{}: not a language model checkpoint: {e}", path.display())))?;
    let vocab = load_vocab(&vocab_path(path))?;
    if vocab.len() != model.decoder.vocab_size() {
        bail!(input_error(format!(
            "{}: vocabulary has {} tokens, checkpoint expects {}",
            path.display(),
            vocab.len(),
            model.decoder.vocab_size()
        )));
    }
    Ok((model, vocab))
}

// ---------------------------------------------------------------- images and graph

/// Feature rows with their detections resolved and hyponym-expanded. Images
/// missing from the detections file get an empty concept set.
pub fn images_from_parts(
    lex: &ConceptLexicon,
    ids: Vec<String>,
    rows: Vec<Vec<f32>>,
    detections: &BTreeMap<String, Vec<String>>,
) -> Vec<ImageRecord> {
    let mut missing = 0usize;
    let images = ids
        .into_iter()
        .zip(rows)
        .map(|(id, feature)| {
            let labels = detections.get(&id).map(Vec::as_slice).unwrap_or_else(|| {
                missing += 1;
                &[]
            });
            let concepts = lex.expand_hyponyms(&lex.resolve_labels(labels));
            ImageRecord { id, feature, concepts }
        })
        .collect();
    if missing > 0 {
        log::warn!("{missing} images have no detections entry");
    }
    images
}

pub fn load_images(lex: &ConceptLexicon, features: &Path, ids: &Path, detections: &Path) -> Result<Vec<ImageRecord>> {
    let (ids, rows) = load_features(features, ids)?;
    let det = load_detections(detections)?;
    Ok(images_from_parts(lex, ids, rows, &det))
}

pub fn build_graph(images: &[ImageRecord], text: &TextData) -> AssignmentGraph {
    let sets: Vec<ConceptSet> = images.iter().map(|i| i.concepts.clone()).collect();
    let g = AssignmentGraph::build(&sets, &text.corpus.concept_sets());
    log::info!(
        "graph: {} images, {} sentences, {} edges, {} images dropped",
        g.image_count(),
        g.sentence_count(),
        g.edge_count(),
        g.dropped().len()
    );
    g
}

fn image_ids(images: &[ImageRecord]) -> Vec<String> {
    images.iter().map(|i| i.id.clone()).collect()
}

// ---------------------------------------------------------------- alignment

pub fn train_alignment(
    lm: &LanguageModel<f32>,
    text: &TextData,
    images: &[ImageRecord],
    graph: &AssignmentGraph,
    cfg: &RunConfig,
    on_epoch: impl FnMut(&AlignEpochLog, &AlignModel<f32>),
) -> Result<AlignModel<f32>> {
    let Some(first) = images.first() else {
        bail!(input_error("no images"));
    };
    if graph.rows().is_empty() {
        bail!(input_error("no image shares a concept with any sentence"));
    }
    let acfg = cfg.align_config();
    let mut rng = stage_rng(cfg.seed, ALIGN_STREAM);
    let text_embeddings = embed_corpus(lm, &text.corpus.records);
    let mut model = AlignModel::new(
        first.feature.len(),
        text.lexicon.concept_count(),
        lm.decoder,
        lm.dec_store.clone(),
        &acfg,
        &mut rng,
    );
    let data = AlignData {
        images,
        records: &text.corpus.records,
        text_embeddings: &text_embeddings,
        graph,
        concept_count: text.lexicon.concept_count(),
    };
    train_align(&mut model, &data, &acfg, cfg.align_epochs, &mut rng, on_epoch)?;
    Ok(model)
}

pub fn align_log_line(log: &AlignEpochLog) -> String {
    format!(
        "{}, {:.6}, {:.6}, {:.6}, {:.6}, {:.6}, {:.6}, {}",
        log.epoch,
        log.ce,
        log.align,
        log.adv,
        log.total,
        log.critic.loss,
        log.critic.wasserstein,
        log.critic_updates
    )
}

pub fn save_align(path: &Path, model: &AlignModel<f32>, vocab: &Vocabulary) -> Result<()> {
    save_checkpoint(
        path,
        &combine(&[
            ("translator/", &model.tr_store),
            ("critic/", &model.critic_store),
            ("decoder/", &model.dec_store),
        ]),
    )?;
    save_vocab(&vocab_path(path), vocab)?;
    Ok(())
}

pub fn load_align(path: &Path) -> Result<(AlignModel<f32>, Vocabulary)> {
    let store = load_checkpoint(path)?;
    let model = AlignModel::from_stores(
        store.extract_prefixed("translator/"),
        store.extract_prefixed("critic/"),
        store.extract_prefixed("decoder/"),
    )
    .map_err(|e| input_error(format!("{}: not an alignment checkpoint: {e}", path.display())))?;
    let vocab = load_vocab(&vocab_path(path))?;
    if vocab.len() != model.decoder.vocab_size() {
        bail!(input_error(format!(
            "{}: vocabulary has {} tokens, checkpoint expects {}",
            path.display(),
            vocab.len(),
            model.decoder.vocab_size()
        )));
    }
    Ok((model, vocab))
}

// ---------------------------------------------------------------- captions

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CaptionOptions {
    pub beam: usize,
    pub max_len: usize,
    pub length_normalize: bool,
}

impl CaptionOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            beam: cfg.beam,
            max_len: cfg.caption_max_len,
            length_normalize: cfg.length_normalize,
        }
    }
}

pub fn caption_embedding_text(
    model: &AlignModel<f32>,
    vocab: &Vocabulary,
    t: Vec<f32>,
    opts: CaptionOptions,
) -> String {
    let dm = DecoderModel::new(&model.decoder, &model.dec_store, t);
    let hyp = if opts.beam == 1 && !opts.length_normalize {
        greedy(&dm, opts.max_len, EOS)
    } else {
        let mut bo = BeamOptions::new(opts.beam, opts.max_len);
        bo.length_normalize = opts.length_normalize;
        beam_search(&dm, &bo)
    };
    vocab.decode(hyp.content())
}

/// `(image_id, caption)` for every image, in input order.
pub fn caption_images(
    model: &AlignModel<f32>,
    vocab: &Vocabulary,
    images: &[(String, Vec<f32>)],
    opts: CaptionOptions,
) -> Result<Vec<(String, String)>> {
    images
        .iter()
        .map(|(id, f)| {
            if f.len() != model.feature_dim() {
                bail!(input_error(format!(
                    "image {id}: feature has {} values, translator expects {}",
                    f.len(),
                    model.feature_dim()
                )));
            }
            Ok((id.clone(), caption_embedding_text(model, vocab, model.translate(f), opts)))
        })
        .collect()
}

// ---------------------------------------------------------------- evaluation

/// Scores captions against grouped references; every caption needs at least
/// one reference.
pub fn evaluate_captions(
    candidates: &[(String, String)],
    references: &BTreeMap<String, Vec<String>>,
    training: &[String],
    mixing: Option<f64>,
) -> Result<EvalReport> {
    let mut cands = Vec::with_capacity(candidates.len());
    let mut refs = Vec::with_capacity(candidates.len());
    for (id, c) in candidates {
        let r = references
            .get(id)
            .ok_or_else(|| input_error(format!("no reference for image {id}")))?;
        cands.push(tokenize(c));
        refs.push(r.iter().map(|s| tokenize(s)).collect::<Vec<_>>());
    }
    let generated: Vec<String> = cands.iter().map(|c| c.join(" ")).collect();
    let train: Vec<String> = training.iter().map(|s| tokenize(s).join(" ")).collect();
    let (unique, novel) = unique_novel_rates(&generated, &train);
    Ok(EvalReport::new(score_captions(&cands, &refs), unique, novel, mixing))
}

/// Text embeddings from the language model, image embeddings from the
/// translator; both labelled by [`cluster_labels`].
pub struct JointSpace {
    pub text: Vec<Vec<f64>>,
    pub text_labels: Vec<Option<u32>>,
    pub images: Vec<Vec<f64>>,
    pub image_labels: Vec<Option<u32>>,
}

impl JointSpace {
    pub fn new(
        lm: &LanguageModel<f32>,
        model: &AlignModel<f32>,
        text: &TextData,
        images: &[ImageRecord],
        clusters: Option<&[Option<u32>]>,
    ) -> Self {
        let f64s = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<f64>>();
        let t: Vec<Vec<f64>> = embed_corpus(lm, &text.corpus.records).into_iter().map(f64s).collect();
        let im: Vec<Vec<f64>> = images.iter().map(|i| f64s(model.translate(&i.feature))).collect();
        let mut sets = text.corpus.concept_sets();
        sets.extend(images.iter().map(|i| i.concepts.clone()));
        let mut labels = cluster_labels(&sets, clusters);
        let image_labels = labels.split_off(t.len());
        Self {
            text: t,
            text_labels: labels,
            images: im,
            image_labels,
        }
    }

    pub fn mixing(&self, k: usize) -> Option<f64> {
        mixing_score(&self.text, &self.text_labels, &self.images, &self.image_labels, k)
    }

    pub fn text_ratio(&self) -> Option<f64> {
        intra_inter_ratio(&self.text, &self.text_labels)
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleFile {
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub runs: usize,
    pub best_run: usize,
    pub excluded: usize,
}

/// Best-of-`runs` oracle over the weak graph, scored against references.
pub fn oracle(
    graph: &AssignmentGraph,
    text: &TextData,
    images: &[ImageRecord],
    references: &BTreeMap<String, Vec<String>>,
    runs: usize,
    seed: u64,
) -> Result<OracleFile> {
    let sentences: Vec<Vec<String>> = text.corpus.records.iter().map(|r| r.words.clone()).collect();
    let refs = images
        .iter()
        .map(|i| {
            references
                .get(&i.id)
                .map(|r| r.iter().map(|s| tokenize(s)).collect::<Vec<_>>())
                .ok_or_else(|| input_error(format!("no reference for image {}", i.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = stage_rng(seed, EVAL_STREAM);
    let r = oracle_baseline(graph, &sentences, &refs, runs, &mut rng);
    Ok(OracleFile {
        bleu1: r.best.bleu[0],
        bleu2: r.best.bleu[1],
        bleu3: r.best.bleu[2],
        bleu4: r.best.bleu[3],
        rouge_l: r.best.rouge_l,
        runs,
        best_run: r.best_run,
        excluded: r.excluded,
    })
}

// ---------------------------------------------------------------- runner

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    Ok(sha256_hex(&read_bytes(path)?))
}

/// Output file names inside the run directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub dir: PathBuf,
    pub lm_ckpt: PathBuf,
    pub lm_log: PathBuf,
    pub pair_index: PathBuf,
    pub graph: PathBuf,
    pub align_ckpt: PathBuf,
    pub align_log: PathBuf,
    pub captions: PathBuf,
    pub report: PathBuf,
    pub oracle: PathBuf,
    pub run_log: PathBuf,
    pub stamps: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            lm_ckpt: dir.join("lm.ckpt"),
            lm_log: dir.join("lm.log"),
            pair_index: dir.join("pairs.pidx"),
            graph: dir.join("graph.tsv"),
            align_ckpt: dir.join("align.ckpt"),
            align_log: dir.join("align.log"),
            captions: dir.join("captions.tsv"),
            report: dir.join("report.json"),
            oracle: dir.join("oracle.json"),
            run_log: dir.join("run.log"),
            stamps: dir.join("stamps"),
        }
    }
}

pub const STAGES: [&str; 5] = ["train-lm", "build-graph", "train-align", "caption", "evaluate"];

const LM_KEYS: &[&str] = &[
    "seed", "lm_epochs", "min_count", "max_len", "plural_strip", "word_dim", "hidden", "embed_dim", "margin",
    "lambda_t", "batch", "lr_enc", "lr_dec",
];
const GRAPH_KEYS: &[&str] = &["min_count", "max_len", "plural_strip"];
const ALIGN_KEYS: &[&str] = &[
    "seed", "align_epochs", "min_count", "max_len", "plural_strip", "k", "lambda_ce", "lambda_r", "lambda_adv",
    "gp_coeff", "critic_steps", "translator_hidden", "critic_hidden", "align_lr", "critic_lr", "align_batch",
    "ablation", "polarity",
];
const CAPTION_KEYS: &[&str] = &["beam", "caption_max_len", "length_normalize"];
const EVAL_KEYS: &[&str] = &["seed", "min_count", "max_len", "plural_strip", "oracle_runs", "mixing_k"];

/// Runs stages with stamps and appends to the run log.
pub struct Runner<'a> {
    cfg: &'a RunConfig,
    files: RunFiles,
    log: String,
    pub executed: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
}

impl<'a> Runner<'a> {
    fn fingerprint(&self, stage: &str, keys: &[&str], inputs: &[&Path]) -> Result<String> {
        let mut s = format!("stage {stage}\n");
        for k in keys {
            writeln!(s, "{k} = {}", self.cfg.get(k).expect("known key")).unwrap();
        }
        for p in inputs {
            writeln!(s, "input {}", file_hash(p)?).unwrap();
        }
        Ok(sha256_hex(s.as_bytes()))
    }

    fn stage(
        &mut self,
        name: &'static str,
        keys: &[&str],
        inputs: &[&Path],
        outputs: &[&Path],
        body: impl FnOnce(&mut String) -> Result<()>,
    ) -> Result<()> {
        let fp = self
            .fingerprint(name, keys, inputs)
            .with_context(|| format!("stage {name} failed"))?;
        let stamp = self.files.stamps.join(name);
        let done = fs::read_to_string(&stamp).is_ok_and(|s| s.trim() == fp) && outputs.iter().all(|p| p.exists());
        if done {
            writeln!(self.log, "stage {name}: up to date ({fp})").unwrap();
            self.skipped.push(name);
            return Ok(());
        }
        let _ = fs::remove_file(&stamp);
        log::info!("stage {name}");
        let mut notes = String::new();
        body(&mut notes).with_context(|| format!("stage {name} failed"))?;
        write_atomic(&stamp, format!("{fp}\n").as_bytes())?;
        writeln!(self.log, "stage {name}: done ({fp})").unwrap();
        self.log.push_str(&notes);
        self.executed.push(name);
        Ok(())
    }
}

fn required<'c>(p: &'c Option<PathBuf>, key: &str) -> Result<&'c Path> {
    p.as_deref()
        .ok_or_else(|| input_error(format!("config key `{key}` is required")))
}

/// Summary of one `run_pipeline` call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub files: RunFiles,
    pub executed: Vec<&'static str>,
    pub skipped: Vec<&'static str>,
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    let lexicon = required(&cfg.lexicon, "lexicon")?;
    let corpus = required(&cfg.corpus, "corpus")?;
    let features = required(&cfg.features, "features")?;
    let ids = required(&cfg.ids, "ids")?;
    let detections = required(&cfg.detections, "detections")?;
    let files = RunFiles::in_dir(&cfg.out_dir);
    fs::create_dir_all(&files.stamps).with_context(|| files.stamps.display().to_string())?;

    let mut header = String::from("# config\n");
    header.push_str(&cfg.to_text());
    header.push_str("# seeds\n");
    for (stage, stream) in [("train-lm", LM_STREAM), ("train-align", ALIGN_STREAM), ("evaluate", EVAL_STREAM)] {
        writeln!(header, "{stage} = seed {} stream {stream}", cfg.seed).unwrap();
    }
    header.push_str("# inputs\n");
    let mut inputs: Vec<&Path> = vec![lexicon, corpus, features, ids, detections];
    inputs.extend(cfg.references.as_deref());
    inputs.extend(cfg.clusters.as_deref());
    for p in &inputs {
        writeln!(header, "{} sha256:{}", p.display(), file_hash(p)?).unwrap();
    }
    header.push_str("# stages\n");

    let mut runner = Runner {
        cfg,
        files: files.clone(),
        log: header,
        executed: Vec::new(),
        skipped: Vec::new(),
    };
    let result = run_stages(&mut runner, cfg, &files, lexicon, corpus, features, ids, detections);
    if let Err(e) = &result {
        writeln!(runner.log, "error: {e:#}").unwrap();
    }
    write_atomic(&files.run_log, runner.log.as_bytes())?;
    result?;
    Ok(RunSummary {
        files,
        executed: runner.executed,
        skipped: runner.skipped,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_stages(
    runner: &mut Runner<'_>,
    cfg: &RunConfig,
    files: &RunFiles,
    lexicon: &Path,
    corpus: &Path,
    features: &Path,
    ids: &Path,
    detections: &Path,
) -> Result<()> {
    let text = TextData::load(lexicon, corpus, cfg)?;
    let clusters = cfg
        .clusters
        .as_deref()
        .map(|p| load_concept_clusters(p, &text.lexicon))
        .transpose()?;

    let mut lm_inputs = vec![lexicon, corpus];
    lm_inputs.extend(cfg.clusters.as_deref());
    runner.stage(
        "train-lm",
        LM_KEYS,
        &lm_inputs,
        &[&files.lm_ckpt, &files.lm_log, &files.pair_index],
        |notes| {
            let index = PairIndex::build(&text.corpus.concept_sets());
            write_atomic(&files.pair_index, &encode_pair_index(&index))?;
            let labels = clusters
                .as_deref()
                .map(|c| cluster_labels(&text.corpus.concept_sets(), Some(c)));
            let mut log = String::from("# epoch, L_CE, L_t, ratio_intra_inter\n");
            let model = train_language_model(&text, &index, cfg, labels.as_deref(), |l| {
                log::info!("lm {}", lm_log_line(l));
                log.push_str(&lm_log_line(l));
                log.push('\n');
            });
            write_atomic(&files.lm_log, log.as_bytes())?;
            let model = model?;
            save_lm(&files.lm_ckpt, &model, &text.corpus.vocab)?;
            writeln!(notes, "  sentences {} vocab {}", text.corpus.len(), text.corpus.vocab.len()).unwrap();
            Ok(())
        },
    )?;

    let images = load_images(&text.lexicon, features, ids, detections)?;
    let lines = text.sentence_lines();
    runner.stage(
        "build-graph",
        GRAPH_KEYS,
        &[lexicon, corpus, ids, detections],
        &[&files.graph],
        |notes| {
            let g = build_graph(&images, &text);
            save_graph(&files.graph, &g, &image_ids(&images), &lines)?;
            writeln!(notes, "  edges {} dropped images {}", g.edge_count(), g.dropped().len()).unwrap();
            Ok(())
        },
    )?;

    runner.stage(
        "train-align",
        ALIGN_KEYS,
        &[lexicon, corpus, features, ids, detections, &files.lm_ckpt, &files.graph],
        &[&files.align_ckpt, &files.align_log],
        |_| {
            let (lm, _) = load_lm(&files.lm_ckpt)?;
            let graph = load_graph(&files.graph, &image_ids(&images), &lines)?;
            let mut log = String::from("# epoch, L_CE, L_R, L_adv, total, critic_loss, wasserstein, critic_updates\n");
            let model = train_alignment(&lm, &text, &images, &graph, cfg, |l, _| {
                log::info!("align {}", align_log_line(l));
                log.push_str(&align_log_line(l));
                log.push('\n');
            });
            write_atomic(&files.align_log, log.as_bytes())?;
            save_align(&files.align_ckpt, &model?, &text.corpus.vocab)
        },
    )?;

    runner.stage(
        "caption",
        CAPTION_KEYS,
        &[features, ids, &files.align_ckpt],
        &[&files.captions],
        |_| {
            let (model, vocab) = load_align(&files.align_ckpt)?;
            let items: Vec<(String, Vec<f32>)> = images.iter().map(|i| (i.id.clone(), i.feature.clone())).collect();
            let caps = caption_images(&model, &vocab, &items, CaptionOptions::from_config(cfg))?;
            save_pairs_tsv(&files.captions, &caps)?;
            Ok(())
        },
    )?;

    let mut eval_inputs = vec![lexicon, corpus, features, ids, detections, &files.lm_ckpt, &files.align_ckpt];
    eval_inputs.push(&files.captions);
    eval_inputs.push(&files.graph);
    eval_inputs.extend(cfg.references.as_deref());
    eval_inputs.extend(cfg.clusters.as_deref());
    let mut eval_outputs: Vec<&Path> = vec![&files.report];
    if cfg.references.is_some() {
        eval_outputs.push(&files.oracle);
    }
    runner.stage("evaluate", EVAL_KEYS, &eval_inputs, &eval_outputs, |notes| {
        let (lm, _) = load_lm(&files.lm_ckpt)?;
        let (model, _) = load_align(&files.align_ckpt)?;
        let space = JointSpace::new(&lm, &model, &text, &images, clusters.as_deref());
        let mixing = space.mixing(cfg.mixing_k);
        let caps = load_captions(&files.captions)?;
        let Some(refs_path) = cfg.references.as_deref() else {
            // no references: only the caption statistics that need none
            let generated: Vec<String> = caps.iter().map(|(_, c)| c.clone()).collect();
            let (u, n) = unique_novel_rates(&generated, &text.sentences());
            let rep = EvalReport {
                unique_rate: u,
                novel_rate: n,
                mixing_score: mixing,
                ..EvalReport::default()
            };
            save_json(&files.report, &ReportFile::new(&rep, caps.len()))?;
            return Ok(());
        };
        let refs = load_references(refs_path)?;
        let rep = evaluate_captions(&caps, &refs, &text.sentences(), mixing)?;
        save_json(&files.report, &ReportFile::new(&rep, caps.len()))?;
        let graph = load_graph(&files.graph, &image_ids(&images), &lines)?;
        let o = oracle(&graph, &text, &images, &refs, cfg.oracle_runs, cfg.seed)?;
        save_json(&files.oracle, &o)?;
        writeln!(notes, "  bleu4 {:.6} oracle bleu4 {:.6}", rep.bleu4, o.bleu4).unwrap();
        Ok(())
    })?;
    Ok(())
}

/// Bytes of every deterministic artifact, keyed by file name.
pub fn artifact_bytes(files: &RunFiles) -> Result<BTreeMap<String, Vec<u8>>> {
    let mut out = BTreeMap::new();
    for p in [
        &files.lm_ckpt,
        &files.graph,
        &files.pair_index,
        &files.align_ckpt,
        &files.captions,
        &files.report,
        &files.lm_log,
        &files.align_log,
    ] {
        let name = p.file_name().unwrap().to_string_lossy().into_owned();
        out.insert(name, read_bytes(p)?);
    }
    if files.oracle.exists() {
        out.insert("oracle.json".into(), read_bytes(&files.oracle)?);
    }
    Ok(out)
}

/// Checkpoint bytes without writing, e.g. to compare two models.
pub fn checkpoint_bytes(model: &AlignModel<f32>) -> Vec<u8> {
    encode_checkpoint(&combine(&[
        ("translator/", &model.tr_store),
        ("critic/", &model.critic_store),
        ("decoder/", &model.dec_store),
    ]))
}
