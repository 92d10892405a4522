use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use unicap::config::RunConfig;
use unicap::formats::{
    load_captions, load_features, load_lexicon, load_lines, load_graph, load_references, save_graph, save_json,
    save_lexicon, save_pairs_tsv, write_atomic, ReportFile,
};
use unicap::pipeline::{
    align_log_line, build_graph, caption_images, cluster_labels, evaluate_captions, lm_log_line,
    load_align, load_concept_clusters, load_images, load_lm, run_pipeline, save_align, save_lm,
    train_alignment, train_language_model, CaptionOptions, InputError, JointSpace, TextData,
};
use unicap::synth::{Cooccurrence, Probe, SynthConfig, SyntheticWorld};
use unicap_core::align::Ablation;
use unicap_core::eval::intra_inter_ratio;
use unicap_core::lm::{embed_corpus, TrainError};
use unicap_core::text::PairIndex;

#[derive(Parser)]
#[command(name = "unicap", version, about = "Unsupervised image captioning on a visually structured sentence space")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by commands that read a run configuration.
#[derive(Args)]
struct Settings {
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set lambda_t=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Settings {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| InputError(format!("--set expects KEY=VALUE, got `{o}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !RunConfig::KEYS.contains(&k) {
                return Err(InputError(format!("unknown key `{k}`")).into());
            }
            cfg.set(k, v)
                .map_err(|e| InputError(format!("invalid value `{v}` for `{k}`: {e}")))?;
        }
        cfg.validate()?;
        for line in cfg.to_text().lines() {
            log::info!("config {line}");
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Validate a lexicon and write it in normalized form.
    BuildLexicon {
        #[arg(long)]
        lexicon: PathBuf,
        /// Report how many corpus sentences mention each concept.
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the sentence autoencoder.
    TrainLm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// `concept_id<TAB>cluster` file enabling the intra/inter ratio in the log.
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Build the weak image/sentence assignment graph.
    BuildGraph {
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        ids: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train the image feature translator against a language model.
    TrainAlign {
        #[arg(long, value_parser = parse_ablation)]
        ablation: Option<Ablation>,
        /// Language model checkpoint.
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        ids: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        /// Saved graph listing; rebuilt from the detections when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Caption images with a trained alignment checkpoint.
    Caption {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        ids: PathBuf,
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 3)]
        beam: usize,
        #[arg(long, default_value_t = 20)]
        max_len: usize,
        #[arg(long)]
        length_normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score captions against references.
    Evaluate {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        references: PathBuf,
        /// Training corpus for the novelty rate.
        #[arg(long)]
        training: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster structure of the sentence space and modality mixing.
    DiagnoseEmbedding {
        /// Language model checkpoint.
        #[arg(long)]
        lm: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        clusters: Option<PathBuf>,
        /// Alignment checkpoint; with images enables the mixing score.
        #[arg(long, requires_all = ["features", "ids", "detections"])]
        align: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        k: usize,
        #[command(flatten)]
        settings: Settings,
    },
    /// Generate a synthetic world.
    SynthGen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        n_images: usize,
        #[arg(long, default_value_t = 500)]
        n_sentences: usize,
        #[arg(long, default_value_t = 30)]
        n_concepts: usize,
        #[arg(long, default_value_t = 2048)]
        feature_dim: usize,
        #[arg(long, default_value_t = 5)]
        references: usize,
        /// Probability that a cluster member joins a scene.
        #[arg(long, default_value_t = 0.6)]
        cooccurrence: f64,
        /// Every scene holds a single concept.
        #[arg(long)]
        identity: bool,
        /// Control world: single-concept scenes, probe concept still undetectable.
        #[arg(long)]
        control: bool,
        #[arg(long, default_value_t = 0.0)]
        miss_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        false_positive_rate: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage from a configuration file, skipping finished stages.
    RunPipeline {
        #[arg(long, value_parser = parse_ablation)]
        ablation: Option<Ablation>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    Ablation::from_name(s).ok_or_else(|| {
        let names: Vec<&str> = Ablation::ALL.iter().map(|a| a.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn log_path(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".log");
    PathBuf::from(p)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildLexicon { lexicon, corpus, out } => {
            let lex = load_lexicon(&lexicon)?;
            println!(
                "{} concepts, {} surface forms, {} hyponym links",
                lex.concept_count(),
                lex.surface_count(),
                lex.hyponym_pairs().count()
            );
            if let Some(corpus) = corpus {
                let text = TextData::load(&lexicon, &corpus, &RunConfig::default())?;
                let mut counts = vec![0usize; lex.concept_count()];
                for r in &text.corpus.records {
                    for c in r.concepts.iter() {
                        counts[c.index()] += 1;
                    }
                }
                for (c, name) in lex.concepts() {
                    println!("{name}\t{}", counts[c.index()]);
                }
            }
            if let Some(out) = out {
                save_lexicon(&out, &lex)?;
            }
        }
        Command::TrainLm {
            corpus,
            lexicon,
            clusters,
            out,
            settings,
        } => {
            let cfg = settings.load()?;
            let text = TextData::load(&lexicon, &corpus, &cfg)?;
            let labels = clusters
                .map(|p| load_concept_clusters(&p, &text.lexicon))
                .transpose()?
                .map(|c| cluster_labels(&text.corpus.concept_sets(), Some(&c)));
            let index = PairIndex::build(&text.corpus.concept_sets());
            log::info!(
                "{} sentences, vocabulary {}, {} triplet anchors",
                text.corpus.len(),
                text.corpus.vocab.len(),
                index.triplet_anchor_count()
            );
            let mut log = String::from("# epoch, L_CE, L_t, ratio_intra_inter\n");
            let model = train_language_model(&text, &index, &cfg, labels.as_deref(), |l| {
                println!("{}", lm_log_line(l));
                log.push_str(&lm_log_line(l));
                log.push('\n');
            });
            write_atomic(&log_path(&out), log.as_bytes())?;
            save_lm(&out, &model?, &text.corpus.vocab)?;
        }
        Command::BuildGraph {
            lexicon,
            corpus,
            features,
            ids,
            detections,
            out,
            settings,
        } => {
            let cfg = settings.load()?;
            let text = TextData::load(&lexicon, &corpus, &cfg)?;
            let images = load_images(&text.lexicon, &features, &ids, &detections)?;
            let g = build_graph(&images, &text);
            let image_ids: Vec<String> = images.iter().map(|i| i.id.clone()).collect();
            save_graph(&out, &g, &image_ids, &text.sentence_lines())?;
            println!(
                "{} images, {} sentences, {} edges, {} images without edges",
                g.image_count(),
                g.sentence_count(),
                g.edge_count(),
                g.dropped().len()
            );
        }
        Command::TrainAlign {
            ablation,
            lm,
            lexicon,
            corpus,
            features,
            ids,
            detections,
            graph,
            out,
            settings,
        } => {
            let mut cfg = settings.load()?;
            if let Some(a) = ablation {
                cfg.ablation = a;
            }
            let text = TextData::load(&lexicon, &corpus, &cfg)?;
            let (lm, vocab) = load_lm(&lm)?;
            if vocab != text.corpus.vocab {
                return Err(InputError("corpus vocabulary differs from the language model's".into()).into());
            }
            let images = load_images(&text.lexicon, &features, &ids, &detections)?;
            let graph = match graph {
                Some(p) => {
                    let image_ids: Vec<String> = images.iter().map(|i| i.id.clone()).collect();
                    load_graph(&p, &image_ids, &text.sentence_lines())?
                }
                None => build_graph(&images, &text),
            };
            let mut log = String::from("# epoch, L_CE, L_R, L_adv, total, critic_loss, wasserstein, critic_updates\n");
            let model = train_alignment(&lm, &text, &images, &graph, &cfg, |l, _| {
                println!("{}", align_log_line(l));
                log.push_str(&align_log_line(l));
                log.push('\n');
            });
            write_atomic(&log_path(&out), log.as_bytes())?;
            save_align(&out, &model?, &vocab)?;
        }
        Command::Caption {
            features,
            ids,
            ckpt,
            beam,
            max_len,
            length_normalize,
            out,
        } => {
            if beam == 0 || max_len == 0 {
                return Err(InputError("beam and max-len must be at least 1".into()).into());
            }
            let (model, vocab) = load_align(&ckpt)?;
            let (ids, rows) = load_features(&features, &ids)?;
            let items: Vec<(String, Vec<f32>)> = ids.into_iter().zip(rows).collect();
            let opts = CaptionOptions {
                beam,
                max_len,
                length_normalize,
            };
            let caps = caption_images(&model, &vocab, &items, opts)?;
            save_pairs_tsv(&out, &caps)?;
        }
        Command::Evaluate {
            candidates,
            references,
            training,
            out,
        } => {
            let caps = load_captions(&candidates)?;
            let refs = load_references(&references)?;
            let training = match training {
                Some(p) => load_lines(&p)?,
                None => Vec::new(),
            };
            let rep = evaluate_captions(&caps, &refs, &training, None)?;
            let file = ReportFile::new(&rep, caps.len());
            println!("{}", serde_json::to_string_pretty(&file)?);
            if let Some(out) = out {
                save_json(&out, &file)?;
            }
        }
        Command::DiagnoseEmbedding {
            lm,
            lexicon,
            corpus,
            clusters,
            align,
            features,
            ids,
            detections,
            k,
            settings,
        } => {
            let cfg = settings.load()?;
            let text = TextData::load(&lexicon, &corpus, &cfg)?;
            let (lm, _) = load_lm(&lm)?;
            let clusters = clusters
                .map(|p| load_concept_clusters(&p, &text.lexicon))
                .transpose()?;
            let mut out = serde_json::Map::new();
            match align {
                Some(align) => {
                    let (model, _) = load_align(&align)?;
                    let (f, i, d) = (features.unwrap(), ids.unwrap(), detections.unwrap());
                    let images = load_images(&text.lexicon, &f, &i, &d)?;
                    let space = JointSpace::new(&lm, &model, &text, &images, clusters.as_deref());
                    out.insert("ratio_intra_inter".into(), space.text_ratio().into());
                    out.insert("mixing_score".into(), space.mixing(k).into());
                }
                None => {
                    let emb: Vec<Vec<f64>> = embed_corpus(&lm, &text.corpus.records)
                        .into_iter()
                        .map(|e| e.into_iter().map(f64::from).collect())
                        .collect();
                    let labels = cluster_labels(&text.corpus.concept_sets(), clusters.as_deref());
                    out.insert("ratio_intra_inter".into(), intra_inter_ratio(&emb, &labels).into());
                }
            }
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::SynthGen {
            seed,
            n_images,
            n_sentences,
            n_concepts,
            feature_dim,
            references,
            cooccurrence,
            identity,
            control,
            miss_rate,
            false_positive_rate,
            out,
        } => {
            let mut sc = SynthConfig::new(seed, n_images, n_sentences, n_concepts);
            sc.feature_dim = feature_dim;
            sc.references_per_image = references;
            sc.cooccurrence = if identity {
                Cooccurrence::Identity
            } else {
                Cooccurrence::Clustered(cooccurrence)
            };
            if control {
                sc.probe = Probe::Control;
            }
            sc.miss_rate = miss_rate;
            sc.false_positive_rate = false_positive_rate;
            let world = SyntheticWorld::new(sc).map_err(|e| InputError(e.to_string()))?;
            if identity {
                log::warn!("identity co-occurrence: the world has no discovery probe");
            }
            let files = world.generate().write(&out)?;
            println!("wrote {}", files.corpus.parent().unwrap_or(Path::new(".")).display());
        }
        Command::RunPipeline {
            ablation,
            out_dir,
            settings,
        } => {
            let mut cfg = settings.load()?;
            if let Some(a) = ablation {
                cfg.ablation = a;
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            let summary = run_pipeline(&cfg)?;
            for s in &summary.skipped {
                println!("{s}: up to date");
            }
            for s in &summary.executed {
                println!("{s}: done");
            }
            println!("artifacts in {}", summary.files.dir.display());
        }
    }
    Ok(())
}

/// 3 for training divergence, 2 for every other failure.
fn exit_code(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.downcast_ref::<TrainError>().is_some()) {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli).context("unicap") {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
