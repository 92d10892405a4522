//! Run configuration: a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown keys are rejected. Relative paths are resolved against
//! the directory of the config file.

use std::path::{Path, PathBuf};

use thiserror::Error;
use unicap_core::align::{Ablation, AlignConfig, AlignLoss, Polarity};
use unicap_core::lm::LmConfig;
use unicap_core::text::CorpusOptions;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`: {reason}")]
    Value {
        line: usize,
        key: String,
        value: String,
        reason: String,
    },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // inputs and outputs
    pub lexicon: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub ids: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub references: Option<PathBuf>,
    pub clusters: Option<PathBuf>,
    pub out_dir: PathBuf,
    // seeds and schedule
    pub seed: u64,
    pub lm_epochs: usize,
    pub align_epochs: usize,
    // corpus
    pub min_count: usize,
    pub max_len: usize,
    pub plural_strip: bool,
    // language model
    pub word_dim: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub margin: f64,
    pub lambda_t: f64,
    pub batch: usize,
    pub lr_enc: f64,
    pub lr_dec: f64,
    // alignment
    pub k: usize,
    pub lambda_ce: f64,
    pub lambda_r: f64,
    pub lambda_adv: f64,
    pub gp_coeff: f64,
    pub critic_steps: usize,
    pub translator_hidden: usize,
    pub critic_hidden: usize,
    pub align_lr: f64,
    pub critic_lr: f64,
    pub align_batch: usize,
    pub ablation: Ablation,
    pub polarity: Polarity,
    // decoding and evaluation
    pub beam: usize,
    pub caption_max_len: usize,
    pub length_normalize: bool,
    pub oracle_runs: usize,
    pub mixing_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lm = LmConfig::default();
        let al = AlignConfig::default();
        Self {
            lexicon: None,
            corpus: None,
            features: None,
            ids: None,
            detections: None,
            references: None,
            clusters: None,
            out_dir: PathBuf::from("run"),
            seed: 0,
            lm_epochs: 20,
            align_epochs: 20,
            min_count: CorpusOptions::default().min_count,
            max_len: CorpusOptions::default().max_len,
            plural_strip: false,
            word_dim: lm.word_dim,
            hidden: lm.hidden,
            embed_dim: lm.embed_dim,
            margin: lm.margin,
            lambda_t: lm.lambda_t,
            batch: lm.batch,
            lr_enc: lm.lr_enc,
            lr_dec: lm.lr_dec,
            k: al.k,
            lambda_ce: al.lambda_ce,
            lambda_r: al.lambda_r,
            lambda_adv: al.lambda_adv,
            gp_coeff: al.gp_coeff,
            critic_steps: al.critic_steps,
            translator_hidden: al.hidden,
            critic_hidden: al.critic_hidden,
            align_lr: al.lr,
            critic_lr: al.critic_lr,
            align_batch: al.batch,
            ablation: Ablation::JointAdv,
            polarity: Polarity::Paper,
            beam: 3,
            caption_max_len: 20,
            length_normalize: false,
            oracle_runs: 100,
            mixing_k: 10,
        }
    }
}

fn parse_num<T: std::str::FromStr>(v: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse_finite(v: &str) -> Result<f64, String> {
    let x: f64 = parse_num(v)?;
    if x.is_finite() {
        Ok(x)
    } else {
        Err("must be finite".into())
    }
}

fn polarity_name(p: Polarity) -> &'static str {
    match p {
        Polarity::Paper => "paper",
        Polarity::Swapped => "swapped",
    }
}

impl RunConfig {
    /// Every key in canonical order.
    pub const KEYS: &'static [&'static str] = &[
        "lexicon",
        "corpus",
        "features",
        "ids",
        "detections",
        "references",
        "clusters",
        "out_dir",
        "seed",
        "lm_epochs",
        "align_epochs",
        "min_count",
        "max_len",
        "plural_strip",
        "word_dim",
        "hidden",
        "embed_dim",
        "margin",
        "lambda_t",
        "batch",
        "lr_enc",
        "lr_dec",
        "k",
        "lambda_ce",
        "lambda_r",
        "lambda_adv",
        "gp_coeff",
        "critic_steps",
        "translator_hidden",
        "critic_hidden",
        "align_lr",
        "critic_lr",
        "align_batch",
        "ablation",
        "polarity",
        "beam",
        "caption_max_len",
        "length_normalize",
        "oracle_runs",
        "mixing_k",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        match key {
            "lexicon" => self.lexicon = path(),
            "corpus" => self.corpus = path(),
            "features" => self.features = path(),
            "ids" => self.ids = path(),
            "detections" => self.detections = path(),
            "references" => self.references = path(),
            "clusters" => self.clusters = path(),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "seed" => self.seed = parse_num(v)?,
            "lm_epochs" => self.lm_epochs = parse_num(v)?,
            "align_epochs" => self.align_epochs = parse_num(v)?,
            "min_count" => self.min_count = parse_num(v)?,
            "max_len" => self.max_len = parse_num(v)?,
            "plural_strip" => self.plural_strip = parse_bool(v)?,
            "word_dim" => self.word_dim = parse_num(v)?,
            "hidden" => self.hidden = parse_num(v)?,
            "embed_dim" => self.embed_dim = parse_num(v)?,
            "margin" => self.margin = parse_finite(v)?,
            "lambda_t" => self.lambda_t = parse_finite(v)?,
            "batch" => self.batch = parse_num(v)?,
            "lr_enc" => self.lr_enc = parse_finite(v)?,
            "lr_dec" => self.lr_dec = parse_finite(v)?,
            "k" => self.k = parse_num(v)?,
            "lambda_ce" => self.lambda_ce = parse_finite(v)?,
            "lambda_r" => self.lambda_r = parse_finite(v)?,
            "lambda_adv" => self.lambda_adv = parse_finite(v)?,
            "gp_coeff" => self.gp_coeff = parse_finite(v)?,
            "critic_steps" => self.critic_steps = parse_num(v)?,
            "translator_hidden" => self.translator_hidden = parse_num(v)?,
            "critic_hidden" => self.critic_hidden = parse_num(v)?,
            "align_lr" => self.align_lr = parse_finite(v)?,
            "critic_lr" => self.critic_lr = parse_finite(v)?,
            "align_batch" => self.align_batch = parse_num(v)?,
            "ablation" => {
                self.ablation = Ablation::from_name(v).ok_or_else(|| {
                    "expected one of align-only, mle, joint-l2, joint-robust, joint-adv".to_string()
                })?
            }
            "polarity" => {
                self.polarity = match v {
                    "paper" => Polarity::Paper,
                    "swapped" => Polarity::Swapped,
                    _ => return Err("expected paper or swapped".into()),
                }
            }
            "beam" => self.beam = parse_num(v)?,
            "caption_max_len" => self.caption_max_len = parse_num(v)?,
            "length_normalize" => self.length_normalize = parse_bool(v)?,
            "oracle_runs" => self.oracle_runs = parse_num(v)?,
            "mixing_k" => self.mixing_k = parse_num(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Textual value of one key, as echoed into run logs.
    pub fn get(&self, key: &str) -> Option<String> {
        let p = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        Some(match key {
            "lexicon" => p(&self.lexicon),
            "corpus" => p(&self.corpus),
            "features" => p(&self.features),
            "ids" => p(&self.ids),
            "detections" => p(&self.detections),
            "references" => p(&self.references),
            "clusters" => p(&self.clusters),
            "out_dir" => self.out_dir.display().to_string(),
            "seed" => self.seed.to_string(),
            "lm_epochs" => self.lm_epochs.to_string(),
            "align_epochs" => self.align_epochs.to_string(),
            "min_count" => self.min_count.to_string(),
            "max_len" => self.max_len.to_string(),
            "plural_strip" => self.plural_strip.to_string(),
            "word_dim" => self.word_dim.to_string(),
            "hidden" => self.hidden.to_string(),
            "embed_dim" => self.embed_dim.to_string(),
            "margin" => self.margin.to_string(),
            "lambda_t" => self.lambda_t.to_string(),
            "batch" => self.batch.to_string(),
            "lr_enc" => self.lr_enc.to_string(),
            "lr_dec" => self.lr_dec.to_string(),
            "k" => self.k.to_string(),
            "lambda_ce" => self.lambda_ce.to_string(),
            "lambda_r" => self.lambda_r.to_string(),
            "lambda_adv" => self.lambda_adv.to_string(),
            "gp_coeff" => self.gp_coeff.to_string(),
            "critic_steps" => self.critic_steps.to_string(),
            "translator_hidden" => self.translator_hidden.to_string(),
            "critic_hidden" => self.critic_hidden.to_string(),
            "align_lr" => self.align_lr.to_string(),
            "critic_lr" => self.critic_lr.to_string(),
            "align_batch" => self.align_batch.to_string(),
            "ablation" => self.ablation.name().to_string(),
            "polarity" => polarity_name(self.polarity).to_string(),
            "beam" => self.beam.to_string(),
            "caption_max_len" => self.caption_max_len.to_string(),
            "length_normalize" => self.length_normalize.to_string(),
            "oracle_runs" => self.oracle_runs.to_string(),
            "mixing_k" => self.mixing_k.to_string(),
            _ => return None,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (key, value) = l.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (key, value) = (key.trim(), value.trim());
            if !Self::KEYS.contains(&key) {
                return Err(ConfigError::UnknownKey {
                    line,
                    key: key.into(),
                });
            }
            if !seen.insert(key.to_string()) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.into(),
                });
            }
            cfg.set(key, value).map_err(|reason| ConfigError::Value {
                line,
                key: key.into(),
                value: value.into(),
                reason,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let mut cfg = Self::parse(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.lexicon,
            &mut self.corpus,
            &mut self.features,
            &mut self.ids,
            &mut self.detections,
            &mut self.references,
            &mut self.clusters,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.out_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("word_dim", self.word_dim),
            ("hidden", self.hidden),
            ("embed_dim", self.embed_dim),
            ("batch", self.batch),
            ("k", self.k),
            ("critic_steps", self.critic_steps),
            ("translator_hidden", self.translator_hidden),
            ("critic_hidden", self.critic_hidden),
            ("align_batch", self.align_batch),
            ("beam", self.beam),
            ("caption_max_len", self.caption_max_len),
            ("max_len", self.max_len),
            ("oracle_runs", self.oracle_runs),
            ("mixing_k", self.mixing_k),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ConfigError::Invalid(format!("`{k}` must be at least 1")));
        }
        let non_negative = [
            ("margin", self.margin),
            ("lambda_t", self.lambda_t),
            ("lambda_ce", self.lambda_ce),
            ("lambda_r", self.lambda_r),
            ("lambda_adv", self.lambda_adv),
            ("gp_coeff", self.gp_coeff),
            ("lr_enc", self.lr_enc),
            ("lr_dec", self.lr_dec),
            ("align_lr", self.align_lr),
            ("critic_lr", self.critic_lr),
        ];
        if let Some((k, _)) = non_negative.iter().find(|(_, v)| *v < 0.0) {
            return Err(ConfigError::Invalid(format!("`{k}` must not be negative")));
        }
        Ok(())
    }

    /// Canonical `key = value` listing of every setting.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for k in Self::KEYS {
            s.push_str(&format!("{k} = {}\n", self.get(k).expect("listed key")));
        }
        s
    }

    pub fn lm_config(&self) -> LmConfig {
        LmConfig {
            word_dim: self.word_dim,
            hidden: self.hidden,
            embed_dim: self.embed_dim,
            margin: self.margin,
            lambda_t: self.lambda_t,
            batch: self.batch,
            lr_enc: self.lr_enc,
            lr_dec: self.lr_dec,
        }
    }

    /// Alignment settings with the configured ablation applied.
    pub fn align_config(&self) -> AlignConfig {
        self.ablation.apply(AlignConfig {
            k: self.k,
            lambda_ce: self.lambda_ce,
            lambda_r: self.lambda_r,
            lambda_adv: self.lambda_adv,
            gp_coeff: self.gp_coeff,
            critic_steps: self.critic_steps,
            hidden: self.translator_hidden,
            critic_hidden: self.critic_hidden,
            lr: self.align_lr,
            critic_lr: self.critic_lr,
            batch: self.align_batch,
            loss: AlignLoss::Robust,
            train_decoder: true,
            polarity: self.polarity,
        })
    }

    pub fn corpus_options(&self) -> CorpusOptions {
        CorpusOptions {
            min_count: self.min_count,
            max_len: self.max_len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_published_values() {
        let c = RunConfig::default();
        let table: &[(&str, &str)] = &[
            ("hidden", "200"),
            ("word_dim", "200"),
            ("embed_dim", "256"),
            ("k", "10"),
            ("lambda_t", "0.1"),
            ("lambda_ce", "1"),
            ("lambda_r", "1"),
            ("lambda_adv", "0.1"),
            ("batch", "64"),
            ("beam", "3"),
            ("lr_enc", "0.0001"),
            ("lr_dec", "0.001"),
            ("align_lr", "0.001"),
            ("translator_hidden", "512"),
            ("gp_coeff", "10"),
            ("critic_steps", "5"),
        ];
        for (k, v) in table {
            assert_eq!(c.get(k).as_deref(), Some(*v), "{k}");
        }
    }

    #[test]
    fn parse_echo_round_trip() {
        let text = "# run\nseed = 7\nlambda_t = 0\nablation = joint-l2\npolarity = swapped\n\ncorpus = data/c.txt\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.lambda_t, 0.0);
        assert_eq!(c.ablation, Ablation::JointL2);
        assert_eq!(c.align_config().loss, AlignLoss::Mean);
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
        assert_eq!(c.to_text().lines().count(), RunConfig::KEYS.len());
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            RunConfig::parse("seed = 1\nlearning_rate = 3\n"),
            Err(ConfigError::UnknownKey {
                line: 2,
                key: "learning_rate".into()
            })
        );
        assert_eq!(RunConfig::parse("seed 1\n"), Err(ConfigError::Syntax { line: 1 }));
        assert!(matches!(RunConfig::parse("seed = 1\nseed = 2\n"), Err(ConfigError::Duplicate { line: 2, .. })));
        assert!(matches!(RunConfig::parse("k = ten\n"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("lambda_adv = nan\n"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("k = 0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::parse("margin = -1\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(RunConfig::parse("ablation = full\n"), Err(ConfigError::Value { .. })));
    }

    #[test]
    fn every_key_round_trips_through_get_and_set() {
        let c = RunConfig::default();
        for k in RunConfig::KEYS {
            let mut d = RunConfig::default();
            let v = c.get(k).unwrap();
            if !v.is_empty() {
                d.set(k, &v).unwrap();
                assert_eq!(d, c, "{k}");
            }
        }
    }
}
