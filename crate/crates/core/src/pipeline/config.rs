use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::cpc::{CpcConfig, Variant};
use crate::error::{Error, Result};
use crate::eval::{DcfParams, Protocol};

/// Widest frame feature the i-vector path accepts.
pub const IVECTOR_MAX_DIM: usize = 60;
pub const MFCC_DIM: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureChoice {
    Mfcc,
    Cpc,
    /// MFCC concatenated with (PCA-reduced) CPC features.
    Fused,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Summarization {
    Pool,
    IVector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CpcScale {
    Desk,
    Full,
}

impl FeatureChoice {
    pub fn name(self) -> &'static str {
        match self {
            Self::Mfcc => "mfcc",
            Self::Cpc => "cpc",
            Self::Fused => "fused",
        }
    }
}

impl Summarization {
    pub fn name(self) -> &'static str {
        match self {
            Self::Pool => "pool",
            Self::IVector => "ivector",
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("{key} = {value:?}: expected {want}"))
}

fn parse_num<T: FromStr>(key: &str, v: &str, want: &str) -> Result<T> {
    v.parse().map_err(|_| bad(key, v, want))
}

fn parse_auto<T: FromStr>(key: &str, v: &str, want: &str) -> Result<Option<T>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_num(key, v, want).map(Some)
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
}

fn show_auto<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "auto".to_string(), T::to_string)
}

/// Every knob of a pipeline run. Text form is `key = value` lines with `#`
/// comments; unknown keys are errors.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub corpus: PathBuf,
    pub workdir: PathBuf,
    pub train_subsets: Vec<String>,
    pub dev_subsets: Vec<String>,
    pub test_subsets: Vec<String>,
    pub features: FeatureChoice,
    pub summarization: Summarization,
    pub cpc_variant: Variant,
    pub cpc_scale: CpcScale,
    pub cpc_epochs: usize,
    pub cpc_crops_per_utterance: Option<usize>,
    pub cpc_lr: Option<f64>,
    pub cpc_channels: Option<usize>,
    /// Frame-level PCA applied to CPC features before i-vectors and fusion; 0 disables.
    pub pca_dim: usize,
    pub lda_dim: Option<usize>,
    pub ubm_components: usize,
    pub ubm_iters: usize,
    pub tv_rank: usize,
    pub tv_iters: usize,
    pub plda_iters: usize,
    pub protocols: Vec<Protocol>,
    pub seed: u64,
    pub dcf: DcfParams,
    pub stages: Vec<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            corpus: PathBuf::from("corpus"),
            workdir: PathBuf::from("work"),
            train_subsets: vec!["train".into()],
            dev_subsets: vec!["dev".into()],
            test_subsets: vec!["test".into()],
            features: FeatureChoice::Mfcc,
            summarization: Summarization::Pool,
            cpc_variant: Variant::Cdck2,
            cpc_scale: CpcScale::Desk,
            cpc_epochs: 20,
            cpc_crops_per_utterance: None,
            cpc_lr: None,
            cpc_channels: None,
            pca_dim: 36,
            lda_dim: None,
            ubm_components: 16,
            ubm_iters: 10,
            tv_rank: 16,
            tv_iters: 5,
            plda_iters: 10,
            protocols: vec![Protocol::One, Protocol::Two],
            seed: 1,
            dcf: DcfParams::default(),
            stages: vec!["all".into()],
        }
    }
}

const HELP: &[(&str, &str)] = &[
    ("corpus", "corpus root holding <subset>/<speaker>/<chapter>/<id>.wav"),
    ("workdir", "directory for every artifact and stage receipt"),
    ("train_subsets", "comma list of subset directories used for training"),
    ("dev_subsets", "subsets used for CPC validation"),
    ("test_subsets", "subsets that trials are drawn from"),
    ("features", "mfcc | cpc | fused"),
    ("summarization", "pool | ivector"),
    ("cpc_variant", "CDCK2 | CDCK5 | CDCK6"),
    ("cpc_scale", "desk (narrow, fast) | full (512-channel encoder)"),
    ("cpc_epochs", "CPC training epochs"),
    ("cpc_crops_per_utterance", "random crops per training utterance per epoch"),
    ("cpc_lr", "Adam learning rate"),
    ("cpc_channels", "encoder width"),
    ("pca_dim", "frame PCA of CPC features before i-vectors and fusion, 0 = off"),
    ("lda_dim", "LDA output size; auto = min(200 for 256+ dims, 40 for 40+, else input; speakers - 1)"),
    ("ubm_components", "diagonal GMM components"),
    ("ubm_iters", "UBM EM iterations"),
    ("tv_rank", "i-vector dimension"),
    ("tv_iters", "total-variability EM iterations"),
    ("plda_iters", "PLDA EM iterations"),
    ("protocols", "trial protocols to score, comma list of 1 and 2"),
    ("seed", "master seed"),
    ("dcf_p_target", "target prior for the detection cost"),
    ("dcf_c_frr", "cost of a miss"),
    ("dcf_c_far", "cost of a false alarm"),
    ("stages", "stages run by run-all, or all"),
];

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "corpus" => self.corpus = PathBuf::from(v),
            "workdir" => self.workdir = PathBuf::from(v),
            "train_subsets" => self.train_subsets = list(v),
            "dev_subsets" => self.dev_subsets = list(v),
            "test_subsets" => self.test_subsets = list(v),
            "features" => {
                self.features = match v {
                    "mfcc" => FeatureChoice::Mfcc,
                    "cpc" => FeatureChoice::Cpc,
                    "fused" => FeatureChoice::Fused,
                    _ => return Err(bad(key, v, "mfcc, cpc or fused")),
                }
            }
            "summarization" => {
                self.summarization = match v {
                    "pool" => Summarization::Pool,
                    "ivector" => Summarization::IVector,
                    _ => return Err(bad(key, v, "pool or ivector")),
                }
            }
            "cpc_variant" => self.cpc_variant = v.parse()?,
            "cpc_scale" => {
                self.cpc_scale = match v {
                    "desk" => CpcScale::Desk,
                    "full" => CpcScale::Full,
                    _ => return Err(bad(key, v, "desk or full")),
                }
            }
            "cpc_epochs" => self.cpc_epochs = parse_num(key, v, "a count")?,
            "cpc_crops_per_utterance" => self.cpc_crops_per_utterance = parse_auto(key, v, "a count or auto")?,
            "cpc_lr" => self.cpc_lr = parse_auto(key, v, "a number or auto")?,
            "cpc_channels" => self.cpc_channels = parse_auto(key, v, "a count or auto")?,
            "pca_dim" => self.pca_dim = parse_num(key, v, "a count")?,
            "lda_dim" => self.lda_dim = parse_auto(key, v, "a count or auto")?,
            "ubm_components" => self.ubm_components = parse_num(key, v, "a count")?,
            "ubm_iters" => self.ubm_iters = parse_num(key, v, "a count")?,
            "tv_rank" => self.tv_rank = parse_num(key, v, "a count")?,
            "tv_iters" => self.tv_iters = parse_num(key, v, "a count")?,
            "plda_iters" => self.plda_iters = parse_num(key, v, "a count")?,
            "protocols" => self.protocols = list(v).iter().map(|p| p.parse()).collect::<Result<_>>()?,
            "seed" => self.seed = parse_num(key, v, "an unsigned integer")?,
            "dcf_p_target" => self.dcf.p_target = parse_num(key, v, "a probability")?,
            "dcf_c_frr" => self.dcf.c_frr = parse_num(key, v, "a positive cost")?,
            "dcf_c_far" => self.dcf.c_far = parse_num(key, v, "a positive cost")?,
            "stages" => self.stages = list(v),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Current value of `key` in config-file syntax.
    pub fn get(&self, key: &str) -> Result<String> {
        let join = |v: &[String]| v.join(",");
        Ok(match key {
            "corpus" => self.corpus.display().to_string(),
            "workdir" => self.workdir.display().to_string(),
            "train_subsets" => join(&self.train_subsets),
            "dev_subsets" => join(&self.dev_subsets),
            "test_subsets" => join(&self.test_subsets),
            "features" => self.features.name().into(),
            "summarization" => self.summarization.name().into(),
            "cpc_variant" => self.cpc_variant.to_string(),
            "cpc_scale" => match self.cpc_scale {
                CpcScale::Desk => "desk".into(),
                CpcScale::Full => "full".into(),
            },
            "cpc_epochs" => self.cpc_epochs.to_string(),
            "cpc_crops_per_utterance" => show_auto(&self.cpc_crops_per_utterance),
            "cpc_lr" => show_auto(&self.cpc_lr),
            "cpc_channels" => show_auto(&self.cpc_channels),
            "pca_dim" => self.pca_dim.to_string(),
            "lda_dim" => show_auto(&self.lda_dim),
            "ubm_components" => self.ubm_components.to_string(),
            "ubm_iters" => self.ubm_iters.to_string(),
            "tv_rank" => self.tv_rank.to_string(),
            "tv_iters" => self.tv_iters.to_string(),
            "plda_iters" => self.plda_iters.to_string(),
            "protocols" => self.protocols.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(","),
            "seed" => self.seed.to_string(),
            "dcf_p_target" => self.dcf.p_target.to_string(),
            "dcf_c_frr" => self.dcf.c_frr.to_string(),
            "dcf_c_far" => self.dcf.c_far.to_string(),
            "stages" => join(&self.stages),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        })
    }

    /// Every key with its current value and a one-line comment; parses back
    /// to the same configuration.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, help) in HELP {
            let _ = writeln!(s, "# {help}");
            let _ = writeln!(s, "{k} = {}", self.get(k).expect("listed keys exist"));
        }
        s
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        HELP.iter().map(|(k, _)| *k)
    }

    pub fn cpc_config(&self) -> CpcConfig {
        let mut c = match self.cpc_scale {
            CpcScale::Desk => CpcConfig::desk(self.cpc_variant),
            CpcScale::Full => CpcConfig::new(self.cpc_variant),
        };
        if let Some(v) = self.cpc_crops_per_utterance {
            c.crops_per_utterance = v;
        }
        if let Some(v) = self.cpc_lr {
            c.lr = v;
        }
        if let Some(v) = self.cpc_channels {
            c.channels = v;
        }
        c
    }

    /// Width of CPC frames after the optional PCA.
    pub fn reduced_cpc_dim(&self) -> usize {
        if self.pca_dim > 0 {
            self.pca_dim
        } else {
            self.cpc_config().feature_dim()
        }
    }

    /// Width of the frames that get summarised.
    pub fn frame_dim(&self) -> usize {
        match (self.features, self.summarization) {
            (FeatureChoice::Mfcc, _) => MFCC_DIM,
            (FeatureChoice::Cpc, Summarization::Pool) => self.cpc_config().feature_dim(),
            (FeatureChoice::Cpc, Summarization::IVector) => self.reduced_cpc_dim(),
            (FeatureChoice::Fused, _) => MFCC_DIM + self.reduced_cpc_dim(),
        }
    }

    /// Tag naming one feature/summarization system's artifacts.
    pub fn system(&self) -> String {
        format!("{}_{}", self.features.name(), self.summarization.name())
    }

    pub fn validate(&self) -> Result<()> {
        self.cpc_config().validate()?;
        self.dcf.validate()?;
        if self.train_subsets.is_empty() || self.test_subsets.is_empty() {
            return Err(Error::Config("train_subsets and test_subsets must be non-empty".into()));
        }
        if self.protocols.is_empty() {
            return Err(Error::Config("protocols must list at least one of 1, 2".into()));
        }
        let cpc_dim = self.cpc_config().feature_dim();
        if self.pca_dim > cpc_dim {
            return Err(Error::Config(format!(
                "pca_dim {} exceeds the {cpc_dim}-dim CPC features",
                self.pca_dim
            )));
        }
        if self.summarization == Summarization::IVector {
            let d = self.frame_dim();
            if d > IVECTOR_MAX_DIM {
                return Err(Error::Config(format!(
                    "i-vector input is {d}-dim, above {IVECTOR_MAX_DIM}; lower pca_dim"
                )));
            }
            if self.ubm_components == 0 || self.tv_rank == 0 {
                return Err(Error::Config("ubm_components and tv_rank must be positive".into()));
            }
        }
        if self.lda_dim == Some(0) {
            return Err(Error::Config("lda_dim must be positive or auto".into()));
        }
        Ok(())
    }

    /// LDA size: as configured, else a width-dependent default
    /// capped by the number of training speakers minus one.
    pub fn resolve_lda_dim(&self, input_dim: usize, speakers: usize) -> usize {
        let by_width = match input_dim {
            256.. => 200,
            d if d >= 40 => 40,
            d => d,
        };
        self.lda_dim
            .unwrap_or_else(|| by_width.min(speakers.saturating_sub(1)).max(1))
    }
}
