use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// The three context-model layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// One forward GRU, 256 units.
    Cdck2,
    /// Two stacked forward GRU layers, 40 units.
    Cdck5,
    /// A forward and a backward GRU sharing the encoder, 128 units each.
    Cdck6,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Cdck2, Variant::Cdck5, Variant::Cdck6];

    pub fn tag(self) -> &'static str {
        match self {
            Self::Cdck2 => "CDCK2",
            Self::Cdck5 => "CDCK5",
            Self::Cdck6 => "CDCK6",
        }
    }

    /// `(ar_hidden, ar_layers, directions)`.
    pub fn ar_shape(self) -> (usize, usize, usize) {
        match self {
            Self::Cdck2 => (256, 1, 1),
            Self::Cdck5 => (40, 2, 1),
            Self::Cdck6 => (128, 1, 2),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CDCK2" => Ok(Self::Cdck2),
            "CDCK5" => Ok(Self::Cdck5),
            "CDCK6" => Ok(Self::Cdck6),
            _ => Err(Error::Config(format!("unknown CPC variant {s:?}"))),
        }
    }
}

/// Architecture and training hyper-parameters of a CPC model.
#[derive(Clone, Debug, PartialEq)]
pub struct CpcConfig {
    pub variant: Variant,
    pub kernels: Vec<usize>,
    pub strides: Vec<usize>,
    pub paddings: Vec<usize>,
    pub channels: usize,
    pub ar_hidden: usize,
    pub ar_layers: usize,
    pub directions: usize,
    /// Number of future frames predicted from each context.
    pub k: usize,
    pub batch: usize,
    /// Training crop length in samples.
    pub crop: usize,
    pub lr: f64,
    /// Random crops drawn from every training utterance per epoch.
    pub crops_per_utterance: usize,
}

impl CpcConfig {
    /// Full-size model: 512 encoder channels and the variant's recurrent shape.
    pub fn new(variant: Variant) -> Self {
        let (ar_hidden, ar_layers, directions) = variant.ar_shape();
        Self {
            variant,
            kernels: vec![10, 8, 4, 4, 4],
            strides: vec![5, 4, 2, 2, 2],
            paddings: vec![3, 2, 1, 1, 1],
            channels: 512,
            ar_hidden,
            ar_layers,
            directions,
            k: 12,
            batch: 64,
            crop: 20480,
            lr: 1e-4,
            crops_per_utterance: 1,
        }
    }

    /// Same geometry at a width that trains on one CPU core in minutes.
    pub fn desk(variant: Variant) -> Self {
        let mut cfg = Self::new(variant);
        cfg.channels = 24;
        cfg.ar_hidden = match variant {
            Variant::Cdck5 => 40,
            _ => 64,
        };
        cfg.lr = 4e-3;
        cfg.crops_per_utterance = 32;
        cfg
    }

    /// Total temporal downsampling of the encoder.
    pub fn downsampling(&self) -> usize {
        self.strides.iter().product()
    }

    /// Latent frames produced from one training crop.
    pub fn crop_frames(&self) -> usize {
        self.crop / self.downsampling()
    }

    /// Width of an extracted context feature row.
    pub fn feature_dim(&self) -> usize {
        self.ar_hidden * self.directions
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kernels.len();
        if n == 0 || self.strides.len() != n || self.paddings.len() != n {
            return Err(Error::Config(
                "encoder kernels, strides and paddings must have equal non-zero length".into(),
            ));
        }
        if self.strides.contains(&0) || self.kernels.contains(&0) {
            return Err(Error::Config("encoder kernels and strides must be positive".into()));
        }
        if self.channels == 0 || self.ar_hidden == 0 || self.ar_layers == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(1..=2).contains(&self.directions) {
            return Err(Error::Config(format!("directions must be 1 or 2, got {}", self.directions)));
        }
        if self.batch < 2 {
            return Err(Error::Config("batch must hold at least 2 crops".into()));
        }
        if self.crop % self.downsampling() != 0 {
            return Err(Error::Config(format!(
                "crop {} is not a multiple of the encoder downsampling {}",
                self.crop,
                self.downsampling()
            )));
        }
        if self.k == 0 || self.k + 1 > self.crop_frames() {
            return Err(Error::Config(format!(
                "k = {} leaves no anchor in {} frames",
                self.k,
                self.crop_frames()
            )));
        }
        if !(self.lr > 0.0) || self.crops_per_utterance == 0 {
            return Err(Error::Config("lr and crops_per_utterance must be positive".into()));
        }
        Ok(())
    }
}

/// Closed-form parameter count: encoder convolutions with bias, GRU layers
/// with input- and hidden-side biases, and bias-free prediction heads.
pub fn parameter_count(cfg: &CpcConfig) -> usize {
    let mut total = 0;
    let mut cin = 1;
    for &k in &cfg.kernels {
        total += cin * cfg.channels * k + cfg.channels;
        cin = cfg.channels;
    }
    let h = cfg.ar_hidden;
    let mut input = cfg.channels;
    let mut gru = 0;
    for _ in 0..cfg.ar_layers {
        gru += 3 * (h * input + h * h + 2 * h);
        input = h;
    }
    total + cfg.directions * (gru + cfg.k * h * cfg.channels)
}
