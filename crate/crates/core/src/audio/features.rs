use crate::error::{Error, Result};

/// What a [`FeatureMatrix`] holds. The discriminant is the archive tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum FeatureKind {
    Mfcc = 0,
    Cpc = 1,
    Fused = 2,
    IVector = 3,
    Pooled = 4,
    Stats = 5,
}

impl FeatureKind {
    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Self::Mfcc,
            1 => Self::Cpc,
            2 => Self::Fused,
            3 => Self::IVector,
            4 => Self::Pooled,
            5 => Self::Stats,
            _ => return Err(Error::format("kind", format!("unknown feature kind tag {tag}"))),
        })
    }

    /// Frame-level kinds are sampled every 10 ms; utterance-level kinds have no frame rate.
    pub fn default_shift_ms(self) -> f64 {
        match self {
            Self::Mfcc | Self::Cpc | Self::Fused => 10.0,
            _ => 0.0,
        }
    }
}

/// Row-major `frames × dims` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub kind: FeatureKind,
    pub frame_shift_ms: f64,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, kind: FeatureKind) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Data("feature matrix needs at least one row".into()));
        }
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} feature matrix given {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        Ok(Self {
            rows,
            cols,
            data,
            kind,
            frame_shift_ms: kind.default_shift_ms(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], kind: FeatureKind) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged feature rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat(), kind)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn rows_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols)
    }

    pub fn with_kind(mut self, kind: FeatureKind) -> Self {
        self.kind = kind;
        self
    }
}
