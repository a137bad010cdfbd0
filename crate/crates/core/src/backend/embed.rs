use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use log::warn;

use crate::audio::{read_archive, write_archive, FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    pub id: String,
    pub speaker: String,
    pub vector: Vec<f64>,
}

/// Fixed-length utterance vectors with speaker labels, in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    pub dim: usize,
    entries: Vec<Embedding>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn push(&mut self, id: impl Into<String>, speaker: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "embedding {id} has {} dims, set holds {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("embedding {id} is not finite")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::Data(format!("duplicate embedding id {id}")));
        }
        self.index.insert(id.clone(), self.entries.len());
        self.entries.push(Embedding {
            id,
            speaker: speaker.into(),
            vector,
        });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Embedding] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    /// Vectors grouped by speaker, speakers in sorted order.
    pub fn by_speaker(&self) -> BTreeMap<&str, Vec<&[f64]>> {
        let mut m: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
        for e in &self.entries {
            m.entry(&e.speaker).or_default().push(&e.vector);
        }
        m
    }

    /// Apply `f` to every vector, keeping ids and labels.
    pub fn map(&self, dim: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut out = Self::new(dim);
        for e in &self.entries {
            out.push(e.id.clone(), e.speaker.clone(), f(&e.vector))?;
        }
        Ok(out)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for e in &self.entries {
            for (a, b) in m.iter_mut().zip(&e.vector) {
                *a += b;
            }
        }
        let n = self.entries.len().max(1) as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Column means of a frame matrix.
pub fn average_pool(f: &FeatureMatrix) -> Result<Vec<f64>> {
    if f.rows == 0 {
        return Err(Error::Data("cannot pool an empty feature matrix".into()));
    }
    let mut m = vec![0.0; f.cols];
    for row in f.rows_iter() {
        for (a, b) in m.iter_mut().zip(row) {
            *a += b;
        }
    }
    let n = f.rows as f64;
    m.iter_mut().for_each(|v| *v /= n);
    Ok(m)
}

/// Global-mean subtraction followed by scaling to unit length.
#[derive(Clone, Debug, PartialEq)]
pub struct LengthNorm {
    pub mean: Vec<f64>,
}

impl LengthNorm {
    pub fn fit(set: &EmbeddingSet) -> Result<Self> {
        if set.len() < 2 {
            return Err(Error::Data(format!(
                "mean estimation needs at least 2 embeddings, got {}",
                set.len()
            )));
        }
        Ok(Self { mean: set.mean() })
    }

    pub fn apply_one(&self, v: &[f64]) -> Vec<f64> {
        let c: Vec<f64> = v.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            warn!("embedding equals the global mean; left as zero");
            return c;
        }
        c.into_iter().map(|x| x / norm).collect()
    }

    pub fn apply(&self, set: &EmbeddingSet) -> Result<EmbeddingSet> {
        set.map(set.dim, |v| self.apply_one(v))
    }
}

pub fn mean_length_normalize(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    LengthNorm::fit(set)?.apply(set)
}

/// Frame-synchronous concatenation: `a`'s columns then `b`'s, truncated to
/// the shorter of the two.
pub fn fuse_concat(a: &FeatureMatrix, b: &FeatureMatrix) -> Result<FeatureMatrix> {
    if (a.frame_shift_ms - b.frame_shift_ms).abs() > 1e-9 || a.frame_shift_ms <= 0.0 {
        return Err(Error::Shape(format!(
            "cannot fuse frame shifts {} ms and {} ms",
            a.frame_shift_ms, b.frame_shift_ms
        )));
    }
    let rows = a.rows.min(b.rows);
    let cols = a.cols + b.cols;
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    let mut out = FeatureMatrix::new(rows, cols, data, FeatureKind::Fused)?;
    out.frame_shift_ms = a.frame_shift_ms;
    Ok(out)
}

/// Store a set as a feature archive of one-row matrices.
pub fn write_embeddings(path: impl AsRef<Path>, set: &EmbeddingSet, kind: FeatureKind) -> Result<()> {
    let entries = set
        .entries()
        .iter()
        .map(|e| Ok((e.id.clone(), FeatureMatrix::new(1, set.dim, e.vector.clone(), kind)?)))
        .collect::<Result<Vec<_>>>()?;
    write_archive(path, &entries)
}

/// Read one-row matrices back as `(id, vector)` pairs.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<(String, Vec<f64>)>> {
    read_archive(path)?
        .into_iter()
        .map(|(id, m)| {
            if m.rows != 1 {
                return Err(Error::format("rows", format!("embedding {id} has {} rows", m.rows)));
            }
            Ok((id, m.data))
        })
        .collect()
}
