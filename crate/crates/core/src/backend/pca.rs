use nalgebra::{DMatrix, DVector};

use crate::audio::FeatureMatrix;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::linalg::{from_rows, sym_eigen_desc, to_rows};

/// Eigenvalues below this fraction of the largest count as zero for rank.
const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `D × P`, orthonormal columns, largest variance first.
    pub basis: DMatrix<f64>,
    /// Percent of total variance carried by the kept components.
    pub explained_ratio: f64,
    /// All `D` covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
}

/// Principal components of frames pooled over every matrix in `data`.
/// Covariance is normalised by the frame count.
pub fn pca_fit(data: &[&FeatureMatrix], p: usize) -> Result<PcaModel> {
    let dim = data.first().map(|f| f.cols).ok_or_else(|| Error::EmptyDataset("no frames for PCA".into()))?;
    if data.iter().any(|f| f.cols != dim) {
        return Err(Error::Shape("PCA input matrices disagree on width".into()));
    }
    let n: usize = data.iter().map(|f| f.rows).sum();
    let mut mean = DVector::zeros(dim);
    for row in data.iter().flat_map(|f| f.rows_iter()) {
        mean += DVector::from_column_slice(row);
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(dim, dim);
    for row in data.iter().flat_map(|f| f.rows_iter()) {
        let c = DVector::from_column_slice(row) - &mean;
        cov.syger(1.0, &c, &c, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    cov /= n as f64;
    let (values, vectors) = sym_eigen_desc(&cov);
    let top = values.first().copied().unwrap_or(0.0).max(0.0);
    let rank = values.iter().filter(|&&v| v > RANK_TOL * top).count();
    if p == 0 || p > rank {
        return Err(Error::Config(format!(
            "PCA dimension {p} is not in 1..={rank} (rank of the {dim}-dim frame covariance)"
        )));
    }
    let total: f64 = values.iter().map(|v| v.max(0.0)).sum();
    let kept: f64 = values[..p].iter().map(|v| v.max(0.0)).sum();
    Ok(PcaModel {
        mean: mean.as_slice().to_vec(),
        basis: vectors.columns(0, p).into_owned(),
        explained_ratio: (100.0 * kept / total).clamp(0.0, 100.0),
        eigenvalues: values,
    })
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let c = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, b)| a - b));
        (self.basis.transpose() * c).as_slice().to_vec()
    }

    pub fn reconstruct(&self, y: &[f64]) -> Vec<f64> {
        let r = &self.basis * DVector::from_column_slice(y);
        r.iter().zip(&self.mean).map(|(a, b)| a + b).collect()
    }

    pub fn transform(&self, f: &FeatureMatrix) -> Result<FeatureMatrix> {
        if f.cols != self.mean.len() {
            return Err(Error::Shape(format!(
                "PCA fitted on {} dims, input has {}",
                self.mean.len(),
                f.cols
            )));
        }
        let data = f.rows_iter().flat_map(|r| self.project(r)).collect();
        let mut out = FeatureMatrix::new(f.rows, self.dim(), data, f.kind)?;
        out.frame_shift_ms = f.frame_shift_ms;
        Ok(out)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push_f64("pca.mean", &[self.mean.len()], &self.mean);
        c.push_f64("pca.basis", &[self.basis.nrows(), self.basis.ncols()], &to_rows(&self.basis));
        c.push_f64("pca.eigenvalues", &[self.eigenvalues.len()], &self.eigenvalues);
        c.push_f64("pca.explained_ratio", &[1], &[self.explained_ratio]);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (_, mean) = c.get_f64("pca.mean")?;
        let (shape, basis) = c.get_f64("pca.basis")?;
        if shape.len() != 2 || shape[0] != mean.len() {
            return Err(Error::format("pca.basis", format!("shape {shape:?} does not fit the mean")));
        }
        let (_, eigenvalues) = c.get_f64("pca.eigenvalues")?;
        let (_, ratio) = c.get_f64("pca.explained_ratio")?;
        Ok(Self {
            mean,
            basis: from_rows(shape[0], shape[1], &basis),
            explained_ratio: ratio[0],
            eigenvalues,
        })
    }
}
