use nalgebra::{DMatrix, DVector};

use super::embed::EmbeddingSet;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_ridge, from_rows, sym_eigen_desc, to_rows};

/// Relative floor added to the within-class scatter diagonal.
const WITHIN_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct LdaModel {
    pub mean: Vec<f64>,
    /// `D × L`; columns are the discriminant directions, strongest first.
    pub proj: DMatrix<f64>,
    /// Generalised eigenvalues (between over within) of the kept directions.
    pub eigenvalues: Vec<f64>,
}

/// Scatter matrices `(within, between)`, both normalised by the number of vectors.
pub(crate) fn scatter(set: &EmbeddingSet) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let d = set.dim;
    let mean = DVector::from_vec(set.mean());
    let mut within = DMatrix::zeros(d, d);
    let mut between = DMatrix::zeros(d, d);
    for vecs in set.by_speaker().values() {
        let mut mu = DVector::zeros(d);
        for v in vecs {
            mu += DVector::from_column_slice(v);
        }
        mu /= vecs.len() as f64;
        for v in vecs {
            let c = DVector::from_column_slice(v) - &mu;
            within.syger(1.0, &c, &c, 1.0);
        }
        let m = &mu - &mean;
        between.syger(vecs.len() as f64, &m, &m, 1.0);
    }
    within.fill_upper_triangle_with_lower_triangle();
    between.fill_upper_triangle_with_lower_triangle();
    let n = set.len() as f64;
    (mean, within / n, between / n)
}

/// Fisher LDA: the top `l` generalised eigenvectors of `(S_w⁻¹ S_b)`, found by
/// whitening with the Cholesky factor of the floored within-class scatter.
pub fn lda_fit(set: &EmbeddingSet, l: usize) -> Result<LdaModel> {
    let speakers = set.by_speaker().len();
    let max = set.dim.min(speakers.saturating_sub(1));
    if l == 0 || l > max {
        return Err(Error::Config(format!(
            "LDA dimension {l} is not in 1..={max} ({} dims, {speakers} speakers)",
            set.dim
        )));
    }
    let (mean, mut within, between) = scatter(set);
    let d = set.dim;
    let floor = WITHIN_FLOOR * (within.trace() / d as f64).max(f64::MIN_POSITIVE);
    for i in 0..d {
        within[(i, i)] += floor;
    }
    let chol = cholesky_ridge(&within, "LDA within-class scatter")?;
    let linv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| Error::Numeric("LDA whitening failed".into()))?;
    let m = &linv * between * linv.transpose();
    let (values, vectors) = sym_eigen_desc(&m);
    let proj = linv.transpose() * vectors.columns(0, l);
    Ok(LdaModel {
        mean: mean.as_slice().to_vec(),
        proj,
        eigenvalues: values[..l].to_vec(),
    })
}

impl LdaModel {
    pub fn dim(&self) -> usize {
        self.proj.ncols()
    }

    pub fn transform_one(&self, x: &[f64]) -> Vec<f64> {
        let c = DVector::from_iterator(x.len(), x.iter().zip(&self.mean).map(|(a, b)| a - b));
        (self.proj.transpose() * c).as_slice().to_vec()
    }

    pub fn transform(&self, set: &EmbeddingSet) -> Result<EmbeddingSet> {
        if set.dim != self.mean.len() {
            return Err(Error::Shape(format!("LDA fitted on {} dims, set has {}", self.mean.len(), set.dim)));
        }
        set.map(self.dim(), |v| self.transform_one(v))
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        c.push_f64("lda.mean", &[self.mean.len()], &self.mean);
        c.push_f64("lda.proj", &[self.proj.nrows(), self.proj.ncols()], &to_rows(&self.proj));
        c.push_f64("lda.eigenvalues", &[self.eigenvalues.len()], &self.eigenvalues);
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (_, mean) = c.get_f64("lda.mean")?;
        let (shape, proj) = c.get_f64("lda.proj")?;
        if shape.len() != 2 || shape[0] != mean.len() {
            return Err(Error::format("lda.proj", format!("shape {shape:?} does not fit the mean")));
        }
        let (_, eigenvalues) = c.get_f64("lda.eigenvalues")?;
        Ok(Self {
            mean,
            proj: from_rows(shape[0], shape[1], &proj),
            eigenvalues,
        })
    }
}
