//! Dense linear-algebra helpers over `nalgebra`.

use log::warn;
use nalgebra::{Cholesky, DMatrix, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub const RIDGE: f64 = 1e-6;

/// Cholesky factor of a symmetric matrix; on failure adds a growing ridge
/// (1e-6 up to 0.1, relative to the largest diagonal magnitude) and warns.
/// A matrix that needs more than that is reported as singular.
pub fn cholesky_ridge(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let n = m.nrows();
    let scale = m.diagonal().amax().max(f64::MIN_POSITIVE);
    let mut ridge = RIDGE * scale;
    for _ in 0..6 {
        if let Some(c) = Cholesky::new(m + DMatrix::identity(n, n) * ridge) {
            warn!("{what} is not positive definite; added ridge {ridge:e}");
            return Ok(c);
        }
        ridge *= 10.0;
    }
    Err(Error::Numeric(format!("{what} is singular even after ridge regularisation")))
}

/// Log-determinant from a Cholesky factor.
pub fn log_det(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues descending. Each
/// eigenvector is signed so its first clearly non-zero component is positive.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let n = e.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[b].total_cmp(&e.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(m.nrows(), n);
    for (j, &i) in order.iter().enumerate() {
        let mut v = e.eigenvectors.column(i).into_owned();
        let scale = v.amax();
        if let Some(first) = v.iter().find(|x| x.abs() > 1e-12 * scale.max(1e-300)) {
            if *first < 0.0 {
                v.neg_mut();
            }
        }
        vectors.set_column(j, &v);
    }
    (values, vectors)
}

/// Principal angles in degrees between the column spans of `a` and `b`.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let s = (qa.transpose() * qb).singular_values();
    let mut angles: Vec<f64> = s.iter().map(|c| c.clamp(-1.0, 1.0).acos().to_degrees()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}

/// Row-major slice to matrix.
pub fn from_rows(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

/// Matrix to row-major vector.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}
