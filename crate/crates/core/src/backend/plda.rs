use log::warn;
use nalgebra::{DMatrix, DVector};

use super::embed::EmbeddingSet;
use super::lda::scatter;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_ridge, from_rows, log_det, sym_eigen_desc, to_rows};

/// Relative eigenvalue floor applied to a rank-deficient within-class covariance.
const W_FLOOR: f64 = 1e-6;

/// Two-covariance PLDA: `x = mu + y + e` with speaker variable `y ~ N(0, B)`
/// and residual `e ~ N(0, W)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PldaModel {
    pub mu: Vec<f64>,
    pub b: DMatrix<f64>,
    pub w: DMatrix<f64>,
    /// Marginal log-likelihood (up to constants) before each EM iteration and after the last.
    pub trace: Vec<f64>,
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    offset: f64,
}

/// Project onto the PSD cone; eigenvalues are floored at `floor`.
fn floor_eigen(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, bool) {
    let (values, vectors) = sym_eigen_desc(m);
    let changed = values.iter().any(|&v| v < floor);
    if !changed {
        return ((m + m.transpose()) * 0.5, false);
    }
    let d = DMatrix::from_diagonal(&DVector::from_iterator(values.len(), values.iter().map(|v| v.max(floor))));
    (&vectors * d * vectors.transpose(), true)
}

fn floor_within(w: &DMatrix<f64>) -> DMatrix<f64> {
    let scale = (w.trace() / w.nrows() as f64).max(f64::MIN_POSITIVE);
    let (out, changed) = floor_eigen(w, W_FLOOR * scale);
    if changed {
        warn!("PLDA within-class covariance is near singular; eigenvalues floored at {:e}", W_FLOOR * scale);
    }
    out
}

struct Speaker {
    n: f64,
    mean: DVector<f64>,
    /// `Σ_i (x_i - mu)(x_i - mu)ᵀ`
    second: DMatrix<f64>,
}

fn speakers(set: &EmbeddingSet, mu: &DVector<f64>) -> Vec<Speaker> {
    let d = set.dim;
    set.by_speaker()
        .values()
        .map(|vecs| {
            let mut mean = DVector::zeros(d);
            let mut second = DMatrix::zeros(d, d);
            for v in vecs {
                let c = DVector::from_column_slice(v) - mu;
                second.syger(1.0, &c, &c, 1.0);
                mean += c;
            }
            second.fill_upper_triangle_with_lower_triangle();
            let n = vecs.len() as f64;
            Speaker { n, mean: mean / n, second }
        })
        .collect()
}

/// Marginal log-likelihood of all speakers, dropping `2π` terms.
fn objective(spk: &[Speaker], b: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<f64> {
    let wc = cholesky_ridge(w, "PLDA within-class covariance")?;
    let ld_w = log_det(&wc);
    let mut total = 0.0;
    for s in spk {
        let g = b + w / s.n;
        let gc = cholesky_ridge(&g, "PLDA speaker-mean covariance")?;
        let dev = &s.second - &s.mean * s.mean.transpose() * s.n;
        let tr = (wc.solve(&dev)).trace();
        let quad = s.mean.dot(&gc.solve(&s.mean));
        total -= 0.5 * ((s.n - 1.0) * ld_w + tr + log_det(&gc) + quad);
    }
    Ok(total)
}

/// Fit `(mu, B, W)` by EM starting from the between/within scatter.
/// `mu` is the global mean and stays fixed.
pub fn plda_fit(set: &EmbeddingSet, iters: usize) -> Result<PldaModel> {
    let groups = set.by_speaker();
    let multi = groups.values().filter(|v| v.len() >= 2).count();
    if groups.len() < 2 || multi < 2 {
        return Err(Error::Data(format!(
            "PLDA needs at least 2 speakers with 2 or more utterances; have {} speakers, {multi} with repeats",
            groups.len()
        )));
    }
    let d = set.dim;
    let (mu, within, between) = scatter(set);
    let spk = speakers(set, &mu);
    let total_n = set.len() as f64;
    let mut w = floor_within(&within);
    let mut b = floor_eigen(&between, 0.0).0;
    let mut trace = vec![objective(&spk, &b, &w)?];
    for _ in 0..iters {
        let mut b_acc = DMatrix::zeros(d, d);
        let mut w_acc = DMatrix::zeros(d, d);
        for s in &spk {
            let g = cholesky_ridge(&(&b + &w / s.n), "PLDA speaker-mean covariance")?;
            // y | data ~ N(B G⁻¹ x̄, B - B G⁻¹ B)
            let y = &b * g.solve(&s.mean);
            let cov = &b - &b * g.solve(&b);
            let yy = &y * y.transpose();
            b_acc += &cov + &yy;
            let cross = &s.mean * y.transpose() * s.n;
            w_acc += &s.second - &cross - cross.transpose() + (yy + cov) * s.n;
        }
        b = floor_eigen(&(b_acc / spk.len() as f64), 0.0).0;
        w = floor_within(&(w_acc / total_n));
        trace.push(objective(&spk, &b, &w)?);
    }
    let mut model = PldaModel::new(mu.as_slice().to_vec(), b, w)?;
    model.trace = trace;
    Ok(model)
}

impl PldaModel {
    /// Build a scorer from given parameters.
    pub fn new(mu: Vec<f64>, b: DMatrix<f64>, w: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if b.shape() != (d, d) || w.shape() != (d, d) {
            return Err(Error::Shape(format!("PLDA covariances must be {d}x{d}")));
        }
        let t = &b + &w;
        let tc = cholesky_ridge(&t, "PLDA total covariance")?;
        let tinv = tc.inverse();
        let k = &t - &b * &tinv * &b;
        let kc = cholesky_ridge(&((&k + k.transpose()) * 0.5), "PLDA conditional covariance")?;
        let a = kc.inverse();
        let c = -(&tinv * &b * &a);
        let c = (&c + c.transpose()) * 0.5;
        let q = &tinv - &a;
        Ok(Self {
            mu,
            b,
            w,
            trace: Vec::new(),
            q: (&q + q.transpose()) * 0.5,
            p: -c,
            offset: 0.5 * (log_det(&tc) - log_det(&kc)),
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    /// Same-speaker versus different-speaker log-likelihood ratio.
    pub fn llr(&self, e: &[f64], t: &[f64]) -> f64 {
        let e = DVector::from_iterator(e.len(), e.iter().zip(&self.mu).map(|(a, b)| a - b));
        let t = DVector::from_iterator(t.len(), t.iter().zip(&self.mu).map(|(a, b)| a - b));
        let qe = &self.q * &e;
        let qt = &self.q * &t;
        0.5 * (e.dot(&qe) + t.dot(&qt)) + e.dot(&(&self.p * &t)) + self.offset
    }

    pub fn to_container(&self) -> Container {
        let d = self.dim();
        let mut c = Container::new();
        c.push_f64("plda.mu", &[d], &self.mu);
        c.push_f64("plda.B", &[d, d], &to_rows(&self.b));
        c.push_f64("plda.W", &[d, d], &to_rows(&self.w));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let (_, mu) = c.get_f64("plda.mu")?;
        let d = mu.len();
        let mat = |name: &str| -> Result<DMatrix<f64>> {
            let (shape, data) = c.get_f64(name)?;
            if shape != [d, d] {
                return Err(Error::format(name, format!("shape {shape:?}, expected [{d}, {d}]")));
            }
            Ok(from_rows(d, d, &data))
        };
        Self::new(mu, mat("plda.B")?, mat("plda.W")?)
    }
}
