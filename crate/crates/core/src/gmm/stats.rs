use super::diag::{log_sum_exp, DiagGmm, CHUNK};
use crate::audio::{FeatureKind, FeatureMatrix};
use crate::error::{Error, Result};
use crate::par;

/// Zeroth- and first-order Baum-Welch statistics of one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct SuffStats {
    pub dim: usize,
    /// Soft frame counts per component.
    pub n: Vec<f64>,
    /// Posterior-weighted frame sums, `C×F` row-major.
    pub f: Vec<f64>,
    pub frames: usize,
}

impl SuffStats {
    pub fn zeros(components: usize, dim: usize) -> Self {
        Self {
            dim,
            n: vec![0.0; components],
            f: vec![0.0; components * dim],
            frames: 0,
        }
    }

    pub fn components(&self) -> usize {
        self.n.len()
    }

    pub fn merge(&mut self, other: &SuffStats) -> Result<()> {
        if other.n.len() != self.n.len() || other.dim != self.dim {
            return Err(Error::Shape("merging statistics of different shapes".into()));
        }
        for (a, b) in self.n.iter_mut().zip(&other.n) {
            *a += b;
        }
        for (a, b) in self.f.iter_mut().zip(&other.f) {
            *a += b;
        }
        self.frames += other.frames;
        Ok(())
    }

    /// First-order statistics centred on the UBM means: `F_c − N_c m_c`.
    pub fn centered(&self, ubm: &DiagGmm) -> Vec<f64> {
        let d = self.dim;
        (0..self.components())
            .flat_map(|c| (0..d).map(move |j| (c, j)))
            .map(|(c, j)| self.f[c * d + j] - self.n[c] * ubm.means[c * d + j])
            .collect()
    }

    /// `C × (1 + F)` matrix: each row holds `N_c` followed by `F_c`. The frame
    /// count is not stored; it equals `Σ N_c` up to rounding.
    pub fn to_matrix(&self) -> Result<FeatureMatrix> {
        let d = self.dim;
        let mut data = Vec::with_capacity(self.n.len() * (d + 1));
        for c in 0..self.n.len() {
            data.push(self.n[c]);
            data.extend_from_slice(&self.f[c * d..(c + 1) * d]);
        }
        FeatureMatrix::new(self.n.len(), d + 1, data, FeatureKind::Stats)
    }

    pub fn from_matrix(m: &FeatureMatrix) -> Result<Self> {
        if m.cols < 2 {
            return Err(Error::Shape("statistics matrix needs at least 2 columns".into()));
        }
        let dim = m.cols - 1;
        let mut s = Self::zeros(m.rows, dim);
        for (c, row) in m.rows_iter().enumerate() {
            s.n[c] = row[0];
            s.f[c * dim..(c + 1) * dim].copy_from_slice(&row[1..]);
        }
        s.frames = s.n.iter().sum::<f64>().round() as usize;
        Ok(s)
    }
}

/// Baum-Welch statistics of `feats` under the UBM posteriors.
pub fn accumulate_stats(ubm: &DiagGmm, feats: &FeatureMatrix) -> Result<SuffStats> {
    if feats.cols != ubm.dim {
        return Err(Error::Shape(format!(
            "{}-dim features against a {}-dim UBM",
            feats.cols, ubm.dim
        )));
    }
    let (k, dim) = (ubm.components(), ubm.dim);
    let consts = ubm.log_consts();
    let chunks = feats.rows.div_ceil(CHUNK);
    let parts = par::map_range(chunks, |i| {
        let mut s = SuffStats::zeros(k, dim);
        let mut buf = vec![0.0; k];
        for t in i * CHUNK..((i + 1) * CHUNK).min(feats.rows) {
            let x = feats.row(t);
            ubm.joint_log(x, &consts, &mut buf);
            let total = log_sum_exp(&buf);
            for c in 0..k {
                let g = (buf[c] - total).exp();
                s.n[c] += g;
                for d in 0..dim {
                    s.f[c * dim + d] += g * x[d];
                }
            }
            s.frames += 1;
        }
        s
    });
    let mut out = SuffStats::zeros(k, dim);
    for p in &parts {
        out.merge(p)?;
    }
    Ok(out)
}
