use std::f64::consts::PI;

use log::warn;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::stats::{accumulate_stats, SuffStats};
use crate::audio::FeatureMatrix;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::par;

/// Frames per parallel E-step chunk; fixed so sums are order-stable.
pub(crate) const CHUNK: usize = 2048;
const EMPTY: f64 = 1e-10;

/// Gaussian mixture with diagonal covariances.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGmm {
    pub dim: usize,
    pub weights: Vec<f64>,
    /// `C×F`, row-major.
    pub means: Vec<f64>,
    /// `C×F`, row-major, all positive.
    pub vars: Vec<f64>,
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl DiagGmm {
    pub fn new(dim: usize, weights: Vec<f64>, means: Vec<f64>, vars: Vec<f64>) -> Result<Self> {
        let c = weights.len();
        if c == 0 || dim == 0 || means.len() != c * dim || vars.len() != c * dim {
            return Err(Error::Shape(format!(
                "GMM with {c} weights and dim {dim} given {} means, {} vars",
                means.len(),
                vars.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Numeric("GMM weights must be non-negative and sum to 1".into()));
        }
        if vars.iter().any(|v| !(*v > 0.0 && v.is_finite())) || means.iter().any(|m| !m.is_finite()) {
            return Err(Error::Numeric("GMM means must be finite and variances positive".into()));
        }
        Ok(Self {
            dim,
            weights,
            means,
            vars,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    pub fn var(&self, c: usize) -> &[f64] {
        &self.vars[c * self.dim..(c + 1) * self.dim]
    }

    /// `ln w_c − ½ Σ_d ln(2π v_cd)` per component.
    pub(crate) fn log_consts(&self) -> Vec<f64> {
        (0..self.components())
            .map(|c| {
                self.weights[c].ln()
                    - 0.5 * self.var(c).iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>()
            })
            .collect()
    }

    /// `ln w_c + ln N(x; μ_c, Σ_c)` for every component.
    pub(crate) fn joint_log(&self, x: &[f64], consts: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let (m, v) = (self.mean(c), self.var(c));
            let mut q = 0.0;
            for d in 0..self.dim {
                let e = x[d] - m[d];
                q += e * e / v[d];
            }
            *o = consts[c] - 0.5 * q;
        }
    }

    fn check_dim(&self, f: &FeatureMatrix) -> Result<()> {
        if f.cols != self.dim {
            return Err(Error::Shape(format!(
                "{}-dim features scored by a {}-dim GMM",
                f.cols, self.dim
            )));
        }
        Ok(())
    }

    /// Per-frame log-likelihoods.
    pub fn frame_log_likelihoods(&self, f: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_dim(f)?;
        let consts = self.log_consts();
        let mut buf = vec![0.0; self.components()];
        Ok(f.rows_iter()
            .map(|x| {
                self.joint_log(x, &consts, &mut buf);
                log_sum_exp(&buf)
            })
            .collect())
    }

    /// Component posteriors of one frame.
    pub fn posteriors(&self, x: &[f64]) -> Vec<f64> {
        let mut buf = vec![0.0; self.components()];
        self.joint_log(x, &self.log_consts(), &mut buf);
        let total = log_sum_exp(&buf);
        buf.iter().map(|l| (l - total).exp()).collect()
    }

    pub fn to_container(&self, prefix: &str, c: &mut Container) {
        let k = self.components();
        c.push_f64(format!("{prefix}weights"), &[k], &self.weights);
        c.push_f64(format!("{prefix}means"), &[k, self.dim], &self.means);
        c.push_f64(format!("{prefix}vars"), &[k, self.dim], &self.vars);
    }

    pub fn from_container(prefix: &str, c: &Container) -> Result<Self> {
        let (_, weights) = c.get_f64(&format!("{prefix}weights"))?;
        let (shape, means) = c.get_f64(&format!("{prefix}means"))?;
        let (_, vars) = c.get_f64(&format!("{prefix}vars"))?;
        let dim = shape.get(1).copied().unwrap_or(0);
        let total: f64 = weights.iter().sum();
        Self::new(dim, weights.iter().map(|w| w / total).collect(), means, vars)
    }
}

/// Log-likelihood trace of an EM run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GmmTrace {
    /// Total data log-likelihood before each iteration and after the last.
    pub loglik: Vec<f64>,
    /// Iterations after which an empty component was re-seeded. The trace may
    /// drop across these; EM monotonicity holds between them.
    pub reseeded: Vec<usize>,
}

impl GmmTrace {
    /// Largest decrease between consecutive entries not separated by a re-seed.
    pub fn worst_decrease(&self) -> f64 {
        self.loglik
            .windows(2)
            .enumerate()
            .filter(|(i, _)| !self.reseeded.contains(i))
            .map(|(_, w)| w[0] - w[1])
            .fold(0.0, f64::max)
    }
}

struct Accum {
    n: Vec<f64>,
    f: Vec<f64>,
    s: Vec<f64>,
    loglik: f64,
}

fn e_step(gmm: &DiagGmm, feats: &FeatureMatrix) -> Accum {
    let (k, dim) = (gmm.components(), gmm.dim);
    let consts = gmm.log_consts();
    let chunks = feats.rows.div_ceil(CHUNK);
    let parts = par::map_range(chunks, |i| {
        let mut a = Accum {
            n: vec![0.0; k],
            f: vec![0.0; k * dim],
            s: vec![0.0; k * dim],
            loglik: 0.0,
        };
        let mut buf = vec![0.0; k];
        for t in i * CHUNK..((i + 1) * CHUNK).min(feats.rows) {
            let x = feats.row(t);
            gmm.joint_log(x, &consts, &mut buf);
            let total = log_sum_exp(&buf);
            a.loglik += total;
            for c in 0..k {
                let g = (buf[c] - total).exp();
                a.n[c] += g;
                for d in 0..dim {
                    a.f[c * dim + d] += g * x[d];
                    a.s[c * dim + d] += g * x[d] * x[d];
                }
            }
        }
        a
    });
    let mut it = parts.into_iter();
    let mut acc = it.next().expect("at least one frame");
    for p in it {
        acc.loglik += p.loglik;
        for (a, b) in acc.n.iter_mut().zip(&p.n) {
            *a += b;
        }
        for (a, b) in acc.f.iter_mut().zip(&p.f) {
            *a += b;
        }
        for (a, b) in acc.s.iter_mut().zip(&p.s) {
            *a += b;
        }
    }
    acc
}

/// Per-dimension variance floor: 1e-6 of the global variance, and never below 1e-6.
pub fn variance_floor(feats: &FeatureMatrix) -> Vec<f64> {
    let n = feats.rows as f64;
    (0..feats.cols)
        .map(|d| {
            let mean = feats.rows_iter().map(|r| r[d]).sum::<f64>() / n;
            let var = feats.rows_iter().map(|r| (r[d] - mean).powi(2)).sum::<f64>() / n;
            (1e-6 * var).max(1e-6)
        })
        .collect()
}

/// Maximum-likelihood diagonal GMM by EM from `c` randomly chosen frames as
/// initial means, global variances and uniform weights.
pub fn gmm_em_train(feats: &FeatureMatrix, c: usize, iters: usize, seed: u64) -> Result<(DiagGmm, GmmTrace)> {
    if c == 0 {
        return Err(Error::Config("GMM needs at least one component".into()));
    }
    if feats.rows < c {
        return Err(Error::Data(format!(
            "{} frames cannot seed {c} mixture components",
            feats.rows
        )));
    }
    let dim = feats.cols;
    let floor = variance_floor(feats);
    let global: Vec<f64> = floor.iter().map(|f| f / 1e-6).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = sample(&mut rng, feats.rows, c).into_vec();
    picks.sort_unstable();
    let means: Vec<f64> = picks.iter().flat_map(|&t| feats.row(t).to_vec()).collect();
    let vars: Vec<f64> = (0..c).flat_map(|_| global.iter().copied()).collect();
    let mut gmm = DiagGmm::new(dim, vec![1.0 / c as f64; c], means, vars)?;
    let mut trace = GmmTrace::default();
    let total = feats.rows as f64;
    for it in 0..iters {
        let acc = e_step(&gmm, feats);
        trace.loglik.push(acc.loglik);
        let mut empty = Vec::new();
        for k in 0..c {
            if acc.n[k] < EMPTY {
                empty.push(k);
                continue;
            }
            gmm.weights[k] = acc.n[k] / total;
            for d in 0..dim {
                let m = acc.f[k * dim + d] / acc.n[k];
                gmm.means[k * dim + d] = m;
                gmm.vars[k * dim + d] = (acc.s[k * dim + d] / acc.n[k] - m * m).max(floor[d]);
            }
        }
        for &k in &empty {
            reseed(&mut gmm, k, &empty);
            warn!("GMM component {k} lost all frames at iteration {it}; re-seeded from the widest component");
        }
        if !empty.is_empty() {
            trace.reseeded.push(it);
        }
        let sum: f64 = gmm.weights.iter().sum();
        gmm.weights.iter_mut().for_each(|w| *w /= sum);
    }
    trace.loglik.push(e_step(&gmm, feats).loglik);
    Ok((gmm, trace))
}

#[cfg(test)]
pub(crate) fn reseed_for_test(gmm: &mut DiagGmm, k: usize) {
    reseed(gmm, k, &[k]);
}

/// Split the non-empty component with the largest total variance in two,
/// moving half a standard deviation either way along its widest dimension.
fn reseed(gmm: &mut DiagGmm, k: usize, empty: &[usize]) {
    let dim = gmm.dim;
    let donor = (0..gmm.components())
        .filter(|c| !empty.contains(c))
        .max_by(|&a, &b| {
            let sa: f64 = gmm.var(a).iter().sum();
            let sb: f64 = gmm.var(b).iter().sum();
            sa.total_cmp(&sb).then(b.cmp(&a))
        })
        .expect("some component holds frames");
    let var = gmm.var(donor).to_vec();
    let d = (0..dim).max_by(|&a, &b| var[a].total_cmp(&var[b])).unwrap_or(0);
    let shift = 0.5 * var[d].sqrt();
    for j in 0..dim {
        gmm.means[k * dim + j] = gmm.means[donor * dim + j];
        gmm.vars[k * dim + j] = var[j];
    }
    gmm.means[k * dim + d] += shift;
    gmm.means[donor * dim + d] -= shift;
    gmm.weights[donor] *= 0.5;
    gmm.weights[k] = gmm.weights[donor];
}

/// Relevance-MAP adaptation of the means: `m' = α E + (1 − α) m` with
/// `α = N / (N + r)`. Weights, variances and components without any
/// enrollment mass are copied from the UBM unchanged.
pub fn map_adapt_means(ubm: &DiagGmm, enrollment: &[FeatureMatrix], r: f64) -> Result<DiagGmm> {
    if !(r > 0.0) {
        return Err(Error::Config(format!("relevance factor must be positive, got {r}")));
    }
    let mut stats = SuffStats::zeros(ubm.components(), ubm.dim);
    for f in enrollment {
        stats.merge(&accumulate_stats(ubm, f)?)?;
    }
    Ok(map_adapt_stats(ubm, &stats, r))
}

pub fn map_adapt_stats(ubm: &DiagGmm, stats: &SuffStats, r: f64) -> DiagGmm {
    let mut out = ubm.clone();
    let dim = ubm.dim;
    for c in 0..ubm.components() {
        let n = stats.n[c];
        if n <= 0.0 {
            continue;
        }
        let alpha = n / (n + r);
        for d in 0..dim {
            let e = stats.f[c * dim + d] / n;
            out.means[c * dim + d] = alpha * e + (1.0 - alpha) * ubm.means[c * dim + d];
        }
    }
    out
}

/// Mean per-frame log-likelihood ratio of the speaker model against the UBM.
pub fn likelihood_ratio(utt: &FeatureMatrix, speaker: &DiagGmm, ubm: &DiagGmm) -> Result<f64> {
    let a = speaker.frame_log_likelihoods(utt)?;
    let b = ubm.frame_log_likelihoods(utt)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / utt.rows as f64)
}
