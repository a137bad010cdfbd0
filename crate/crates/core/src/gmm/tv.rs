use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::diag::DiagGmm;
use super::stats::SuffStats;
use crate::container::Container;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_ridge, from_rows, log_det, to_rows};
use crate::par;

/// Total-variability model: supervector `M = m + T w` with `w ~ N(0, I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TvModel {
    pub ubm: DiagGmm,
    /// `(C·F) × R`; rows ordered component-major like the UBM means.
    pub t: DMatrix<f64>,
}

/// Per-model quantities shared by every utterance.
struct Precomputed {
    /// `T_cᵀ Σ_c⁻¹ T_c` per component.
    tst: Vec<DMatrix<f64>>,
    /// `Tᵀ Σ⁻¹`, `R × (C·F)`.
    ts: DMatrix<f64>,
}

/// Posterior of `w` for one utterance.
pub struct Posterior {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// `½ bᵀ L⁻¹ b − ½ ln|L|`: the utterance's marginal log-likelihood up to
    /// terms that do not depend on `T`.
    pub objective: f64,
}

impl TvModel {
    pub fn rank(&self) -> usize {
        self.t.ncols()
    }

    fn precompute(&self) -> Precomputed {
        let (k, d, r) = (self.ubm.components(), self.ubm.dim, self.rank());
        let mut ts = self.t.transpose();
        for c in 0..k {
            for j in 0..d {
                let inv = 1.0 / self.ubm.vars[c * d + j];
                ts.column_mut(c * d + j).scale_mut(inv);
            }
        }
        let tst = (0..k)
            .map(|c| {
                let block = self.t.rows(c * d, d);
                let tsb = ts.columns(c * d, d);
                let mut m = DMatrix::zeros(r, r);
                m.gemm(1.0, &tsb, &block, 0.0);
                m
            })
            .collect();
        Precomputed { tst, ts }
    }

    fn check(&self, s: &SuffStats) -> Result<()> {
        if s.components() != self.ubm.components() || s.dim != self.ubm.dim {
            return Err(Error::Shape(format!(
                "statistics for {}×{} do not match the {}×{} UBM",
                s.components(),
                s.dim,
                self.ubm.components(),
                self.ubm.dim
            )));
        }
        Ok(())
    }

    fn posterior_with(&self, pre: &Precomputed, s: &SuffStats) -> Result<Posterior> {
        self.check(s)?;
        let r = self.rank();
        let mut l = DMatrix::identity(r, r);
        for (c, m) in pre.tst.iter().enumerate() {
            if s.n[c] != 0.0 {
                l += m * s.n[c];
            }
        }
        let b = &pre.ts * DVector::from_vec(s.centered(&self.ubm));
        let chol = cholesky_ridge(&l, "i-vector precision")?;
        let mean = chol.solve(&b);
        let objective = 0.5 * b.dot(&mean) - 0.5 * log_det(&chol);
        Ok(Posterior {
            mean,
            cov: chol.inverse(),
            objective,
        })
    }

    pub fn posterior(&self, s: &SuffStats) -> Result<Posterior> {
        self.posterior_with(&self.precompute(), s)
    }

    /// Posterior mean `w = (I + Tᵀ Σ⁻¹ N T)⁻¹ Tᵀ Σ⁻¹ (F − N m)`.
    pub fn extract_ivector(&self, s: &SuffStats) -> Result<Vec<f64>> {
        Ok(self.posterior(s)?.mean.as_slice().to_vec())
    }

    pub fn extract_many(&self, stats: &[SuffStats]) -> Result<Vec<Vec<f64>>> {
        let pre = self.precompute();
        par::try_map(stats, |s| Ok(self.posterior_with(&pre, s)?.mean.as_slice().to_vec()))
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new();
        self.ubm.to_container("ubm.", &mut c);
        c.push_f64("T", &[self.t.nrows(), self.t.ncols()], &to_rows(&self.t));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let ubm = DiagGmm::from_container("ubm.", c)?;
        let (shape, data) = c.get_f64("T")?;
        if shape.len() != 2 || shape[0] != ubm.components() * ubm.dim {
            return Err(Error::format("T", format!("shape {shape:?} does not fit the UBM")));
        }
        Ok(Self {
            ubm,
            t: from_rows(shape[0], shape[1], &data),
        })
    }
}

/// Objective trace of total-variability EM: summed per-utterance marginal
/// log-likelihood (up to `T`-independent terms) before each iteration and
/// after the last.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TvTrace {
    pub objective: Vec<f64>,
}

/// EM for `T` with the UBM fixed: posterior of each utterance's `w`, then
/// the least-squares update `T_c = (Σ_u F̃_c wᵀ)(Σ_u N_c E[w wᵀ])⁻¹`.
pub fn tmatrix_em_train(
    stats: &[SuffStats],
    ubm: &DiagGmm,
    rank: usize,
    iters: usize,
    seed: u64,
) -> Result<(TvModel, TvTrace)> {
    let (k, d) = (ubm.components(), ubm.dim);
    if rank == 0 || rank >= k * d {
        return Err(Error::Config(format!(
            "i-vector dimension must be in 1..{}, got {rank}",
            k * d
        )));
    }
    if stats.is_empty() {
        return Err(Error::EmptyDataset("no utterance statistics for T-matrix training".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = DMatrix::zeros(k * d, rank);
    for row in 0..k * d {
        let scale = 0.5 * ubm.vars[row].sqrt();
        for col in 0..rank {
            let z: f64 = StandardNormal.sample(&mut rng);
            t[(row, col)] = scale * z;
        }
    }
    let mut model = TvModel { ubm: ubm.clone(), t };
    let centered: Vec<Vec<f64>> = stats.iter().map(|s| s.centered(ubm)).collect();
    let mut trace = TvTrace::default();
    for _ in 0..iters {
        let pre = model.precompute();
        let posts = par::try_map(stats, |s| model.posterior_with(&pre, s))?;
        trace.objective.push(posts.iter().map(|p| p.objective).sum());
        let mut a = vec![DMatrix::<f64>::zeros(rank, rank); k];
        let mut cacc = DMatrix::<f64>::zeros(k * d, rank);
        for ((p, s), fc) in posts.iter().zip(stats).zip(&centered) {
            let ww = &p.cov + &p.mean * p.mean.transpose();
            for c in 0..k {
                if s.n[c] != 0.0 {
                    a[c] += &ww * s.n[c];
                }
            }
            let f = DVector::from_column_slice(fc);
            cacc.ger(1.0, &f, &p.mean, 1.0);
        }
        for (c, ac) in a.iter().enumerate() {
            let chol = cholesky_ridge(ac, "T-matrix accumulator")?;
            let rhs = cacc.rows(c * d, d).transpose();
            let block = chol.solve(&rhs).transpose();
            model.t.rows_mut(c * d, d).copy_from(&block);
        }
    }
    let pre = model.precompute();
    let posts = par::try_map(stats, |s| model.posterior_with(&pre, s))?;
    trace.objective.push(posts.iter().map(|p| p.objective).sum());
    Ok((model, trace))
}
