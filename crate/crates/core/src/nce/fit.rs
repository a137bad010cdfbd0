use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Data and noise samples for fitting an unnormalized Gaussian
/// `ln P_M(x) = η₁x + η₂x² + c'` by noise-contrastive estimation.
pub struct NceProblem {
    pub data: Vec<f64>,
    pub noise: Vec<f64>,
    /// `ln P_N`, evaluated at every sample.
    pub noise_log_pdf: Box<dyn Fn(f64) -> f64 + Sync>,
}

impl NceProblem {
    /// `n_data` draws from `N(mean, sd²)` against `n_noise` draws from the
    /// zero-mean noise `N(0, noise_sd²)`.
    pub fn gaussian(mean: f64, sd: f64, n_data: usize, noise_sd: f64, n_noise: usize, seed: u64) -> Result<Self> {
        let bad = |what: &str| Error::Config(format!("{what} must be positive and finite"));
        let data_dist = Normal::new(mean, sd).map_err(|_| bad("data sd"))?;
        let noise_dist = Normal::new(0.0, noise_sd).map_err(|_| bad("noise sd"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n_data).map(|_| data_dist.sample(&mut rng)).collect();
        let noise = (0..n_noise).map(|_| noise_dist.sample(&mut rng)).collect();
        let norm = (noise_sd * (2.0 * std::f64::consts::PI).sqrt()).ln();
        Ok(Self {
            data,
            noise,
            noise_log_pdf: Box::new(move |x| -0.5 * (x / noise_sd).powi(2) - norm),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NceFit {
    /// Natural parameters `(η₁, η₂)`.
    pub eta: [f64; 2],
    /// Mean and variance implied by `eta`; meaningful only when `η₂ < 0`.
    pub mean: f64,
    pub var: f64,
    /// Learned normalizer in the centred form `ln P_M = -(x-μ)²/(2σ²) + c`.
    pub c: f64,
    /// Objective after each accepted step, starting from the initial point.
    pub trace: Vec<f64>,
}

impl NceFit {
    /// `-ln Z(α̂)` for the centred Gaussian at the fitted parameters.
    pub fn neg_log_partition(&self) -> f64 {
        -0.5 * (2.0 * std::f64::consts::PI * self.var).ln()
    }

    pub fn log_model(&self, x: f64) -> f64 {
        -(x - self.mean).powi(2) / (2.0 * self.var) + self.c
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Samples with their features `(1, u, v)` and `ln P_N`. The features are
/// `x` and `x²` standardised over the pooled samples, which conditions the
/// ascent without changing the model family.
struct Prepared {
    data: Vec<([f64; 3], f64)>,
    noise: Vec<([f64; 3], f64)>,
    scale: [(f64, f64); 2],
    log_nu: f64,
}

impl Prepared {
    fn new(p: &NceProblem) -> Self {
        let all = || p.data.iter().chain(&p.noise);
        let n = (p.data.len() + p.noise.len()) as f64;
        let moments = |f: &dyn Fn(f64) -> f64| {
            let m = all().map(|&x| f(x)).sum::<f64>() / n;
            let s = (all().map(|&x| (f(x) - m).powi(2)).sum::<f64>() / n).sqrt().max(1e-12);
            (m, s)
        };
        let scale = [moments(&|x| x), moments(&|x| x * x)];
        let feat = |x: f64| {
            (
                [1.0, (x - scale[0].0) / scale[0].1, (x * x - scale[1].0) / scale[1].1],
                (p.noise_log_pdf)(x),
            )
        };
        Self {
            data: p.data.iter().map(|&x| feat(x)).collect(),
            noise: p.noise.iter().map(|&x| feat(x)).collect(),
            scale,
            log_nu: (p.noise.len() as f64 / p.data.len() as f64).ln(),
        }
    }

    /// `J_T` and its gradient. `h = σ(G - ln ν)` with `G = ln P_M - ln P_N`.
    fn eval(&self, th: &[f64; 3]) -> (f64, [f64; 3]) {
        let z = |f: &[f64; 3], ln_pn: f64| th[0] * f[0] + th[1] * f[1] + th[2] * f[2] - ln_pn - self.log_nu;
        let (mut j, mut g) = (0.0, [0.0; 3]);
        for (f, lp) in &self.data {
            let zz = z(f, *lp);
            j -= softplus(-zz);
            let w = 1.0 - sigmoid(zz);
            (0..3).for_each(|k| g[k] += w * f[k]);
        }
        for (f, lp) in &self.noise {
            let zz = z(f, *lp);
            j -= softplus(zz);
            let w = sigmoid(zz);
            (0..3).for_each(|k| g[k] -= w * f[k]);
        }
        let tx = self.data.len() as f64;
        (j / tx, g.map(|v| v / tx))
    }
}

/// Maximise the NCE objective by full-batch gradient ascent with Armijo
/// backtracking. Stops after `iters` steps or once the gradient norm falls
/// below 1e-10.
pub fn nce_fit(problem: &NceProblem, iters: usize) -> Result<NceFit> {
    if problem.data.is_empty() || problem.noise.is_empty() {
        return Err(Error::EmptyDataset("NCE needs data and noise samples".into()));
    }
    let prep = Prepared::new(problem);
    let mut th = [0.0; 3];
    let (mut j, mut g) = prep.eval(&th);
    if !j.is_finite() {
        return Err(Error::Numeric("NCE objective is not finite at the start".into()));
    }
    let mut trace = vec![j];
    let mut step: f64 = 1.0;
    for _ in 0..iters {
        let gg: f64 = g.iter().map(|v| v * v).sum();
        if gg.sqrt() < 1e-10 {
            break;
        }
        step = (step * 2.0).min(1e3);
        loop {
            let cand = [th[0] + step * g[0], th[1] + step * g[1], th[2] + step * g[2]];
            let (jc, gc) = prep.eval(&cand);
            if !jc.is_finite() && step < 1e-300 {
                return Err(Error::TrainingDiverged(format!(
                    "NCE objective non-finite; last finite iterate {th:?} with J = {j}"
                )));
            }
            if jc.is_finite() && jc >= j + 1e-4 * step * gg {
                th = cand;
                j = jc;
                g = gc;
                break;
            }
            step *= 0.5;
            if step < 1e-300 {
                // no ascent direction left at machine precision
                return Ok(finish(&prep, th, trace));
            }
        }
        trace.push(j);
    }
    Ok(finish(&prep, th, trace))
}

fn finish(prep: &Prepared, th: [f64; 3], trace: Vec<f64>) -> NceFit {
    let [(m1, s1), (m2, s2)] = prep.scale;
    let e1 = th[1] / s1;
    let e2 = th[2] / s2;
    let c_nat = th[0] - th[1] * m1 / s1 - th[2] * m2 / s2;
    let var = -0.5 / e2;
    NceFit {
        eta: [e1, e2],
        mean: e1 * var,
        var,
        c: c_nat - e1 * e1 / (4.0 * e2),
        trace,
    }
}
