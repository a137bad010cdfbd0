use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::info::{mutual_information, DiscreteJoint};
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundSettings {
    /// Candidates per softmax, one positive and `batch - 1` negatives.
    pub batch: usize,
    pub train_steps: usize,
    pub lr: f64,
    pub eval_batches: usize,
}

impl Default for BoundSettings {
    fn default() -> Self {
        Self {
            batch: 8,
            train_steps: 3000,
            lr: 0.5,
            eval_batches: 4000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub trial: usize,
    pub i_true: f64,
    /// Mean batch loss of the trained critic on fresh batches.
    pub loss: f64,
    /// `ln N - loss`.
    pub bound: f64,
}

/// Random joint over `n × n` symbols: Dirichlet-like `p(x)` and a softmax
/// channel `p(y|x)` whose sharpness is itself random, so the mutual
/// information ranges from near zero to near `ln n`.
pub fn random_channel(n: usize, rng: &mut impl Rng) -> Result<DiscreteJoint> {
    let px: Vec<f64> = (0..n).map(|_| -rng.gen_range(f64::EPSILON..1.0).ln()).collect();
    let sharp = rng.gen_range(0.0..4.0);
    let mut w = Vec::with_capacity(n * n);
    for &a in &px {
        let logits: Vec<f64> = (0..n).map(|_| sharp * rng.sample::<f64, _>(StandardNormal)).collect();
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        w.extend(e.iter().map(|v| a * v / z));
    }
    DiscreteJoint::from_weights(n, n, &w)
}

struct Sampler {
    cdf: Vec<f64>,
    m: usize,
}

impl Sampler {
    fn new(j: &DiscreteJoint) -> Self {
        let mut acc = 0.0;
        let cdf = j
            .p
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Self { cdf, m: j.m }
    }

    fn draw(&self, rng: &mut impl Rng) -> (usize, usize) {
        let u = rng.gen_range(0.0..*self.cdf.last().unwrap());
        let k = self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1);
        (k / self.m, k % self.m)
    }
}

/// Batch softmax loss of a tabular critic `s[x][y]`: each context `x_i` must
/// pick its own `y_i` among the batch's `y_j`. Adds `d loss / d s` into `grad`.
fn batch_loss(s: &[f64], m: usize, pairs: &[(usize, usize)], grad: Option<&mut [f64]>) -> f64 {
    let n = pairs.len();
    let mut loss = 0.0;
    let mut g = grad;
    for (i, &(x, _)) in pairs.iter().enumerate() {
        let row: Vec<f64> = pairs.iter().map(|&(_, y)| s[x * m + y]).collect();
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - mx).exp()).sum();
        loss -= row[i] - mx - z.ln();
        if let Some(g) = g.as_deref_mut() {
            for (j, &(_, y)) in pairs.iter().enumerate() {
                let q = (row[j] - mx).exp() / z;
                g[x * m + y] += (q - (i == j) as u8 as f64) / n as f64;
            }
        }
    }
    loss / n as f64
}

/// Train a tabular critic on one channel with plain SGD, then measure its
/// loss on independent batches.
pub fn run_channel(joint: &DiscreteJoint, settings: &BoundSettings, trial: usize, seed: u64) -> Result<BoundReport> {
    if settings.batch < 2 {
        return Err(Error::Config(format!("InfoNCE needs a batch of at least 2, got {}", settings.batch)));
    }
    let sampler = Sampler::new(joint);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = vec![0.0; joint.n * joint.m];
    let mut grad = vec![0.0; s.len()];
    let mut pairs = vec![(0, 0); settings.batch];
    for _ in 0..settings.train_steps {
        pairs.iter_mut().for_each(|p| *p = sampler.draw(&mut rng));
        grad.iter_mut().for_each(|g| *g = 0.0);
        batch_loss(&s, joint.m, &pairs, Some(&mut grad));
        for (a, b) in s.iter_mut().zip(&grad) {
            *a -= settings.lr * b;
        }
    }
    let mut eval_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6576_616c);
    let mut total = 0.0;
    for _ in 0..settings.eval_batches {
        pairs.iter_mut().for_each(|p| *p = sampler.draw(&mut eval_rng));
        total += batch_loss(&s, joint.m, &pairs, None);
    }
    let loss = total / settings.eval_batches.max(1) as f64;
    Ok(BoundReport {
        trial,
        i_true: mutual_information(joint),
        loss,
        bound: (settings.batch as f64).ln() - loss,
    })
}

/// `trials` random channels over `n_classes` symbols, each trained and
/// evaluated independently. Trials run in parallel; results are in trial order.
pub fn infonce_bound_experiment(
    n_classes: usize,
    settings: &BoundSettings,
    trials: usize,
    seed: u64,
) -> Result<Vec<BoundReport>> {
    let ids: Vec<usize> = (0..trials).collect();
    par::try_map(&ids, |&t| {
        let trial_seed = seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(t as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
        let joint = random_channel(n_classes, &mut rng)?;
        run_channel(&joint, settings, t, trial_seed ^ 0x7472_6169)
    })
}

/// `trial,I_true,loss,bound`.
pub fn bound_csv(reports: &[BoundReport]) -> String {
    let mut s = String::from("trial,I_true,loss,bound\n");
    for r in reports {
        s.push_str(&format!("{},{:.6},{:.6},{:.6}\n", r.trial, r.i_true, r.loss, r.bound));
    }
    s
}
