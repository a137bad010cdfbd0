use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tape, Var};

/// InfoNCE loss over one batch plus prediction accuracy at the furthest step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossReport {
    /// Mean over steps and batch rows, in nats.
    pub nce_loss: f64,
    /// Fraction of rows whose highest score is the true future, at step `k` only.
    pub accuracy: f64,
}

impl LossReport {
    /// Average of several reports with equal weight.
    pub fn mean(reports: &[LossReport]) -> Option<LossReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        Some(LossReport {
            nce_loss: reports.iter().map(|r| r.nce_loss).sum::<f64>() / n,
            accuracy: reports.iter().map(|r| r.accuracy).sum::<f64>() / n,
        })
    }
}

/// Loss of a two-direction model: the mean of both directions.
pub fn joint_loss(fwd: &LossReport, bwd: &LossReport) -> f64 {
    0.5 * (fwd.nce_loss + bwd.nce_loss)
}

/// Uniform anchor frame in `[0, frames − k − 1]`.
pub fn sample_anchor<R: Rng>(rng: &mut R, frames: usize, k: usize) -> usize {
    rng.gen_range(0..frames - k)
}

/// InfoNCE at anchor `t`. For each step τ in 1..=k the score of row `i`
/// against column `j` is `latents[j, t+τ] · (contexts[i, t] W_τ)`; other rows
/// of the batch are the negatives.
///
/// `latents: [batch×time×dim]`, `contexts: [batch×time×hidden]`,
/// `heads[τ-1]: [hidden×dim]`.
pub fn infonce<T: Element>(
    tape: &mut Tape<T>,
    latents: Var,
    contexts: Var,
    heads: &[Var],
    t: usize,
) -> Result<(Var, LossReport)> {
    let (ls, cs) = (tape.shape(latents).to_vec(), tape.shape(contexts).to_vec());
    if ls.len() != 3 || cs.len() != 3 || ls[..2] != cs[..2] {
        return Err(Error::Shape(format!(
            "latents {ls:?} and contexts {cs:?} must share batch and time"
        )));
    }
    let (batch, frames) = (ls[0], ls[1]);
    let k = heads.len();
    if batch < 2 {
        return Err(Error::DegenerateBatch(
            "InfoNCE needs at least two sequences in a batch".into(),
        ));
    }
    if k == 0 || t + k >= frames {
        return Err(Error::Contract(format!(
            "anchor {t} with {k} steps runs past {frames} frames"
        )));
    }
    let c = tape.select_time(contexts, t)?;
    let mut total: Option<Var> = None;
    let mut accuracy = 0.0;
    for (i, &w) in heads.iter().enumerate() {
        let pred = tape.affine(c, w, None)?;
        let z = tape.select_time(latents, t + i + 1)?;
        let zt = tape.transpose(z)?;
        let scores = tape.affine(pred, zt, None)?;
        if i + 1 == k {
            accuracy = diagonal_hits(tape.value(scores).data(), batch) as f64 / batch as f64;
        }
        let logp = tape.log_softmax_rows(scores)?;
        let diag = tape.diagonal(logp)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, diag)?,
            None => diag,
        });
    }
    let mean = tape.mean(total.expect("k >= 1"));
    let loss = tape.scale(mean, -1.0 / k as f64);
    let nce_loss = tape.value(loss).item().as_f64();
    Ok((loss, LossReport { nce_loss, accuracy }))
}

/// Rows whose first maximum sits on the diagonal.
fn diagonal_hits<T: Element>(scores: &[T], n: usize) -> usize {
    scores
        .chunks(n)
        .enumerate()
        .filter(|(i, row)| {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |b, (j, v)| if *v > row[b] { j } else { b });
            best == *i
        })
        .count()
}
