use log::{info, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::CpcConfig;
use super::loss::{sample_anchor, LossReport};
use super::model::CpcModel;
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::tensor::{Adam, ParamStore, Tape, Tensor};

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: LossReport,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters at the epoch with the lowest dev loss.
    pub model: CpcModel<f32>,
    pub best_epoch: usize,
    pub best_dev: LossReport,
    pub history: Vec<EpochLog>,
}

/// A batch of crops: (utterance index, crop offset) pairs plus the anchor frame.
struct Plan {
    crops: Vec<(usize, usize)>,
    anchor: usize,
}

fn usable<'a>(set: &'a [Waveform], crop: usize, what: &str) -> Vec<&'a [f64]> {
    set.iter()
        .enumerate()
        .filter_map(|(i, w)| {
            if w.len() < crop {
                warn!("{what} utterance {i} has {} samples, shorter than the {crop}-sample crop; skipped", w.len());
                None
            } else {
                Some(w.samples.as_slice())
            }
        })
        .collect()
}

/// Shuffle utterances and cut them into full batches. A set smaller than one
/// batch becomes a single batch.
fn plan_batches<R: Rng>(utts: &[&[f64]], cfg: &CpcConfig, rng: &mut R) -> Vec<Plan> {
    let mut order: Vec<usize> = (0..utts.len()).collect();
    order.shuffle(rng);
    let size = cfg.batch.min(order.len());
    order
        .chunks_exact(size)
        .map(|chunk| {
            let crops = chunk
                .iter()
                .map(|&u| (u, rng.gen_range(0..=utts[u].len() - cfg.crop)))
                .collect();
            let anchor = sample_anchor(rng, cfg.crop_frames(), cfg.k);
            Plan { crops, anchor }
        })
        .collect()
}

fn batch_input(utts: &[&[f64]], plan: &Plan, crop: usize) -> Result<Tensor<f32>> {
    let mut data = Vec::with_capacity(plan.crops.len() * crop);
    for &(u, off) in &plan.crops {
        data.extend(utts[u][off..off + crop].iter().map(|&v| v as f32));
    }
    Tensor::new(&[plan.crops.len(), crop], data)
}

fn evaluate(model: &CpcModel<f32>, utts: &[&[f64]], plans: &[Plan], crop: usize) -> Result<LossReport> {
    let mut reports = Vec::with_capacity(plans.len());
    for plan in plans {
        let batch: Vec<&[f64]> = plan.crops.iter().map(|&(u, o)| &utts[u][o..o + crop]).collect();
        let per_dir = model.evaluate(&batch, plan.anchor)?;
        reports.push(LossReport::mean(&per_dir).expect("at least one direction"));
    }
    LossReport::mean(&reports).ok_or_else(|| Error::EmptyDataset("no dev batches".into()))
}

/// Train from scratch with Adam at `cfg.lr`. Every epoch draws
/// `cfg.crops_per_utterance` seeded random crops per training utterance
/// and evaluates the dev set on as many rounds of crops, with crops and
/// anchors fixed once up front.
pub fn train(
    train_set: &[Waveform],
    dev_set: &[Waveform],
    cfg: &CpcConfig,
    epochs: usize,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let train_utts = usable(train_set, cfg.crop, "train");
    let dev_utts = usable(dev_set, cfg.crop, "dev");
    if train_utts.len() < 2 || dev_utts.len() < 2 {
        return Err(Error::EmptyDataset(format!(
            "CPC training needs two usable utterances per split, have {} train and {} dev",
            train_utts.len(),
            dev_utts.len()
        )));
    }
    if train_utts.len() < cfg.batch {
        warn!(
            "only {} training utterances for batch size {}; batches shrink",
            train_utts.len(),
            cfg.batch
        );
    }
    let mut model = CpcModel::<f32>::new(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7261_696e);
    let mut dev_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6465_7673);
    let dev_plans: Vec<Plan> = (0..cfg.crops_per_utterance)
        .flat_map(|_| plan_batches(&dev_utts, cfg, &mut dev_rng))
        .collect();
    let mut adam = Adam::new(cfg.lr);
    let mut best: Option<(usize, LossReport, ParamStore<f32>)> = None;
    let mut history = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let mut total = 0.0;
        let mut steps = 0usize;
        for _ in 0..cfg.crops_per_utterance {
            for plan in plan_batches(&train_utts, cfg, &mut rng) {
                let mut tape = Tape::new();
                let p = model.store.bind(&mut tape);
                let x = tape.constant(batch_input(&train_utts, &plan, cfg.crop)?);
                let (loss, _) = model.batch_loss(&mut tape, &p, x, plan.anchor)?;
                total += tape.value(loss).item() as f64;
                steps += 1;
                let grads = tape.backward(loss)?;
                model.store.accumulate(&grads, &p);
                adam.step(&mut model.store)?;
                model.store.zero_grad();
            }
        }
        let dev = evaluate(&model, &dev_utts, &dev_plans, cfg.crop)?;
        let log = EpochLog {
            epoch,
            train_loss: total / steps as f64,
            dev,
        };
        info!(
            "epoch {epoch}: train loss {:.4}, dev loss {:.4}, dev accuracy {:.4}",
            log.train_loss, dev.nce_loss, dev.accuracy
        );
        on_epoch(&log);
        history.push(log);
        if best.as_ref().map_or(true, |b| dev.nce_loss < b.1.nce_loss) {
            best = Some((epoch, dev, model.store.clone()));
        }
    }
    let (best_epoch, best_dev, store) =
        best.ok_or_else(|| Error::Contract("training needs at least one epoch".into()))?;
    model.store = store;
    Ok(TrainOutcome {
        model,
        best_epoch,
        best_dev,
        history,
    })
}

/// Training log in `epoch,loss,accuracy` CSV form (dev loss and accuracy).
pub fn history_csv(history: &[EpochLog]) -> String {
    let mut s = String::from("epoch,loss,accuracy\n");
    for h in history {
        s.push_str(&format!("{},{:.6},{:.6}\n", h.epoch, h.dev.nce_loss, h.dev.accuracy));
    }
    s
}
