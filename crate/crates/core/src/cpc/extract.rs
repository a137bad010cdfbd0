use super::model::{CpcModel, Direction};
use crate::audio::{FeatureKind, FeatureMatrix, Waveform};
use crate::error::{Error, Result};
use crate::tensor::{Element, Tape};

pub const SAMPLE_RATE: u32 = 16000;

/// Context vectors for a whole utterance, one row per latent frame (10 ms).
///
/// The waveform is truncated to a multiple of the encoder downsampling. A
/// two-direction model yields forward contexts followed by backward contexts,
/// both in forward time order.
pub fn extract_context_features<T: Element>(w: &Waveform, model: &CpcModel<T>) -> Result<FeatureMatrix> {
    if w.sample_rate != SAMPLE_RATE {
        return Err(Error::Data(format!(
            "CPC features need {SAMPLE_RATE} Hz audio, got {} Hz",
            w.sample_rate
        )));
    }
    let down = model.cfg.downsampling();
    let used = w.len() / down * down;
    if used == 0 {
        return Err(Error::InputTooShort(format!(
            "{} samples, the encoder needs at least {down}",
            w.len()
        )));
    }
    let mut tape = Tape::new();
    let p = model.store.bind_frozen(&mut tape);
    let x = tape.constant(crate::tensor::Tensor::new(
        &[1, used],
        w.samples[..used].iter().map(|&v| T::of(v)).collect(),
    )?);
    let z = model.encode(&mut tape, &p, x)?;
    let mut ctx = model.ar_context(&mut tape, &p, z, Direction::Fwd)?;
    if model.cfg.directions == 2 {
        let bwd = model.ar_context(&mut tape, &p, z, Direction::Bwd)?;
        ctx = tape.concat_last(ctx, bwd)?;
    }
    let value = tape.value(ctx);
    let (rows, cols) = (value.shape()[1], value.shape()[2]);
    FeatureMatrix::new(
        rows,
        cols,
        value.data().iter().map(|v| v.as_f64()).collect(),
        FeatureKind::Cpc,
    )
}
