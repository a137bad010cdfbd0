//! MFCC front end: framing, power spectrum, mel filterbank, log, DCT-II.
//!
//! Per frame: DC removal, pre-emphasis (0.97), Hamming window, 512-point FFT,
//! 40 triangular mel filters between 20 Hz and 7600 Hz, log floored at 1e-10,
//! orthonormal DCT-II keeping coefficients 0..24. Frames never run past the
//! signal edges.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FeatureKind, FeatureMatrix, Waveform};
use crate::error::{Error, Result};

pub const FFT_SIZE: usize = 512;
const PREEMPH: f64 = 0.97;
const LOG_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub frame_length_ms: f64,
    pub frame_shift_ms: f64,
    pub num_mel: usize,
    pub low_cut: f64,
    pub high_cut: f64,
    pub num_ceps: usize,
    pub sample_rate: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            frame_length_ms: 25.0,
            frame_shift_ms: 10.0,
            num_mel: 40,
            low_cut: 20.0,
            high_cut: 7600.0,
            num_ceps: 24,
            sample_rate: 16000,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if !(self.low_cut > 0.0 && self.low_cut < self.high_cut) {
            return Err(Error::Config(format!(
                "mel band [{}, {}] Hz is empty",
                self.low_cut, self.high_cut
            )));
        }
        if self.high_cut > nyquist {
            return Err(Error::Config(format!(
                "high cut {} Hz exceeds Nyquist {nyquist} Hz",
                self.high_cut
            )));
        }
        if self.num_ceps == 0 || self.num_ceps > self.num_mel {
            return Err(Error::Config(format!(
                "{} cepstra requested from {} mel bins",
                self.num_ceps, self.num_mel
            )));
        }
        if self.frame_len() == 0 || self.frame_len() > FFT_SIZE || self.frame_shift() == 0 {
            return Err(Error::Config(format!(
                "frame of {} samples does not fit the {FFT_SIZE}-point FFT",
                self.frame_len()
            )));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        (self.frame_length_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }

    pub fn frame_shift(&self) -> usize {
        (self.frame_shift_ms * self.sample_rate as f64 / 1000.0).round() as usize
    }
}

/// Number of whole frames in `n` samples.
pub fn frame_count(n: usize, frame_len: usize, shift: usize) -> usize {
    if n < frame_len {
        0
    } else {
        1 + (n - frame_len) / shift
    }
}

/// Cut a waveform into conditioned frames (DC removed, pre-emphasized, windowed).
pub fn frame_signal(w: &Waveform, cfg: &FeatureConfig) -> Result<Vec<Vec<f64>>> {
    let (len, shift) = (cfg.frame_len(), cfg.frame_shift());
    let count = frame_count(w.len(), len, shift);
    if count == 0 {
        return Err(Error::InputTooShort(format!(
            "{} samples, a frame needs {len}",
            w.len()
        )));
    }
    let window: Vec<f64> = (0..len)
        .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
        .collect();
    Ok((0..count)
        .map(|f| {
            let mut frame = w.samples[f * shift..f * shift + len].to_vec();
            let mean = frame.iter().sum::<f64>() / len as f64;
            frame.iter_mut().for_each(|s| *s -= mean);
            for i in (1..len).rev() {
                frame[i] -= PREEMPH * frame[i - 1];
            }
            frame[0] -= PREEMPH * frame[0];
            frame.iter_mut().zip(&window).for_each(|(s, w)| *s *= w);
            frame
        })
        .collect())
}

fn plan() -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(FFT_SIZE)
}

fn power_spectrum(fft: &dyn Fft<f64>, frame: &[f64], buf: &mut Vec<Complex<f64>>) -> Vec<f64> {
    buf.clear();
    buf.extend(frame.iter().map(|&s| Complex::new(s, 0.0)));
    buf.resize(FFT_SIZE, Complex::new(0.0, 0.0));
    fft.process(buf);
    buf[..FFT_SIZE / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
}

/// Magnitude-squared of the 257 non-negative-frequency bins of each zero-padded frame.
pub fn stft_power(frames: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if let Some(f) = frames.iter().find(|f| f.len() > FFT_SIZE) {
        return Err(Error::Shape(format!(
            "frame of {} samples exceeds FFT size {FFT_SIZE}",
            f.len()
        )));
    }
    let fft = plan();
    let mut buf = Vec::with_capacity(FFT_SIZE);
    Ok(frames
        .iter()
        .map(|f| power_spectrum(fft.as_ref(), f, &mut buf))
        .collect())
}

pub fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * ((m / 1127.0).exp() - 1.0)
}

/// Triangular filters on the mel scale, one row of 257 bin weights per filter.
#[derive(Clone, Debug)]
pub struct MelFilterbank {
    pub weights: Vec<Vec<f64>>,
    pub centers_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(cfg: &FeatureConfig) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = (hz_to_mel(cfg.low_cut), hz_to_mel(cfg.high_cut));
        let step = (hi - lo) / (cfg.num_mel + 1) as f64;
        let bins = FFT_SIZE / 2 + 1;
        let bin_hz = cfg.sample_rate as f64 / FFT_SIZE as f64;
        let mut weights = Vec::with_capacity(cfg.num_mel);
        let mut centers_hz = Vec::with_capacity(cfg.num_mel);
        for m in 0..cfg.num_mel {
            let (left, center, right) = (
                lo + m as f64 * step,
                lo + (m + 1) as f64 * step,
                lo + (m + 2) as f64 * step,
            );
            centers_hz.push(mel_to_hz(center));
            let row: Vec<f64> = (0..bins)
                .map(|b| {
                    let mel = hz_to_mel(b as f64 * bin_hz);
                    if mel <= left || mel >= right {
                        0.0
                    } else if mel <= center {
                        (mel - left) / (center - left)
                    } else {
                        (right - mel) / (right - center)
                    }
                })
                .collect();
            if row.iter().all(|&w| w == 0.0) {
                return Err(Error::Config(format!(
                    "mel filter {m} covers no FFT bin; too many filters for the band"
                )));
            }
            weights.push(row);
        }
        Ok(Self {
            weights,
            centers_hz,
        })
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Orthonormal DCT-II basis, `rows × size`.
pub fn dct_matrix(rows: usize, size: usize) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / size as f64).sqrt()
            } else {
                (2.0 / size as f64).sqrt()
            };
            (0..size)
                .map(|m| scale * (PI * k as f64 * (m as f64 + 0.5) / size as f64).cos())
                .collect()
        })
        .collect()
}

pub(crate) fn cepstra(dct: &[Vec<f64>], mel_energies: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = mel_energies.iter().map(|&e| e.max(LOG_FLOOR).ln()).collect();
    dct.iter()
        .map(|row| row.iter().zip(&logs).map(|(g, l)| g * l).sum())
        .collect()
}

pub fn compute_mfcc(w: &Waveform, cfg: &FeatureConfig) -> Result<FeatureMatrix> {
    if w.sample_rate != cfg.sample_rate {
        return Err(Error::Data(format!(
            "waveform sampled at {} Hz, features configured for {} Hz",
            w.sample_rate, cfg.sample_rate
        )));
    }
    let bank = MelFilterbank::new(cfg)?;
    let dct = dct_matrix(cfg.num_ceps, cfg.num_mel);
    let frames = frame_signal(w, cfg)?;
    let fft = plan();
    let mut buf = Vec::with_capacity(FFT_SIZE);
    let mut data = Vec::with_capacity(frames.len() * cfg.num_ceps);
    for f in &frames {
        let power = power_spectrum(fft.as_ref(), f, &mut buf);
        data.extend(cepstra(&dct, &bank.apply(&power)));
    }
    FeatureMatrix::new(frames.len(), cfg.num_ceps, data, FeatureKind::Mfcc)
}

/// Append regression deltas (±2 frames, edge frames replicated).
/// `order` 1 doubles the dimension, 2 triples it.
pub fn append_deltas(f: &FeatureMatrix, order: usize) -> Result<FeatureMatrix> {
    if !(1..=2).contains(&order) {
        return Err(Error::Config(format!("delta order must be 1 or 2, got {order}")));
    }
    if f.rows < 5 {
        return Err(Error::InputTooShort(format!(
            "deltas need at least 5 frames, got {}",
            f.rows
        )));
    }
    let d1 = deltas(&f.data, f.rows, f.cols);
    let d2 = (order == 2).then(|| deltas(&d1, f.rows, f.cols));
    let cols = f.cols * (order + 1);
    let mut data = Vec::with_capacity(f.rows * cols);
    for t in 0..f.rows {
        let r = t * f.cols..(t + 1) * f.cols;
        data.extend_from_slice(&f.data[r.clone()]);
        data.extend_from_slice(&d1[r.clone()]);
        if let Some(d2) = &d2 {
            data.extend_from_slice(&d2[r]);
        }
    }
    let mut out = FeatureMatrix::new(f.rows, cols, data, f.kind)?;
    out.frame_shift_ms = f.frame_shift_ms;
    Ok(out)
}

fn deltas(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    const WIN: isize = 2;
    let denom = 2.0 * (1..=WIN).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize, c: usize| x[(t.clamp(0, rows as isize - 1) as usize) * cols + c];
    let mut out = vec![0.0; rows * cols];
    for t in 0..rows as isize {
        for c in 0..cols {
            let num: f64 = (1..=WIN)
                .map(|n| n as f64 * (at(t + n, c) - at(t - n, c)))
                .sum();
            out[t as usize * cols + c] = num / denom;
        }
    }
    out
}
