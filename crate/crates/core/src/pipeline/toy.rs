//! Synthetic LibriSpeech-shaped corpus for desk-scale runs.
//!
//! Each speaker is a source-filter voice: a glottal pulse train at a
//! speaker-specific pitch plus breath noise, shaped by three formant
//! resonators whose vowel targets are scaled by a speaker vocal-tract factor.
//! Utterances are random syllable sequences; every chapter adds its own
//! channel colouring and noise floor.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio::{write_wav, Waveform};
use crate::error::Result;
use crate::par;

const VOWELS: [[f64; 3]; 5] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
];

#[derive(Clone, Debug, PartialEq)]
pub struct ToyCorpusConfig {
    pub speakers: usize,
    /// Chapters per split, and utterances per chapter, for train/dev/test.
    pub layout: [(usize, usize); 3],
    pub seconds: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for ToyCorpusConfig {
    fn default() -> Self {
        Self {
            speakers: 8,
            layout: [(2, 8), (2, 4), (2, 4)],
            seconds: 2.4,
            sample_rate: 16000,
            seed: 7,
        }
    }
}

pub const SPLITS: [&str; 3] = ["train", "dev", "test"];

#[derive(Clone, Debug)]
pub struct ToyUtterance {
    pub split: &'static str,
    pub speaker: String,
    pub chapter: String,
    pub id: String,
    pub wave: Waveform,
}

struct Voice {
    f0: f64,
    tract: f64,
    accent: [[f64; 3]; 5],
    breath: f64,
    fricative_hz: f64,
}

impl Voice {
    fn new(rng: &mut ChaCha8Rng) -> Self {
        let mut accent = [[1.0; 3]; 5];
        for v in &mut accent {
            for f in v.iter_mut() {
                *f = 1.0 + rng.gen_range(-0.08..0.08);
            }
        }
        Self {
            f0: rng.gen_range(85.0..240.0),
            tract: rng.gen_range(0.85..1.2),
            accent,
            breath: rng.gen_range(0.02..0.2),
            fricative_hz: rng.gen_range(2500.0..6000.0),
        }
    }
}

struct Job {
    split: &'static str,
    speaker: String,
    chapter: String,
    seg: usize,
    seed: u64,
    channel: Arc<Channel>,
    voice: usize,
}

struct Channel {
    tilt: f64,
    gain: f64,
    noise: f64,
}

/// Two-pole resonator with unit gain near its centre frequency.
#[derive(Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let theta = 2.0 * PI * freq / fs;
        let y = (1.0 - r) * x + 2.0 * r * theta.cos() * self.y1 - r * r * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

struct Syllable {
    len: usize,
    formants: [f64; 3],
    pitch: f64,
    fricative: bool,
    gap: usize,
}

fn synthesize(voice: &Voice, channel: &Channel, n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base_f0 = voice.f0 * (1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal));
    let mut plan = Vec::new();
    let mut total = 0;
    while total < n {
        let v = rng.gen_range(0..VOWELS.len());
        let formants = [0, 1, 2].map(|i| VOWELS[v][i] * voice.tract * voice.accent[v][i]);
        let syl = Syllable {
            len: (rng.gen_range(0.12..0.28) * fs) as usize,
            formants,
            pitch: base_f0 * (1.0 + rng.gen_range(-0.1..0.1)) * (1.0 - 0.1 * total as f64 / n as f64),
            fricative: rng.gen_bool(0.25),
            gap: if rng.gen_bool(0.3) { (rng.gen_range(0.0..0.08) * fs) as usize } else { 0 },
        };
        total += syl.len + syl.gap;
        plan.push(syl);
    }
    let mut out = Vec::with_capacity(total);
    let mut res = [Resonator::default(), Resonator::default(), Resonator::default()];
    let mut fric = Resonator::default();
    let (mut phase, mut glottal, mut prev_formants) = (0.0, 0.0, plan[0].formants);
    let trans = (0.03 * fs) as usize;
    for syl in &plan {
        let fric_len = if syl.fricative { (0.06 * fs) as usize } else { 0 };
        for i in 0..syl.len {
            let a = (i as f64 / trans as f64).min(1.0);
            let f: [f64; 3] = [0, 1, 2].map(|j| prev_formants[j] + a * (syl.formants[j] - prev_formants[j]));
            let env = (PI * i as f64 / syl.len as f64).sin().powf(0.6);
            let noise: f64 = rng.sample(StandardNormal);
            let s = if i < fric_len {
                0.3 * fric.step(noise, voice.fricative_hz, 900.0, fs)
            } else {
                phase += syl.pitch * (1.0 + 0.01 * noise) / fs;
                let pulse = if phase >= 1.0 {
                    phase -= 1.0;
                    1.0
                } else {
                    0.0
                };
                glottal = 0.92 * glottal + pulse;
                let mut x = glottal + voice.breath * noise;
                for (j, r) in res.iter_mut().enumerate() {
                    x = r.step(x, f[j], 60.0 + 40.0 * j as f64, fs) * (1.0 + j as f64);
                }
                x
            };
            out.push(s * env);
        }
        out.extend(std::iter::repeat(0.0).take(syl.gap));
        prev_formants = syl.formants;
    }
    out.truncate(n);
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-9);
    let mut prev = 0.0;
    for v in &mut out {
        let x = *v / rms * 0.1;
        let coloured = x + channel.tilt * prev;
        prev = x;
        let noise: f64 = rng.sample(StandardNormal);
        *v = (channel.gain * coloured + channel.noise * noise).clamp(-0.99, 0.99);
    }
    out
}

/// Generate every utterance in memory, ordered by split, speaker, chapter, segment.
pub fn generate(cfg: &ToyCorpusConfig) -> Vec<ToyUtterance> {
    let fs = cfg.sample_rate as f64;
    let n = (cfg.seconds * fs) as usize;
    let mut voices = Vec::with_capacity(cfg.speakers);
    let mut jobs = Vec::new();
    for s in 0..cfg.speakers {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1_000_003).wrapping_add(s as u64));
        voices.push(Voice::new(&mut rng));
        let speaker = format!("{}", 1000 + 7 * s);
        let mut chapter_no = 0;
        for (split, &(chapters, per)) in SPLITS.iter().zip(&cfg.layout) {
            for _ in 0..chapters {
                let chapter = format!("{}", 20000 + 100 * s + chapter_no);
                chapter_no += 1;
                let channel = Arc::new(Channel {
                    tilt: rng.gen_range(-0.3..0.3),
                    gain: rng.gen_range(0.6..1.0),
                    noise: rng.gen_range(0.002..0.01),
                });
                for seg in 0..per {
                    let job = Job {
                        split,
                        speaker: speaker.clone(),
                        chapter: chapter.clone(),
                        seg,
                        seed: rng.gen(),
                        channel: channel.clone(),
                        voice: s,
                    };
                    jobs.push(job);
                }
            }
        }
    }
    let mut utts = par::map(&jobs, |j| {
        let mut rng = ChaCha8Rng::seed_from_u64(j.seed);
        let samples = synthesize(&voices[j.voice], &j.channel, n, fs, &mut rng);
        ToyUtterance {
            split: j.split,
            speaker: j.speaker.clone(),
            chapter: j.chapter.clone(),
            id: format!("{}-{}-{:04}", j.speaker, j.chapter, j.seg),
            wave: Waveform::new(samples, cfg.sample_rate).expect("finite synthetic samples"),
        }
    });
    utts.sort_by(|a, b| {
        let key = |u: &ToyUtterance| (SPLITS.iter().position(|s| *s == u.split), u.id.clone());
        key(a).cmp(&key(b))
    });
    utts
}

/// Write the corpus as `root/<split>/<speaker>/<chapter>/<id>.wav`; returns the file count.
pub fn write_toy_corpus(root: impl AsRef<Path>, cfg: &ToyCorpusConfig) -> Result<usize> {
    let root = root.as_ref();
    let utts = generate(cfg);
    for u in &utts {
        let dir = root.join(u.split).join(&u.speaker).join(&u.chapter);
        std::fs::create_dir_all(&dir)?;
        write_wav(dir.join(format!("{}.wav", u.id)), &u.wave)?;
    }
    Ok(utts.len())
}
