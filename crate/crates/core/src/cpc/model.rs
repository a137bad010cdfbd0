use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{parameter_count, CpcConfig, Variant};
use super::gru::GruLayer;
use super::loss::{infonce, LossReport};
use crate::container::Container;
use crate::error::{Error, Result};
use crate::tensor::{Bindings, Element, ParamId, ParamStore, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Fwd,
    Bwd,
}

impl Direction {
    fn index(self) -> usize {
        match self {
            Self::Fwd => 0,
            Self::Bwd => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Self::Fwd => "fwd",
            Self::Bwd => "bwd",
        }
    }
}

/// Strided convolutional encoder, recurrent context model(s) and bias-free
/// prediction heads, all held in one parameter store.
#[derive(Clone, Debug)]
pub struct CpcModel<T> {
    pub cfg: CpcConfig,
    pub store: ParamStore<T>,
    encoder: Vec<(ParamId, ParamId)>,
    ar: Vec<Vec<GruLayer>>,
    heads: Vec<Vec<ParamId>>,
}

impl<T: Element> CpcModel<T> {
    /// Weights uniform in ±1/√fan_in, biases zero.
    pub fn new(cfg: &CpcConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut encoder = Vec::with_capacity(cfg.kernels.len());
        let mut cin = 1;
        for (i, &k) in cfg.kernels.iter().enumerate() {
            let bound = 1.0 / ((cin * k) as f64).sqrt();
            let w = store.add(
                format!("enc.{i}.weight"),
                Tensor::uniform(&[cfg.channels, cin, k], bound, &mut rng),
            );
            let b = store.add(format!("enc.{i}.bias"), Tensor::zeros(&[cfg.channels]));
            encoder.push((w, b));
            cin = cfg.channels;
        }
        let dirs = [Direction::Fwd, Direction::Bwd];
        let mut ar = Vec::new();
        let mut heads = Vec::new();
        for dir in &dirs[..cfg.directions] {
            let mut input = cfg.channels;
            let layers = (0..cfg.ar_layers)
                .map(|l| {
                    let layer = GruLayer::new(
                        &mut store,
                        &format!("ar.{}.{l}", dir.name()),
                        input,
                        cfg.ar_hidden,
                        &mut rng,
                    );
                    input = cfg.ar_hidden;
                    layer
                })
                .collect();
            ar.push(layers);
            let bound = 1.0 / (cfg.ar_hidden as f64).sqrt();
            heads.push(
                (1..=cfg.k)
                    .map(|tau| {
                        store.add(
                            format!("head.{}.{tau}", dir.name()),
                            Tensor::uniform(&[cfg.ar_hidden, cfg.channels], bound, &mut rng),
                        )
                    })
                    .collect(),
            );
        }
        let model = Self {
            cfg: cfg.clone(),
            store,
            encoder,
            ar,
            heads,
        };
        debug_assert_eq!(model.store.num_elements(), parameter_count(cfg));
        Ok(model)
    }

    /// Number of allocated scalar parameters.
    pub fn parameter_count(&self) -> usize {
        self.store.num_elements()
    }

    pub fn variant(&self) -> Variant {
        self.cfg.variant
    }

    /// Same model at another precision.
    pub fn cast<U: Element>(&self) -> CpcModel<U> {
        CpcModel {
            cfg: self.cfg.clone(),
            store: self.store.cast(),
            encoder: self.encoder.clone(),
            ar: self.ar.clone(),
            heads: self.heads.clone(),
        }
    }

    /// `x: [batch×samples]` → latents `[batch×frames×channels]`.
    pub fn encode(&self, tape: &mut Tape<T>, p: &Bindings, x: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        let down = self.cfg.downsampling();
        if s.len() != 2 || s[1] == 0 || s[1] % down != 0 {
            return Err(Error::Contract(format!(
                "encoder input must be [batch×n·{down}] samples, got {s:?}"
            )));
        }
        let mut h = tape.reshape(x, &[s[0], 1, s[1]])?;
        for (i, &(w, b)) in self.encoder.iter().enumerate() {
            h = tape.conv1d(
                h,
                p.var(w),
                Some(p.var(b)),
                self.cfg.strides[i],
                self.cfg.paddings[i],
            )?;
            h = tape.relu(h);
        }
        tape.swap_last2(h)
    }

    fn check_direction(&self, dir: Direction) -> Result<()> {
        if dir.index() >= self.cfg.directions {
            return Err(Error::Variant(format!(
                "{} has no backward context model",
                self.cfg.variant
            )));
        }
        Ok(())
    }

    /// Run the direction's GRU stack over `seq` in the order given.
    fn run_ar(&self, tape: &mut Tape<T>, p: &Bindings, seq: Var, dir: Direction) -> Result<Var> {
        let mut h = seq;
        for layer in &self.ar[dir.index()] {
            h = layer.sequence(tape, p, h)?;
        }
        Ok(h)
    }

    /// Context vectors aligned with `latents` in forward time. The backward
    /// model reads the reversed sequence and its output is reversed back.
    pub fn ar_context(&self, tape: &mut Tape<T>, p: &Bindings, latents: Var, dir: Direction) -> Result<Var> {
        self.check_direction(dir)?;
        match dir {
            Direction::Fwd => self.run_ar(tape, p, latents, dir),
            Direction::Bwd => {
                let rev = tape.reverse_time(latents)?;
                let ctx = self.run_ar(tape, p, rev, dir)?;
                tape.reverse_time(ctx)
            }
        }
    }

    /// Mean InfoNCE loss over all directions at anchor `t`, with one report
    /// per direction. The backward direction predicts along reversed time.
    pub fn batch_loss(
        &self,
        tape: &mut Tape<T>,
        p: &Bindings,
        x: Var,
        t: usize,
    ) -> Result<(Var, Vec<LossReport>)> {
        let latents = self.encode(tape, p, x)?;
        let mut losses = Vec::new();
        let mut reports = Vec::new();
        for d in 0..self.cfg.directions {
            let dir = if d == 0 { Direction::Fwd } else { Direction::Bwd };
            let seq = match dir {
                Direction::Fwd => latents,
                Direction::Bwd => tape.reverse_time(latents)?,
            };
            let ctx = self.run_ar(tape, p, seq, dir)?;
            let heads: Vec<Var> = self.heads[d].iter().map(|&h| p.var(h)).collect();
            let (loss, report) = infonce(tape, seq, ctx, &heads, t)?;
            losses.push(loss);
            reports.push(report);
        }
        let loss = match losses[..] {
            [one] => one,
            [a, b] => {
                let s = tape.add(a, b)?;
                tape.scale(s, 0.5)
            }
            _ => unreachable!("one or two directions"),
        };
        Ok((loss, reports))
    }

    fn input(batch: &[&[f64]]) -> Result<Tensor<T>> {
        let len = batch.first().map_or(0, |s| s.len());
        if batch.iter().any(|s| s.len() != len) {
            return Err(Error::Shape("batch sequences differ in length".into()));
        }
        Tensor::new(
            &[batch.len(), len],
            batch.iter().flat_map(|s| s.iter().map(|&v| T::of(v))).collect(),
        )
    }

    /// Latents of equal-length waveforms, without recording gradients.
    pub fn encode_samples(&self, batch: &[&[f64]]) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let x = tape.constant(Self::input(batch)?);
        let z = self.encode(&mut tape, &p, x)?;
        Ok(tape.value(z).clone())
    }

    /// Contexts for given latents, without recording gradients.
    pub fn contexts(&self, latents: &Tensor<T>, dir: Direction) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let z = tape.constant(latents.clone());
        let c = self.ar_context(&mut tape, &p, z, dir)?;
        Ok(tape.value(c).clone())
    }

    /// Loss at anchor `t` for equal-length waveforms, without gradients.
    pub fn evaluate(&self, batch: &[&[f64]], t: usize) -> Result<Vec<LossReport>> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape);
        let x = tape.constant(Self::input(batch)?);
        Ok(self.batch_loss(&mut tape, &p, x, t)?.1)
    }

    /// Write parameters plus a `<path>.hdr` sidecar describing the model.
    pub fn save(&self, path: impl AsRef<Path>, epoch: usize, dev_loss: f64) -> Result<()> {
        let path = path.as_ref();
        self.store.to_container().save(path)?;
        fs::write(header_path(path), format_header(&self.cfg, epoch, dev_loss))?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, CheckpointHeader)> {
        let path = path.as_ref();
        let text = fs::read_to_string(header_path(path))?;
        let header = parse_header(&text)?;
        let mut model = Self::new(&header.cfg, 0)?;
        model.store.load_container(&Container::load(path)?)?;
        Ok((model, header))
    }
}

/// Sidecar fields stored next to a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointHeader {
    pub cfg: CpcConfig,
    pub epoch: usize,
    pub dev_loss: f64,
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".hdr");
    PathBuf::from(p)
}

fn join(v: &[usize]) -> String {
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn format_header(cfg: &CpcConfig, epoch: usize, dev_loss: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "variant={}", cfg.variant);
    let _ = writeln!(s, "epoch={epoch}");
    let _ = writeln!(s, "dev_loss={dev_loss:e}");
    let _ = writeln!(s, "kernels={}", join(&cfg.kernels));
    let _ = writeln!(s, "strides={}", join(&cfg.strides));
    let _ = writeln!(s, "paddings={}", join(&cfg.paddings));
    for (k, v) in [
        ("channels", cfg.channels),
        ("ar_hidden", cfg.ar_hidden),
        ("ar_layers", cfg.ar_layers),
        ("directions", cfg.directions),
        ("k", cfg.k),
        ("batch", cfg.batch),
        ("crop", cfg.crop),
        ("crops_per_utterance", cfg.crops_per_utterance),
    ] {
        let _ = writeln!(s, "{k}={v}");
    }
    let _ = writeln!(s, "lr={:e}", cfg.lr);
    s
}

fn parse_header(text: &str) -> Result<CheckpointHeader> {
    let get = |key: &str| -> Result<&str> {
        text.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .map(|(_, v)| v.trim())
            .ok_or_else(|| Error::format(key, "missing from checkpoint header"))
    };
    let num = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::format(key, "not an integer"))
    };
    let list = |key: &str| -> Result<Vec<usize>> {
        get(key)?
            .split(',')
            .map(|v| v.trim().parse().map_err(|_| Error::format(key, "not an integer list")))
            .collect()
    };
    let float = |key: &str| -> Result<f64> {
        get(key)?.parse().map_err(|_| Error::format(key, "not a number"))
    };
    let cfg = CpcConfig {
        variant: get("variant")?.parse()?,
        kernels: list("kernels")?,
        strides: list("strides")?,
        paddings: list("paddings")?,
        channels: num("channels")?,
        ar_hidden: num("ar_hidden")?,
        ar_layers: num("ar_layers")?,
        directions: num("directions")?,
        k: num("k")?,
        batch: num("batch")?,
        crop: num("crop")?,
        lr: float("lr")?,
        crops_per_utterance: num("crops_per_utterance")?,
    };
    Ok(CheckpointHeader {
        cfg,
        epoch: num("epoch")?,
        dev_loss: float("dev_loss")?,
    })
}
