use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::container::Cursor;
use crate::error::{Error, Result};

/// Mono waveform in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("empty waveform".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Data("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("non-finite waveform sample".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let bytes = std::fs::read(path.as_ref())?;
    read_wav(&bytes)
}

/// Parse a RIFF/WAVE PCM16 mono file. Samples are scaled by 1/32768.
pub fn read_wav(bytes: &[u8]) -> Result<Waveform> {
    let (sr, size, mut cur) = scan_to_data(bytes)?;
    let body = cur.take(size, "data")?;
    let samples = body
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Waveform::new(samples, sr).map_err(|e| Error::format("data", e.to_string()))
}

/// Sample rate and sample count from the header alone.
pub fn probe_wav(path: impl AsRef<Path>) -> Result<(u32, usize)> {
    let mut head = Vec::with_capacity(4096);
    File::open(path.as_ref())?.take(1 << 16).read_to_end(&mut head)?;
    let (sr, size, _) = scan_to_data(&head)?;
    Ok((sr, size / 2))
}

/// Walk the chunk list up to the `data` header. Returns the sample rate, the
/// data size in bytes, and a cursor positioned at the first sample.
fn scan_to_data(bytes: &[u8]) -> Result<(u32, usize, Cursor<'_>)> {
    let mut cur = Cursor::new(bytes);
    if cur.take(4, "riff")? != b"RIFF" {
        return Err(Error::format("riff", "missing RIFF tag"));
    }
    cur.u32("riff.size")?;
    if cur.take(4, "wave")? != b"WAVE" {
        return Err(Error::format("wave", "missing WAVE tag"));
    }
    let mut rate = None;
    loop {
        if cur.at_end() {
            return Err(Error::format("data", "no data chunk"));
        }
        let id = cur.take(4, "chunk.id")?;
        let size = cur.u32("chunk.size")? as usize;
        match id {
            b"fmt " => rate = Some(parse_fmt(cur.take(size, "fmt")?)?),
            b"data" => {
                let sr = rate.ok_or_else(|| Error::format("fmt", "data chunk before fmt chunk"))?;
                if size % 2 != 0 {
                    return Err(Error::format("data", "odd byte count for PCM16"));
                }
                return Ok((sr, size, cur));
            }
            _ => {
                // chunks are word aligned
                cur.take(size + (size & 1), "chunk")?;
            }
        }
    }
}

fn parse_fmt(body: &[u8]) -> Result<u32> {
    let mut f = Cursor::new(body);
    let format = f.u16("fmt.audio_format")?;
    if format != 1 {
        return Err(Error::format(
            "fmt.audio_format",
            format!("expected PCM (1), found {format}"),
        ));
    }
    let channels = f.u16("fmt.channels")?;
    if channels != 1 {
        return Err(Error::format(
            "fmt.channels",
            format!("expected mono, found {channels} channels"),
        ));
    }
    let sr = f.u32("fmt.sample_rate")?;
    f.u32("fmt.byte_rate")?;
    f.u16("fmt.block_align")?;
    let bits = f.u16("fmt.bits_per_sample")?;
    if bits != 16 {
        return Err(Error::format(
            "fmt.bits_per_sample",
            format!("expected 16, found {bits}"),
        ));
    }
    Ok(sr)
}

/// Write PCM16 mono; samples are clamped to the representable range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let data_len = (w.samples.len() * 2) as u32;
    out.write_all(b"RIFF")?;
    out.write_all(&(36 + data_len).to_le_bytes())?;
    out.write_all(b"WAVE")?;
    out.write_all(b"fmt ")?;
    out.write_all(&16u32.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?;
    out.write_all(&1u16.to_le_bytes())?;
    out.write_all(&w.sample_rate.to_le_bytes())?;
    out.write_all(&(w.sample_rate * 2).to_le_bytes())?;
    out.write_all(&2u16.to_le_bytes())?;
    out.write_all(&16u16.to_le_bytes())?;
    out.write_all(b"data")?;
    out.write_all(&data_len.to_le_bytes())?;
    for &s in &w.samples {
        let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}
