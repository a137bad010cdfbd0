//! Indexed archive of per-utterance feature matrices.
//!
//! Layout: `CPCA` magic and u32 version, then one record per utterance
//! (u32 id length, UTF-8 id, u32 rows, u32 cols, u8 kind, rows·cols f32 LE),
//! then a trailer of u64 record offsets, u32 record count and the u64 offset
//! of the trailer itself. A text index `<archive>.idx` lists `utt-id offset`.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{FeatureKind, FeatureMatrix};
use crate::container::Cursor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"CPCA";
const VERSION: u32 = 1;

/// Path of the plain-text index that accompanies an archive.
pub fn index_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".idx");
    PathBuf::from(p)
}

pub fn write_archive(path: impl AsRef<Path>, entries: &[(String, FeatureMatrix)]) -> Result<()> {
    let path = path.as_ref();
    let mut seen = HashMap::new();
    for (i, (id, _)) in entries.iter().enumerate() {
        if id.is_empty() || id.contains(char::is_whitespace) {
            return Err(Error::Data(format!("invalid utterance id {id:?}")));
        }
        if seen.insert(id.as_str(), i).is_some() {
            return Err(Error::Data(format!("duplicate utterance id {id}")));
        }
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let mut offsets = Vec::with_capacity(entries.len());
    for (id, m) in entries {
        offsets.push(buf.len() as u64);
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        buf.extend_from_slice(&(m.rows as u32).to_le_bytes());
        buf.extend_from_slice(&(m.cols as u32).to_le_bytes());
        buf.push(m.kind as u8);
        for &v in &m.data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let table = buf.len() as u64;
    for o in &offsets {
        buf.extend_from_slice(&o.to_le_bytes());
    }
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    buf.extend_from_slice(&table.to_le_bytes());
    fs::write(path, &buf)?;

    let mut idx = BufWriter::new(fs::File::create(index_path(path))?);
    for ((id, _), o) in entries.iter().zip(&offsets) {
        writeln!(idx, "{id} {o}")?;
    }
    idx.flush()?;
    Ok(())
}

/// Read every record in archive order.
pub fn read_archive(path: impl AsRef<Path>) -> Result<Vec<(String, FeatureMatrix)>> {
    let archive = Archive::open(path)?;
    (0..archive.len())
        .map(|i| Ok((archive.ids[i].clone(), archive.record(i)?)))
        .collect()
}

/// An archive loaded for random access by utterance id.
#[derive(Debug)]
pub struct Archive {
    bytes: Vec<u8>,
    ids: Vec<String>,
    offsets: Vec<usize>,
    lookup: HashMap<String, usize>,
}

impl Archive {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(fs::read(path)?)
    }

    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self> {
        let mut cur = Cursor::new(&bytes);
        if cur.take(4, "magic")? != MAGIC {
            return Err(Error::format("magic", "not a feature archive"));
        }
        let version = cur.u32("version")?;
        if version != VERSION {
            return Err(Error::format("version", format!("unsupported version {version}")));
        }
        if bytes.len() < 20 {
            return Err(Error::format("trailer", "truncated"));
        }
        cur.seek(bytes.len() - 12);
        let count = cur.u32("trailer.count")? as usize;
        let table = cur.u64("trailer.table_offset")? as usize;
        if table.checked_add(count * 8) != Some(bytes.len() - 12) {
            return Err(Error::format("trailer", "offset table does not end at trailer"));
        }
        cur.seek(table);
        let offsets = (0..count)
            .map(|_| Ok(cur.u64("offset_table")? as usize))
            .collect::<Result<Vec<_>>>()?;
        let mut ids = Vec::with_capacity(count);
        let mut lookup = HashMap::with_capacity(count);
        for (i, &o) in offsets.iter().enumerate() {
            if o < 8 || o >= table {
                return Err(Error::format("offset_table", format!("record {i} offset {o} out of range")));
            }
            let mut rc = Cursor::new(&bytes[..table]);
            rc.seek(o);
            let n = rc.u32("record.id_len")? as usize;
            let id = std::str::from_utf8(rc.take(n, "record.id")?)
                .map_err(|_| Error::format("record.id", "not UTF-8"))?
                .to_string();
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::format("record.id", format!("duplicate id {id}")));
            }
            ids.push(id);
        }
        Ok(Self {
            bytes,
            ids,
            offsets,
            lookup,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.lookup.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Result<FeatureMatrix> {
        let &i = self
            .lookup
            .get(id)
            .ok_or_else(|| Error::Data(format!("utterance {id} not in archive")))?;
        self.record(i)
    }

    fn record(&self, i: usize) -> Result<FeatureMatrix> {
        let mut cur = Cursor::new(&self.bytes);
        cur.seek(self.offsets[i]);
        let n = cur.u32("record.id_len")? as usize;
        cur.take(n, "record.id")?;
        let rows = cur.u32("record.rows")? as usize;
        let cols = cur.u32("record.cols")? as usize;
        let kind = FeatureKind::from_tag(cur.u8("record.kind")?)?;
        let raw = cur.take(rows * cols * 4, "record.data")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        FeatureMatrix::new(rows, cols, data, kind)
    }
}
