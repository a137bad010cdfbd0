use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use walkdir::WalkDir;

use crate::audio::probe_wav;
use crate::error::{Error, Result};
use crate::eval::{parse_utt_id, UttLabel};

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestRow {
    pub id: String,
    pub speaker: String,
    pub chapter: String,
    /// Subset directory the file was found under.
    pub subset: String,
    pub path: PathBuf,
    pub duration: f64,
}

impl ManifestRow {
    pub fn label(&self) -> UttLabel {
        UttLabel {
            id: self.id.clone(),
            speaker: self.speaker.clone(),
            chapter: self.chapter.clone(),
        }
    }
}

/// Utterance table in lexicographic id order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
}

/// Scan `root/<subset>/<speaker>/<chapter>/*.wav` for every subset. Files
/// whose stem is not a speaker-chapter-segment id are skipped with a warning.
pub fn ingest(root: &Path, subsets: &[String]) -> Result<Manifest> {
    let mut rows = Vec::new();
    for subset in subsets {
        let dir = root.join(subset);
        if !dir.is_dir() {
            return Err(Error::Data(format!("subset directory {} does not exist", dir.display())));
        }
        for entry in WalkDir::new(&dir).sort_by_file_name() {
            let entry = entry.map_err(|e| Error::Data(format!("walking {}: {e}", dir.display())))?;
            let path = entry.path();
            if !entry.file_type().is_file() || path.extension().and_then(|e| e.to_str()) != Some("wav") {
                continue;
            }
            let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
            let Some((speaker, chapter, _)) = parse_utt_id(stem) else {
                warn!("skipping {}: name is not speaker-chapter-segment", path.display());
                continue;
            };
            let (rate, samples) = probe_wav(path)?;
            rows.push(ManifestRow {
                id: stem.to_string(),
                speaker: speaker.to_string(),
                chapter: chapter.to_string(),
                subset: subset.clone(),
                path: path.canonicalize()?,
                duration: samples as f64 / rate as f64,
            });
        }
    }
    Manifest::new(rows)
}

impl Manifest {
    pub fn new(mut rows: Vec<ManifestRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptyDataset("manifest has no utterances".into()));
        }
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = rows.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Data(format!(
                "duplicate utterance id {} ({} and {})",
                w[0].id,
                w[0].path.display(),
                w[1].path.display()
            )));
        }
        Ok(Self { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn subset<'a>(&'a self, subsets: &'a [String]) -> impl Iterator<Item = &'a ManifestRow> + 'a {
        self.rows.iter().filter(move |r| subsets.contains(&r.subset))
    }

    pub fn speakers(&self, subsets: &[String]) -> usize {
        self.subset(subsets).map(|r| r.speaker.as_str()).collect::<BTreeSet<_>>().len()
    }

    /// Tab-separated `id speaker chapter subset path duration`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{:.6}",
                r.id,
                r.speaker,
                r.chapter,
                r.subset,
                r.path.display(),
                r.duration
            );
        }
        s
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let rows = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                let f: Vec<&str> = l.split('\t').collect();
                let bad = || Error::format(format!("manifest line {}", n + 1), format!("cannot parse {l:?}"));
                if f.len() != 6 {
                    return Err(bad());
                }
                Ok(ManifestRow {
                    id: f[0].into(),
                    speaker: f[1].into(),
                    chapter: f[2].into(),
                    subset: f[3].into(),
                    path: PathBuf::from(f[4]),
                    duration: f[5].parse().map_err(|_| bad())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rows)
    }
}
