use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Split of speaker `1320` chapter `122612` segment `0000` from `1320-122612-0000`.
pub fn parse_utt_id(id: &str) -> Option<(&str, &str, &str)> {
    let mut parts = id.split('-');
    let (s, c, g) = (parts.next()?, parts.next()?, parts.next()?);
    let word = |p: &str| !p.is_empty() && p.bytes().all(|b| b.is_ascii_alphanumeric());
    (parts.next().is_none() && word(s) && word(c) && word(g)).then_some((s, c, g))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct UttLabel {
    pub id: String,
    pub speaker: String,
    pub chapter: String,
}

impl UttLabel {
    pub fn from_id(id: &str) -> Result<Self> {
        let (s, c, _) = parse_utt_id(id)
            .ok_or_else(|| Error::Data(format!("utterance id {id:?} is not speaker-chapter-segment")))?;
        Ok(Self {
            id: id.to_string(),
            speaker: s.to_string(),
            chapter: c.to_string(),
        })
    }
}

/// 1: random halves of all test utterances. 2: each speaker's chapters are
/// dealt to one half or the other, so no target trial shares a chapter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    One,
    Two,
}

impl Protocol {
    pub fn number(self) -> u8 {
        match self {
            Protocol::One => 1,
            Protocol::Two => 2,
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" => Ok(Protocol::One),
            "2" => Ok(Protocol::Two),
            other => Err(Error::Config(format!("trial protocol must be 1 or 2, got {other:?}"))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub enroll: String,
    pub test: String,
    pub target: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialList {
    pub protocol: Protocol,
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn targets(&self) -> usize {
        self.trials.iter().filter(|t| t.target).count()
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

fn cross(enroll: &mut [&UttLabel], test: &mut [&UttLabel], chapter_rule: bool) -> Vec<Trial> {
    enroll.sort();
    test.sort();
    let mut out = Vec::with_capacity(enroll.len() * test.len());
    for e in enroll.iter() {
        for t in test.iter() {
            let target = e.speaker == t.speaker;
            if chapter_rule && target && e.chapter == t.chapter {
                continue;
            }
            out.push(Trial {
                enroll: e.id.clone(),
                test: t.id.clone(),
                target,
            });
        }
    }
    out
}

/// Enrollment × test cross product over a seeded split of `utts`.
///
/// Both lists are emitted sorted by id. Protocol 1 shuffles all utterances
/// and takes the first half (rounded down) as enrollment. Protocol 2
/// shuffles each speaker's chapters and deals them alternately to the two
/// halves; a single-chapter speaker lands wholly in one half and
/// contributes only non-target trials.
pub fn generate_trials(utts: &[UttLabel], protocol: Protocol, seed: u64) -> Result<TrialList> {
    if utts.len() < 2 {
        return Err(Error::EmptyDataset(format!("trial generation needs 2 utterances, got {}", utts.len())));
    }
    let mut ids = BTreeSet::new();
    if let Some(dup) = utts.iter().find(|u| !ids.insert(&u.id)) {
        return Err(Error::Data(format!("duplicate utterance id {}", dup.id)));
    }
    let mut sorted: Vec<&UttLabel> = utts.iter().collect();
    sorted.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trials = match protocol {
        Protocol::One => {
            sorted.shuffle(&mut rng);
            let (e, t) = sorted.split_at_mut(utts.len() / 2);
            cross(e, t, false)
        }
        Protocol::Two => {
            let mut by_speaker: BTreeMap<&str, BTreeMap<&str, Vec<&UttLabel>>> = BTreeMap::new();
            for u in &sorted {
                by_speaker.entry(&u.speaker).or_default().entry(&u.chapter).or_default().push(u);
            }
            let (mut enroll, mut test) = (Vec::new(), Vec::new());
            let mut flip = false;
            for (speaker, chapters) in by_speaker {
                let mut chapters: Vec<Vec<&UttLabel>> = chapters.into_values().collect();
                chapters.shuffle(&mut rng);
                if chapters.len() < 2 {
                    warn!("speaker {speaker} has a single chapter; no protocol-2 target trials");
                    // alternate whole single-chapter speakers between halves
                    if flip { test.extend(chapters.concat()) } else { enroll.extend(chapters.concat()) }
                    flip = !flip;
                    continue;
                }
                for (i, ch) in chapters.into_iter().enumerate() {
                    if i % 2 == 0 { enroll.extend(ch) } else { test.extend(ch) }
                }
            }
            cross(&mut enroll, &mut test, true)
        }
    };
    Ok(TrialList { protocol, trials })
}

/// Lines `enrollID testID target|nontarget`.
pub fn write_trials(list: &TrialList) -> String {
    let mut s = String::with_capacity(list.len() * 40);
    for t in &list.trials {
        s.push_str(&format!(
            "{} {} {}\n",
            t.enroll,
            t.test,
            if t.target { "target" } else { "nontarget" }
        ));
    }
    s
}

pub fn parse_trials(text: &str, protocol: Protocol) -> Result<TrialList> {
    let mut trials = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        let target = match f.as_slice() {
            [_, _, "target"] => true,
            [_, _, "nontarget"] => false,
            _ => return Err(Error::format(format!("trial line {}", n + 1), format!("cannot parse {line:?}"))),
        };
        trials.push(Trial {
            enroll: f[0].to_string(),
            test: f[1].to_string(),
            target,
        });
    }
    Ok(TrialList { protocol, trials })
}

/// Lines `enrollID testID score`, scores printed with round-trip precision.
pub fn write_scores(trials: &[Trial], scores: &[f64]) -> String {
    let mut s = String::with_capacity(trials.len() * 48);
    for (t, v) in trials.iter().zip(scores) {
        s.push_str(&format!("{} {} {v:?}\n", t.enroll, t.test));
    }
    s
}

pub fn read_scores(text: &str) -> Result<Vec<(String, String, f64)>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::format(format!("score line {}", n + 1), format!("cannot parse {line:?}"));
            if f.len() != 3 {
                return Err(bad());
            }
            let v: f64 = f[2].parse().map_err(|_| bad())?;
            Ok((f[0].to_string(), f[1].to_string(), v))
        })
        .collect()
}
