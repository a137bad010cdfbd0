//! Stage graph, artifact layout, and content-hash receipts.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use log::info;
use sha2::{Digest, Sha256};

use super::config::{FeatureChoice, PipelineConfig, Summarization};
use super::manifest::{ingest, Manifest, ManifestRow};
use super::plots::{feature_stats_csv, plot_det, plot_features, DetCurve};
use crate::audio::{
    compute_mfcc, load_wav, read_archive, write_archive, Archive, FeatureConfig, FeatureKind, FeatureMatrix,
};
use crate::backend::{
    average_pool, fuse_concat, lda_fit, pca_fit, plda_fit, read_embeddings, write_embeddings, EmbeddingSet,
    LdaModel, LengthNorm, PldaModel,
};
use crate::container::Container;
use crate::cpc::{extract_context_features, history_csv, train, CpcModel};
use crate::error::{Error, Result};
use crate::eval::{
    compute_dcf, compute_det, compute_eer, det_csv, generate_trials, parse_trials, read_scores, write_scores,
    write_trials, DetPoint, Protocol, ScoreSet,
};
use crate::gmm::{accumulate_stats, gmm_em_train, tmatrix_em_train, DiagGmm, TvModel};
use crate::par;

/// Bumped whenever a stage's output format or algorithm changes, so stale
/// receipts are not trusted.
const RECEIPT_VERSION: u32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Trials,
    ExtractMfcc,
    TrainCpc,
    ExtractCpc,
    Fuse,
    TrainUbm,
    TrainTv,
    ExtractIvectors,
    Pool,
    TrainBackend,
    Score,
    Eval,
    Plot,
}

impl Stage {
    pub const ALL: [Stage; 14] = [
        Stage::Ingest,
        Stage::Trials,
        Stage::ExtractMfcc,
        Stage::TrainCpc,
        Stage::ExtractCpc,
        Stage::Fuse,
        Stage::TrainUbm,
        Stage::TrainTv,
        Stage::ExtractIvectors,
        Stage::Pool,
        Stage::TrainBackend,
        Stage::Score,
        Stage::Eval,
        Stage::Plot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Trials => "trials",
            Stage::ExtractMfcc => "extract-mfcc",
            Stage::TrainCpc => "train-cpc",
            Stage::ExtractCpc => "extract-cpc",
            Stage::Fuse => "fuse",
            Stage::TrainUbm => "train-ubm",
            Stage::TrainTv => "train-tv",
            Stage::ExtractIvectors => "extract-ivectors",
            Stage::Pool => "pool",
            Stage::TrainBackend => "train-backend",
            Stage::Score => "score",
            Stage::Eval => "eval",
            Stage::Plot => "plot",
        }
    }

    /// Config keys whose values feed the stage's input hash.
    fn keys(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["train_subsets", "dev_subsets", "test_subsets"],
            Stage::Trials => &["test_subsets", "seed"],
            Stage::ExtractMfcc | Stage::Fuse | Stage::ExtractIvectors | Stage::Pool | Stage::Plot => &[],
            Stage::TrainCpc => &[
                "train_subsets",
                "dev_subsets",
                "cpc_variant",
                "cpc_scale",
                "cpc_epochs",
                "cpc_crops_per_utterance",
                "cpc_lr",
                "cpc_channels",
                "seed",
            ],
            Stage::ExtractCpc => &["train_subsets", "pca_dim"],
            Stage::TrainUbm => &["train_subsets", "ubm_components", "ubm_iters", "seed"],
            Stage::TrainTv => &["train_subsets", "tv_rank", "tv_iters", "seed"],
            Stage::TrainBackend => &["train_subsets", "lda_dim", "plda_iters"],
            Stage::Score => &["protocols"],
            Stage::Eval => &["protocols", "dcf_p_target", "dcf_c_frr", "dcf_c_far"],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// First 16 bytes of SHA-256, hex encoded.
pub fn content_hash(bytes: &[u8]) -> String {
    hex16(&Sha256::digest(bytes))
}

fn hex16(d: &[u8]) -> String {
    d[..16].iter().map(|b| format!("{b:02x}")).collect()
}

/// What a completed stage left behind.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Receipt {
    pub stage: String,
    pub inputs: String,
    pub outputs: String,
    pub wall_ms: u128,
}

impl Receipt {
    fn render(&self) -> String {
        format!(
            "stage={}\ninputs={}\noutputs={}\nwall_ms={}\n",
            self.stage, self.inputs, self.outputs, self.wall_ms
        )
    }

    fn parse(text: &str) -> Option<Self> {
        let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
        Some(Self {
            stage: kv.get("stage")?.to_string(),
            inputs: kv.get("inputs")?.to_string(),
            outputs: kv.get("outputs")?.to_string(),
            wall_ms: kv.get("wall_ms")?.parse().ok()?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StageOutcome {
    pub stage: Stage,
    /// False when the receipt showed the stage already up to date.
    pub ran: bool,
    pub receipt: Receipt,
}

/// Artifact paths for one configuration.
pub struct Layout<'a> {
    pub cfg: &'a PipelineConfig,
}

impl<'a> Layout<'a> {
    pub fn new(cfg: &'a PipelineConfig) -> Self {
        Self { cfg }
    }

    fn p(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.cfg.workdir.join(rel)
    }

    pub fn manifest(&self) -> PathBuf {
        self.p("manifest.tsv")
    }

    pub fn trials(&self, p: Protocol) -> PathBuf {
        self.p(format!("trials/protocol{p}.txt"))
    }

    pub fn mfcc(&self) -> PathBuf {
        self.p("feats/mfcc.ark")
    }

    pub fn cpc_model(&self) -> PathBuf {
        self.p("cpc/model.bin")
    }

    pub fn cpc_history(&self) -> PathBuf {
        self.p("cpc/history.csv")
    }

    pub fn cpc(&self) -> PathBuf {
        self.p("feats/cpc.ark")
    }

    pub fn pca_model(&self) -> PathBuf {
        self.p("feats/cpc_pca.bin")
    }

    /// CPC frames after the optional PCA.
    pub fn cpc_reduced(&self) -> PathBuf {
        if self.cfg.pca_dim > 0 {
            self.p("feats/cpc_pca.ark")
        } else {
            self.cpc()
        }
    }

    pub fn fused(&self) -> PathBuf {
        self.p("feats/fused.ark")
    }

    /// Frames that the configured summarization consumes, and their producer.
    pub fn frames(&self) -> (PathBuf, Stage) {
        match (self.cfg.features, self.cfg.summarization) {
            (FeatureChoice::Mfcc, _) => (self.mfcc(), Stage::ExtractMfcc),
            (FeatureChoice::Cpc, Summarization::Pool) => (self.cpc(), Stage::ExtractCpc),
            (FeatureChoice::Cpc, Summarization::IVector) => (self.cpc_reduced(), Stage::ExtractCpc),
            (FeatureChoice::Fused, _) => (self.fused(), Stage::Fuse),
        }
    }

    fn frames_tag(&self) -> String {
        let (path, _) = self.frames();
        path.file_stem().unwrap().to_string_lossy().into_owned()
    }

    pub fn ubm(&self) -> PathBuf {
        self.p(format!("gmm/{}_ubm.bin", self.frames_tag()))
    }

    pub fn tv(&self) -> PathBuf {
        self.p(format!("gmm/{}_tv.bin", self.frames_tag()))
    }

    pub fn embeddings(&self) -> PathBuf {
        self.p(format!("embed/{}.ark", self.cfg.system()))
    }

    pub fn backend(&self) -> PathBuf {
        self.p(format!("backend/{}.bin", self.cfg.system()))
    }

    pub fn scores(&self, p: Protocol) -> PathBuf {
        self.p(format!("scores/{}_p{p}.txt", self.cfg.system()))
    }

    pub fn det(&self, p: Protocol) -> PathBuf {
        self.p(format!("eval/{}_p{p}_det.csv", self.cfg.system()))
    }

    pub fn report(&self) -> PathBuf {
        self.p(format!("eval/{}_summary.csv", self.cfg.system()))
    }

    pub fn det_plot(&self) -> PathBuf {
        self.p(format!("plots/{}_det.svg", self.cfg.system()))
    }

    pub fn feature_plot(&self) -> (PathBuf, PathBuf) {
        let tag = self.frames_tag();
        (self.p(format!("plots/{tag}_map.pgm")), self.p(format!("plots/{tag}_map.csv")))
    }

    /// Which frames or system a stage's outputs belong to; `None` for stages
    /// shared by every system.
    fn receipt_tag(&self, stage: Stage) -> Option<String> {
        match stage {
            Stage::TrainUbm | Stage::TrainTv => Some(self.frames_tag()),
            Stage::ExtractIvectors | Stage::Pool | Stage::TrainBackend | Stage::Score | Stage::Eval | Stage::Plot => {
                Some(self.cfg.system())
            }
            _ => None,
        }
    }

    /// Receipt file; stages specific to one system carry its tag.
    pub fn receipt(&self, stage: Stage) -> PathBuf {
        match self.receipt_tag(stage) {
            Some(t) => self.p(format!("receipts/{stage}.{t}.txt")),
            None => self.p(format!("receipts/{stage}.txt")),
        }
    }

    /// `(inputs with their producing stage, outputs)`.
    pub fn io(&self, stage: Stage) -> (Vec<(PathBuf, Stage)>, Vec<PathBuf>) {
        let cfg = self.cfg;
        let m = (self.manifest(), Stage::Ingest);
        let protos = &cfg.protocols;
        match stage {
            Stage::Ingest => (vec![], vec![self.manifest()]),
            Stage::Trials => (vec![m], [Protocol::One, Protocol::Two].map(|p| self.trials(p)).to_vec()),
            Stage::ExtractMfcc => (vec![m], vec![self.mfcc()]),
            Stage::TrainCpc => (vec![m], vec![self.cpc_model(), crate::cpc::header_path(&self.cpc_model()), self.cpc_history()]),
            Stage::ExtractCpc => {
                let mut out = vec![self.cpc()];
                if cfg.pca_dim > 0 {
                    out.extend([self.pca_model(), self.cpc_reduced()]);
                }
                (vec![m, (self.cpc_model(), Stage::TrainCpc)], out)
            }
            Stage::Fuse => (
                vec![(self.mfcc(), Stage::ExtractMfcc), (self.cpc_reduced(), Stage::ExtractCpc)],
                vec![self.fused()],
            ),
            Stage::TrainUbm => (vec![m, self.frames()], vec![self.ubm()]),
            Stage::TrainTv => (vec![m, self.frames(), (self.ubm(), Stage::TrainUbm)], vec![self.tv()]),
            Stage::ExtractIvectors => (vec![m, self.frames(), (self.tv(), Stage::TrainTv)], vec![self.embeddings()]),
            Stage::Pool => (vec![m, self.frames()], vec![self.embeddings()]),
            Stage::TrainBackend => (vec![m, (self.embeddings(), self.summarizer())], vec![self.backend()]),
            Stage::Score => {
                let mut ins = vec![(self.embeddings(), self.summarizer()), (self.backend(), Stage::TrainBackend)];
                ins.extend(protos.iter().map(|&p| (self.trials(p), Stage::Trials)));
                (ins, protos.iter().map(|&p| self.scores(p)).collect())
            }
            Stage::Eval => {
                let mut ins: Vec<_> = protos.iter().map(|&p| (self.trials(p), Stage::Trials)).collect();
                ins.extend(protos.iter().map(|&p| (self.scores(p), Stage::Score)));
                let mut outs: Vec<_> = protos.iter().map(|&p| self.det(p)).collect();
                outs.push(self.report());
                (ins, outs)
            }
            Stage::Plot => {
                let mut ins: Vec<_> = protos.iter().map(|&p| (self.det(p), Stage::Eval)).collect();
                ins.push((self.report(), Stage::Eval));
                ins.push((m.0.clone(), Stage::Ingest));
                ins.push(self.frames());
                let (pgm, csv) = self.feature_plot();
                (ins, vec![self.det_plot(), pgm, csv])
            }
        }
    }

    fn summarizer(&self) -> Stage {
        match self.cfg.summarization {
            Summarization::Pool => Stage::Pool,
            Summarization::IVector => Stage::ExtractIvectors,
        }
    }

    /// Stages needed for this configuration, in dependency order.
    pub fn stages(&self) -> Vec<Stage> {
        let cfg = self.cfg;
        let mfcc = cfg.features != FeatureChoice::Cpc;
        let cpc = cfg.features != FeatureChoice::Mfcc;
        let iv = cfg.summarization == Summarization::IVector;
        Stage::ALL
            .into_iter()
            .filter(|s| match s {
                Stage::ExtractMfcc => mfcc,
                Stage::TrainCpc | Stage::ExtractCpc => cpc,
                Stage::Fuse => cfg.features == FeatureChoice::Fused,
                Stage::TrainUbm | Stage::TrainTv | Stage::ExtractIvectors => iv,
                Stage::Pool => !iv,
                _ => true,
            })
            .collect()
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Data(format!("reading {}: {e}", path.display())))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn corpus_digest(cfg: &PipelineConfig) -> Result<String> {
    let mut h = Sha256::new();
    let mut subsets: Vec<&String> = cfg.train_subsets.iter().chain(&cfg.dev_subsets).chain(&cfg.test_subsets).collect();
    subsets.sort();
    subsets.dedup();
    for s in subsets {
        let dir = cfg.corpus.join(s);
        for e in walkdir::WalkDir::new(&dir).sort_by_file_name() {
            let e = e.map_err(|e| Error::Data(format!("walking {}: {e}", dir.display())))?;
            if e.file_type().is_file() {
                h.update(e.path().strip_prefix(&cfg.corpus).unwrap_or(e.path()).to_string_lossy().as_bytes());
                h.update(content_hash(&read(e.path())?).as_bytes());
            }
        }
    }
    Ok(hex16(&h.finalize()))
}

fn input_digest(layout: &Layout, stage: Stage, inputs: &[(PathBuf, Stage)]) -> Result<String> {
    let cfg = layout.cfg;
    let mut h = Sha256::new();
    let tag = layout.receipt_tag(stage).unwrap_or_default();
    h.update(format!("v{RECEIPT_VERSION} {stage} {tag}\n").as_bytes());
    for k in stage.keys() {
        h.update(format!("{k}={}\n", cfg.get(k)?).as_bytes());
    }
    if stage == Stage::Ingest {
        h.update(cfg.corpus.canonicalize().unwrap_or_else(|_| cfg.corpus.clone()).to_string_lossy().as_bytes());
        h.update(corpus_digest(cfg)?.as_bytes());
    }
    for (path, _) in inputs {
        let rel = path.strip_prefix(&cfg.workdir).unwrap_or(path);
        h.update(format!("{} {}\n", rel.display(), content_hash(&read(path)?)).as_bytes());
    }
    Ok(hex16(&h.finalize()))
}

fn output_digest(cfg: &PipelineConfig, outputs: &[PathBuf]) -> Result<Option<String>> {
    let mut h = Sha256::new();
    for path in outputs {
        if !path.exists() {
            return Ok(None);
        }
        let rel = path.strip_prefix(&cfg.workdir).unwrap_or(path);
        h.update(format!("{} {}\n", rel.display(), content_hash(&read(path)?)).as_bytes());
    }
    Ok(Some(hex16(&h.finalize())))
}

/// Run one stage unless its receipt shows identical inputs and outputs.
pub fn run_stage(cfg: &PipelineConfig, stage: Stage) -> Result<StageOutcome> {
    cfg.validate()?;
    let layout = Layout::new(cfg);
    let (inputs, outputs) = layout.io(stage);
    for (path, producer) in &inputs {
        if !path.exists() {
            return Err(Error::MissingPrerequisite {
                stage: producer.name().into(),
                path: path.display().to_string(),
            });
        }
    }
    let in_hash = input_digest(&layout, stage, &inputs)?;
    let receipt_path = layout.receipt(stage);
    if let Some(old) = fs::read_to_string(&receipt_path).ok().and_then(|t| Receipt::parse(&t)) {
        if old.inputs == in_hash && output_digest(cfg, &outputs)?.as_deref() == Some(old.outputs.as_str()) {
            info!("{stage}: up to date");
            return Ok(StageOutcome { stage, ran: false, receipt: old });
        }
    }
    let t0 = Instant::now();
    info!("{stage}: running");
    execute(&layout, stage)?;
    let outputs_hash = output_digest(cfg, &outputs)?
        .ok_or_else(|| Error::Contract(format!("stage {stage} did not write all of its outputs")))?;
    let receipt = Receipt {
        stage: stage.name().into(),
        inputs: in_hash,
        outputs: outputs_hash,
        wall_ms: t0.elapsed().as_millis(),
    };
    write(&receipt_path, receipt.render())?;
    Ok(StageOutcome { stage, ran: true, receipt })
}

/// Every stage the configuration needs (restricted by `stages` unless it is `all`).
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<StageOutcome>> {
    let wanted: Vec<Stage> = if cfg.stages.iter().any(|s| s == "all") {
        Layout::new(cfg).stages()
    } else {
        cfg.stages.iter().map(|s| s.parse()).collect::<Result<_>>()?
    };
    wanted.into_iter().map(|s| run_stage(cfg, s)).collect()
}

fn load_manifest(l: &Layout) -> Result<Manifest> {
    Manifest::from_tsv(&String::from_utf8_lossy(&read(&l.manifest())?))
}

fn load_frames(path: &Path, rows: &[&ManifestRow]) -> Result<Vec<FeatureMatrix>> {
    let ark = Archive::open(path)?;
    rows.iter().map(|r| ark.get(&r.id)).collect()
}

fn container(path: &Path) -> Result<Container> {
    Container::load(path).map_err(|e| match e {
        Error::Io(io) => Error::Data(format!("reading {}: {io}", path.display())),
        other => other,
    })
}

fn execute(l: &Layout, stage: Stage) -> Result<()> {
    let cfg = l.cfg;
    if stage == Stage::Ingest {
        let mut subsets: Vec<String> =
            cfg.train_subsets.iter().chain(&cfg.dev_subsets).chain(&cfg.test_subsets).cloned().collect();
        subsets.sort();
        subsets.dedup();
        let m = ingest(&cfg.corpus, &subsets)?;
        return write(&l.manifest(), m.to_tsv());
    }
    let manifest = load_manifest(l)?;
    let all: Vec<&ManifestRow> = manifest.rows.iter().collect();
    let train_rows: Vec<&ManifestRow> = manifest.subset(&cfg.train_subsets).collect();
    let test_rows: Vec<&ManifestRow> = manifest.subset(&cfg.test_subsets).collect();
    match stage {
        Stage::Ingest => unreachable!(),
        Stage::Trials => {
            let labels: Vec<_> = test_rows.iter().map(|r| r.label()).collect();
            for p in [Protocol::One, Protocol::Two] {
                let list = generate_trials(&labels, p, cfg.seed)?;
                write(&l.trials(p), write_trials(&list))?;
            }
        }
        Stage::ExtractMfcc => {
            let fc = FeatureConfig::default();
            let feats = par::try_map(&all, |r| -> Result<(String, FeatureMatrix)> {
                Ok((r.id.clone(), compute_mfcc(&load_wav(&r.path)?, &fc)?))
            })?;
            ensure_parent(&l.mfcc())?;
            write_archive(l.mfcc(), &feats)?;
        }
        Stage::TrainCpc => {
            let load = |rows: Vec<&ManifestRow>| par::try_map(&rows, |r| load_wav(&r.path));
            let tr = load(train_rows)?;
            let dv = load(manifest.subset(&cfg.dev_subsets).collect())?;
            let out = train(&tr, &dv, &cfg.cpc_config(), cfg.cpc_epochs, cfg.seed, |_| {})?;
            ensure_parent(&l.cpc_model())?;
            out.model.save(l.cpc_model(), out.best_epoch, out.best_dev.nce_loss as f64)?;
            write(&l.cpc_history(), history_csv(&out.history))?;
        }
        Stage::ExtractCpc => {
            let (model, _) = CpcModel::<f32>::load(l.cpc_model())?;
            let feats = par::try_map(&all, |r| -> Result<(String, FeatureMatrix)> {
                Ok((r.id.clone(), extract_context_features(&load_wav(&r.path)?, &model)?))
            })?;
            ensure_parent(&l.cpc())?;
            write_archive(l.cpc(), &feats)?;
            if cfg.pca_dim > 0 {
                let by_id: BTreeMap<&str, &FeatureMatrix> = feats.iter().map(|(k, v)| (k.as_str(), v)).collect();
                let train_frames: Vec<&FeatureMatrix> = train_rows.iter().map(|r| by_id[r.id.as_str()]).collect();
                let pca = pca_fit(&train_frames, cfg.pca_dim)?;
                info!("CPC PCA to {} dims keeps {:.2}% of the variance", cfg.pca_dim, pca.explained_ratio);
                pca.to_container().save(l.pca_model())?;
                let reduced = feats
                    .iter()
                    .map(|(id, f)| Ok((id.clone(), pca.transform(f)?)))
                    .collect::<Result<Vec<_>>>()?;
                write_archive(l.cpc_reduced(), &reduced)?;
            }
        }
        Stage::Fuse => {
            let mfcc = Archive::open(l.mfcc())?;
            let cpc = Archive::open(l.cpc_reduced())?;
            let fused = par::try_map(&all, |r| -> Result<(String, FeatureMatrix)> {
                Ok((r.id.clone(), fuse_concat(&mfcc.get(&r.id)?, &cpc.get(&r.id)?)?))
            })?;
            write_archive(l.fused(), &fused)?;
        }
        Stage::TrainUbm => {
            let frames = load_frames(&l.frames().0, &train_rows)?;
            let cols = frames[0].cols;
            let data: Vec<f64> = frames.iter().flat_map(|f| f.data.iter().copied()).collect();
            let pooled = FeatureMatrix::new(data.len() / cols, cols, data, frames[0].kind)?;
            let (ubm, trace) = gmm_em_train(&pooled, cfg.ubm_components, cfg.ubm_iters, cfg.seed)?;
            info!("UBM log-likelihood per frame: {:?}", trace.loglik.last());
            let mut c = Container::new();
            ubm.to_container("", &mut c);
            ensure_parent(&l.ubm())?;
            c.save(l.ubm())?;
        }
        Stage::TrainTv => {
            let ubm = DiagGmm::from_container("", &container(&l.ubm())?)?;
            let frames = load_frames(&l.frames().0, &train_rows)?;
            let stats = par::try_map(&frames, |f| accumulate_stats(&ubm, f))?;
            let (tv, _) = tmatrix_em_train(&stats, &ubm, cfg.tv_rank, cfg.tv_iters, cfg.seed)?;
            tv.to_container().save(l.tv())?;
        }
        Stage::ExtractIvectors => {
            let tv = TvModel::from_container(&container(&l.tv())?)?;
            let frames = load_frames(&l.frames().0, &all)?;
            let stats = par::try_map(&frames, |f| accumulate_stats(&tv.ubm, f))?;
            let ivecs = tv.extract_many(&stats)?;
            let mut set = EmbeddingSet::new(tv.rank());
            for (r, v) in all.iter().zip(ivecs) {
                set.push(r.id.clone(), r.speaker.clone(), v)?;
            }
            ensure_parent(&l.embeddings())?;
            write_embeddings(l.embeddings(), &set, FeatureKind::IVector)?;
        }
        Stage::Pool => {
            let frames = load_frames(&l.frames().0, &all)?;
            let mut set = EmbeddingSet::new(frames[0].cols);
            for (r, f) in all.iter().zip(&frames) {
                set.push(r.id.clone(), r.speaker.clone(), average_pool(f)?)?;
            }
            ensure_parent(&l.embeddings())?;
            write_embeddings(l.embeddings(), &set, FeatureKind::Pooled)?;
        }
        Stage::TrainBackend => {
            let emb = embedding_set(l, &train_rows)?;
            let norm = LengthNorm::fit(&emb)?;
            let normed = norm.apply(&emb)?;
            let lda_dim = cfg.resolve_lda_dim(emb.dim, manifest.speakers(&cfg.train_subsets));
            let lda = lda_fit(&normed, lda_dim)?;
            let plda = plda_fit(&lda.transform(&normed)?, cfg.plda_iters)?;
            let mut c = Container::new();
            c.push_f64("norm.mean", &[norm.mean.len()], &norm.mean);
            c.records.extend(lda.to_container().records);
            c.records.extend(plda.to_container().records);
            ensure_parent(&l.backend())?;
            c.save(l.backend())?;
        }
        Stage::Score => {
            let c = container(&l.backend())?;
            let norm = LengthNorm { mean: c.get_f64("norm.mean")?.1 };
            let lda = LdaModel::from_container(&c)?;
            let plda = PldaModel::from_container(&c)?;
            let emb: BTreeMap<String, Vec<f64>> = read_embeddings(l.embeddings())?
                .into_iter()
                .map(|(id, v)| (id, lda.transform_one(&norm.apply_one(&v))))
                .collect();
            for &p in &cfg.protocols {
                let list = parse_trials(&String::from_utf8_lossy(&read(&l.trials(p))?), p)?;
                let get = |id: &str| {
                    emb.get(id).ok_or_else(|| Error::Data(format!("no embedding for trial utterance {id}")))
                };
                let scores = par::try_map(&list.trials, |t| Ok::<_, Error>(plda.llr(get(&t.enroll)?, get(&t.test)?)))?;
                ensure_parent(&l.scores(p))?;
                write(&l.scores(p), write_scores(&list.trials, &scores))?;
            }
        }
        Stage::Eval => {
            let mut summary = String::from("protocol,trials,targets,eer,min_dcf,dcf_threshold\n");
            for &p in &cfg.protocols {
                let set = load_score_set(l, p)?;
                let eer = compute_eer(&set)?;
                let (dcf, thr) = compute_dcf(&set, &cfg.dcf)?;
                info!("{} protocol {p}: EER {:.3}%, minDCF {dcf:.4}", cfg.system(), 100.0 * eer);
                write(&l.det(p), det_csv(&compute_det(&set)?))?;
                summary.push_str(&format!(
                    "{p},{},{},{eer:?},{dcf:?},{thr:?}\n",
                    set.target.len() + set.nontarget.len(),
                    set.target.len()
                ));
            }
            write(&l.report(), summary)?;
        }
        Stage::Plot => {
            let summary = read_summary(&l.report())?;
            let dets: Vec<(String, Vec<DetPoint>, f64)> = cfg
                .protocols
                .iter()
                .map(|&p| {
                    let pts = parse_det_csv(&String::from_utf8_lossy(&read(&l.det(p))?))?;
                    let eer = summary.iter().find(|s| s.protocol == p).map_or(f64::NAN, |s| s.eer);
                    Ok((format!("{} protocol {p}", cfg.system()), pts, eer))
                })
                .collect::<Result<_>>()?;
            let curves: Vec<DetCurve> =
                dets.iter().map(|(label, points, eer)| DetCurve { label, points, eer: *eer }).collect();
            write(&l.det_plot(), plot_det(&curves)?)?;
            let first = test_rows.first().copied().unwrap_or(all[0]);
            let f = Archive::open(l.frames().0)?.get(&first.id)?;
            let (pgm, csv) = l.feature_plot();
            write(&pgm, plot_features(&f)?)?;
            write(&csv, feature_stats_csv(&f))?;
        }
    }
    Ok(())
}

fn embedding_set(l: &Layout, rows: &[&ManifestRow]) -> Result<EmbeddingSet> {
    let all: BTreeMap<String, Vec<f64>> = read_embeddings(l.embeddings())?.into_iter().collect();
    let dim = all.values().next().map_or(0, Vec::len);
    let mut set = EmbeddingSet::new(dim);
    for r in rows {
        let v = all.get(&r.id).ok_or_else(|| Error::Data(format!("no embedding for {}", r.id)))?;
        set.push(r.id.clone(), r.speaker.clone(), v.clone())?;
    }
    Ok(set)
}

fn load_score_set(l: &Layout, p: Protocol) -> Result<ScoreSet> {
    let list = parse_trials(&String::from_utf8_lossy(&read(&l.trials(p))?), p)?;
    let scores = read_scores(&String::from_utf8_lossy(&read(&l.scores(p))?))?;
    if scores.len() != list.len() {
        return Err(Error::Data(format!(
            "protocol {p}: {} scores for {} trials",
            scores.len(),
            list.len()
        )));
    }
    for (t, s) in list.trials.iter().zip(&scores) {
        if t.enroll != s.0 || t.test != s.1 {
            return Err(Error::Data(format!("score line {} {} does not match trial {} {}", s.0, s.1, t.enroll, t.test)));
        }
    }
    let values: Vec<f64> = scores.iter().map(|s| s.2).collect();
    let labels: Vec<bool> = list.trials.iter().map(|t| t.target).collect();
    ScoreSet::from_labelled(&values, &labels)
}

fn parse_det_csv(text: &str) -> Result<Vec<DetPoint>> {
    let pts = text
        .lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().map_err(|_| Error::format("det csv", l.to_string()))).collect::<Result<_>>()?;
            if v.len() != 4 {
                return Err(Error::format("det csv", l.to_string()));
            }
            Ok(DetPoint { far: v[0], frr: v[1], probit_far: v[2], probit_frr: v[3] })
        })
        .collect::<Result<Vec<_>>>()?;
    if pts.is_empty() {
        return Err(Error::Data("DET CSV has no points".into()));
    }
    Ok(pts)
}

/// One row of an eval summary.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub protocol: Protocol,
    pub trials: usize,
    pub targets: usize,
    pub eer: f64,
    pub min_dcf: f64,
}

pub fn read_summary(path: &Path) -> Result<Vec<EvalRow>> {
    let text = String::from_utf8_lossy(&read(path)?).into_owned();
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            let bad = || Error::format("eval summary", l.to_string());
            if f.len() != 6 {
                return Err(bad());
            }
            Ok(EvalRow {
                protocol: f[0].parse()?,
                trials: f[1].parse().map_err(|_| bad())?,
                targets: f[2].parse().map_err(|_| bad())?,
                eer: f[3].parse().map_err(|_| bad())?,
                min_dcf: f[4].parse().map_err(|_| bad())?,
            })
        })
        .collect()
}

/// Hashes of every artifact under the work directory except receipts, keyed
/// by relative path.
pub fn artifact_hashes(workdir: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for e in walkdir::WalkDir::new(workdir).sort_by_file_name() {
        let e = e.map_err(|e| Error::Data(format!("walking {}: {e}", workdir.display())))?;
        if !e.file_type().is_file() {
            continue;
        }
        let rel = e.path().strip_prefix(workdir).unwrap_or(e.path()).to_string_lossy().into_owned();
        if rel.starts_with("receipts") {
            continue;
        }
        out.insert(rel, content_hash(&read(e.path())?));
    }
    Ok(out)
}

/// Read a feature archive written by a stage, for inspection.
pub fn load_archive(path: &Path) -> Result<Vec<(String, FeatureMatrix)>> {
    read_archive(path)
}
