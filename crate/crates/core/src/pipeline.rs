//! End-to-end runs: data preparation, one technique, training, evaluation
//! and metering, for a single model/technique cell or the full matrix.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augment::{
    augment_to_threshold, extend_split, AugmentConfig, AugmentedInteraction, TransformSpec,
};
use crate::dataset::{partition, Dataset, PartitionConfig, PartitionMode, Split};
use crate::embed::{embed_dataset, import_embeddings, BaselineEmbedder, EmbeddingStore};
use crate::error::{Error, Result};
use crate::evalkit::{build_test_cases, MetricReport};
use crate::genaug::{generate_to_threshold, plan_generation, GenAugConfig, GenSummary, Generator};
use crate::image::{DirImages, ImageSource, MemoryImages};
use crate::meter::{self, Clock, EmissionRecord, Meter, Phase, PowerModel};
use crate::pu::{select_reliable_negatives, PuConfig, ReliableNegatives, RnSummary};
use crate::ranker::{
    evaluate, train, Head, NegativeSource, Objective, TrainConfig, TrainedModel, ValMetric,
};
use crate::reference::{
    ranking_reference, training_reference, City, ReferenceMetrics, ReferenceTraining,
};
use crate::synth::{clustered, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// MLP head trained with binary cross-entropy.
    MlpBce,
    /// Inner-product head trained with binary cross-entropy.
    DotBce,
    /// Inner-product head trained with the pairwise objective.
    DotBpr,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::MlpBce, ModelKind::DotBce, ModelKind::DotBpr];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::MlpBce => "mlp_bce",
            ModelKind::DotBce => "dot_bce",
            ModelKind::DotBpr => "dot_bpr",
        }
    }

    pub fn head(self) -> Head {
        match self {
            ModelKind::MlpBce => Head::Mlp,
            _ => Head::Dot,
        }
    }

    pub fn objective(self) -> Objective {
        match self {
            ModelKind::DotBpr => Objective::Bpr,
            _ => Objective::Bce,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| {
                Error::Config(format!("unknown model '{s}' (mlp_bce, dot_bce, dot_bpr)"))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Technique {
    None,
    Pu,
    Tda,
    Genda,
}

impl Technique {
    pub const ALL: [Technique; 4] = [
        Technique::None,
        Technique::Pu,
        Technique::Tda,
        Technique::Genda,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Technique::None => "none",
            Technique::Pu => "pu",
            Technique::Tda => "tda",
            Technique::Genda => "genda",
        }
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technique {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown technique '{s}' (none, pu, tda, genda)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Interaction TSV. When absent a synthetic dataset is generated.
    pub dataset: Option<PathBuf>,
    /// Key sidecar written by `ingest`; when given the TSV is read as
    /// densified ids.
    pub sidecar: Option<PathBuf>,
    /// Directory of `<image_key>.png` files.
    pub images: Option<PathBuf>,
    /// Embedding file to import instead of running the baseline embedder.
    pub embeddings: Option<PathBuf>,
    pub embed_dim: usize,
    pub item_type: String,
    /// Which published column to show next to the results.
    pub city: City,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dataset: None,
            sidecar: None,
            images: None,
            embeddings: None,
            embed_dim: 48,
            item_type: "restaurant".into(),
            city: City::Gijon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSection {
    pub mode: PartitionMode,
    pub val_fraction: f64,
}

impl Default for PartitionSection {
    fn default() -> Self {
        PartitionSection {
            mode: PartitionMode::default(),
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PuSection {
    pub q: f64,
    /// Candidates scanned per user; 0 scans every image.
    pub cap: usize,
}

impl Default for PuSection {
    fn default() -> Self {
        let d = PuConfig::default();
        PuSection {
            q: d.q,
            cap: d.candidate_cap.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentSection {
    /// Activity threshold shared by both augmentation techniques.
    pub n: usize,
    pub specs: Vec<TransformSpec>,
    /// Generated image side.
    pub gen_size: u32,
    /// Directory of `<hash>.png` files; when absent the built-in stub
    /// generator is used.
    pub generated_dir: Option<PathBuf>,
    pub dump_pngs: bool,
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection {
            n: 10,
            specs: TransformSpec::defaults(),
            gen_size: 64,
            generated_dir: None,
            dump_pngs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub momentum: f64,
    pub l2: f64,
    pub epochs_max: usize,
    pub patience: usize,
    pub delta: f64,
    pub batch: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            dim: t.dim,
            hidden: t.hidden,
            lr: t.lr,
            momentum: t.momentum,
            l2: t.l2,
            epochs_max: t.epochs_max,
            patience: t.early_stop_patience,
            delta: t.early_stop_delta,
            batch: t.batch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSection {
    pub max_cases: u64,
    pub points_per_decade: u32,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        ProjectionSection {
            max_cases: 100_000_000,
            points_per_decade: 4,
        }
    }
}

/// Everything a run needs. Loaded from TOML; every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub technique: Technique,
    pub model: ModelKind,
    pub out: PathBuf,
    pub data: DataSection,
    pub synthetic: SynthConfig,
    pub partition: PartitionSection,
    pub pu: PuSection,
    pub augment: AugmentSection,
    pub train: TrainSection,
    pub power: PowerModel,
    pub projection: ProjectionSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            technique: Technique::None,
            model: ModelKind::DotBpr,
            out: PathBuf::from("out"),
            data: DataSection::default(),
            synthetic: SynthConfig::default(),
            partition: PartitionSection::default(),
            pu: PuSection::default(),
            augment: AugmentSection::default(),
            train: TrainSection::default(),
            power: PowerModel::default(),
            projection: ProjectionSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let exists = |p: &Option<PathBuf>, what: &str| match p {
            Some(p) if !p.exists() => Err(Error::Config(format!(
                "{what} {} does not exist",
                p.display()
            ))),
            _ => Ok(()),
        };
        exists(&self.data.dataset, "dataset")?;
        exists(&self.data.sidecar, "sidecar")?;
        exists(&self.data.images, "image directory")?;
        exists(&self.data.embeddings, "embedding file")?;
        exists(&self.augment.generated_dir, "generated image directory")?;
        if !(self.partition.val_fraction >= 0.0 && self.partition.val_fraction < 1.0) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        if !(self.pu.q > 0.0 && self.pu.q < 1.0) {
            return Err(Error::Config("q must be in (0, 1)".into()));
        }
        if self.augment.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        for s in &self.augment.specs {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.power.validate()?;
        Ok(())
    }

    pub fn partition_config(&self) -> PartitionConfig {
        PartitionConfig {
            mode: self.partition.mode,
            seed: self.seed,
            val_fraction: self.partition.val_fraction,
        }
    }

    pub fn pu_config(&self) -> PuConfig {
        PuConfig {
            q: self.pu.q,
            candidate_cap: (self.pu.cap > 0).then_some(self.pu.cap),
            seed: self.seed,
        }
    }

    pub fn augment_config(&self) -> AugmentConfig {
        AugmentConfig {
            n: self.augment.n,
            specs: self.augment.specs.clone(),
            seed: self.seed,
            dump_dir: self.augment.dump_pngs.then(|| self.out.join("augment_png")),
        }
    }

    pub fn genaug_config(&self) -> GenAugConfig {
        GenAugConfig {
            n: self.augment.n,
            seed: self.seed,
            size: self.augment.gen_size,
            dump_dir: self.augment.dump_pngs.then(|| self.out.join("genaug_png")),
        }
    }

    pub fn generator(&self) -> Generator {
        match &self.augment.generated_dir {
            Some(dir) => Generator::ExternalDir(dir.clone()),
            None => Generator::Stub,
        }
    }

    pub fn train_config(&self, model: ModelKind, technique: Technique) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            head: model.head(),
            objective: model.objective(),
            neg_source: if technique == Technique::Pu {
                NegativeSource::Reliable
            } else {
                NegativeSource::Random
            },
            dim: t.dim,
            hidden: t.hidden,
            lr: t.lr,
            momentum: t.momentum,
            l2: t.l2,
            epochs_max: t.epochs_max,
            early_stop_patience: t.patience,
            early_stop_delta: t.delta,
            batch: t.batch,
            val_metric: ValMetric::Ndcg,
            seed: self.seed,
        }
    }
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: name,
            source: Box::new(e),
        },
    })
}

/// Loaded data, images and real-image embeddings.
pub struct Prepared {
    pub dataset: Dataset,
    pub images: Option<Box<dyn ImageSource>>,
    pub store: EmbeddingStore,
    /// Set when `store` came from the baseline embedder; augmentation needs it
    /// to embed new images consistently.
    pub embedder: Option<BaselineEmbedder>,
    pub source: String,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    match (&cfg.data.dataset, &cfg.data.sidecar) {
        (Some(tsv), Some(sidecar)) => Dataset::load(tsv, sidecar),
        (Some(tsv), None) => Dataset::ingest(tsv, &cfg.data.item_type),
        (None, _) => Ok(clustered(&cfg.synthetic)?.dataset),
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let (dataset, images, source): (Dataset, Option<Box<dyn ImageSource>>, String) =
        match &cfg.data.dataset {
            Some(path) => {
                let d = stage("ingest", load_dataset(cfg))?;
                let images =
                    cfg.data.images.as_ref().map(|dir| {
                        Box::new(DirImages::new(dir.clone(), &d)) as Box<dyn ImageSource>
                    });
                (d, images, path.display().to_string())
            }
            None => {
                let s = stage("ingest", clustered(&cfg.synthetic))?;
                let images: MemoryImages = s.images;
                (
                    s.dataset,
                    Some(Box::new(images) as Box<dyn ImageSource>),
                    "synthetic".into(),
                )
            }
        };
    let (store, embedder) = match &cfg.data.embeddings {
        Some(path) => {
            let store = stage("embed", import_embeddings(path))?;
            for k in 0..dataset.n_images() as u64 {
                stage(
                    "embed",
                    store.require(crate::dataset::ImageId(k)).map(|_| ()),
                )?;
            }
            (store, None)
        }
        None => {
            let embedder = BaselineEmbedder::new(cfg.data.embed_dim)?;
            let images = images.as_deref().ok_or_else(|| {
                Error::Config("baseline embeddings need an image directory".into())
            })?;
            (
                stage("embed", embed_dataset(&dataset, images, &embedder))?,
                Some(embedder),
            )
        }
    };
    Ok(Prepared {
        dataset,
        images,
        store,
        embedder,
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub model: ModelKind,
    pub technique: Technique,
    pub metrics: MetricReport,
    pub train_examples: usize,
    pub synthetic_examples: usize,
    pub rn_summary: Option<RnSummary>,
    pub gen_summary: Option<GenSummary>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub paper_reference: Option<ReferenceMetrics>,
    pub paper_training: Option<ReferenceTraining>,
}

/// Everything a cell produced. Timings are kept out of [`CellReport`] so
/// that reports are reproducible.
pub struct CellOutput {
    pub report: CellReport,
    pub emissions: Vec<EmissionRecord>,
    /// Technique and training phases folded into one record.
    pub training_total: EmissionRecord,
    /// Eval emissions divided by the number of test cases.
    pub per_inference_g: f64,
    pub model: TrainedModel,
    pub reliable_negatives: Option<ReliableNegatives>,
    pub augmented: Vec<AugmentedInteraction>,
    pub prompts_tsv: Option<String>,
}

/// Run one model/technique cell on an already partitioned dataset.
pub fn run_cell<C: Clock>(
    p: &Prepared,
    split: &Split,
    model: ModelKind,
    technique: Technique,
    cfg: &RunConfig,
    meter: &Meter<C>,
) -> Result<CellOutput> {
    let d = &p.dataset;
    let mut store = p.store.clone();
    let mut rn = None;
    let mut augmented = Vec::new();
    let mut gen_summary = None;
    let mut prompts_tsv = None;
    let mut records = Vec::new();

    let need_embedder = || {
        p.embedder.ok_or_else(|| {
            Error::Config("augmentation needs baseline embeddings; imported embeddings cannot embed new images".into())
        })
    };
    match technique {
        Technique::None => {}
        Technique::Pu => {
            let (r, rec) = meter.measure(Phase::PuSelect, || {
                select_reliable_negatives(d, split, &store, &cfg.pu_config())
            })?;
            records.push(rec);
            rn = Some(stage("pu-select", r)?);
        }
        Technique::Tda => {
            let embedder = need_embedder()?;
            let images = p.images.as_deref().ok_or_else(|| {
                Error::Config("transform augmentation needs an image directory".into())
            })?;
            let (r, rec) = meter.measure(Phase::Augment, || {
                augment_to_threshold(
                    d,
                    split,
                    &cfg.augment_config(),
                    images,
                    &embedder,
                    &mut store,
                )
            })?;
            records.push(rec);
            augmented = stage("augment", r)?;
        }
        Technique::Genda => {
            let embedder = need_embedder()?;
            let gcfg = cfg.genaug_config();
            prompts_tsv = Some(stage("genaug", plan_generation(d, split, &gcfg))?.prompts_tsv());
            let generator = cfg.generator();
            let (r, rec) = meter.measure(Phase::Genaug, || {
                generate_to_threshold(d, split, &generator, &gcfg, &embedder, &mut store)
            })?;
            records.push(rec);
            let out = stage("genaug", r)?;
            augmented = out.augmented;
            gen_summary = Some(out.summary);
        }
    }

    let train_split = extend_split(split, &augmented);
    let tcfg = cfg.train_config(model, technique);
    let (trained, rec) = meter.measure(Phase::Train, || {
        train(d, &train_split, &store, rn.as_ref(), &tcfg)
    })?;
    records.push(rec);
    let trained = stage("train", trained)?;

    let cases = build_test_cases(d, &split.test);
    let (metrics, eval_rec) = meter.measure(Phase::Eval, || evaluate(&trained, &cases, &store))?;
    let metrics = stage("eval", metrics)?;

    let train_seconds: f64 = records.iter().map(|r| r.wall_seconds).sum();
    let training_total =
        EmissionRecord::from_seconds(Phase::Train, train_seconds, meter.power_model());
    records.push(eval_rec);
    let per_inference_g = if metrics.n_cases_total == 0 {
        0.0
    } else {
        eval_rec.emissions_g / metrics.n_cases_total as f64
    };

    let report = CellReport {
        model,
        technique,
        metrics,
        train_examples: train_split.train.len(),
        synthetic_examples: augmented.len(),
        rn_summary: rn.as_ref().map(|r| r.summary.clone()),
        gen_summary,
        epochs_run: trained.stopped_epoch,
        best_epoch: trained.best_epoch,
        paper_reference: ranking_reference(cfg.data.city, model, technique),
        paper_training: training_reference(model, technique),
    };
    Ok(CellOutput {
        report,
        emissions: records,
        training_total,
        per_inference_g,
        model: trained,
        reliable_negatives: rn,
        augmented,
        prompts_tsv,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub source: String,
    pub n_users: usize,
    pub n_items: usize,
    pub n_images: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub dataset: DatasetSummary,
    pub cells: Vec<CellReport>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Plain-text table: one row per cell, measured metrics next to the
    /// published ones.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<18} {:>9} {:>9} {:>9}   {:>9} {:>9} {:>9}",
            "model + technique", "recall@10", "ndcg@10", "auc", "ref rec", "ref ndcg", "ref auc"
        );
        for c in &self.cells {
            let name = if c.technique == Technique::None {
                c.model.to_string()
            } else {
                format!("{} + {}", c.model, c.technique)
            };
            let reference = match &c.paper_reference {
                Some(r) => format!(
                    "{:>9.3} {:>9.3} {:>9.3}",
                    r.recall_at_10, r.ndcg_at_10, r.auc
                ),
                None => format!("{:>9} {:>9} {:>9}", "-", "-", "-"),
            };
            let _ = writeln!(
                s,
                "{:<18} {:>9.3} {:>9.3} {:>9.3}   {}",
                name, c.metrics.recall_at_10, c.metrics.ndcg_at_10, c.metrics.auc, reference
            );
        }
        s
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Run the given cells on one partition and write `report.json`,
/// `emissions.csv`, `projection.csv`, `table.txt` and, when the techniques
/// ran, `rn_dump.tsv` / `prompts.tsv` into `cfg.out`.
pub fn run_cells<C: Clock>(
    cfg: &RunConfig,
    cells: &[(ModelKind, Technique)],
    meter: &Meter<C>,
) -> Result<(ExperimentReport, Vec<CellOutput>)> {
    let prepared = prepare(cfg)?;
    let split = partition(&prepared.dataset, &cfg.partition_config());
    if split.train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    let mut outputs = Vec::with_capacity(cells.len());
    for &(model, technique) in cells {
        log::info!("running {model} + {technique}");
        outputs.push(run_cell(&prepared, &split, model, technique, cfg, meter)?);
    }
    let d = &prepared.dataset;
    let report = ExperimentReport {
        seed: cfg.seed,
        dataset: DatasetSummary {
            source: prepared.source.clone(),
            n_users: d.n_users(),
            n_items: d.n_items(),
            n_images: d.n_images(),
            train: split.train.len(),
            validation: split.validation.len(),
            test: split.test.len(),
        },
        cells: outputs.iter().map(|o| o.report.clone()).collect(),
    };
    write_outputs(cfg, &report, &outputs)?;
    Ok((report, outputs))
}

fn write_outputs(cfg: &RunConfig, report: &ExperimentReport, outputs: &[CellOutput]) -> Result<()> {
    let out = &cfg.out;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write(&out.join("report.json"), report.to_json()?)?;
    write(&out.join("table.txt"), report.table())?;

    let mut emissions = format!("model,technique,{}\n", meter::EMISSIONS_HEADER);
    let mut projection = format!("model,technique,{}\n", meter::PROJECTION_HEADER);
    let grid = meter::log_grid(cfg.projection.max_cases, cfg.projection.points_per_decade);
    for o in outputs {
        let (m, t) = (o.report.model, o.report.technique);
        for r in &o.emissions {
            let _ = writeln!(emissions, "{m},{t},{}", meter::emission_row(r));
        }
        for (n, g) in meter::projection_curve(&o.training_total, o.per_inference_g, &grid) {
            let _ = writeln!(projection, "{m},{t},{n},{g}");
        }
    }
    write(&out.join("emissions.csv"), emissions)?;
    write(&out.join("projection.csv"), projection)?;

    if let Some(rn) = outputs.iter().find_map(|o| o.reliable_negatives.as_ref()) {
        write(&out.join("rn_dump.tsv"), rn.to_tsv())?;
    }
    if let Some(p) = outputs.iter().find_map(|o| o.prompts_tsv.as_ref()) {
        write(&out.join("prompts.tsv"), p)?;
    }
    Ok(())
}

/// The single cell named by `cfg.model` and `cfg.technique`.
pub fn run_pipeline<C: Clock>(cfg: &RunConfig, meter: &Meter<C>) -> Result<ExperimentReport> {
    let (report, outputs) = run_cells(cfg, &[(cfg.model, cfg.technique)], meter)?;
    outputs[0].model.save(cfg.out.join("model.ckpt"))?;
    Ok(report)
}

/// All twelve model/technique cells, ordered as in the published table.
pub fn matrix_cells() -> Vec<(ModelKind, Technique)> {
    let mut cells: Vec<_> = ModelKind::ALL
        .iter()
        .map(|&m| (m, Technique::None))
        .collect();
    for m in ModelKind::ALL {
        for t in &Technique::ALL[1..] {
            cells.push((m, *t));
        }
    }
    cells
}

pub fn run_matrix<C: Clock>(cfg: &RunConfig, meter: &Meter<C>) -> Result<ExperimentReport> {
    Ok(run_cells(cfg, &matrix_cells(), meter)?.0)
}
