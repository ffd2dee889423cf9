use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dqrec::augment::{augment_to_threshold, AugmentedInteraction};
use dqrec::dataset::{partition, Split};
use dqrec::embed::export_embeddings;
use dqrec::evalkit::build_test_cases;
use dqrec::genaug::{generate_to_threshold, plan_generation};
use dqrec::image::encode_png;
use dqrec::meter::{Meter, SystemClock};
use dqrec::pipeline::{self, prepare, ExperimentReport, ModelKind, Prepared, RunConfig, Technique};
use dqrec::pu::select_reliable_negatives;
use dqrec::ranker::{evaluate, TrainedModel};
use dqrec::reference::training_reference;
use dqrec::synth::clustered;
use dqrec::{Error, ErrorKind, Result};

/// Data-quality techniques for image-based recommendation explanations.
///
/// Every stage can be run on its own. Stages recompute their inputs
/// deterministically from the same configuration, so running `train` after
/// `pu-select` with the same flags sees the same reliable negatives.
#[derive(Parser)]
#[command(name = "dqrec", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Interaction TSV (`user<TAB>item<TAB>image<TAB>review`). Without it a
    /// synthetic dataset is generated.
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    /// Directory of `<image_key>.png` files.
    #[arg(long, global = true)]
    images: Option<PathBuf>,
    /// Embedding file to use instead of the baseline embedder.
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    technique: Option<Technique>,
    #[arg(long, global = true)]
    model: Option<ModelKind>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Activity threshold for augmentation.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Percentile for reliable-negative selection.
    #[arg(long, global = true)]
    q: Option<f64>,
    /// Candidates scanned per user during selection (0 = all).
    #[arg(long, global = true)]
    cap: Option<usize>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a TSV and write the densified copy plus key sidecar.
    Ingest,
    /// Write the leave-one-out split as JSON.
    Partition,
    /// Compute (or import and check) embeddings for every image.
    Embed,
    /// Select reliable negatives per user.
    PuSelect,
    /// Transform-based augmentation up to the activity threshold.
    Augment,
    /// Generative augmentation up to the activity threshold.
    Genaug,
    /// Write prompts.tsv for an external generator.
    Prompts,
    /// Run one model/technique cell end to end and save the model.
    Train,
    /// Evaluate a saved model on the test split.
    Eval {
        /// Checkpoint to evaluate; defaults to `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run all twelve model/technique cells.
    Matrix,
    /// Print the table of an existing report.json.
    Report {
        /// Defaults to `<out>/report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the synthetic dataset as a TSV and a directory of PNGs.
    Synth,
    /// Print the effective configuration as TOML.
    Config,
}

fn config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &c.dataset {
        cfg.data.dataset = Some(v.clone());
    }
    if let Some(v) = &c.images {
        cfg.data.images = Some(v.clone());
    }
    if let Some(v) = &c.embeddings {
        cfg.data.embeddings = Some(v.clone());
    }
    if let Some(v) = c.technique {
        cfg.technique = v;
    }
    if let Some(v) = c.model {
        cfg.model = v;
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
        cfg.synthetic.seed = v;
    }
    if let Some(v) = c.n {
        cfg.augment.n = v;
    }
    if let Some(v) = c.q {
        cfg.pu.q = v;
    }
    if let Some(v) = c.cap {
        cfg.pu.cap = v;
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write(path, s)
}

fn prepared_split(cfg: &RunConfig) -> Result<(Prepared, Split)> {
    let p = prepare(cfg)?;
    let split = partition(&p.dataset, &cfg.partition_config());
    Ok((p, split))
}

fn augmented_tsv(aug: &[AugmentedInteraction]) -> Result<String> {
    let mut s = String::from("user_id\titem_id\tbase_image_id\tsynthetic_image_id\tprovenance\n");
    for a in aug {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            a.base.user.0,
            a.base.item.0,
            a.base.image.0,
            a.synthetic_image.0,
            serde_json::to_string(&a.provenance)?
        ));
    }
    Ok(s)
}

fn print_report(report: &ExperimentReport) {
    print!("{}", report.table());
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out = cfg.out.clone();
    match cli.command {
        Command::Config => print!("{}", cfg.to_toml()?),
        Command::Ingest => {
            let d = pipeline::load_dataset(&cfg)?;
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            d.save(out.join("dataset.tsv"), out.join("keys.json"))?;
            println!(
                "{} users, {} items, {} images",
                d.n_users(),
                d.n_items(),
                d.n_images()
            );
        }
        Command::Partition => {
            let d = pipeline::load_dataset(&cfg)?;
            let split = partition(&d, &cfg.partition_config());
            write_json(&out.join("split.json"), &split)?;
            println!(
                "train {}, validation {}, test {}",
                split.train.len(),
                split.validation.len(),
                split.test.len()
            );
        }
        Command::Embed => {
            let p = prepare(&cfg)?;
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            export_embeddings(&p.store, out.join("embeddings.bin"))?;
            println!("{} embeddings of width {}", p.store.len(), p.store.dim());
        }
        Command::PuSelect => {
            let (p, split) = prepared_split(&cfg)?;
            let rn = select_reliable_negatives(&p.dataset, &split, &p.store, &cfg.pu_config())?;
            fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
            rn.write(out.join("rn_dump.tsv"), out.join("rn_summary.json"))?;
            println!(
                "{} reliable negatives from {} candidates; {} users with none",
                rn.summary.total_admitted,
                rn.summary.total_candidates,
                rn.summary.users_with_empty_rn
            );
        }
        Command::Augment => {
            let (p, split) = prepared_split(&cfg)?;
            let embedder = p
                .embedder
                .ok_or_else(|| Error::Config("augmentation needs baseline embeddings".into()))?;
            let images = p
                .images
                .as_deref()
                .ok_or_else(|| Error::Config("augmentation needs an image directory".into()))?;
            let mut store = p.store.clone();
            let aug = augment_to_threshold(
                &p.dataset,
                &split,
                &cfg.augment_config(),
                images,
                &embedder,
                &mut store,
            )?;
            write(&out.join("augmented.tsv"), augmented_tsv(&aug)?)?;
            export_embeddings(&store, out.join("embeddings_augmented.bin"))?;
            println!("{} synthetic train examples", aug.len());
        }
        Command::Genaug => {
            let (p, split) = prepared_split(&cfg)?;
            let embedder = p
                .embedder
                .ok_or_else(|| Error::Config("augmentation needs baseline embeddings".into()))?;
            let mut store = p.store.clone();
            let gcfg = cfg.genaug_config();
            let res = generate_to_threshold(
                &p.dataset,
                &split,
                &cfg.generator(),
                &gcfg,
                &embedder,
                &mut store,
            )?;
            write(&out.join("augmented.tsv"), augmented_tsv(&res.augmented)?)?;
            write_json(&out.join("genaug_summary.json"), &res.summary)?;
            export_embeddings(&store, out.join("embeddings_augmented.bin"))?;
            println!(
                "{} generated; {} users skipped (no review), {} failed",
                res.summary.generated,
                res.summary.skipped_users.len(),
                res.summary.failed.len()
            );
            if !res.summary.failed.is_empty() {
                return Err(Error::Stage {
                    stage: "genaug",
                    source: Box::new(Error::InvalidParameter(format!(
                        "{} users failed; see genaug_summary.json",
                        res.summary.failed.len()
                    ))),
                });
            }
        }
        Command::Prompts => {
            let d = pipeline::load_dataset(&cfg)?;
            let split = partition(&d, &cfg.partition_config());
            let plan = plan_generation(&d, &split, &cfg.genaug_config())?;
            write(&out.join("prompts.tsv"), plan.prompts_tsv())?;
            println!("{} prompts", plan.iter().count());
        }
        Command::Train => {
            let meter = Meter::new(SystemClock::new(), cfg.power)?;
            let report = pipeline::run_pipeline(&cfg, &meter)?;
            print_report(&report);
        }
        Command::Eval { checkpoint } => {
            let path = checkpoint.unwrap_or_else(|| out.join("model.ckpt"));
            let model = TrainedModel::load(&path)?;
            let (p, split) = prepared_split(&cfg)?;
            let cases = build_test_cases(&p.dataset, &split.test);
            let metrics = evaluate(&model, &cases, &p.store)?;
            write_json(&out.join("metrics.json"), &metrics)?;
            println!(
                "recall@10 {:.4}  ndcg@10 {:.4}  auc {:.4}  ({} cases, {} with >10 candidates)",
                metrics.recall_at_10,
                metrics.ndcg_at_10,
                metrics.auc,
                metrics.n_cases_total,
                metrics.n_cases_gt10
            );
        }
        Command::Matrix => {
            let meter = Meter::new(SystemClock::new(), cfg.power)?;
            let report = pipeline::run_matrix(&cfg, &meter)?;
            print_report(&report);
        }
        Command::Report { report } => {
            let path = report.unwrap_or_else(|| out.join("report.json"));
            let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
            let report: ExperimentReport = serde_json::from_str(&text)?;
            print_report(&report);
            println!();
            println!("{:<18} {:>12} {:>12}", "published", "train time", "gCO2e");
            for c in &report.cells {
                if let Some(t) = training_reference(c.model, c.technique) {
                    let s = t.wall_seconds;
                    let name = if c.technique == Technique::None {
                        c.model.to_string()
                    } else {
                        format!("{} + {}", c.model, c.technique)
                    };
                    println!(
                        "{:<18} {:>12} {:>12.2}",
                        name,
                        format!("{}h{:02}m{:02}s", s / 3600, s / 60 % 60, s % 60),
                        t.emissions_g
                    );
                }
            }
        }
        Command::Synth => {
            let s = clustered(&cfg.synthetic)?;
            let d = &s.dataset;
            write(&out.join("dataset.tsv"), d.to_tsv())?;
            let dir = out.join("images");
            for k in 0..d.n_images() as u64 {
                let id = dqrec::dataset::ImageId(k);
                let img = dqrec::image::ImageSource::load(&s.images, id)?;
                encode_png(&img, dir.join(format!("{}.png", d.image_key(id))))?;
            }
            println!(
                "{} users, {} images written to {}",
                d.n_users(),
                d.n_images(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Runtime => 4,
            })
        }
    }
}
