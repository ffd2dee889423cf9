//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;

use dqrec::augment::{augment_to_threshold, extend_split, AugmentConfig};
use dqrec::dataset::{
    partition, Dataset, ImageId, PartitionConfig, PartitionMode, Record, Split, UserId,
};
use dqrec::embed::{embed_dataset, BaselineEmbedder, Embedding, EmbeddingStore};
use dqrec::evalkit::{case_metrics, evaluate_with, CaseSet, TestCase, K};
use dqrec::genaug::{generate_to_threshold, GenAugConfig, Generator};
use dqrec::image::{ImageSource, MemoryImages, PixelImage};
use dqrec::meter::{
    log_grid, project_longterm, projection_curve, EmissionRecord, FakeClock, Meter, Phase,
    PowerModel,
};
use dqrec::pipeline::{
    run_cell, run_matrix, ModelKind, Prepared, RunConfig, Technique, TrainSection,
};
use dqrec::pu::{build_prototype, select_reliable_negatives, PuConfig};
use dqrec::ranker::{
    example_objective, train, Example, Head, Layout, ModelParams, NegativeSource, Objective,
    TrainConfig, ValMetric,
};
use dqrec::seed;
use dqrec::synth::{separable, SynthConfig};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    ensure(
        elapsed <= Duration::from_secs(limit_s),
        format!("took {:.1}s, limit {limit_s}s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------------------
// 1. Metric oracle

/// Exhaustive reference: sort every candidate, read off the positive's
/// position, and count all positive/negative pairs for AUC.
fn oracle_case(pos: (ImageId, f64), negs: &[(ImageId, f64)]) -> (f64, f64, f64) {
    let mut all: Vec<(ImageId, f64)> = negs.to_vec();
    all.push(pos);
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let rank = all.iter().position(|c| c.0 == pos.0).unwrap() + 1;
    let recall = if rank <= K { 1.0 } else { 0.0 };
    let ndcg = if rank <= K {
        1.0 / (rank as f64 + 1.0).log2()
    } else {
        0.0
    };
    let mut pairs = 0.0;
    for n in negs {
        pairs += match pos.1.partial_cmp(&n.1).unwrap() {
            std::cmp::Ordering::Greater => 1.0,
            std::cmp::Ordering::Equal => 0.5,
            std::cmp::Ordering::Less => 0.0,
        };
    }
    (recall, ndcg, pairs / negs.len() as f64)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(101);
    let mut cases = Vec::new();
    let mut scores: HashMap<(UserId, ImageId), f64> = HashMap::new();
    let mut next_id = 0u64;
    for c in 0..1000u32 {
        let user = UserId(c % 37);
        let n_cand = rng.random_range(2..=8usize);
        let ids: Vec<ImageId> = (0..n_cand)
            .map(|_| {
                next_id += rng.random_range(1..4);
                ImageId(next_id)
            })
            .collect();
        let pos_idx = rng.random_range(0..n_cand);
        for &id in &ids {
            // A coarse grid so that ties are common.
            let s = f64::from(rng.random_range(0..6u32)) * 0.25 - 0.5;
            scores.insert((user, id), s);
        }
        let positive = ids[pos_idx];
        let negatives = ids.iter().copied().filter(|&p| p != positive).collect();
        cases.push(TestCase {
            user,
            item: dqrec::dataset::ItemId(c),
            positive,
            negatives,
        });
    }
    let score = |u: UserId, p: ImageId| -> dqrec::Result<f64> { Ok(scores[&(u, p)]) };

    let mut max_err = 0.0f64;
    let mut auc_sum = 0.0;
    for case in &cases {
        let pos = score(case.user, case.positive).unwrap();
        let negs: Vec<(ImageId, f64)> = case
            .negatives
            .iter()
            .map(|&p| (p, score(case.user, p).unwrap()))
            .collect();
        let neg_scores: Vec<f64> = negs.iter().map(|n| n.1).collect();
        let got = case_metrics(case, pos, &neg_scores);
        let want = oracle_case((case.positive, pos), &negs);
        max_err = max_err
            .max((got.recall - want.0).abs())
            .max((got.ndcg - want.1).abs())
            .max((got.auc - want.2).abs());
        auc_sum += want.2;
    }
    let set = CaseSet {
        cases: cases.clone(),
        degenerate_cases: 0,
    };
    let report = evaluate_with(&score, &set).map_err(|e| e.to_string())?;
    // No case has more than ten candidates, so the top-k means are empty.
    let agg_err = (report.auc - auc_sum / 1000.0)
        .abs()
        .max(report.recall_at_10.abs())
        .max(report.ndcg_at_10.abs());
    ensure(max_err <= 1e-12, format!("per-case max error {max_err:e}"))?;
    ensure(agg_err <= 1e-12, format!("aggregate error {agg_err:e}"))?;
    ensure(
        report.n_cases_total == 1000 && report.n_cases_gt10 == 0,
        "case counts",
    )?;
    within(start.elapsed(), 10)?;
    Ok(format!(
        "1000 cases, max |err| {max_err:e}, aggregate |err| {agg_err:e}"
    ))
}

// ---------------------------------------------------------------------------
// 2. PU selection oracle

fn emb(v: &[f32]) -> Embedding {
    Embedding::new(v.to_vec()).unwrap()
}

/// Four users with hand-picked 3-d embeddings.
fn pu_fixture() -> (Dataset, EmbeddingStore, Split) {
    let raw: [(&str, [f32; 3]); 16] = [
        ("a", [1.0, 0.0, 0.0]),
        ("a", [0.9, 0.3, 0.0]),
        ("a", [0.8, 0.0, 0.4]),
        ("a", [1.0, 0.2, 0.1]),
        ("a", [0.7, 0.6, 0.2]),
        ("b", [0.0, 1.0, 0.0]),
        ("b", [0.1, 0.9, 0.3]),
        ("b", [0.3, 1.0, 0.0]),
        ("c", [0.0, 0.0, 1.0]),
        ("c", [0.2, 0.1, 0.9]),
        ("c", [0.5, 0.5, 0.5]),
        ("c", [0.0, 0.4, 1.0]),
        ("d", [-0.5, 0.5, 0.5]),
        ("d", [0.6, -0.2, 0.7]),
        ("d", [0.1, 0.1, 0.1]),
        ("d", [-1.0, 0.0, 0.2]),
    ];
    let recs = raw
        .iter()
        .enumerate()
        .map(|(k, (u, _))| Record::new(*u, format!("i{}", k % 5), format!("p{k}"), ""));
    let d = Dataset::from_records(recs, "restaurant").unwrap();
    let mut store = EmbeddingStore::new(3);
    for (k, (_, v)) in raw.iter().enumerate() {
        store.insert(ImageId(k as u64), emb(v)).unwrap();
    }
    let split = Split {
        train: d.interactions().to_vec(),
        ..Split::default()
    };
    (d, store, split)
}

fn brute_cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Smallest own similarity `v` such that at least `q * N` own similarities
/// are `<= v`.
fn brute_percentile(sims: &[f64], q: f64) -> f64 {
    let n = sims.len() as f64;
    let mut best = f64::INFINITY;
    for &v in sims {
        let at_or_below = sims.iter().filter(|&&s| s <= v).count() as f64;
        if at_or_below >= q * n - 1e-9 && v < best {
            best = v;
        }
    }
    best
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (d, store, split) = pu_fixture();
    let vec_of = |p: ImageId| store.get(p).unwrap().to_f64();
    let qs: Vec<f64> = (1..=10).map(|k| f64::from(k) * 0.05).collect();
    let mut checked = 0usize;
    let mut previous: Option<Vec<HashSet<ImageId>>> = None;
    for &q in &qs {
        let cfg = PuConfig {
            q,
            candidate_cap: None,
            seed: 3,
        };
        let rn = select_reliable_negatives(&d, &split, &store, &cfg).map_err(|e| e.to_string())?;
        let mut sets = Vec::new();
        for u in d.users() {
            let own = d.images_of_user(u);
            let n = own.len() as f64;
            let mut centroid = vec![0.0; 3];
            for &p in own {
                for (c, v) in centroid.iter_mut().zip(vec_of(p)) {
                    *c += v / n;
                }
            }
            let proto = build_prototype(u, own, &store, q).map_err(|e| e.to_string())?;
            for (a, b) in proto.centroid.iter().zip(&centroid) {
                ensure((a - b).abs() < 1e-12, format!("centroid of {u} differs"))?;
            }
            let sims: Vec<f64> = own
                .iter()
                .map(|&p| brute_cos(&centroid, &vec_of(p)))
                .collect();
            let thr = brute_percentile(&sims, q);
            ensure(
                (proto.threshold - thr).abs() < 1e-12,
                format!("threshold of {u} at q={q}"),
            )?;
            let want: HashSet<ImageId> = (0..d.n_images() as u64)
                .map(ImageId)
                .filter(|p| d.owner(*p) != Some(u))
                .filter(|&p| brute_cos(&centroid, &vec_of(p)) <= thr)
                .collect();
            let got: HashSet<ImageId> = rn.for_user(u).iter().map(|a| a.image).collect();
            ensure(
                got == want,
                format!("admissions of {u} at q={q}: {got:?} vs {want:?}"),
            )?;
            checked += d.n_images() - own.len();
            sets.push(got);
        }
        if let Some(prev) = &previous {
            for (a, b) in prev.iter().zip(&sets) {
                ensure(a.is_subset(b), format!("RN shrank when q rose to {q}"))?;
            }
        }
        previous = Some(sets);
    }
    within(start.elapsed(), 5)?;
    Ok(format!(
        "{checked} admission decisions over q in 0.05..0.5 match; RN monotone in q"
    ))
}

// ---------------------------------------------------------------------------
// 3. Gradient check

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let h = 1e-3;
    let mut rng = seed::rng(303);
    let mut worst = 0.0f64;
    let mut draws = 0;
    for head in [Head::Dot, Head::Mlp] {
        for objective in [Objective::Bpr, Objective::Bce] {
            for draw in 0..100u64 {
                let layout = Layout {
                    n_users: 3,
                    d_in: 4,
                    dim: 4,
                    hidden: if head == Head::Mlp { 5 } else { 0 },
                };
                let mut params = ModelParams::init(layout, head, draw).unwrap();
                for t in &mut params.theta {
                    *t = rng.random_range(-1.0..1.0);
                }
                let embs: Vec<Vec<f64>> = (0..5)
                    .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect();
                let lookup =
                    |p: ImageId| -> dqrec::Result<Vec<f64>> { Ok(embs[p.0 as usize].clone()) };
                let user = UserId(rng.random_range(0..3));
                let ex = match objective {
                    Objective::Bpr => Example::Pair {
                        user,
                        positive: ImageId(rng.random_range(0..5)),
                        negative: ImageId(rng.random_range(0..5)),
                    },
                    Objective::Bce => Example::Labeled {
                        user,
                        image: ImageId(rng.random_range(0..5)),
                        label: rng.random_bool(0.5),
                    },
                };
                let l2 = 0.01;
                let mut analytic = vec![0.0; params.theta.len()];
                example_objective(&params, &ex, &lookup, l2, 1.0, Some(&mut analytic)).unwrap();
                let numeric: Vec<f64> = (0..params.theta.len())
                    .map(|i| {
                        let orig = params.theta[i];
                        params.theta[i] = orig + h;
                        let up = example_objective(&params, &ex, &lookup, l2, 1.0, None).unwrap();
                        params.theta[i] = orig - h;
                        let down = example_objective(&params, &ex, &lookup, l2, 1.0, None).unwrap();
                        params.theta[i] = orig;
                        (up - down) / (2.0 * h)
                    })
                    .collect();
                let diff: f64 = analytic
                    .iter()
                    .zip(&numeric)
                    .map(|(a, n)| (a - n).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
                let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
                let rel = if na + nn == 0.0 {
                    0.0
                } else {
                    diff / (na + nn)
                };
                worst = worst.max(rel);
                draws += 1;
            }
        }
    }
    ensure(worst < 1e-4, format!("worst relative error {worst:e}"))?;
    within(start.elapsed(), 30)?;
    Ok(format!(
        "{draws} draws (dot/mlp x bpr/bce), worst relative error {worst:e}"
    ))
}

// ---------------------------------------------------------------------------
// 4. Trend on synthetic data

fn trend_config(seed: u64) -> RunConfig {
    RunConfig {
        seed,
        synthetic: SynthConfig {
            seed,
            ..SynthConfig::default()
        },
        ..RunConfig::default()
    }
}

fn prepared_synthetic(cfg: &RunConfig) -> Prepared {
    dqrec::pipeline::prepare(cfg).unwrap()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let (mut none, mut pu) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        // With one train image per user the percentile threshold is the
        // image's similarity to itself and selection admits everything, so
        // the trend is measured on the N-1 / 1 split.
        let mut cfg = trend_config(seed);
        cfg.partition.mode = PartitionMode::OneOutTest;
        let p = prepared_synthetic(&cfg);
        let split = partition(&p.dataset, &cfg.partition_config());
        let meter = Meter::new(FakeClock::new(), PowerModel::default()).unwrap();
        for (tech, out) in [(Technique::None, &mut none), (Technique::Pu, &mut pu)] {
            let cell = run_cell(&p, &split, ModelKind::DotBpr, tech, &cfg, &meter)
                .map_err(|e| e.to_string())?;
            out.push(cell.report.metrics.ndcg_at_10);
        }
    }
    let (mn, mp) = (median(none.clone()), median(pu.clone()));
    let detail = format!("median NDCG@10 none={mn:.4} pu={mp:.4} (none {none:.3?}, pu {pu:.3?})");
    ensure(mp >= mn, detail.clone())?;
    within(start.elapsed(), 300)?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 5. Augmentation fill exactness

fn key_image(key: &str) -> PixelImage {
    let h = dqrec::genaug::fnv1a64(key.as_bytes());
    PixelImage::from_fn(16, 16, |x, y| {
        let v = seed::mix64(h ^ u64::from(x * 16 + y));
        [(v & 0xff) as u8 | 1, (v >> 8) as u8, (v >> 16) as u8]
    })
    .unwrap()
}

fn check_fill(
    d: &Dataset,
    split: &Split,
    images: &dyn ImageSource,
    store: &EmbeddingStore,
    n: usize,
) -> Result<usize, String> {
    let embedder = BaselineEmbedder::new(store.dim()).unwrap();
    let mut checked = 0;
    for tech in ["tda", "genda"] {
        let mut s = store.clone();
        let aug = if tech == "tda" {
            let cfg = AugmentConfig {
                n,
                seed: 5,
                ..AugmentConfig::default()
            };
            augment_to_threshold(d, split, &cfg, images, &embedder, &mut s)
                .map_err(|e| e.to_string())?
        } else {
            let cfg = GenAugConfig {
                n,
                seed: 5,
                size: 16,
                dump_dir: None,
            };
            let out = generate_to_threshold(d, split, &Generator::Stub, &cfg, &embedder, &mut s)
                .map_err(|e| e.to_string())?;
            // Users without any review text cannot be prompted.
            ensure(out.summary.failed.is_empty(), "generation failures")?;
            out.augmented
        };
        let ext = extend_split(split, &aug);
        let before = split.train_by_user(d.n_users());
        let after = ext.train_by_user(d.n_users());
        let reviewless: HashSet<UserId> = if tech == "genda" {
            d.users()
                .filter(|&u| {
                    split
                        .train
                        .iter()
                        .filter(|it| it.user == u)
                        .all(|it| !it.has_review())
                })
                .collect()
        } else {
            HashSet::new()
        };
        for u in d.users() {
            let (b, a) = (before[u.index()].len(), after[u.index()].len());
            if b == 0 {
                ensure(
                    a == 0,
                    format!("{tech}: user {u} without train images was augmented"),
                )?;
                continue;
            }
            let want = if reviewless.contains(&u) { b } else { b.max(n) };
            ensure(
                a == want,
                format!("{tech}: user {u} has {a} train examples, want {want}"),
            )?;
            checked += 1;
        }
        ensure(
            ext.validation
                .iter()
                .chain(&ext.test)
                .all(|it| !it.image.is_synthetic()),
            format!("{tech}: synthetic example outside train"),
        )?;
        ensure(
            aug.iter().all(|a| s.contains(a.synthetic_image)),
            format!("{tech}: synthetic image without embedding"),
        )?;
    }
    Ok(checked)
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let cfg = trend_config(11);
    let p = prepared_synthetic(&cfg);
    let split = partition(&p.dataset, &cfg.partition_config());
    let a = check_fill(
        &p.dataset,
        &split,
        p.images.as_deref().unwrap(),
        &p.store,
        10,
    )?;

    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/users50.tsv");
    let d = Dataset::ingest(&fixture, "restaurant").map_err(|e| e.to_string())?;
    ensure(
        d.n_users() == 50,
        format!("fixture has {} users", d.n_users()),
    )?;
    let mut images = MemoryImages::new();
    for k in 0..d.n_images() as u64 {
        images.insert(ImageId(k), key_image(&d.image_key(ImageId(k))));
    }
    let embedder = BaselineEmbedder::new(48).unwrap();
    let store = embed_dataset(&d, &images, &embedder).map_err(|e| e.to_string())?;
    let mut b = 0;
    for mode in [PartitionMode::PaperText, PartitionMode::OneOutTest] {
        let split = partition(
            &d,
            &PartitionConfig {
                mode,
                seed: 2,
                val_fraction: 0.1,
            },
        );
        b += check_fill(&d, &split, &images, &store, 10)?;
    }
    within(start.elapsed(), 60)?;
    Ok(format!(
        "{a} synthetic and {b} fixture user/technique checks exact"
    ))
}

// ---------------------------------------------------------------------------
// 6. Determinism of the matrix

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut reports = Vec::new();
    for dir in &dirs {
        let cfg = RunConfig {
            seed: 42,
            out: dir.path().to_path_buf(),
            train: TrainSection {
                epochs_max: 30,
                ..TrainSection::default()
            },
            ..RunConfig::default()
        };
        let meter = Meter::new(dqrec::meter::SystemClock::new(), PowerModel::default()).unwrap();
        let report = run_matrix(&cfg, &meter).map_err(|e| e.to_string())?;
        ensure(report.cells.len() == 12, "matrix does not have 12 cells")?;
        reports.push(std::fs::read(dir.path().join("report.json")).unwrap());
    }
    ensure(reports[0] == reports[1], "report.json differs between runs")?;
    within(start.elapsed(), 600)?;
    Ok(format!("12 cells, {} identical bytes", reports[0].len()))
}

// ---------------------------------------------------------------------------
// 7. Emission arithmetic

fn criterion_7() -> Outcome {
    let meter = Meter::new(FakeClock::new(), PowerModel::default()).unwrap();
    let (_, rec) = meter
        .measure(Phase::Train, || meter.clock().advance(7200.0))
        .map_err(|e| e.to_string())?;
    ensure(
        rec.energy_kwh == 0.1,
        format!("energy {} kWh", rec.energy_kwh),
    )?;
    ensure(
        rec.emissions_g == 30.0,
        format!("emissions {} g", rec.emissions_g),
    )?;

    let per_inference = 0.0125;
    let grid = log_grid(100_000_000, 4);
    let curve = projection_curve(&rec, per_inference, &grid);
    ensure(
        curve[0] == (0, rec.emissions_g),
        "intercept differs from training emissions",
    )?;
    let mut worst = 0.0f64;
    for w in curve.windows(2) {
        let slope = (w[1].1 - w[0].1) / (w[1].0 - w[0].0) as f64;
        worst = worst.max(((slope - per_inference) / per_inference).abs());
    }
    ensure(worst < 1e-9, format!("slope relative error {worst:e}"))?;
    ensure(
        project_longterm(&rec, per_inference, 1000) == 30.0 + 12.5,
        "project_longterm at n=1000",
    )?;
    let brie = EmissionRecord::from_seconds(Phase::Train, 753.0, &PowerModel::default());
    Ok(format!(
        "7200 s -> {} kWh, {} g; slope error {worst:e}; 753 s -> {:.6} kWh, {:.2} g",
        rec.energy_kwh, rec.emissions_g, brie.energy_kwh, brie.emissions_g
    ))
}

// ---------------------------------------------------------------------------
// 8. Separable learnability

fn criterion_8() -> Outcome {
    let (d, store, split) = separable().map_err(|e| e.to_string())?;
    let cases = dqrec::evalkit::build_test_cases(&d, &split.validation);

    // A separating setting exists: identity projection, users at their
    // cluster direction minus the other.
    let layout = Layout {
        n_users: 2,
        d_in: 2,
        dim: 2,
        hidden: 0,
    };
    let mut params = ModelParams::init(layout, Head::Dot, 0).unwrap();
    params.user_row_mut(UserId(0)).copy_from_slice(&[1.0, -1.0]);
    params.user_row_mut(UserId(1)).copy_from_slice(&[-1.0, 1.0]);
    params
        .proj_weights_mut()
        .copy_from_slice(&[1.0, 0.0, 0.0, 1.0]);
    params.proj_bias_mut().fill(0.0);
    let scorer = dqrec::ranker::ModelScorer {
        params: &params,
        store: &store,
    };
    let constructed = evaluate_with(&scorer, &cases).map_err(|e| e.to_string())?;
    ensure(
        constructed.auc == 1.0,
        format!("constructed AUC {}", constructed.auc),
    )?;

    let cfg = TrainConfig {
        head: Head::Dot,
        objective: Objective::Bpr,
        neg_source: NegativeSource::Random,
        dim: 2,
        epochs_max: 200,
        val_metric: ValMetric::Auc,
        seed: 8,
        ..TrainConfig::default()
    };
    let model = train(&d, &split, &store, None, &cfg).map_err(|e| e.to_string())?;
    let report = dqrec::ranker::evaluate(&model, &cases, &store).map_err(|e| e.to_string())?;
    ensure(
        (report.auc - 1.0).abs() <= 0.01,
        format!(
            "trained AUC {} after {} epochs",
            report.auc, model.stopped_epoch
        ),
    )?;
    Ok(format!(
        "constructed AUC 1.0; trained AUC {:.3} (best epoch {}, stopped {})",
        report.auc, model.best_epoch, model.stopped_epoch
    ))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric oracle equivalence", criterion_1),
        ("PU selection correctness", criterion_2),
        ("gradient check", criterion_3),
        ("trend reproduction (pu >= none)", criterion_4),
        ("augmentation fill exactness", criterion_5),
        ("matrix determinism", criterion_6),
        ("emission arithmetic", criterion_7),
        ("separable learnability", criterion_8),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("{}", i + 1);
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id}: PASS  {name} [{secs:.2}s] {detail}"),
            Err(reason) => {
                failed += 1;
                println!("criterion {id}: FAIL  {name} [{secs:.2}s] {reason}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
