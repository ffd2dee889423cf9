//! Seeded synthetic datasets with cluster-structured images.
//!
//! Every user has a preferred visual style. A style is a coarse colour layout;
//! an image is its style's layout plus an optional per-user tint, per-image
//! jitter and pixel noise. A fraction of each user's photos come from a
//! different style, which plays the role of noisy positives.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageId, Record, Split, UserId};
use crate::embed::{Embedding, EmbeddingStore};
use crate::error::{Error, Result};
use crate::image::{MemoryImages, PixelImage};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_styles: usize,
    /// Share of users with at most `cold_max` images.
    pub cold_fraction: f64,
    pub cold_max: usize,
    pub active_min: usize,
    pub active_max: usize,
    /// Share of a user's photos taken from a style other than their own.
    pub off_style: f64,
    pub image_size: u32,
    /// Per-user colour shift. At 0 users of one style are indistinguishable.
    pub user_tint: f64,
    pub image_jitter: f64,
    pub pixel_noise: f64,
    pub item_type: String,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_users: 200,
            n_items: 40,
            n_styles: 4,
            cold_fraction: 0.6,
            cold_max: 2,
            active_min: 5,
            active_max: 20,
            off_style: 0.15,
            image_size: 16,
            user_tint: 0.0,
            image_jitter: 18.0,
            pixel_noise: 10.0,
            item_type: "restaurant".into(),
            seed: 0,
        }
    }
}

pub struct SynthData {
    pub dataset: Dataset,
    pub images: MemoryImages,
    /// Preferred style of each user.
    pub user_style: Vec<usize>,
}

const GRID: usize = 4;
const WORDS: [&str; 12] = [
    "great", "tasty", "cozy", "friendly", "slow", "noisy", "fresh", "generous", "pricey", "lovely",
    "crowded", "quiet",
];
const DISHES: [&str; 8] = [
    "paella", "cachopo", "tapas", "seafood", "cider", "dessert", "steak", "salad",
];

fn review(rng: &mut impl Rng) -> String {
    let a = WORDS.choose(rng).unwrap();
    let b = WORDS.choose(rng).unwrap();
    let dish = DISHES.choose(rng).unwrap();
    format!("{a} place, {b} service and the {dish} was worth it")
}

fn check(cfg: &SynthConfig) -> Result<()> {
    let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
    if cfg.n_users == 0 || cfg.n_items == 0 || cfg.n_styles == 0 {
        return bad("users, items and styles must be positive");
    }
    if !(0.0..=1.0).contains(&cfg.cold_fraction) || !(0.0..=1.0).contains(&cfg.off_style) {
        return bad("fractions must be in [0, 1]");
    }
    if cfg.cold_max == 0 || cfg.active_min == 0 || cfg.active_min > cfg.active_max {
        return bad("image count ranges are empty");
    }
    Ok(())
}

/// Generate a dataset and its pixel images.
pub fn clustered(cfg: &SynthConfig) -> Result<SynthData> {
    check(cfg)?;
    let mut rng = seed::rng(seed::derive(cfg.seed, 0x5e17));
    let cells = GRID * GRID * 3;
    let styles: Vec<Vec<f64>> = (0..cfg.n_styles)
        .map(|_| (0..cells).map(|_| rng.random_range(40.0..215.0)).collect())
        .collect();
    let tint = Normal::new(0.0, cfg.user_tint.max(1e-9)).unwrap();
    let jitter = Normal::new(0.0, cfg.image_jitter.max(1e-9)).unwrap();
    let noise = Normal::new(0.0, cfg.pixel_noise.max(1e-9)).unwrap();

    let n_cold = (cfg.cold_fraction * cfg.n_users as f64).round() as usize;
    let mut records = Vec::new();
    let mut images = Vec::new();
    let mut user_style = Vec::with_capacity(cfg.n_users);
    for u in 0..cfg.n_users {
        let style = rng.random_range(0..cfg.n_styles);
        user_style.push(style);
        let user_shift: Vec<f64> = (0..cells).map(|_| tint.sample(&mut rng)).collect();
        let count = if u < n_cold {
            rng.random_range(1..=cfg.cold_max)
        } else {
            rng.random_range(cfg.active_min..=cfg.active_max)
        };
        for _ in 0..count {
            let s = if cfg.n_styles > 1 && rng.random_bool(cfg.off_style) {
                (style + rng.random_range(1..cfg.n_styles)) % cfg.n_styles
            } else {
                style
            };
            let layout: Vec<f64> = (0..cells)
                .map(|c| styles[s][c] + user_shift[c] + jitter.sample(&mut rng))
                .collect();
            let size = cfg.image_size;
            let cell = size as usize / GRID;
            let img = PixelImage::from_fn(size, size, |x, y| {
                let (cx, cy) = (
                    (x as usize / cell).min(GRID - 1),
                    (y as usize / cell).min(GRID - 1),
                );
                let base = (cy * GRID + cx) * 3;
                let mut px = [0u8; 3];
                for (c, v) in px.iter_mut().enumerate() {
                    *v = (layout[base + c] + noise.sample(&mut rng))
                        .round()
                        .clamp(0.0, 255.0) as u8;
                }
                px
            })?;
            let id = records.len();
            let item = rng.random_range(0..cfg.n_items);
            records.push(Record::new(
                format!("u{u:04}"),
                format!("i{item:03}"),
                format!("p{id:05}"),
                review(&mut rng),
            ));
            images.push(img);
        }
    }
    let dataset = Dataset::from_records(records, &cfg.item_type)?;
    let mut mem = MemoryImages::new();
    for (k, img) in images.into_iter().enumerate() {
        mem.insert(ImageId(k as u64), img);
    }
    Ok(SynthData {
        dataset,
        images: mem,
        user_style,
    })
}

/// Two users with opposite styles, and four items each holding one photo of
/// each user. The first two items go to training, the last two to
/// validation.
pub fn separable() -> Result<(Dataset, EmbeddingStore, Split)> {
    let mut records = Vec::new();
    for item in 0..4 {
        for user in ["a", "b"] {
            records.push(Record::new(
                user,
                format!("item{item}"),
                format!("{user}{item}"),
                "",
            ));
        }
    }
    let d = Dataset::from_records(records, "restaurant")?;
    let mut store = EmbeddingStore::new(2);
    for it in d.interactions() {
        let k = it.item.0 as f32 * 0.05;
        let v = if it.user == UserId(0) {
            vec![1.0, k]
        } else {
            vec![k, 1.0]
        };
        let n = (v[0] * v[0] + v[1] * v[1]).sqrt();
        store.insert(it.image, Embedding::new(v.iter().map(|x| x / n).collect())?)?;
    }
    let (train, validation) = d
        .interactions()
        .iter()
        .cloned()
        .partition(|it| it.item.0 < 2);
    Ok((
        d,
        store,
        Split {
            train,
            validation,
            test: Vec::new(),
        },
    ))
}
