//! Generative augmentation: prompts built from a user's reviews are turned
//! into images by a text-to-image generator until the user reaches the
//! activity threshold.
//!
//! Real generation happens outside this crate. [`Generator::ExternalDir`]
//! reads images that an external tool wrote as `<prompt_hash>.png`, where the
//! hash is the lowercase hex FNV-1a 64 of the rendered prompt;
//! [`Generator::Stub`] paints a deterministic procedural image instead.

use std::collections::HashSet;
use std::path::PathBuf;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{
    dump_png, real_train_by_user, AugmentedInteraction, Provenance, DEFAULT_THRESHOLD,
};
use crate::dataset::{Dataset, ImageId, Interaction, Split, UserId};
use crate::embed::{Embedder, Embedding, EmbeddingStore};
use crate::error::{Error, Result};
use crate::image::{decode_png, PixelImage, MIN_SIDE};
use crate::seed;

const PROMPT_PREFIX: &str =
    "Photorealistic image, taken with a smartphone camera, uploaded with the following";

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Prompt {
    pub item_type: String,
    pub review: String,
    pub rendered: String,
}

impl Prompt {
    pub fn hash(&self) -> u64 {
        fnv1a64(self.rendered.as_bytes())
    }

    /// 16 lowercase hex digits; the external generator's file stem.
    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }
}

/// Render the generation prompt for a review. Surrounding whitespace of both
/// parts is trimmed.
pub fn build_prompt(item_type: &str, review: &str) -> Result<Prompt> {
    let review = review.trim();
    if review.is_empty() {
        return Err(Error::EmptyReview);
    }
    let item_type = item_type.trim();
    Ok(Prompt {
        item_type: item_type.to_string(),
        review: review.to_string(),
        rendered: format!("{PROMPT_PREFIX} {item_type} review: {review}"),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Stub,
    ExternalDir(PathBuf),
}

impl Generator {
    pub fn generate(&self, prompt: &Prompt, seed: u64, size: u32) -> Result<PixelImage> {
        if size < MIN_SIDE {
            return Err(Error::InvalidParameter(format!(
                "generated image size {size} is below {MIN_SIDE}"
            )));
        }
        match self {
            Generator::Stub => Ok(stub_image(seed::derive(prompt.hash(), seed), size)),
            Generator::ExternalDir(dir) => {
                let path = dir.join(format!("{}.png", prompt.hash_hex()));
                if !path.is_file() {
                    return Err(Error::GeneratedImageMissing(path));
                }
                decode_png(&path)
            }
        }
    }
}

/// Smooth random colour field: two octaves of bilinear value noise with
/// smoothstep easing over random RGB lattices.
fn stub_image(key: u64, size: u32) -> PixelImage {
    let mut rng = seed::rng(key);
    let octaves: Vec<(usize, f64, Vec<[f64; 3]>)> = [(3usize, 0.7), (7, 0.3)]
        .into_iter()
        .map(|(cells, weight)| {
            let lattice = (0..(cells + 1) * (cells + 1))
                .map(|_| [rng.random::<f64>(), rng.random(), rng.random()])
                .collect();
            (cells, weight, lattice)
        })
        .collect();
    let span = f64::from(size - 1);
    PixelImage::from_fn(size, size, |x, y| {
        let mut rgb = [0.0f64; 3];
        for (cells, weight, lattice) in &octaves {
            let fx = f64::from(x) / span * *cells as f64;
            let fy = f64::from(y) / span * *cells as f64;
            let (ix, iy) = ((fx as usize).min(cells - 1), (fy as usize).min(cells - 1));
            let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
            let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
            let at = |cx: usize, cy: usize| lattice[cy * (cells + 1) + cx];
            let (a, b, c, d) = (
                at(ix, iy),
                at(ix + 1, iy),
                at(ix, iy + 1),
                at(ix + 1, iy + 1),
            );
            for k in 0..3 {
                let top = a[k] * (1.0 - tx) + b[k] * tx;
                let bot = c[k] * (1.0 - tx) + d[k] * tx;
                rgb[k] += weight * (top * (1.0 - ty) + bot * ty);
            }
        }
        rgb.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
    })
    .expect("size checked by caller")
}

/// One image to generate.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRequest {
    pub user: UserId,
    /// Index of the synthetic image within the user's fill.
    pub k: u32,
    /// The train interaction whose review was chosen.
    pub source: Interaction,
    pub prompt: Prompt,
    pub seed: u64,
}

impl GenerationRequest {
    pub fn image_id(&self) -> ImageId {
        ImageId::generative(self.user, self.k)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerationPlan {
    /// Grouped by user in id order.
    pub requests: Vec<Vec<GenerationRequest>>,
    pub skipped_users: Vec<UserId>,
}

impl GenerationPlan {
    pub fn iter(&self) -> impl Iterator<Item = &GenerationRequest> {
        self.requests.iter().flatten()
    }

    /// `prompt_hash\trendered_prompt` lines, one per distinct prompt in first
    /// use order, no header. Tabs inside a prompt are written as spaces; the
    /// hash column always refers to the exact rendered prompt.
    pub fn prompts_tsv(&self) -> String {
        let mut seen = HashSet::new();
        let mut out = String::new();
        for r in self.iter() {
            let h = r.prompt.hash_hex();
            if seen.insert(h.clone()) {
                out.push_str(&h);
                out.push('\t');
                out.push_str(&r.prompt.rendered.replace(['\t', '\n', '\r'], " "));
                out.push('\n');
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct GenAugConfig {
    pub n: usize,
    pub seed: u64,
    /// Side of generated square images.
    pub size: u32,
    pub dump_dir: Option<PathBuf>,
}

impl Default for GenAugConfig {
    fn default() -> Self {
        GenAugConfig {
            n: DEFAULT_THRESHOLD,
            seed: 0,
            size: 64,
            dump_dir: None,
        }
    }
}

/// Decide, for every user below the threshold, which reviews to render.
/// Reviews are drawn uniformly with replacement from the user's train
/// interactions that carry non-empty review text. The plan depends only on
/// the data and the seed, never on the generator.
pub fn plan_generation(d: &Dataset, split: &Split, cfg: &GenAugConfig) -> Result<GenerationPlan> {
    if cfg.n == 0 {
        return Err(Error::InvalidParameter(
            "activity threshold n must be >= 1".into(),
        ));
    }
    let by_user = real_train_by_user(d, split);
    let stream = seed::derive(cfg.seed, seed::STREAM_GENAUG);
    let mut plan = GenerationPlan::default();
    for (u, train) in by_user.iter().enumerate() {
        let user = UserId(u as u32);
        let have = train.len();
        if have >= cfg.n {
            continue;
        }
        let reviews: Vec<&Interaction> =
            train.iter().copied().filter(|it| it.has_review()).collect();
        if reviews.is_empty() {
            plan.skipped_users.push(user);
            continue;
        }
        let user_stream = seed::derive(stream, u64::from(user.0));
        let mut rng = seed::rng(user_stream);
        let mut reqs = Vec::with_capacity(cfg.n - have);
        for k in 0..(cfg.n - have) as u32 {
            let source = reviews[rng.random_range(0..reviews.len())];
            reqs.push(GenerationRequest {
                user,
                k,
                source: source.clone(),
                prompt: build_prompt(d.item_type(), &source.review)?,
                seed: seed::derive(user_stream, u64::from(k)),
            });
        }
        plan.requests.push(reqs);
    }
    Ok(plan)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedUser {
    pub user: UserId,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenSummary {
    pub generated: usize,
    pub skipped_users: Vec<UserId>,
    pub failed: Vec<FailedUser>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenAugOutput {
    pub augmented: Vec<AugmentedInteraction>,
    pub summary: GenSummary,
}

/// Generate, embed and register synthetic positives for every planned user.
/// A user whose generation fails contributes nothing and is listed in the
/// summary; other users are unaffected. Generated images are attached to the
/// item of the review they came from.
pub fn generate_to_threshold(
    d: &Dataset,
    split: &Split,
    generator: &Generator,
    cfg: &GenAugConfig,
    embedder: &dyn Embedder,
    store: &mut EmbeddingStore,
) -> Result<GenAugOutput> {
    if embedder.dim() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: embedder.dim(),
        });
    }
    let plan = plan_generation(d, split, cfg)?;
    type UserOutput = (UserId, Result<Vec<(AugmentedInteraction, Embedding)>>);
    let results: Vec<UserOutput> = plan
        .requests
        .par_iter()
        .map(|reqs| {
            let user = reqs[0].user;
            let out = reqs
                .iter()
                .map(|r| {
                    let img = generator.generate(&r.prompt, r.seed, cfg.size)?;
                    if let Some(dir) = &cfg.dump_dir {
                        dump_png(dir, r.user, r.image_id(), &img)?;
                    }
                    let emb = embedder.embed(&img)?;
                    Ok((
                        AugmentedInteraction {
                            base: r.source.clone(),
                            synthetic_image: r.image_id(),
                            provenance: Provenance::Generative {
                                prompt_hash: r.prompt.hash_hex(),
                                seed: r.seed,
                            },
                        },
                        emb,
                    ))
                })
                .collect::<Result<Vec<_>>>();
            (user, out)
        })
        .collect();

    let mut output = GenAugOutput {
        summary: GenSummary {
            skipped_users: plan.skipped_users,
            ..GenSummary::default()
        },
        ..GenAugOutput::default()
    };
    for (user, res) in results {
        match res {
            Ok(items) => {
                for (aug, emb) in items {
                    store.insert(aug.synthetic_image, emb)?;
                    output.augmented.push(aug);
                }
            }
            Err(e) => {
                log::warn!("generation failed for user {user}: {e}");
                output.summary.failed.push(FailedUser {
                    user,
                    error: e.to_string(),
                });
            }
        }
    }
    output.summary.generated = output.augmented.len();
    Ok(output)
}
