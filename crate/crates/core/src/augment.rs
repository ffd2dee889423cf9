//! Transform-based augmentation of low-activity users' train images.

use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageId, Interaction, Split, UserId};
use crate::embed::{Embedder, Embedding, EmbeddingStore};
use crate::error::{Error, Result};
use crate::image::{encode_png, ImageSource, PixelImage};
use crate::seed;

pub const DEFAULT_THRESHOLD: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Cutout,
    Affine,
    GaussianBlur,
    GaussianNoise,
}

impl TransformKind {
    pub const ALL: [TransformKind; 4] = [
        TransformKind::Cutout,
        TransformKind::Affine,
        TransformKind::GaussianBlur,
        TransformKind::GaussianNoise,
    ];
}

/// Closed interval a parameter is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    pub const fn fixed(v: f64) -> Self {
        Range { min: v, max: v }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }

    fn check(&self, what: &str, lo: f64, hi: f64) -> Result<()> {
        if self.min.is_finite()
            && self.max.is_finite()
            && lo <= self.min
            && self.min <= self.max
            && self.max <= hi
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "{what} range [{}, {}] must lie within [{lo}, {hi}]",
                self.min, self.max
            )))
        }
    }
}

/// A transform family with the ranges its parameters are sampled from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformSpec {
    /// Black rectangle; each side is a fraction of the image side.
    Cutout { side_fraction: Range },
    /// Rotation (degrees) and translation (fraction of side) are symmetric
    /// about zero; scale is drawn from its range.
    Affine {
        rotation_deg: Range,
        translation: Range,
        scale: Range,
    },
    /// Standard deviation in pixels.
    GaussianBlur { sigma: Range },
    /// Per-channel standard deviation on the 0..255 scale.
    GaussianNoise { sigma: Range },
}

impl TransformSpec {
    pub fn default_for(kind: TransformKind) -> Self {
        match kind {
            TransformKind::Cutout => TransformSpec::Cutout {
                side_fraction: Range::new(0.1, 0.3),
            },
            TransformKind::Affine => TransformSpec::Affine {
                rotation_deg: Range::new(-15.0, 15.0),
                translation: Range::new(-0.1, 0.1),
                scale: Range::new(0.9, 1.1),
            },
            TransformKind::GaussianBlur => TransformSpec::GaussianBlur {
                sigma: Range::new(0.5, 2.0),
            },
            TransformKind::GaussianNoise => TransformSpec::GaussianNoise {
                sigma: Range::new(5.0, 20.0),
            },
        }
    }

    pub fn defaults() -> Vec<TransformSpec> {
        TransformKind::ALL
            .iter()
            .map(|&k| Self::default_for(k))
            .collect()
    }

    pub fn kind(&self) -> TransformKind {
        match self {
            TransformSpec::Cutout { .. } => TransformKind::Cutout,
            TransformSpec::Affine { .. } => TransformKind::Affine,
            TransformSpec::GaussianBlur { .. } => TransformKind::GaussianBlur,
            TransformSpec::GaussianNoise { .. } => TransformKind::GaussianNoise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TransformSpec::Cutout { side_fraction } => side_fraction.check("cutout side", 0.0, 1.0),
            TransformSpec::Affine {
                rotation_deg,
                translation,
                scale,
            } => {
                rotation_deg.check("rotation", -180.0, 180.0)?;
                translation.check("translation", -1.0, 1.0)?;
                scale.check("scale", 1e-3, 1e3)
            }
            TransformSpec::GaussianBlur { sigma } => sigma.check("blur sigma", 0.0, 64.0),
            TransformSpec::GaussianNoise { sigma } => sigma.check("noise sigma", 0.0, 255.0),
        }
    }

    pub fn sample(&self, img_w: u32, img_h: u32, rng: &mut impl Rng) -> SampledTransform {
        match self {
            TransformSpec::Cutout { side_fraction } => {
                let w = (side_fraction.sample(rng) * f64::from(img_w)).round() as u32;
                let h = (side_fraction.sample(rng) * f64::from(img_h)).round() as u32;
                let x = rng.random_range(0..=img_w - w.min(img_w));
                let y = rng.random_range(0..=img_h - h.min(img_h));
                SampledTransform::Cutout {
                    x,
                    y,
                    width: w.min(img_w),
                    height: h.min(img_h),
                }
            }
            TransformSpec::Affine {
                rotation_deg,
                translation,
                scale,
            } => SampledTransform::Affine(AffineParams {
                rotation_rad: rotation_deg.sample(rng).to_radians(),
                tx: translation.sample(rng) * f64::from(img_w),
                ty: translation.sample(rng) * f64::from(img_h),
                scale: scale.sample(rng),
            }),
            TransformSpec::GaussianBlur { sigma } => SampledTransform::Blur {
                sigma: sigma.sample(rng),
            },
            TransformSpec::GaussianNoise { sigma } => SampledTransform::Noise {
                sigma: sigma.sample(rng),
                seed: rng.random(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineParams {
    pub rotation_rad: f64,
    /// Translation in pixels.
    pub tx: f64,
    pub ty: f64,
    pub scale: f64,
}

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams {
        rotation_rad: 0.0,
        tx: 0.0,
        ty: 0.0,
        scale: 1.0,
    };
}

/// Concrete transform after parameter sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampledTransform {
    Cutout {
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },
    Affine(AffineParams),
    Blur {
        sigma: f64,
    },
    Noise {
        sigma: f64,
        seed: u64,
    },
}

impl SampledTransform {
    pub fn apply(&self, img: &PixelImage) -> PixelImage {
        match *self {
            SampledTransform::Cutout {
                x,
                y,
                width,
                height,
            } => cutout(img, x, y, width, height),
            SampledTransform::Affine(p) => affine(img, &p),
            SampledTransform::Blur { sigma } => gaussian_blur(img, sigma),
            SampledTransform::Noise { sigma, seed } => gaussian_noise(img, sigma, seed),
        }
    }
}

/// Deterministic in `(img, spec, seed)`; output has the input's size.
pub fn apply_transform(img: &PixelImage, spec: &TransformSpec, seed: u64) -> PixelImage {
    let mut rng = seed::rng(seed);
    spec.sample(img.width(), img.height(), &mut rng).apply(img)
}

/// Blacken the rectangle `[x, x+width) x [y, y+height)`, clipped to the image.
pub fn cutout(img: &PixelImage, x: u32, y: u32, width: u32, height: u32) -> PixelImage {
    let mut out = img.clone();
    let x1 = x.saturating_add(width).min(img.width());
    let y1 = y.saturating_add(height).min(img.height());
    for yy in y.min(y1)..y1 {
        for xx in x.min(x1)..x1 {
            out.set_pixel(xx, yy, [0, 0, 0]);
        }
    }
    out
}

/// Rotate/scale about the image centre, then translate. Each output pixel is
/// bilinearly sampled from the inverse-mapped source position; positions
/// outside the source are black.
pub fn affine(img: &PixelImage, p: &AffineParams) -> PixelImage {
    let (w, h) = (img.width(), img.height());
    let (cx, cy) = (f64::from(w - 1) / 2.0, f64::from(h - 1) / 2.0);
    let (sin, cos) = p.rotation_rad.sin_cos();
    let inv_s = 1.0 / p.scale;
    let (max_x, max_y) = (f64::from(w - 1), f64::from(h - 1));
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            let dx = f64::from(x) - cx - p.tx;
            let dy = f64::from(y) - cy - p.ty;
            // Inverse rotation R(-theta) / s.
            let sx = cx + inv_s * (cos * dx + sin * dy);
            let sy = cy + inv_s * (-sin * dx + cos * dy);
            let rgb = if sx < 0.0 || sy < 0.0 || sx > max_x || sy > max_y {
                [0, 0, 0]
            } else {
                bilinear(img, sx, sy)
            };
            out.set_pixel(x, y, rgb);
        }
    }
    out
}

fn bilinear(img: &PixelImage, sx: f64, sy: f64) -> [u8; 3] {
    let x0 = sx.floor() as u32;
    let y0 = sy.floor() as u32;
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let (fx, fy) = (sx - f64::from(x0), sy - f64::from(y0));
    let (a, b, c, d) = (
        img.pixel(x0, y0),
        img.pixel(x1, y0),
        img.pixel(x0, y1),
        img.pixel(x1, y1),
    );
    let mut out = [0u8; 3];
    for k in 0..3 {
        let top = f64::from(a[k]) * (1.0 - fx) + f64::from(b[k]) * fx;
        let bot = f64::from(c[k]) * (1.0 - fx) + f64::from(d[k]) * fx;
        out[k] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with edge clamping.
pub fn gaussian_blur(img: &PixelImage, sigma: f64) -> PixelImage {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() == 1 {
        return img.clone();
    }
    let r = (kernel.len() / 2) as i64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let src = img.data();
    let mut tmp = vec![0.0f64; src.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wt) in kernel.iter().enumerate() {
                    let xx = (x + k as i64 - r).clamp(0, w - 1);
                    acc += wt * f64::from(src[((y * w + xx) * 3 + c) as usize]);
                }
                tmp[((y * w + x) * 3 + c) as usize] = acc;
            }
        }
    }
    let mut out = img.clone();
    let dst = out.data_mut();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, wt) in kernel.iter().enumerate() {
                    let yy = (y + k as i64 - r).clamp(0, h - 1);
                    acc += wt * tmp[((yy * w + x) * 3 + c) as usize];
                }
                dst[((y * w + x) * 3 + c) as usize] = acc.round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Add i.i.d. `N(0, sigma)` to every channel of every pixel, clamped.
pub fn gaussian_noise(img: &PixelImage, sigma: f64, noise_seed: u64) -> PixelImage {
    let mut out = img.clone();
    if sigma <= 0.0 {
        return out;
    }
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let mut rng = seed::rng(noise_seed);
    for v in out.data_mut() {
        let n: f64 = normal.sample(&mut rng);
        *v = (f64::from(*v) + n).round().clamp(0.0, 255.0) as u8;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provenance", rename_all = "snake_case")]
pub enum Provenance {
    Transform { spec: TransformSpec, seed: u64 },
    Generative { prompt_hash: String, seed: u64 },
}

/// A synthetic positive derived from a real train interaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedInteraction {
    pub base: Interaction,
    pub synthetic_image: ImageId,
    pub provenance: Provenance,
}

impl AugmentedInteraction {
    /// The train interaction this synthetic example stands for: same user and
    /// item as its base, the synthetic image, and no review text.
    pub fn as_train_interaction(&self) -> Interaction {
        Interaction {
            user: self.base.user,
            item: self.base.item,
            image: self.synthetic_image,
            review: String::new(),
        }
    }
}

/// Apply synthetic examples to a split's train part.
pub fn extend_split(split: &Split, augmented: &[AugmentedInteraction]) -> Split {
    split.with_extra_train(
        augmented
            .iter()
            .map(AugmentedInteraction::as_train_interaction),
    )
}

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    /// Activity threshold: users are filled up to this many train images.
    pub n: usize,
    pub specs: Vec<TransformSpec>,
    pub seed: u64,
    /// When set, synthetic images are written to `<dir>/<user>/<image>.png`.
    pub dump_dir: Option<PathBuf>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            n: DEFAULT_THRESHOLD,
            specs: TransformSpec::defaults(),
            seed: 0,
            dump_dir: None,
        }
    }
}

/// Real train images per user, as the fill rule sees them.
pub(crate) fn real_train_by_user<'a>(d: &Dataset, split: &'a Split) -> Vec<Vec<&'a Interaction>> {
    let mut by_user = split.train_interactions_by_user(d.n_users());
    for list in &mut by_user {
        list.retain(|it| !it.image.is_synthetic());
        list.sort_by_key(|it| it.image);
    }
    by_user
}

pub(crate) fn dump_png(dir: &Path, user: UserId, id: ImageId, img: &PixelImage) -> Result<()> {
    encode_png(
        img,
        dir.join(user.0.to_string()).join(format!("{}.png", id.0)),
    )
}

/// Fill every user with `1 <= |train_u| < n` to exactly `n` train examples
/// with transformed copies of their own images, cycling over those images and
/// drawing one transform spec per copy. New embeddings are appended to
/// `store` once all users are done, in user order.
pub fn augment_to_threshold(
    d: &Dataset,
    split: &Split,
    cfg: &AugmentConfig,
    images: &dyn ImageSource,
    embedder: &dyn Embedder,
    store: &mut EmbeddingStore,
) -> Result<Vec<AugmentedInteraction>> {
    if cfg.n == 0 {
        return Err(Error::InvalidParameter(
            "activity threshold n must be >= 1".into(),
        ));
    }
    if cfg.specs.is_empty() {
        return Err(Error::InvalidParameter("no transform specs given".into()));
    }
    for s in &cfg.specs {
        s.validate()?;
    }
    if embedder.dim() != store.dim() {
        return Err(Error::DimensionMismatch {
            expected: store.dim(),
            actual: embedder.dim(),
        });
    }
    let by_user = real_train_by_user(d, split);
    let stream = seed::derive(cfg.seed, seed::STREAM_AUGMENT);

    let per_user = by_user
        .par_iter()
        .enumerate()
        .map(
            |(u, train)| -> Result<Vec<(AugmentedInteraction, Embedding)>> {
                let user = UserId(u as u32);
                let have = train.len();
                if have == 0 || have >= cfg.n {
                    return Ok(Vec::new());
                }
                let bases = train
                    .iter()
                    .map(|it| images.load(it.image))
                    .collect::<Result<Vec<_>>>()?;
                let user_stream = seed::derive(stream, u64::from(user.0));
                let mut out = Vec::with_capacity(cfg.n - have);
                for k in 0..(cfg.n - have) {
                    let copy_seed = seed::derive(user_stream, k as u64);
                    let mut rng = seed::rng(copy_seed);
                    let spec = cfg.specs[rng.random_range(0..cfg.specs.len())];
                    let transform_seed = rng.random();
                    let img = apply_transform(&bases[k % have], &spec, transform_seed);
                    let id = ImageId::transform(user, k as u32);
                    if let Some(dir) = &cfg.dump_dir {
                        dump_png(dir, user, id, &img)?;
                    }
                    let emb = embedder.embed(&img)?;
                    out.push((
                        AugmentedInteraction {
                            base: train[k % have].clone(),
                            synthetic_image: id,
                            provenance: Provenance::Transform {
                                spec,
                                seed: transform_seed,
                            },
                        },
                        emb,
                    ));
                }
                Ok(out)
            },
        )
        .collect::<Result<Vec<_>>>()?;

    let mut augmented = Vec::new();
    for (aug, emb) in per_user.into_iter().flatten() {
        store.insert(aug.synthetic_image, emb)?;
        augmented.push(aug);
    }
    Ok(augmented)
}
