//! Image embeddings: the vector type, the store, cosine similarity, a
//! pooling baseline embedder and the binary interchange format.
//!
//! File layout (little-endian, no padding):
//!
//! ```text
//! magic "DYDQEMB1" | version u32 | dim u32 | count u64
//! count x (image_id u64 | dim x f32)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{Dataset, ImageId};
use crate::error::{Error, Result};
use crate::image::{ImageSource, PixelImage};

pub const MAGIC: &[u8; 8] = b"DYDQEMB1";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 + 8;

/// A finite real vector, stored at 32-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateEmbedding);
        }
        Ok(Embedding(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| f64::from(v)).collect()
    }

    pub fn norm(&self) -> f64 {
        self.0
            .iter()
            .map(|&v| f64::from(v).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

impl TryFrom<Vec<f32>> for Embedding {
    type Error = Error;

    fn try_from(v: Vec<f32>) -> Result<Self> {
        Embedding::new(v)
    }
}

/// Cosine similarity, clamped to [-1, 1].
pub fn cosine(a: &Embedding, b: &Embedding) -> Result<f64> {
    cosine_iter(
        a.0.iter().map(|&v| f64::from(v)),
        b.0.iter().map(|&v| f64::from(v)),
        a.dim(),
        b.dim(),
    )
}

pub fn cosine_f64(a: &[f64], b: &[f64]) -> Result<f64> {
    cosine_iter(a.iter().copied(), b.iter().copied(), a.len(), b.len())
}

/// Cosine between an f64 vector (such as a centroid) and a stored embedding.
pub fn cosine_mixed(a: &[f64], b: &Embedding) -> Result<f64> {
    cosine_iter(
        a.iter().copied(),
        b.0.iter().map(|&v| f64::from(v)),
        a.len(),
        b.dim(),
    )
}

fn cosine_iter(
    a: impl Iterator<Item = f64>,
    b: impl Iterator<Item = f64>,
    da: usize,
    db: usize,
) -> Result<f64> {
    if da != db {
        return Err(Error::DimensionMismatch {
            expected: da,
            actual: db,
        });
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 || !(na.is_finite() && nb.is_finite()) {
        return Err(Error::DegenerateEmbedding);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// Grid side used by the baseline embedder for a supported dimension.
fn pooling_grid(dim: usize) -> Result<u32> {
    match dim {
        48 => Ok(4),
        192 => Ok(8),
        other => Err(Error::UnsupportedDim(other)),
    }
}

/// Average-pool the image into a g x g grid per channel, scale to [0, 1] and
/// L2-normalize. Components are ordered row of cells, column of cells,
/// channel. An all-black image has no direction and is rejected.
pub fn baseline_embed(img: &PixelImage, dim: usize) -> Result<Embedding> {
    let g = pooling_grid(dim)?;
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0.0f64; dim];
    for cy in 0..g {
        let (y0, y1) = (cy * h / g, (cy + 1) * h / g);
        for cx in 0..g {
            let (x0, x1) = (cx * w / g, (cx + 1) * w / g);
            let mut sum = [0u64; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let px = img.pixel(x, y);
                    for c in 0..3 {
                        sum[c] += u64::from(px[c]);
                    }
                }
            }
            let n = f64::from((x1 - x0) * (y1 - y0));
            let base = ((cy * g + cx) * 3) as usize;
            for c in 0..3 {
                out[base + c] = sum[c] as f64 / n / 255.0;
            }
        }
    }
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateEmbedding);
    }
    Embedding::new(out.into_iter().map(|v| (v / norm) as f32).collect())
}

/// Anything that maps pixels to an embedding of fixed width.
pub trait Embedder: Sync {
    fn dim(&self) -> usize;
    fn embed(&self, img: &PixelImage) -> Result<Embedding>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineEmbedder {
    dim: usize,
}

impl BaselineEmbedder {
    pub fn new(dim: usize) -> Result<Self> {
        pooling_grid(dim)?;
        Ok(BaselineEmbedder { dim })
    }
}

impl Embedder for BaselineEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, img: &PixelImage) -> Result<Embedding> {
        baseline_embed(img, self.dim)
    }
}

/// Image id to embedding, all of one width.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    entries: BTreeMap<ImageId, Embedding>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, id: ImageId, e: Embedding) -> Result<()> {
        if e.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: e.dim(),
            });
        }
        if self.entries.contains_key(&id) {
            return Err(Error::DuplicateEmbedding(id));
        }
        self.entries.insert(id, e);
        Ok(())
    }

    pub fn get(&self, id: ImageId) -> Option<&Embedding> {
        self.entries.get(&id)
    }

    pub fn require(&self, id: ImageId) -> Result<&Embedding> {
        self.entries.get(&id).ok_or(Error::MissingEmbedding(id))
    }

    pub fn contains(&self, id: ImageId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ImageId, &Embedding)> {
        self.entries.iter().map(|(&k, v)| (k, v))
    }

    /// Merge entries from `other`, which must share the dimension and not
    /// overlap.
    pub fn extend(&mut self, other: impl IntoIterator<Item = (ImageId, Embedding)>) -> Result<()> {
        for (id, e) in other {
            self.insert(id, e)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.len() * (8 + 4 * self.dim));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for (id, e) in &self.entries {
            out.extend_from_slice(&id.0.to_le_bytes());
            for v in &e.0 {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::TruncatedFile);
        }
        if &bytes[..8] != MAGIC {
            return Err(Error::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::TruncatedFile);
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u32_at(8);
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let dim = u32_at(12) as usize;
        let count = u64_at(16);
        let record = 8 + 4 * dim;
        let body = bytes.len() - HEADER_LEN;
        let needed = (count as u128) * record as u128;
        if (body as u128) < needed {
            return Err(Error::TruncatedFile);
        }
        if body as u128 > needed {
            return Err(Error::TrailingBytes(body - needed as usize));
        }
        let mut store = EmbeddingStore::new(dim);
        for rec in bytes[HEADER_LEN..].chunks_exact(record) {
            let id = ImageId(u64::from_le_bytes(rec[..8].try_into().unwrap()));
            let values: Vec<f32> = rec[8..]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let e = Embedding::new(values).map_err(|_| Error::NonFiniteEmbedding(id))?;
            store.insert(id, e)?;
        }
        Ok(store)
    }
}

pub fn export_embeddings(store: &EmbeddingStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn import_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    EmbeddingStore::from_bytes(&bytes)
}

/// Embed every real image of `d`.
pub fn embed_dataset(
    d: &Dataset,
    images: &dyn ImageSource,
    embedder: &dyn Embedder,
) -> Result<EmbeddingStore> {
    let embedded = (0..d.n_images() as u64)
        .into_par_iter()
        .map(|k| {
            let id = ImageId(k);
            Ok((id, embedder.embed(&images.load(id)?)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut store = EmbeddingStore::new(embedder.dim());
    store.extend(embedded)?;
    Ok(store)
}
