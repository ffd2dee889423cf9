//! User-personalized two-step PU selection of reliable negatives.
//!
//! Each user is treated as an independent PU problem. The user's positive
//! train images define a prototype (the mean embedding) and a similarity
//! threshold (a low percentile of the positives' cosine to that prototype).
//! Unlabelled images whose similarity to the prototype does not exceed the
//! threshold are admitted as reliable negatives for that user. Positives are
//! assumed to be selected completely at random from the user's good
//! explanations; no labelling-mechanism estimation is done.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageId, Split, UserId};
use crate::embed::{cosine_mixed, EmbeddingStore};
use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_Q: f64 = 0.10;
pub const DEFAULT_CANDIDATE_CAP: usize = 500;

#[derive(Debug, Clone, PartialEq)]
pub struct UserPrototype {
    pub user: UserId,
    /// Mean of the user's train embeddings; not re-normalized.
    pub centroid: Vec<f64>,
    pub threshold: f64,
    pub own_image_count: usize,
}

/// 1-based nearest-rank index `ceil(q * n)`, clamped to `[1, n]`. A small
/// tolerance keeps products such as `0.3 * 10` from rounding up a rank.
pub fn nearest_rank(q: f64, n: usize) -> usize {
    let r = (q * n as f64 - 1e-9).ceil();
    (r.max(1.0) as usize).min(n)
}

/// Nearest-rank percentile of `values` (which need not be sorted).
pub fn percentile_nearest_rank(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted[nearest_rank(q, sorted.len()) - 1]
}

pub fn build_prototype(
    user: UserId,
    train_images: &[ImageId],
    store: &EmbeddingStore,
    q: f64,
) -> Result<UserPrototype> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile q={q} not in (0, 1)"
        )));
    }
    if train_images.is_empty() {
        return Err(Error::NoPositives(user));
    }
    let embs = train_images
        .iter()
        .map(|&p| store.require(p))
        .collect::<Result<Vec<_>>>()?;
    let mut centroid = vec![0.0f64; store.dim()];
    for e in &embs {
        for (c, &v) in centroid.iter_mut().zip(e.as_slice()) {
            *c += f64::from(v);
        }
    }
    let n = embs.len() as f64;
    centroid.iter_mut().for_each(|c| *c /= n);

    let sims = embs
        .iter()
        .map(|e| cosine_mixed(&centroid, e))
        .collect::<Result<Vec<_>>>()?;
    Ok(UserPrototype {
        user,
        centroid,
        threshold: percentile_nearest_rank(&sims, q),
        own_image_count: embs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PuConfig {
    pub q: f64,
    /// `None` scans every unlabelled image.
    pub candidate_cap: Option<usize>,
    pub seed: u64,
}

impl Default for PuConfig {
    fn default() -> Self {
        PuConfig {
            q: DEFAULT_Q,
            candidate_cap: Some(DEFAULT_CANDIDATE_CAP),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admitted {
    pub image: ImageId,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RnSummary {
    pub q: f64,
    pub cap: Option<usize>,
    pub total_candidates: usize,
    pub total_admitted: usize,
    pub users_with_empty_rn: usize,
}

/// `RN_u` for every user, indexed by user id.
#[derive(Debug, Clone, PartialEq)]
pub struct ReliableNegatives {
    per_user: Vec<Vec<Admitted>>,
    pub summary: RnSummary,
}

impl ReliableNegatives {
    pub fn for_user(&self, user: UserId) -> &[Admitted] {
        self.per_user
            .get(user.index())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn total(&self) -> usize {
        self.per_user.iter().map(Vec::len).sum()
    }

    /// TSV `user_id\timage_id\tsimilarity`, users in id order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("user_id\timage_id\tsimilarity\n");
        for (u, rn) in self.per_user.iter().enumerate() {
            for a in rn {
                out.push_str(&format!("{u}\t{}\t{:.9}\n", a.image.0, a.similarity));
            }
        }
        out
    }

    pub fn write(&self, tsv: impl AsRef<Path>, summary_json: impl AsRef<Path>) -> Result<()> {
        let (tsv, js) = (tsv.as_ref(), summary_json.as_ref());
        fs::write(tsv, self.to_tsv()).map_err(|e| Error::io(tsv, e))?;
        let mut f = fs::File::create(js).map_err(|e| Error::io(js, e))?;
        serde_json::to_writer_pretty(&mut f, &self.summary)?;
        f.write_all(b"\n").map_err(|e| Error::io(js, e))
    }
}

struct UserOutcome {
    admitted: Vec<Admitted>,
    candidates: usize,
}

/// Select reliable negatives for every user. Candidates for `u` are drawn
/// uniformly without replacement from the real images not authored by `u`,
/// using a stream seeded from `(cfg.seed, u)` only, so each user's result is
/// independent of every other user's data and of thread scheduling.
pub fn select_reliable_negatives(
    d: &Dataset,
    split: &Split,
    store: &EmbeddingStore,
    cfg: &PuConfig,
) -> Result<ReliableNegatives> {
    if !(cfg.q > 0.0 && cfg.q < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "percentile q={} not in (0, 1)",
            cfg.q
        )));
    }
    let train = split.train_by_user(d.n_users());
    let stream = seed::derive(cfg.seed, seed::STREAM_PU);

    let outcomes = (0..d.n_users())
        .into_par_iter()
        .map(|u| {
            let user = UserId(u as u32);
            let positives: Vec<ImageId> = train[u]
                .iter()
                .copied()
                .filter(|p| !p.is_synthetic())
                .collect();
            let proto = match build_prototype(user, &positives, store, cfg.q) {
                Ok(p) => p,
                Err(e @ (Error::NoPositives(_) | Error::DegenerateEmbedding)) => {
                    log::debug!("user {user}: empty RN ({e})");
                    return Ok(UserOutcome {
                        admitted: Vec::new(),
                        candidates: 0,
                    });
                }
                Err(e) => return Err(e),
            };
            let mut candidates = unlabelled_for(d, user);
            let mut rng = seed::rng(seed::derive(stream, u64::from(user.0)));
            let take = cfg
                .candidate_cap
                .unwrap_or(candidates.len())
                .min(candidates.len());
            let (chosen, _) = candidates.partial_shuffle(&mut rng, take);
            let mut admitted = Vec::new();
            for &p in chosen.iter() {
                let sim = cosine_mixed(&proto.centroid, store.require(p)?)?;
                if sim <= proto.threshold {
                    admitted.push(Admitted {
                        image: p,
                        similarity: sim,
                    });
                }
            }
            admitted.sort_by_key(|a| a.image);
            Ok(UserOutcome {
                admitted,
                candidates: take,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = RnSummary {
        q: cfg.q,
        cap: cfg.candidate_cap,
        total_candidates: outcomes.iter().map(|o| o.candidates).sum(),
        total_admitted: outcomes.iter().map(|o| o.admitted.len()).sum(),
        users_with_empty_rn: outcomes.iter().filter(|o| o.admitted.is_empty()).count(),
    };
    Ok(ReliableNegatives {
        per_user: outcomes.into_iter().map(|o| o.admitted).collect(),
        summary,
    })
}

/// Real images not authored by `user`, in id order.
fn unlabelled_for(d: &Dataset, user: UserId) -> Vec<ImageId> {
    d.interactions()
        .iter()
        .filter(|it| it.user != user)
        .map(|it| it.image)
        .collect()
}
