//! Authorship scoring models and their training loop.
//!
//! A user is an embedding row `U_u`; an image embedding `e` is projected by a
//! dense layer to `v = W e + b`. The dot head scores `<U_u, v>`; the MLP head
//! scores `w2 . tanh(W1 [U_u; v] + b1) + b2`. Scores are raw logits; the
//! logistic function only appears inside the losses.
//!
//! All parameters live in one flat vector so that gradients, momentum and
//! checkpoints share a single layout.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, ImageId, Split, UserId};
use crate::embed::EmbeddingStore;
use crate::error::{Error, Result};
use crate::evalkit::{build_test_cases, evaluate_with, CaseSet, MetricReport, Scorer};
use crate::pu::ReliableNegatives;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Dot,
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n_users: usize,
    pub d_in: usize,
    pub dim: usize,
    /// Hidden width of the MLP head; 0 for the dot head.
    pub hidden: usize,
}

impl Layout {
    fn user_len(&self) -> usize {
        self.n_users * self.dim
    }
    fn w_off(&self) -> usize {
        self.user_len()
    }
    fn b_off(&self) -> usize {
        self.w_off() + self.dim * self.d_in
    }
    fn w1_off(&self) -> usize {
        self.b_off() + self.dim
    }
    fn b1_off(&self) -> usize {
        self.w1_off() + self.hidden * 2 * self.dim
    }
    fn w2_off(&self) -> usize {
        self.b1_off() + self.hidden
    }
    fn b2_off(&self) -> usize {
        self.w2_off() + self.hidden
    }

    pub fn n_params(&self) -> usize {
        if self.hidden == 0 {
            self.b_off() + self.dim
        } else {
            self.b2_off() + 1
        }
    }

    fn user_range(&self, u: UserId) -> std::ops::Range<usize> {
        let s = u.index() * self.dim;
        s..s + self.dim
    }

    fn proj_w_range(&self) -> std::ops::Range<usize> {
        self.w_off()..self.b_off()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layout: Layout,
    pub head: Head,
    pub theta: Vec<f64>,
}

/// Intermediate values of one forward pass, kept for the backward pass.
struct Forward {
    v: Vec<f64>,
    z: Vec<f64>,
    hidden: Vec<f64>,
    score: f64,
}

impl ModelParams {
    /// User rows and projection weights uniform in [-0.05, 0.05], biases 0.
    /// MLP weights use Glorot-uniform bounds.
    pub fn init(layout: Layout, head: Head, seed: u64) -> Result<Self> {
        if layout.dim == 0 || layout.d_in == 0 {
            return Err(Error::InvalidParameter(
                "model dimensions must be positive".into(),
            ));
        }
        if (head == Head::Mlp) != (layout.hidden > 0) {
            return Err(Error::InvalidParameter(
                "the MLP head needs a hidden width and the dot head must not have one".into(),
            ));
        }
        let mut rng = seed::rng(seed::derive(seed, seed::STREAM_INIT));
        let mut theta = vec![0.0; layout.n_params()];
        for v in &mut theta[..layout.b_off()] {
            *v = rng.random_range(-0.05..=0.05);
        }
        if head == Head::Mlp {
            let a1 = (6.0 / (2 * layout.dim + layout.hidden) as f64).sqrt();
            for v in &mut theta[layout.w1_off()..layout.b1_off()] {
                *v = rng.random_range(-a1..=a1);
            }
            let a2 = (6.0 / (layout.hidden + 1) as f64).sqrt();
            for v in &mut theta[layout.w2_off()..layout.b2_off()] {
                *v = rng.random_range(-a2..=a2);
            }
        }
        Ok(ModelParams {
            layout,
            head,
            theta,
        })
    }

    pub fn user_row(&self, u: UserId) -> &[f64] {
        &self.theta[self.layout.user_range(u)]
    }

    pub fn user_row_mut(&mut self, u: UserId) -> &mut [f64] {
        let r = self.layout.user_range(u);
        &mut self.theta[r]
    }

    pub fn proj_weights(&self) -> &[f64] {
        &self.theta[self.layout.proj_w_range()]
    }

    pub fn proj_weights_mut(&mut self) -> &mut [f64] {
        let r = self.layout.proj_w_range();
        &mut self.theta[r]
    }

    pub fn proj_bias_mut(&mut self) -> &mut [f64] {
        let l = self.layout;
        &mut self.theta[l.b_off()..l.b_off() + l.dim]
    }

    /// `v = W e + b`.
    pub fn project(&self, e: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let w = &self.theta[l.w_off()..l.b_off()];
        let b = &self.theta[l.b_off()..l.b_off() + l.dim];
        (0..l.dim)
            .map(|r| {
                let row = &w[r * l.d_in..(r + 1) * l.d_in];
                b[r] + row.iter().zip(e).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    fn check(&self, u: UserId, e: &[f64]) -> Result<()> {
        if u.index() >= self.layout.n_users {
            return Err(Error::UnknownUser(u));
        }
        if e.len() != self.layout.d_in {
            return Err(Error::DimensionMismatch {
                expected: self.layout.d_in,
                actual: e.len(),
            });
        }
        Ok(())
    }

    fn forward(&self, u: UserId, e: &[f64]) -> Forward {
        let l = &self.layout;
        let v = self.project(e);
        let uu = self.user_row(u);
        match self.head {
            Head::Dot => {
                let score = uu.iter().zip(&v).map(|(a, b)| a * b).sum();
                Forward {
                    v,
                    z: Vec::new(),
                    hidden: Vec::new(),
                    score,
                }
            }
            Head::Mlp => {
                let z: Vec<f64> = uu.iter().chain(&v).copied().collect();
                let w1 = &self.theta[l.w1_off()..l.b1_off()];
                let b1 = &self.theta[l.b1_off()..l.w2_off()];
                let w2 = &self.theta[l.w2_off()..l.b2_off()];
                let hidden: Vec<f64> = (0..l.hidden)
                    .map(|k| {
                        let row = &w1[k * 2 * l.dim..(k + 1) * 2 * l.dim];
                        (b1[k] + row.iter().zip(&z).map(|(a, x)| a * x).sum::<f64>()).tanh()
                    })
                    .collect();
                let score = self.theta[l.b2_off()]
                    + w2.iter().zip(&hidden).map(|(a, h)| a * h).sum::<f64>();
                Forward {
                    v,
                    z,
                    hidden,
                    score,
                }
            }
        }
    }

    /// Raw score of image embedding `e` for user `u`.
    pub fn score(&self, u: UserId, e: &[f64]) -> Result<f64> {
        self.check(u, e)?;
        Ok(self.forward(u, e).score)
    }

    /// Add `upstream * d score / d theta` into `grad`.
    fn backward(&self, u: UserId, e: &[f64], fwd: &Forward, upstream: f64, grad: &mut [f64]) {
        let l = &self.layout;
        let uu = self.user_row(u);
        let ur = l.user_range(u);
        // Gradient w.r.t. v and U_u.
        let (d_user, d_v): (Vec<f64>, Vec<f64>) = match self.head {
            Head::Dot => (fwd.v.clone(), uu.to_vec()),
            Head::Mlp => {
                let w1 = &self.theta[l.w1_off()..l.b1_off()];
                let w2 = &self.theta[l.w2_off()..l.b2_off()];
                grad[l.b2_off()] += upstream;
                let mut dz = vec![0.0; 2 * l.dim];
                for k in 0..l.hidden {
                    let h = fwd.hidden[k];
                    grad[l.w2_off() + k] += upstream * h;
                    let da = w2[k] * (1.0 - h * h);
                    grad[l.b1_off() + k] += upstream * da;
                    let row = k * 2 * l.dim;
                    for m in 0..2 * l.dim {
                        grad[l.w1_off() + row + m] += upstream * da * fwd.z[m];
                        dz[m] += da * w1[row + m];
                    }
                }
                let dv = dz.split_off(l.dim);
                (dz, dv)
            }
        };
        for (g, d) in grad[ur].iter_mut().zip(&d_user) {
            *g += upstream * d;
        }
        for r in 0..l.dim {
            let g = upstream * d_v[r];
            if g == 0.0 {
                continue;
            }
            grad[l.b_off() + r] += g;
            let row = l.w_off() + r * l.d_in;
            for (j, x) in e.iter().enumerate() {
                grad[row + j] += g * x;
            }
        }
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pairwise ranking loss `-ln sigma(s_pos - s_neg) + l2_term`.
pub fn bpr_loss(s_pos: f64, s_neg: f64, l2_term: f64) -> f64 {
    softplus(-(s_pos - s_neg)) + l2_term
}

/// Binary cross-entropy on a raw logit.
pub fn bce_loss(s: f64, label: bool) -> f64 {
    if label {
        softplus(-s)
    } else {
        softplus(s)
    }
}

/// One unit of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Example {
    Pair {
        user: UserId,
        positive: ImageId,
        negative: ImageId,
    },
    Labeled {
        user: UserId,
        image: ImageId,
        label: bool,
    },
}

impl Example {
    pub fn user(&self) -> UserId {
        match *self {
            Example::Pair { user, .. } | Example::Labeled { user, .. } => user,
        }
    }
}

/// Objective of a single example including its regularizer
/// `l2 * (|U_u|^2 + |W|^2)`; when `grad` is given, `weight` times the
/// gradient is accumulated into it.
pub fn example_objective(
    params: &ModelParams,
    ex: &Example,
    embedding: &dyn Fn(ImageId) -> Result<Vec<f64>>,
    l2: f64,
    weight: f64,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let user = ex.user();
    let (loss, grad) = match *ex {
        Example::Pair {
            positive, negative, ..
        } => {
            let (ep, en) = (embedding(positive)?, embedding(negative)?);
            params.check(user, &ep)?;
            params.check(user, &en)?;
            let (fp, fn_) = (params.forward(user, &ep), params.forward(user, &en));
            let x = fp.score - fn_.score;
            if let Some(g) = grad {
                // d/dx softplus(-x) = -sigma(-x)
                let dx = -sigmoid(-x) * weight;
                params.backward(user, &ep, &fp, dx, g);
                params.backward(user, &en, &fn_, -dx, g);
                (bpr_loss(fp.score, fn_.score, 0.0), Some(g))
            } else {
                (bpr_loss(fp.score, fn_.score, 0.0), None)
            }
        }
        Example::Labeled { image, label, .. } => {
            let e = embedding(image)?;
            params.check(user, &e)?;
            let f = params.forward(user, &e);
            if let Some(g) = grad {
                let ds = (sigmoid(f.score) - if label { 1.0 } else { 0.0 }) * weight;
                params.backward(user, &e, &f, ds, g);
                (bce_loss(f.score, label), Some(g))
            } else {
                (bce_loss(f.score, label), None)
            }
        }
    };
    let (reg, reg_grad) = l2_penalty(params, user, l2);
    if let Some(g) = grad {
        reg_grad(g, weight);
    }
    Ok(loss + reg)
}

/// `l2 * (|U_u|^2 + |W|^2)` and a closure adding its scaled gradient.
fn l2_penalty<'a>(
    params: &'a ModelParams,
    user: UserId,
    l2: f64,
) -> (f64, impl FnOnce(&mut [f64], f64) + 'a) {
    let l = params.layout;
    let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
    let value = l2 * (sq(params.user_row(user)) + sq(params.proj_weights()));
    let apply = move |g: &mut [f64], weight: f64| {
        if l2 == 0.0 {
            return;
        }
        for i in l.user_range(user) {
            g[i] += weight * 2.0 * l2 * params.theta[i];
        }
        for i in l.proj_w_range() {
            g[i] += weight * 2.0 * l2 * params.theta[i];
        }
    };
    (value, apply)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Bce,
    Bpr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeSource {
    Random,
    Reliable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValMetric {
    /// NDCG@10; falls back to AUC when no validation case has more than ten
    /// candidates.
    Ndcg,
    Auc,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub head: Head,
    pub objective: Objective,
    pub neg_source: NegativeSource,
    pub dim: usize,
    pub hidden: usize,
    pub lr: f64,
    pub momentum: f64,
    pub l2: f64,
    pub epochs_max: usize,
    pub early_stop_patience: usize,
    pub early_stop_delta: f64,
    pub batch: usize,
    pub val_metric: ValMetric,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            head: Head::Dot,
            objective: Objective::Bpr,
            neg_source: NegativeSource::Random,
            dim: 64,
            hidden: 64,
            lr: 0.01,
            momentum: 0.9,
            l2: 1e-5,
            epochs_max: 100,
            early_stop_patience: 5,
            early_stop_delta: 0.001,
            batch: 1,
            val_metric: ValMetric::Ndcg,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn layout(&self, n_users: usize, d_in: usize) -> Layout {
        Layout {
            n_users,
            d_in,
            dim: self.dim,
            hidden: if self.head == Head::Mlp {
                self.hidden
            } else {
                0
            },
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be non-negative");
        }
        if self.batch == 0 {
            return bad("batch must be positive");
        }
        if self.head == Head::Mlp && self.hidden == 0 {
            return bad("the MLP head needs hidden > 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: Option<f64>,
    /// Negatives drawn at random because the user's reliable set was empty.
    pub fallback_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
    pub stopped_epoch: usize,
    /// Epoch whose parameters were kept (0 = initialization).
    pub best_epoch: usize,
}

/// Scores images through a model and an embedding store.
pub struct ModelScorer<'a> {
    pub params: &'a ModelParams,
    pub store: &'a EmbeddingStore,
}

impl Scorer for ModelScorer<'_> {
    fn score(&self, user: UserId, image: ImageId) -> Result<f64> {
        let e = self.store.require(image)?.to_f64();
        self.params.score(user, &e)
    }
}

impl TrainedModel {
    pub fn scorer<'a>(&'a self, store: &'a EmbeddingStore) -> ModelScorer<'a> {
        ModelScorer {
            params: &self.params,
            store,
        }
    }

    pub fn score(&self, user: UserId, image: ImageId, store: &EmbeddingStore) -> Result<f64> {
        self.scorer(store).score(user, image)
    }
}

/// Candidates ordered by descending score, ties by ascending image id.
pub fn rank_images(
    model: &TrainedModel,
    user: UserId,
    candidates: &[ImageId],
    store: &EmbeddingStore,
) -> Result<Vec<(ImageId, f64)>> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidates to rank".into()));
    }
    let scorer = model.scorer(store);
    let mut scored = candidates
        .iter()
        .map(|&p| Ok((p, scorer.score(user, p)?)))
        .collect::<Result<Vec<_>>>()?;
    sort_ranked(&mut scored);
    Ok(scored)
}

pub fn sort_ranked(scored: &mut [(ImageId, f64)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

pub fn evaluate(
    model: &TrainedModel,
    cases: &CaseSet,
    store: &EmbeddingStore,
) -> Result<MetricReport> {
    evaluate_with(&model.scorer(store), cases)
}

/// Draws negatives for a user.
struct NegativeSampler<'a> {
    d: &'a Dataset,
    rn: Option<&'a ReliableNegatives>,
    source: NegativeSource,
}

impl NegativeSampler<'_> {
    /// Returns the negative and whether it came from the random fallback.
    fn draw(&self, user: UserId, rng: &mut impl Rng) -> Result<(ImageId, bool)> {
        if self.source == NegativeSource::Reliable {
            if let Some(rn) = self.rn {
                let set = rn.for_user(user);
                if !set.is_empty() {
                    return Ok((set[rng.random_range(0..set.len())].image, false));
                }
            }
        }
        let n = self.d.n_images();
        if self.d.images_of_user(user).len() >= n {
            return Err(Error::NoNegativeAvailable(user));
        }
        loop {
            let p = ImageId(rng.random_range(0..n as u64));
            if self.d.owner(p) != Some(user) {
                return Ok((p, self.source == NegativeSource::Reliable));
            }
        }
    }
}

fn embedding_cache(store: &EmbeddingStore) -> HashMap<ImageId, Vec<f64>> {
    store.iter().map(|(id, e)| (id, e.to_f64())).collect()
}

/// Train a model on `split.train` (real plus any synthetic positives).
///
/// Each epoch shuffles the positives, pairs every positive with a freshly
/// drawn negative (uniform over other users' images, or over the user's
/// reliable negatives when configured), and takes SGD-with-momentum steps on
/// minibatch means. After each epoch the validation metric is computed; the
/// loop stops once it has not improved by more than `early_stop_delta` for
/// `early_stop_patience` epochs, and the best epoch's parameters are returned.
pub fn train(
    d: &Dataset,
    split: &Split,
    store: &EmbeddingStore,
    rn: Option<&ReliableNegatives>,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::EmptyTrainSplit);
    }
    for it in &split.train {
        store.require(it.image)?;
    }
    let layout = cfg.layout(d.n_users(), store.dim());
    let mut params = ModelParams::init(layout, cfg.head, cfg.seed)?;
    let mut model = TrainedModel {
        params: params.clone(),
        config: *cfg,
        history: Vec::new(),
        stopped_epoch: 0,
        best_epoch: 0,
    };
    if cfg.epochs_max == 0 {
        return Ok(model);
    }

    let cache = embedding_cache(store);
    let lookup = |p: ImageId| -> Result<Vec<f64>> {
        cache.get(&p).cloned().ok_or(Error::MissingEmbedding(p))
    };
    let val_cases = build_test_cases(d, &split.validation);
    let sampler = NegativeSampler {
        d,
        rn,
        source: cfg.neg_source,
    };
    let mut velocity = vec![0.0; layout.n_params()];
    let mut grad = vec![0.0; layout.n_params()];
    let mut best = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let epoch_stream = seed::derive(cfg.seed, seed::STREAM_EPOCH);

    for epoch in 1..=cfg.epochs_max {
        let mut rng = seed::rng(seed::derive(epoch_stream, epoch as u64));
        let mut order: Vec<usize> = (0..split.train.len()).collect();
        order.shuffle(&mut rng);

        let mut examples = Vec::with_capacity(order.len() * 2);
        let mut fallback = 0usize;
        for &i in &order {
            let pos = &split.train[i];
            let (neg, fell_back) = sampler.draw(pos.user, &mut rng)?;
            fallback += usize::from(fell_back);
            match cfg.objective {
                Objective::Bpr => examples.push(Example::Pair {
                    user: pos.user,
                    positive: pos.image,
                    negative: neg,
                }),
                Objective::Bce => {
                    examples.push(Example::Labeled {
                        user: pos.user,
                        image: pos.image,
                        label: true,
                    });
                    examples.push(Example::Labeled {
                        user: pos.user,
                        image: neg,
                        label: false,
                    });
                }
            }
        }
        if fallback > 0 {
            log::debug!("epoch {epoch}: {fallback} negatives drawn at random (empty reliable set)");
        }

        let mut loss_sum = 0.0;
        for batch in examples.chunks(cfg.batch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let w = 1.0 / batch.len() as f64;
            for ex in batch {
                loss_sum += example_objective(&params, ex, &lookup, cfg.l2, w, Some(&mut grad))?;
            }
            for ((t, v), g) in params.theta.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *t -= cfg.lr * *v;
            }
        }
        if params.theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "training diverged at epoch {epoch}; lower the learning rate"
            )));
        }

        let val_metric = if val_cases.is_empty() {
            None
        } else {
            let report = evaluate_with(
                &ModelScorer {
                    params: &params,
                    store,
                },
                &val_cases,
            )?;
            Some(match cfg.val_metric {
                ValMetric::Ndcg if report.n_cases_gt10 > 0 => report.ndcg_at_10,
                _ => report.auc,
            })
        };
        model.history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / examples.len() as f64,
            val_metric,
            fallback_negatives: fallback,
        });
        model.stopped_epoch = epoch;

        match val_metric {
            None => {
                model.params = params.clone();
                model.best_epoch = epoch;
            }
            Some(m) => {
                if m > best + cfg.early_stop_delta || best == f64::NEG_INFINITY {
                    best = m;
                    since_best = 0;
                    model.params = params.clone();
                    model.best_epoch = epoch;
                } else {
                    since_best += 1;
                    if since_best >= cfg.early_stop_patience {
                        break;
                    }
                }
            }
        }
    }
    Ok(model)
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DYDQCKP1";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    layout: Layout,
    head: Head,
    n_params: usize,
    config: TrainConfig,
    history: Vec<EpochRecord>,
    stopped_epoch: usize,
    best_epoch: usize,
}

impl TrainedModel {
    /// `DYDQCKP1 | header_len u32 LE | JSON header | n_params x f32 LE`.
    pub fn to_checkpoint(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&CheckpointHeader {
            layout: self.params.layout,
            head: self.params.head,
            n_params: self.params.theta.len(),
            config: self.config,
            history: self.history.clone(),
            stopped_epoch: self.stopped_epoch,
            best_epoch: self.best_epoch,
        })?;
        let mut out = Vec::with_capacity(12 + header.len() + 4 * self.params.theta.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for v in &self.params.theta {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::BadCheckpoint(m.to_string());
        if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(bad("missing magic"));
        }
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let body = bytes
            .get(12..12 + hlen)
            .ok_or_else(|| bad("truncated header"))?;
        let h: CheckpointHeader = serde_json::from_slice(body)?;
        let blob = &bytes[12 + hlen..];
        if h.n_params != h.layout.n_params() || blob.len() != 4 * h.n_params {
            return Err(bad("parameter blob does not match the layout"));
        }
        let theta: Vec<f64> = blob
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Ok(TrainedModel {
            params: ModelParams {
                layout: h.layout,
                head: h.head,
                theta,
            },
            config: h.config,
            history: h.history,
            stopped_epoch: h.stopped_epoch,
            best_epoch: h.best_epoch,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_checkpoint(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Record;
    use crate::embed::Embedding;

    fn tiny(head: Head) -> ModelParams {
        let layout = Layout {
            n_users: 2,
            d_in: 3,
            dim: 2,
            hidden: if head == Head::Mlp { 4 } else { 0 },
        };
        ModelParams::init(layout, head, 1).unwrap()
    }

    #[test]
    fn zero_user_row_scores_zero() {
        let mut p = tiny(Head::Dot);
        p.user_row_mut(UserId(0)).fill(0.0);
        for e in [[1.0, 2.0, 3.0], [-4.0, 0.5, 0.0]] {
            assert_eq!(p.score(UserId(0), &e).unwrap(), 0.0);
        }
    }

    #[test]
    fn self_inner_product() {
        let mut p = tiny(Head::Dot);
        let e = [0.3, -0.2, 0.9];
        let v = p.project(&e);
        p.user_row_mut(UserId(1)).copy_from_slice(&v);
        let s = p.score(UserId(1), &e).unwrap();
        let sq: f64 = v.iter().map(|x| x * x).sum();
        assert!((s - sq).abs() < 1e-15 && s >= 0.0);
    }

    #[test]
    fn scoring_is_deterministic_and_checked() {
        let p = tiny(Head::Mlp);
        let e = [0.1, 0.2, 0.3];
        assert_eq!(
            p.score(UserId(0), &e).unwrap(),
            p.score(UserId(0), &e).unwrap()
        );
        assert!(matches!(
            p.score(UserId(0), &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(p.score(UserId(9), &e), Err(Error::UnknownUser(_))));
    }

    #[test]
    fn init_respects_bounds() {
        let p = tiny(Head::Dot);
        let l = p.layout;
        assert!(p.theta[..l.b_off()].iter().all(|v| v.abs() <= 0.05));
        assert!(p.theta[l.b_off()..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_values() {
        assert!((bpr_loss(0.4, 0.4, 0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        // -ln sigma(1) = ln(1 + e^-1)
        let oracle = (1.0 + (-1.0f64).exp()).ln();
        assert!((bpr_loss(1.5, 0.5, 0.0) - oracle).abs() < 1e-15);
        assert!((oracle - 0.313_262).abs() < 1e-6);
        assert!(bpr_loss(800.0, -800.0, 0.0) < 1e-300);
        assert!((bpr_loss(0.0, 0.0, 0.25) - (std::f64::consts::LN_2 + 0.25)).abs() < 1e-15);

        assert!((bce_loss(0.0, true) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((bce_loss(0.0, false) - std::f64::consts::LN_2).abs() < 1e-15);
        // ln(1 + e^-20) computed with the series ln(1+x) ~ x - x^2/2.
        let x = (-20.0f64).exp();
        assert!((bce_loss(20.0, true) - (x - x * x / 2.0)).abs() < 1e-20);
        assert!((bce_loss(20.0, true) - 2.06e-9).abs() < 1e-11);
        assert!(bce_loss(-800.0, false).is_finite());
    }

    fn store_2d(vecs: &[[f32; 2]]) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(2);
        for (i, v) in vecs.iter().enumerate() {
            s.insert(ImageId(i as u64), Embedding::new(v.to_vec()).unwrap())
                .unwrap();
        }
        s
    }

    #[test]
    fn ranking_order_and_ties() {
        let store = store_2d(&[[0.3, 0.0], [0.9, 0.0], [0.5, 0.0], [0.5, 0.0]]);
        let layout = Layout {
            n_users: 1,
            d_in: 2,
            dim: 1,
            hidden: 0,
        };
        let mut params = ModelParams::init(layout, Head::Dot, 0).unwrap();
        params.theta = vec![1.0, 1.0, 0.0, 0.0];
        let model = TrainedModel {
            params,
            config: TrainConfig::default(),
            history: vec![],
            stopped_epoch: 0,
            best_epoch: 0,
        };
        let ranked = rank_images(
            &model,
            UserId(0),
            &[ImageId(0), ImageId(1), ImageId(2)],
            &store,
        )
        .unwrap();
        let ids: Vec<u64> = ranked.iter().map(|r| r.0 .0).collect();
        assert_eq!(ids, vec![1, 2, 0]);
        let ranked = rank_images(&model, UserId(0), &[ImageId(3), ImageId(2)], &store).unwrap();
        assert_eq!(ranked[0].0, ImageId(2));
        let single = rank_images(&model, UserId(0), &[ImageId(0)], &store).unwrap();
        assert_eq!(single.len(), 1);
        assert!(rank_images(&model, UserId(0), &[], &store).is_err());
    }

    fn toy() -> (Dataset, Split, EmbeddingStore) {
        let recs = (0..8).map(|k| {
            Record::new(
                format!("u{}", k % 2),
                format!("i{}", k / 4),
                format!("p{k}"),
                "",
            )
        });
        let d = Dataset::from_records(recs, "restaurant").unwrap();
        let vecs: Vec<[f32; 2]> = (0..8)
            .map(|k| if k % 2 == 0 { [1.0, 0.1] } else { [0.1, 1.0] })
            .collect();
        let split = Split {
            train: d.interactions().to_vec(),
            ..Split::default()
        };
        (d, split, store_2d(&vecs))
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let (d, split, store) = toy();
        let cfg = TrainConfig {
            epochs_max: 0,
            dim: 3,
            ..TrainConfig::default()
        };
        let m = train(&d, &split, &store, None, &cfg).unwrap();
        assert!(m.history.is_empty());
        assert_eq!(m.stopped_epoch, 0);
        let init = ModelParams::init(cfg.layout(2, 2), Head::Dot, cfg.seed).unwrap();
        assert_eq!(m.params, init);
    }

    #[test]
    fn training_is_deterministic() {
        let (d, split, store) = toy();
        for head in [Head::Dot, Head::Mlp] {
            let cfg = TrainConfig {
                head,
                epochs_max: 5,
                dim: 3,
                hidden: 4,
                batch: 3,
                seed: 4,
                ..TrainConfig::default()
            };
            let a = train(&d, &split, &store, None, &cfg).unwrap();
            let b = train(&d, &split, &store, None, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.history.len(), a.stopped_epoch);
        }
    }

    #[test]
    fn empty_train_split_is_an_error() {
        let (d, _, store) = toy();
        assert!(matches!(
            train(&d, &Split::default(), &store, None, &TrainConfig::default()),
            Err(Error::EmptyTrainSplit)
        ));
    }

    #[test]
    fn missing_train_embedding_is_an_error() {
        let (d, split, _) = toy();
        let store = store_2d(&[[1.0, 0.0]]);
        assert!(matches!(
            train(&d, &split, &store, None, &TrainConfig::default()),
            Err(Error::MissingEmbedding(_))
        ));
    }

    #[test]
    fn random_negatives_never_belong_to_the_user() {
        let (d, _, _) = toy();
        let sampler = NegativeSampler {
            d: &d,
            rn: None,
            source: NegativeSource::Random,
        };
        let mut rng = seed::rng(1);
        for _ in 0..500 {
            for u in [UserId(0), UserId(1)] {
                let (p, _) = sampler.draw(u, &mut rng).unwrap();
                assert_ne!(d.owner(p), Some(u));
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let (d, split, store) = toy();
        let cfg = TrainConfig {
            head: Head::Mlp,
            epochs_max: 2,
            dim: 3,
            hidden: 4,
            ..TrainConfig::default()
        };
        let m = train(&d, &split, &store, None, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(back.params.layout, m.params.layout);
        assert_eq!(back.history, m.history);
        for (a, b) in back.params.theta.iter().zip(&m.params.theta) {
            assert_eq!(*a, f64::from(*b as f32));
        }
        let mut bytes = m.to_checkpoint().unwrap();
        bytes.pop();
        assert!(TrainedModel::from_checkpoint(&bytes).is_err());
    }
}
