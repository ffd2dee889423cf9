//! Dyadic user/item/image data: ingestion, dense id mapping and the per-user
//! leave-one-out partition.

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

pub const TSV_HEADER: &str = "user\titem\timage\treview";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

/// Image identifier. Real images are dense from 0; synthetic images carry a
/// provenance tag in the top bits (see [`ImageId::transform`] and
/// [`ImageId::generative`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ImageId(pub u64);

const TRANSFORM_TAG: u64 = 1 << 63;
const GENERATIVE_TAG: u64 = 1 << 62;
const TAG_MASK: u64 = TRANSFORM_TAG | GENERATIVE_TAG;

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ImageId {
    /// Synthetic id for the `k`-th transform-augmented copy made for `user`.
    pub fn transform(user: UserId, k: u32) -> Self {
        ImageId(TRANSFORM_TAG | (u64::from(user.0) << 32) | u64::from(k))
    }

    /// Synthetic id for the `k`-th generated image made for `user`.
    pub fn generative(user: UserId, k: u32) -> Self {
        ImageId(GENERATIVE_TAG | (u64::from(user.0) << 32) | u64::from(k))
    }

    pub fn is_synthetic(self) -> bool {
        self.0 & TAG_MASK != 0
    }

    /// Position in the dataset's interaction list, for real images only.
    pub fn real_index(self) -> Option<usize> {
        (!self.is_synthetic()).then_some(self.0 as usize)
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 & TRANSFORM_TAG != 0 {
            write!(f, "t{:x}", self.0 & !TAG_MASK)
        } else if self.0 & GENERATIVE_TAG != 0 {
            write!(f, "g{:x}", self.0 & !TAG_MASK)
        } else {
            write!(f, "p{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub image: ImageId,
    /// Review text as given; may be empty.
    pub review: String,
}

impl Interaction {
    pub fn has_review(&self) -> bool {
        !self.review.trim().is_empty()
    }
}

/// One raw row before id assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub user_key: String,
    pub item_key: String,
    pub image_key: String,
    pub review: String,
}

impl Record {
    pub fn new(
        user_key: impl Into<String>,
        item_key: impl Into<String>,
        image_key: impl Into<String>,
        review: impl Into<String>,
    ) -> Self {
        Record {
            user_key: user_key.into(),
            item_key: item_key.into(),
            image_key: image_key.into(),
            review: review.into(),
        }
    }
}

/// Original string keys, indexed by dense id. Serialized as the JSON sidecar.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyMap {
    pub user_keys: Vec<String>,
    pub item_keys: Vec<String>,
    pub image_keys: Vec<String>,
    pub item_type_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    /// Interaction `k` holds real image `ImageId(k)`.
    interactions: Vec<Interaction>,
    images_by_item: Vec<Vec<ImageId>>,
    images_by_user: Vec<Vec<ImageId>>,
    keys: KeyMap,
}

impl Dataset {
    /// Assigns dense ids in first-seen order. `records` carry the line number
    /// used in error reports.
    fn build(records: impl IntoIterator<Item = (usize, Record)>, item_type: &str) -> Result<Self> {
        let mut users: HashMap<String, UserId> = HashMap::new();
        let mut items: HashMap<String, ItemId> = HashMap::new();
        let mut images: HashMap<String, (UserId, usize)> = HashMap::new();
        let mut keys = KeyMap {
            item_type_label: item_type.to_string(),
            ..KeyMap::default()
        };
        let mut interactions = Vec::new();

        for (line, rec) in records {
            for (name, key) in [
                ("user", &rec.user_key),
                ("item", &rec.item_key),
                ("image", &rec.image_key),
            ] {
                if key.is_empty() {
                    return Err(Error::MalformedLine {
                        line,
                        reason: format!("empty {name} key"),
                    });
                }
            }
            if rec.review.contains(['\n', '\r']) {
                return Err(Error::MalformedLine {
                    line,
                    reason: "review contains a line break".into(),
                });
            }
            let user = *users.entry(rec.user_key.clone()).or_insert_with(|| {
                keys.user_keys.push(rec.user_key.clone());
                UserId(keys.user_keys.len() as u32 - 1)
            });
            let item = *items.entry(rec.item_key.clone()).or_insert_with(|| {
                keys.item_keys.push(rec.item_key.clone());
                ItemId(keys.item_keys.len() as u32 - 1)
            });
            match images.entry(rec.image_key.clone()) {
                Entry::Occupied(e) => {
                    return Err(if e.get().0 == user {
                        Error::DuplicatePair {
                            line,
                            user_key: rec.user_key,
                            image_key: rec.image_key,
                        }
                    } else {
                        Error::ConflictingImage {
                            line,
                            image_key: rec.image_key,
                        }
                    });
                }
                Entry::Vacant(e) => {
                    e.insert((user, line));
                }
            }
            keys.image_keys.push(rec.image_key);
            interactions.push(Interaction {
                user,
                item,
                image: ImageId(interactions.len() as u64),
                review: rec.review,
            });
        }

        if interactions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Self::from_parts(interactions, keys))
    }

    fn from_parts(interactions: Vec<Interaction>, keys: KeyMap) -> Self {
        let mut images_by_item = vec![Vec::new(); keys.item_keys.len()];
        let mut images_by_user = vec![Vec::new(); keys.user_keys.len()];
        for it in &interactions {
            images_by_item[it.item.index()].push(it.image);
            images_by_user[it.user.index()].push(it.image);
        }
        Dataset {
            interactions,
            images_by_item,
            images_by_user,
            keys,
        }
    }

    pub fn from_records(
        records: impl IntoIterator<Item = Record>,
        item_type: &str,
    ) -> Result<Self> {
        Self::build(
            records.into_iter().enumerate().map(|(i, r)| (i + 1, r)),
            item_type,
        )
    }

    /// Parse TSV text (`user\titem\timage\treview`). The header row is
    /// optional; blank lines are skipped. A missing review column is read as
    /// an empty review.
    pub fn parse_tsv(text: &str, item_type: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (idx, raw) in text.split('\n').enumerate() {
            let line = idx + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.trim().is_empty() {
                continue;
            }
            if idx == 0 && raw.starts_with("user\t") {
                continue;
            }
            let mut fields = raw.splitn(4, '\t');
            let (Some(u), Some(i), Some(p)) = (fields.next(), fields.next(), fields.next()) else {
                return Err(Error::MalformedLine {
                    line,
                    reason: "expected at least 3 tab-separated fields".into(),
                });
            };
            let review = fields.next().unwrap_or("");
            rows.push((line, Record::new(u, i, p, review)));
        }
        Self::build(rows, item_type)
    }

    pub fn ingest(path: impl AsRef<Path>, item_type: &str) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, item_type)
    }

    /// Load a dataset written by [`Dataset::save`], checking that the sidecar
    /// key map agrees with the re-derived one.
    pub fn load(tsv: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<Self> {
        let sidecar = sidecar.as_ref();
        let text = fs::read_to_string(sidecar).map_err(|e| Error::io(sidecar, e))?;
        let keys: KeyMap = serde_json::from_str(&text)?;
        let d = Self::ingest(tsv, &keys.item_type_label)?;
        if d.keys != keys {
            return Err(Error::SidecarMismatch(
                "key order differs from the TSV's first-seen order".into(),
            ));
        }
        Ok(d)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.interactions.len() * 48);
        out.push_str(TSV_HEADER);
        out.push('\n');
        for it in &self.interactions {
            out.push_str(&self.keys.user_keys[it.user.index()]);
            out.push('\t');
            out.push_str(&self.keys.item_keys[it.item.index()]);
            out.push('\t');
            out.push_str(&self.image_key(it.image));
            out.push('\t');
            out.push_str(&it.review);
            out.push('\n');
        }
        out
    }

    pub fn save(&self, tsv: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<()> {
        let (tsv, sidecar) = (tsv.as_ref(), sidecar.as_ref());
        fs::write(tsv, self.to_tsv()).map_err(|e| Error::io(tsv, e))?;
        let mut f = fs::File::create(sidecar).map_err(|e| Error::io(sidecar, e))?;
        serde_json::to_writer_pretty(&mut f, &self.keys)?;
        f.write_all(b"\n").map_err(|e| Error::io(sidecar, e))?;
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.images_by_user.len()
    }

    pub fn n_items(&self) -> usize {
        self.images_by_item.len()
    }

    pub fn n_images(&self) -> usize {
        self.interactions.len()
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    /// The interaction that introduced a real image.
    pub fn interaction(&self, image: ImageId) -> Option<&Interaction> {
        image.real_index().and_then(|k| self.interactions.get(k))
    }

    pub fn owner(&self, image: ImageId) -> Option<UserId> {
        self.interaction(image).map(|it| it.user)
    }

    /// `P_u`: every real image the user authored, in id order.
    pub fn images_of_user(&self, user: UserId) -> &[ImageId] {
        &self.images_by_user[user.index()]
    }

    /// `P_i`: every real image of the item, in id order.
    pub fn images_of_item(&self, item: ItemId) -> &[ImageId] {
        &self.images_by_item[item.index()]
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> {
        (0..self.n_users() as u32).map(UserId)
    }

    pub fn item_type(&self) -> &str {
        &self.keys.item_type_label
    }

    pub fn keys(&self) -> &KeyMap {
        &self.keys
    }

    pub fn user_key(&self, user: UserId) -> &str {
        &self.keys.user_keys[user.index()]
    }

    /// Original key for real images, the tagged display form for synthetic ones.
    pub fn image_key(&self, image: ImageId) -> String {
        match image.real_index() {
            Some(k) => self.keys.image_keys[k].clone(),
            None => image.to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    /// One image per user goes to train, the other `N-1` are held out.
    #[default]
    PaperText,
    /// `N-1` images go to train, one is held out.
    OneOutTest,
}

impl FromStr for PartitionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_text" => Ok(PartitionMode::PaperText),
            "one_out_test" => Ok(PartitionMode::OneOutTest),
            other => Err(Error::Config(format!("unknown partition mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConfig {
    pub mode: PartitionMode,
    pub seed: u64,
    /// Fraction of held-out users whose cases become validation cases.
    pub val_fraction: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            mode: PartitionMode::PaperText,
            seed: 0,
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<Interaction>,
    pub validation: Vec<Interaction>,
    pub test: Vec<Interaction>,
}

impl Split {
    /// Train images grouped by user, in the order they appear in `train`.
    pub fn train_by_user(&self, n_users: usize) -> Vec<Vec<ImageId>> {
        group_by_user(&self.train, n_users)
    }

    pub fn train_interactions_by_user(&self, n_users: usize) -> Vec<Vec<&Interaction>> {
        let mut out = vec![Vec::new(); n_users];
        for it in &self.train {
            out[it.user.index()].push(it);
        }
        out
    }

    /// A copy with synthetic interactions appended to the train part.
    pub fn with_extra_train(&self, extra: impl IntoIterator<Item = Interaction>) -> Split {
        let mut out = self.clone();
        out.train.extend(extra);
        out
    }
}

fn group_by_user(list: &[Interaction], n_users: usize) -> Vec<Vec<ImageId>> {
    let mut out = vec![Vec::new(); n_users];
    for it in list {
        out[it.user.index()].push(it.image);
    }
    out
}

pub fn partition_leave_one_out(d: &Dataset, mode: PartitionMode, seed: u64) -> Split {
    partition(
        d,
        &PartitionConfig {
            mode,
            seed,
            ..PartitionConfig::default()
        },
    )
}

/// Per-user leave-one-out partition. Users with one image keep it in train.
/// For the rest, the user's images are put in key order, shuffled with a seed
/// derived from the user key, and cut according to `cfg.mode`. A seeded
/// subset of the users that have held-out cases (`round(val_fraction *
/// count)`, at least one and leaving at least one test user when there are
/// two or more) has all of its held-out cases diverted to validation. Only
/// keys feed the randomness, so row order in the source file does not matter.
pub fn partition(d: &Dataset, cfg: &PartitionConfig) -> Split {
    let mut train = Vec::new();
    let mut held: Vec<(UserId, Vec<ImageId>)> = Vec::new();

    for user in d.users() {
        let mut imgs = d.images_of_user(user).to_vec();
        imgs.sort_by_cached_key(|&p| d.image_key(p));
        if imgs.len() < 2 {
            train.extend(imgs);
            continue;
        }
        let mut rng = seed::rng(seed::derive(
            seed::derive(cfg.seed, seed::STREAM_PARTITION),
            key_salt(d, user),
        ));
        imgs.shuffle(&mut rng);
        let out = match cfg.mode {
            PartitionMode::PaperText => imgs.split_off(1),
            PartitionMode::OneOutTest => imgs.split_off(imgs.len() - 1),
        };
        train.extend(imgs);
        held.push((user, out));
    }

    let val_users = choose_validation_users(d, &held, cfg);
    let mut validation = Vec::new();
    let mut test = Vec::new();
    for (user, imgs) in held {
        if val_users.binary_search(&user).is_ok() {
            validation.extend(imgs);
        } else {
            test.extend(imgs);
        }
    }

    let to_interactions = |mut ids: Vec<ImageId>| -> Vec<Interaction> {
        ids.sort_unstable();
        ids.into_iter()
            .map(|p| d.interaction(p).expect("real image").clone())
            .collect()
    };
    Split {
        train: to_interactions(train),
        validation: to_interactions(validation),
        test: to_interactions(test),
    }
}

fn key_salt(d: &Dataset, user: UserId) -> u64 {
    crate::genaug::fnv1a64(d.user_key(user).as_bytes())
}

fn choose_validation_users(
    d: &Dataset,
    held: &[(UserId, Vec<ImageId>)],
    cfg: &PartitionConfig,
) -> Vec<UserId> {
    let n = held.len();
    if n == 0 || cfg.val_fraction <= 0.0 {
        return Vec::new();
    }
    let mut k = ((cfg.val_fraction * n as f64).round() as usize).max(1);
    if n >= 2 {
        k = k.min(n - 1);
    }
    let stream = seed::derive(cfg.seed, seed::STREAM_VALIDATION);
    let mut ranked: Vec<(u64, &str, UserId)> = held
        .iter()
        .map(|(u, _)| (seed::derive(stream, key_salt(d, *u)), d.user_key(*u), *u))
        .collect();
    ranked.sort_unstable();
    let mut chosen: Vec<UserId> = ranked.into_iter().take(k).map(|(_, _, u)| u).collect();
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_line() -> Dataset {
        Dataset::parse_tsv(
            "user\titem\timage\treview\na\tx\tp1\tnice\nb\tx\tp2\t\na\tx\tp3\tok\n",
            "restaurant",
        )
        .unwrap()
    }

    #[test]
    fn ingest_small_file() {
        let d = three_line();
        assert_eq!(d.n_users(), 2);
        assert_eq!(d.n_items(), 1);
        assert_eq!(d.n_images(), 3);
        assert_eq!(d.images_of_user(UserId(0)), &[ImageId(0), ImageId(2)]);
        assert!(!d.interactions()[1].has_review());
        assert_eq!(d.interactions()[1].review, "");
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(
            Dataset::parse_tsv("", "restaurant"),
            Err(Error::EmptyDataset)
        ));
        assert!(matches!(
            Dataset::parse_tsv("user\titem\timage\treview\n", "restaurant"),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn malformed_line_reports_number() {
        let err =
            Dataset::parse_tsv("user\titem\timage\treview\na\tx\tp1\t\nbroken\n", "r").unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_pair_is_rejected() {
        let err = Dataset::parse_tsv("a\tx\tp1\t\na\ty\tp1\t\n", "r").unwrap_err();
        assert!(matches!(err, Error::DuplicatePair { line: 2, .. }), "{err}");
        let err = Dataset::parse_tsv("a\tx\tp1\t\nb\tx\tp1\t\n", "r").unwrap_err();
        assert!(
            matches!(err, Error::ConflictingImage { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn crlf_and_missing_review_column() {
        let d = Dataset::parse_tsv("user\titem\timage\treview\r\na\tx\tp1\r\n", "r").unwrap();
        assert_eq!(d.interactions()[0].review, "");
        assert_eq!(d.keys().image_keys, vec!["p1".to_string()]);
    }

    #[test]
    fn save_and_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let d = three_line();
        let (tsv, side) = (dir.path().join("d.tsv"), dir.path().join("d.json"));
        d.save(&tsv, &side).unwrap();
        let back = Dataset::load(&tsv, &side).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.to_tsv(), d.to_tsv());
    }

    #[test]
    fn synthetic_ids_are_tagged() {
        let t = ImageId::transform(UserId(3), 7);
        let g = ImageId::generative(UserId(3), 7);
        assert!(t.is_synthetic() && g.is_synthetic());
        assert_ne!(t, g);
        assert_eq!(t.real_index(), None);
        assert!(!ImageId(12).is_synthetic());
    }

    fn user_with(n: usize) -> Dataset {
        let recs = (0..n).map(|k| Record::new("u", format!("i{}", k % 2), format!("p{k}"), ""));
        Dataset::from_records(recs, "restaurant").unwrap()
    }

    #[test]
    fn single_image_user_goes_to_train() {
        let s = partition_leave_one_out(&user_with(1), PartitionMode::PaperText, 3);
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (1, 0, 0));
    }

    #[test]
    fn default_mode_keeps_one_for_training() {
        let cfg = PartitionConfig {
            val_fraction: 0.0,
            ..PartitionConfig::default()
        };
        let s = partition(&user_with(5), &cfg);
        assert_eq!(s.train.len(), 1);
        assert_eq!(s.test.len(), 4);
        let cfg = PartitionConfig {
            mode: PartitionMode::OneOutTest,
            ..cfg
        };
        let s = partition(&user_with(5), &cfg);
        assert_eq!((s.train.len(), s.test.len()), (4, 1));
    }

    #[test]
    fn partition_is_deterministic() {
        let d = user_with(9);
        let a = partition_leave_one_out(&d, PartitionMode::PaperText, 11);
        let b = partition_leave_one_out(&d, PartitionMode::PaperText, 11);
        assert_eq!(a, b);
    }
}
