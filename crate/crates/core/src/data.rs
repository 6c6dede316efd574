//! Datasets for one rating domain: records, feature maps, normalization,
//! overlap-user registry, k-fold splitting, overlap subsampling, and the
//! on-disk directory format.

use crate::error::{Error, Result};
use crate::fileio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

/// One user-item rating. `rating` is raw until [`normalize_ratings`] maps it
/// into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingRecord {
    pub user_id: String,
    pub item_id: String,
    pub rating: f64,
    /// Seconds; 0 when the source had no timestamp.
    pub timestamp: i64,
}

/// Explicit feature vector for a user or an item.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub owner_id: String,
    pub values: Vec<f64>,
}

/// All data for one domain. Immutable after load/generation in normal use.
#[derive(Debug, Clone)]
pub struct DomainDataset {
    pub domain_name: String,
    pub ratings: Vec<RatingRecord>,
    pub user_features: BTreeMap<String, Vec<f64>>,
    pub item_features: BTreeMap<String, Vec<f64>>,
    /// (min, max) of the raw source scale; (0, 1) once normalized.
    pub rating_scale: (f64, f64),
}

impl DomainDataset {
    pub fn new(
        domain_name: impl Into<String>,
        ratings: Vec<RatingRecord>,
        user_features: BTreeMap<String, Vec<f64>>,
        item_features: BTreeMap<String, Vec<f64>>,
        rating_scale: (f64, f64),
    ) -> Result<Self> {
        let ds = Self {
            domain_name: domain_name.into(),
            ratings,
            user_features,
            item_features,
            rating_scale,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Users with a rating or a feature row.
    pub fn users(&self) -> BTreeSet<String> {
        let mut set: BTreeSet<String> =
            self.ratings.iter().map(|r| r.user_id.clone()).collect();
        set.extend(self.user_features.keys().cloned());
        set
    }

    pub fn items(&self) -> BTreeSet<String> {
        let mut set: BTreeSet<String> =
            self.ratings.iter().map(|r| r.item_id.clone()).collect();
        set.extend(self.item_features.keys().cloned());
        set
    }

    pub fn has_user_features(&self) -> bool {
        !self.user_features.is_empty()
    }

    pub fn has_item_features(&self) -> bool {
        !self.item_features.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rating_scale;
        if !(lo < hi) {
            return Err(Error::Validation(format!(
                "rating scale must satisfy min < max, got ({lo}, {hi})"
            )));
        }
        let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
        for r in &self.ratings {
            if !r.rating.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite rating for ({}, {})",
                    r.user_id, r.item_id
                )));
            }
            if !seen.insert((r.user_id.as_str(), r.item_id.as_str())) {
                return Err(Error::Validation(format!(
                    "duplicate rating for ({}, {})",
                    r.user_id, r.item_id
                )));
            }
            if self.has_user_features() && !self.user_features.contains_key(&r.user_id) {
                return Err(Error::Validation(format!(
                    "user {} has a rating but no feature row",
                    r.user_id
                )));
            }
            if self.has_item_features() && !self.item_features.contains_key(&r.item_id) {
                return Err(Error::Validation(format!(
                    "item {} has a rating but no feature row",
                    r.item_id
                )));
            }
        }
        check_uniform_dims(&self.user_features, "user")?;
        check_uniform_dims(&self.item_features, "item")?;
        Ok(())
    }

    /// Replaces the rating list, keeping everything else.
    pub fn with_ratings(&self, ratings: Vec<RatingRecord>) -> DomainDataset {
        DomainDataset {
            domain_name: self.domain_name.clone(),
            ratings,
            user_features: self.user_features.clone(),
            item_features: self.item_features.clone(),
            rating_scale: self.rating_scale,
        }
    }
}

fn check_uniform_dims(map: &BTreeMap<String, Vec<f64>>, kind: &str) -> Result<()> {
    let mut dim = None;
    for (id, values) in map {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{kind} {id} has non-finite feature values"
            )));
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Validation(format!(
                    "{kind} {id} has {} feature values, expected {d}",
                    values.len()
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Pairs of ids naming the same person in two domains.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverlapRegistry {
    pub pairs: Vec<(String, String)>,
}

impl OverlapRegistry {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Min-max rescaling of every rating into `[0, 1]`; the recorded scale
/// becomes `(0, 1)`, which makes the operation idempotent.
pub fn normalize_ratings(ds: &DomainDataset) -> Result<DomainDataset> {
    let (lo, hi) = ds.rating_scale;
    if !(lo < hi) {
        return Err(Error::Validation(format!(
            "rating scale must satisfy min < max, got ({lo}, {hi})"
        )));
    }
    let mut ratings = Vec::with_capacity(ds.ratings.len());
    for r in &ds.ratings {
        if r.rating < lo || r.rating > hi {
            return Err(Error::Validation(format!(
                "rating {} for ({}, {}) is outside the declared scale [{lo}, {hi}]",
                r.rating, r.user_id, r.item_id
            )));
        }
        ratings.push(RatingRecord {
            rating: (r.rating - lo) / (hi - lo),
            ..r.clone()
        });
    }
    let mut out = ds.with_ratings(ratings);
    out.rating_scale = (0.0, 1.0);
    Ok(out)
}

/// Users present in both domains, matched by shared id and sorted by id.
pub fn find_overlap(a: &DomainDataset, b: &DomainDataset) -> OverlapRegistry {
    let users_b = b.users();
    let pairs = a
        .users()
        .into_iter()
        .filter(|u| users_b.contains(u))
        .map(|u| (u.clone(), u))
        .collect();
    OverlapRegistry { pairs }
}

/// Seeded k-fold partition of the rating list. Every rating lands in exactly
/// one test fold; fold sizes differ by at most one.
pub fn kfold_split(
    ds: &DomainDataset,
    k: usize,
    seed: u64,
) -> Result<Vec<(DomainDataset, DomainDataset)>> {
    if k < 2 {
        return Err(Error::Validation(format!("need k ≥ 2 folds, got {k}")));
    }
    if ds.ratings.len() < k {
        return Err(Error::Validation(format!(
            "cannot split {} ratings into {k} folds",
            ds.ratings.len()
        )));
    }
    let mut order: Vec<usize> = (0..ds.ratings.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut fold_of = vec![0usize; ds.ratings.len()];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of[idx] = pos % k;
    }
    let mut out = Vec::with_capacity(k);
    for fold in 0..k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (idx, r) in ds.ratings.iter().enumerate() {
            if fold_of[idx] == fold {
                test.push(r.clone());
            } else {
                train.push(r.clone());
            }
        }
        out.push((ds.with_ratings(train), ds.with_ratings(test)));
    }
    Ok(out)
}

/// What to do with the rating records of de-selected overlap users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsampleMode {
    /// Keep their ratings; each side simply becomes an ordinary per-domain
    /// user. Dataset size stays constant, only linkage is removed.
    Unlink,
    /// Delete their rating records from both domains.
    Discard,
}

/// Dataset edit implied by an overlap subsampling decision.
#[derive(Debug, Clone)]
pub struct OverlapEditPlan {
    pub mode: SubsampleMode,
    /// Pairs removed from the registry.
    pub removed: Vec<(String, String)>,
}

impl OverlapEditPlan {
    /// Applies the plan. Only `Discard` touches the datasets.
    pub fn apply(&self, a: &mut DomainDataset, b: &mut DomainDataset) {
        if self.mode == SubsampleMode::Unlink || self.removed.is_empty() {
            return;
        }
        let drop_a: BTreeSet<&str> = self.removed.iter().map(|(x, _)| x.as_str()).collect();
        let drop_b: BTreeSet<&str> = self.removed.iter().map(|(_, y)| y.as_str()).collect();
        a.ratings.retain(|r| !drop_a.contains(r.user_id.as_str()));
        b.ratings.retain(|r| !drop_b.contains(r.user_id.as_str()));
    }
}

/// Keeps `n` uniformly chosen pairs (seeded) and plans the fate of the rest.
pub fn subsample_overlap(
    reg: &OverlapRegistry,
    n: usize,
    mode: SubsampleMode,
    seed: u64,
) -> Result<(OverlapRegistry, OverlapEditPlan)> {
    if n > reg.len() {
        return Err(Error::Validation(format!(
            "cannot keep {n} of {} overlap pairs",
            reg.len()
        )));
    }
    let mut order: Vec<usize> = (0..reg.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut keep: Vec<usize> = order[..n].to_vec();
    keep.sort_unstable();
    let keep_set: BTreeSet<usize> = keep.iter().copied().collect();

    let kept = OverlapRegistry {
        pairs: keep.iter().map(|&i| reg.pairs[i].clone()).collect(),
    };
    let removed = (0..reg.len())
        .filter(|i| !keep_set.contains(i))
        .map(|i| reg.pairs[i].clone())
        .collect();
    Ok((kept, OverlapEditPlan { mode, removed }))
}

const RATINGS_FILE: &str = "ratings.csv";
const USER_FEATURES_FILE: &str = "user_features.csv";
const ITEM_FEATURES_FILE: &str = "item_features.csv";
const META_FILE: &str = "meta.csv";

/// Reads one domain directory (`ratings.csv`, `meta.csv`, optional
/// `user_features.csv` / `item_features.csv`). The raw rating scale comes
/// from the metadata; normalization is not applied here.
pub fn load_domain(dir: &Path) -> Result<DomainDataset> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir.display().to_string(),
            std::io::Error::new(std::io::ErrorKind::NotFound, "domain directory not found"),
        ));
    }
    let meta_path = dir.join(META_FILE);
    let meta_lines = fileio::read_lines(&meta_path)?;
    fileio::expect_header(&meta_lines, "key,value", &meta_path)?;
    let mut meta: BTreeMap<String, String> = BTreeMap::new();
    for (i, row) in meta_lines.iter().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let fields = fileio::split_row(row, 2, &meta_path, i + 1)?;
        meta.insert(fields[0].trim().to_string(), fields[1].trim().to_string());
    }
    let get_meta = |key: &str| -> Result<&String> {
        meta.get(key).ok_or_else(|| Error::Parse {
            file: meta_path.display().to_string(),
            line: 1,
            message: format!("missing required key {key:?}"),
        })
    };
    let rating_min = fileio::parse_f64(get_meta("rating_min")?, &meta_path, 1)?;
    let rating_max = fileio::parse_f64(get_meta("rating_max")?, &meta_path, 1)?;
    let domain_name = get_meta("domain_name")?.clone();

    let ratings_path = dir.join(RATINGS_FILE);
    let lines = fileio::read_lines(&ratings_path)?;
    fileio::expect_header(&lines, "user_id,item_id,rating,timestamp", &ratings_path)?;
    // Duplicate (user, item) rows keep the latest timestamp.
    let mut latest: BTreeMap<(String, String), RatingRecord> = BTreeMap::new();
    for (i, row) in lines.iter().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let fields = fileio::split_row(row, 4, &ratings_path, i + 1)?;
        let record = RatingRecord {
            user_id: fields[0].trim().to_string(),
            item_id: fields[1].trim().to_string(),
            rating: fileio::parse_f64(fields[2], &ratings_path, i + 1)?,
            timestamp: fileio::parse_i64(fields[3], &ratings_path, i + 1)?,
        };
        let key = (record.user_id.clone(), record.item_id.clone());
        match latest.get(&key) {
            Some(existing) if existing.timestamp >= record.timestamp => {}
            _ => {
                latest.insert(key, record);
            }
        }
    }
    let ratings: Vec<RatingRecord> = latest.into_values().collect();

    let user_features = load_feature_file(&dir.join(USER_FEATURES_FILE), "user_id")?;
    let item_features = load_feature_file(&dir.join(ITEM_FEATURES_FILE), "item_id")?;

    DomainDataset::new(
        domain_name,
        ratings,
        user_features,
        item_features,
        (rating_min, rating_max),
    )
}

fn load_feature_file(path: &Path, id_column: &str) -> Result<BTreeMap<String, Vec<f64>>> {
    if !path.exists() {
        return Ok(BTreeMap::new());
    }
    let lines = fileio::read_lines(path)?;
    let header = lines.first().ok_or_else(|| Error::Parse {
        file: path.display().to_string(),
        line: 1,
        message: "empty feature file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&id_column) || cols.len() < 2 {
        return Err(Error::Parse {
            file: path.display().to_string(),
            line: 1,
            message: format!("expected header `{id_column},f1..fn`, got {header:?}"),
        });
    }
    let width = cols.len();
    let mut map = BTreeMap::new();
    for (i, row) in lines.iter().enumerate().skip(1) {
        if row.trim().is_empty() {
            continue;
        }
        let fields = fileio::split_row(row, width, path, i + 1)?;
        let id = fields[0].trim().to_string();
        let values = fields[1..]
            .iter()
            .map(|f| fileio::parse_f64(f, path, i + 1))
            .collect::<Result<Vec<f64>>>()?;
        if map.insert(id.clone(), values).is_some() {
            return Err(Error::Validation(format!(
                "duplicate feature row for {id} in {}",
                path.display()
            )));
        }
    }
    Ok(map)
}

/// Writes a dataset in the directory layout read by [`load_domain`].
pub fn save_domain(ds: &DomainDataset, dir: &Path) -> Result<()> {
    for id in ds.users().iter().chain(ds.items().iter()) {
        if id.contains(',') || id.contains('\n') {
            return Err(Error::Validation(format!(
                "id {id:?} contains a forbidden character"
            )));
        }
    }
    let mut meta = String::from("key,value\n");
    let _ = writeln!(meta, "rating_min,{}", ds.rating_scale.0);
    let _ = writeln!(meta, "rating_max,{}", ds.rating_scale.1);
    let _ = writeln!(meta, "domain_name,{}", ds.domain_name);
    fileio::write_file(&dir.join(META_FILE), &meta)?;

    let mut ratings = String::from("user_id,item_id,rating,timestamp\n");
    for r in &ds.ratings {
        let _ = writeln!(
            ratings,
            "{},{},{},{}",
            r.user_id, r.item_id, r.rating, r.timestamp
        );
    }
    fileio::write_file(&dir.join(RATINGS_FILE), &ratings)?;

    if ds.has_user_features() {
        fileio::write_file(
            &dir.join(USER_FEATURES_FILE),
            &feature_csv(&ds.user_features, "user_id"),
        )?;
    }
    if ds.has_item_features() {
        fileio::write_file(
            &dir.join(ITEM_FEATURES_FILE),
            &feature_csv(&ds.item_features, "item_id"),
        )?;
    }
    Ok(())
}

fn feature_csv(map: &BTreeMap<String, Vec<f64>>, id_column: &str) -> String {
    let dim = map.values().next().map(|v| v.len()).unwrap_or(0);
    let mut out = String::from(id_column);
    for i in 1..=dim {
        let _ = write!(out, ",f{i}");
    }
    out.push('\n');
    for (id, values) in map {
        out.push_str(id);
        for v in values {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
