//! The iterative dual training loop. Each epoch runs three phases in order:
//! within-domain recommender training for both domains, mapping updates on
//! overlap-user embedding pairs, then cross-domain recommender training
//! where each domain's ratings are predicted by the *other* domain's model
//! through the mapping. Repeats until the total training loss stops moving.

use crate::data::{DomainDataset, OverlapRegistry};
use crate::embed::{embed_ids_only, AutoencoderConfig, EmbeddingTable};
use crate::error::{Error, Result};
use crate::fileio;
use crate::mapping::{update_mapping, AlignPair};
use crate::metrics;
use crate::recsys::{RatingExample, RecommenderConfig, RecommenderModel};
use crate::rng::rng_for;
use crate::tensor::OrthogonalMap;
use rand::seq::SliceRandom;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureMode {
    /// Embeddings come from autoencoders pre-trained on explicit features,
    /// then stay frozen through the dual loop.
    Features,
    /// Free per-id embeddings trained jointly with the recommenders.
    IdsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    A,
    B,
}

impl Domain {
    pub fn tag(&self) -> u64 {
        match self {
            Domain::A => 0xa,
            Domain::B => 0xb,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Domain::A => "a",
            Domain::B => "b",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub max_epochs: usize,
    pub convergence_eps: f64,
    /// Recommender learning rate.
    pub lr_rs: f64,
    /// Mapping learning rate, per overlap pair.
    pub lr_map: f64,
    pub batch: usize,
    /// Batch size for the mapping phase. The overlap loop walks pairs in
    /// small groups; the recommender batch stays at its own size.
    pub map_batch: usize,
    pub dropout_rate: f64,
    /// Hidden activation of the recommender networks.
    pub rs_activation: crate::mlp::Activation,
    /// Whether encoder-derived embedding tables are whitened; see
    /// [`EmbeddingTable::whiten`].
    pub whiten_embeddings: bool,
    pub feature_mode: FeatureMode,
    pub rs_hidden: Vec<usize>,
    pub ae_hidden: Vec<usize>,
    pub ae_epochs: usize,
    pub ae_lr: f64,
    /// Fraction of each domain's ratings held out for per-epoch validation
    /// reporting; never used for gradients.
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            max_epochs: 100,
            convergence_eps: 1e-5,
            lr_rs: 0.01,
            lr_map: 2.0,
            batch: 64,
            map_batch: 8,
            dropout_rate: 0.1,
            rs_activation: crate::mlp::Activation::Tanh,
            whiten_embeddings: true,
            feature_mode: FeatureMode::Features,
            rs_hidden: vec![32, 16],
            ae_hidden: vec![32, 16],
            ae_epochs: 200,
            ae_lr: 0.05,
            val_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::Validation("max_epochs must be ≥ 1".into()));
        }
        if self.convergence_eps <= 0.0 {
            return Err(Error::Validation("convergence_eps must be > 0".into()));
        }
        if self.batch == 0 || self.map_batch == 0 {
            return Err(Error::Validation("batch sizes must be ≥ 1".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::Validation("latent_dim must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Validation("val_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-epoch losses: the six training terms plus validation RMSE per domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// Within-domain rating loss, domain A / domain B.
    pub l_a: f64,
    pub l_b: f64,
    /// Mapping alignment losses (primal / dual), per overlap pair.
    pub l_oa: f64,
    pub l_ob: f64,
    /// Cross-domain rating losses.
    pub l_astar: f64,
    pub l_bstar: f64,
    pub val_a: f64,
    pub val_b: f64,
}

impl EpochRecord {
    /// Total training loss monitored for convergence (validation excluded).
    pub fn total(&self) -> f64 {
        self.l_a + self.l_b + self.l_oa + self.l_ob + self.l_astar + self.l_bstar
    }
}

#[derive(Debug, Clone)]
pub struct DualTrainerState {
    pub rs_a: RecommenderModel,
    pub rs_b: RecommenderModel,
    pub mapping: OrthogonalMap,
    pub user_emb_a: EmbeddingTable,
    pub item_emb_a: EmbeddingTable,
    pub user_emb_b: EmbeddingTable,
    pub item_emb_b: EmbeddingTable,
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
    pub converged: bool,
    /// Largest `‖XXᵀ − I‖_F` observed directly after any mapping update.
    pub max_ortho_drift: f64,
}

/// `|last total − previous total| < eps`; false with fewer than two epochs.
pub fn has_converged(history: &[EpochRecord], eps: f64) -> bool {
    match history {
        [.., prev, last] => (last.total() - prev.total()).abs() < eps,
        _ => false,
    }
}

fn feature_samples(map: &std::collections::BTreeMap<String, Vec<f64>>) -> Vec<Vec<f64>> {
    map.values().cloned().collect()
}

/// Builds the user and item embedding tables for one domain according to
/// the feature mode. Reads nothing from the other domain.
pub fn build_embeddings(
    ds: &DomainDataset,
    cfg: &TrainConfig,
    domain: Domain,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    match cfg.feature_mode {
        FeatureMode::IdsOnly => embed_ids_only(
            ds,
            cfg.latent_dim,
            crate::rng::subseed(cfg.seed, &[0xe, domain.tag()]),
        ),
        FeatureMode::Features => {
            if !ds.has_user_features() || !ds.has_item_features() {
                return Err(Error::Validation(format!(
                    "domain {} has no explicit features; use the ids-only mode",
                    ds.domain_name
                )));
            }
            let mut tables = Vec::with_capacity(2);
            for (kind_tag, features) in [(0u64, &ds.user_features), (1u64, &ds.item_features)] {
                // One autoencoder per domain and entity kind, trained on
                // that domain's feature rows only. The initialization seed
                // is shared across domains: with equally distributed
                // features the two domains then land in nearby code frames,
                // which is what the orthogonal alignment stage models.
                let ae_cfg = AutoencoderConfig {
                    latent_dim: cfg.latent_dim,
                    hidden: cfg.ae_hidden.clone(),
                    epochs: cfg.ae_epochs,
                    lr: cfg.ae_lr,
                    batch: cfg.batch,
                    seed: crate::rng::subseed(cfg.seed, &[0xae, kind_tag]),
                };
                let trained = crate::embed::train_autoencoder(&feature_samples(features), &ae_cfg)?;
                let mut table = EmbeddingTable::from_features(&trained.model, features)?;
                if cfg.whiten_embeddings {
                    // Encoder codes carry an arbitrary invertible distortion
                    // of whatever structure the features hold; whitening
                    // reduces it to a rotation, the family the alignment
                    // stage models.
                    table.whiten(0.5)?;
                }
                tables.push(table);
            }
            let items = tables.pop().expect("two tables");
            let users = tables.pop().expect("two tables");
            Ok((users, items))
        }
    }
}

/// Ratings resolved against the embedding tables.
struct PreparedDomain {
    /// (user row, item row, normalized rating) per rating record.
    triples: Vec<(usize, usize, f64)>,
    /// Indices into `triples` used for gradient steps.
    train_idx: Vec<usize>,
    /// Held-out indices for validation reporting.
    val_idx: Vec<usize>,
}

fn prepare_domain(
    ds: &DomainDataset,
    users: &EmbeddingTable,
    items: &EmbeddingTable,
    cfg: &TrainConfig,
    domain: Domain,
) -> Result<PreparedDomain> {
    let mut triples = Vec::with_capacity(ds.ratings.len());
    for r in &ds.ratings {
        let u = users
            .index_of(&r.user_id)
            .ok_or_else(|| Error::UnknownId(r.user_id.clone()))?;
        let i = items
            .index_of(&r.item_id)
            .ok_or_else(|| Error::UnknownId(r.item_id.clone()))?;
        if !(0.0..=1.0).contains(&r.rating) {
            return Err(Error::Validation(format!(
                "rating {} for ({}, {}) is not normalized",
                r.rating, r.user_id, r.item_id
            )));
        }
        triples.push((u, i, r.rating));
    }
    let mut order: Vec<usize> = (0..triples.len()).collect();
    let mut rng = rng_for(cfg.seed, &[0x7a, domain.tag()]);
    order.shuffle(&mut rng);
    let n_val = if triples.len() >= 2 {
        ((triples.len() as f64 * cfg.val_fraction).round() as usize).min(triples.len() - 1)
    } else {
        0
    };
    let val_idx = order[..n_val].to_vec();
    let train_idx = order[n_val..].to_vec();
    Ok(PreparedDomain {
        triples,
        train_idx,
        val_idx,
    })
}

struct BatchBuffer {
    users: Vec<Vec<f64>>,
    items: Vec<Vec<f64>>,
    ratings: Vec<f64>,
}

impl BatchBuffer {
    fn new() -> Self {
        Self {
            users: Vec::new(),
            items: Vec::new(),
            ratings: Vec::new(),
        }
    }

    /// Copies one batch out of the tables; copies keep the borrow checker
    /// happy when the tables themselves are updated right after.
    fn fill(
        &mut self,
        prepared: &PreparedDomain,
        chunk: &[usize],
        users: &EmbeddingTable,
        items: &EmbeddingTable,
        map_user: Option<&dyn Fn(&[f64]) -> Result<Vec<f64>>>,
    ) -> Result<()> {
        self.users.clear();
        self.items.clear();
        self.ratings.clear();
        for &idx in chunk {
            let (u, i, r) = prepared.triples[idx];
            let user_vec = match map_user {
                Some(f) => f(users.vector(u))?,
                None => users.vector(u).to_vec(),
            };
            self.users.push(user_vec);
            self.items.push(items.vector(i).to_vec());
            self.ratings.push(r);
        }
        Ok(())
    }

    fn examples(&self) -> Vec<RatingExample<'_>> {
        self.users
            .iter()
            .zip(&self.items)
            .zip(&self.ratings)
            .map(|((u, i), r)| (u.as_slice(), i.as_slice(), *r))
            .collect()
    }
}

fn divergence_context(e: Error, epoch: usize, phase: &str, batch: usize) -> Error {
    match e {
        Error::NumericDivergence(msg) => Error::NumericDivergence(format!(
            "epoch {epoch}, {phase}, batch {batch}: {msg}"
        )),
        other => other,
    }
}

/// Sample-weighted mean accumulator.
#[derive(Default)]
struct LossMean {
    total: f64,
    count: usize,
}

impl LossMean {
    fn add(&mut self, mean_loss: f64, n: usize) {
        self.total += mean_loss * n as f64;
        self.count += n;
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.total / self.count as f64
        }
    }
}

/// One full pass of the three training phases plus validation bookkeeping.
pub fn run_epoch(
    state: &mut DualTrainerState,
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    registry: &OverlapRegistry,
    cfg: &TrainConfig,
) -> Result<()> {
    cfg.validate()?;
    let epoch = state.epoch;
    let prep_a = prepare_domain(data_a, &state.user_emb_a, &state.item_emb_a, cfg, Domain::A)?;
    let prep_b = prepare_domain(data_b, &state.user_emb_b, &state.item_emb_b, cfg, Domain::B)?;

    // Phase 1: within-domain training, both domains.
    let l_a = phase_within(state, &prep_a, Domain::A, cfg, epoch)?;
    let l_b = phase_within(state, &prep_b, Domain::B, cfg, epoch)?;

    // Phase 2: mapping updates on overlap-user embedding pairs. With no
    // overlap there is nothing to align; the current map carries phase 3.
    let (l_oa, l_ob) = if registry.is_empty() {
        (0.0, 0.0)
    } else {
        phase_mapping(state, registry, cfg, epoch)?
    };

    // Phase 3: cross-domain training. Each domain's ratings train the other
    // domain's model through the (fixed) mapping.
    let l_astar = phase_cross(state, &prep_a, Domain::A, cfg, epoch)?;
    let l_bstar = phase_cross(state, &prep_b, Domain::B, cfg, epoch)?;

    let val_a = validation_rmse(state, &prep_a, Domain::A)?;
    let val_b = validation_rmse(state, &prep_b, Domain::B)?;

    let record = EpochRecord {
        l_a,
        l_b,
        l_oa,
        l_ob,
        l_astar,
        l_bstar,
        val_a,
        val_b,
    };
    if !record.total().is_finite() {
        return Err(Error::NumericDivergence(format!(
            "epoch {epoch}: non-finite loss record"
        )));
    }
    state.history.push(record);
    state.epoch += 1;
    Ok(())
}

fn phase_within(
    state: &mut DualTrainerState,
    prepared: &PreparedDomain,
    domain: Domain,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let mut order = prepared.train_idx.clone();
    let mut rng = rng_for(cfg.seed, &[epoch as u64, 1, domain.tag()]);
    order.shuffle(&mut rng);
    let mut loss = LossMean::default();
    let mut buffer = BatchBuffer::new();
    let joint_embeddings = cfg.feature_mode == FeatureMode::IdsOnly;
    for (batch_no, chunk) in order.chunks(cfg.batch).enumerate() {
        let (users, items, model) = match domain {
            Domain::A => (&state.user_emb_a, &state.item_emb_a, &mut state.rs_a),
            Domain::B => (&state.user_emb_b, &state.item_emb_b, &mut state.rs_b),
        };
        buffer.fill(prepared, chunk, users, items, None)?;
        let examples = buffer.examples();
        if joint_embeddings {
            let (batch_loss, grads) = model
                .train_step_with_embedding_grads(&examples, cfg.lr_rs, &mut rng)
                .map_err(|e| divergence_context(e, epoch, "phase 1 (within-domain)", batch_no))?;
            loss.add(batch_loss, chunk.len());
            let scale = 1.0 / chunk.len() as f64;
            let (users, items) = match domain {
                Domain::A => (&mut state.user_emb_a, &mut state.item_emb_a),
                Domain::B => (&mut state.user_emb_b, &mut state.item_emb_b),
            };
            for (&idx, (du, di)) in chunk.iter().zip(&grads.per_example) {
                let (u, i, _) = prepared.triples[idx];
                let du_scaled: Vec<f64> = du.iter().map(|g| g * scale).collect();
                let di_scaled: Vec<f64> = di.iter().map(|g| g * scale).collect();
                users.apply_grad(u, &du_scaled, cfg.lr_rs);
                items.apply_grad(i, &di_scaled, cfg.lr_rs);
            }
        } else {
            let batch_loss = model
                .train_step(&examples, cfg.lr_rs, &mut rng)
                .map_err(|e| divergence_context(e, epoch, "phase 1 (within-domain)", batch_no))?;
            loss.add(batch_loss, chunk.len());
        }
    }
    Ok(loss.mean())
}

fn phase_mapping(
    state: &mut DualTrainerState,
    registry: &OverlapRegistry,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(f64, f64)> {
    // Gather the overlap pair embeddings once; the mapping step reads them
    // but never writes embeddings.
    let mut pairs_owned: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(registry.len());
    for (id_a, id_b) in &registry.pairs {
        let a = state
            .user_emb_a
            .get(id_a)
            .ok_or_else(|| Error::UnknownId(id_a.clone()))?;
        let b = state
            .user_emb_b
            .get(id_b)
            .ok_or_else(|| Error::UnknownId(id_b.clone()))?;
        pairs_owned.push((a.to_vec(), b.to_vec()));
    }
    if epoch == 0 {
        // Pick the reachable orthogonal component (rotation vs reflection)
        // once, before the first gradient step.
        let all_pairs: Vec<AlignPair> = pairs_owned
            .iter()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .collect();
        state.mapping = crate::mapping::orient_to_pairs(&state.mapping, &all_pairs)?;
    }
    let mut order: Vec<usize> = (0..pairs_owned.len()).collect();
    let mut rng = rng_for(cfg.seed, &[epoch as u64, 2]);
    order.shuffle(&mut rng);
    let mut primal = LossMean::default();
    let mut dual = LossMean::default();
    for (batch_no, chunk) in order.chunks(cfg.map_batch).enumerate() {
        let pairs: Vec<AlignPair> = chunk
            .iter()
            .map(|&i| {
                let (a, b) = &pairs_owned[i];
                (a.as_slice(), b.as_slice())
            })
            .collect();
        let lr = cfg.lr_map / pairs.len() as f64;
        let (next, p, d) = update_mapping(&state.mapping, &pairs, lr)
            .map_err(|e| divergence_context(e, epoch, "phase 2 (mapping)", batch_no))?;
        state.mapping = next;
        let drift = state.mapping.orthogonality_error();
        if drift > state.max_ortho_drift {
            state.max_ortho_drift = drift;
        }
        primal.add(p / pairs.len() as f64, pairs.len());
        dual.add(d / pairs.len() as f64, pairs.len());
    }
    Ok((primal.mean(), dual.mean()))
}

fn phase_cross(
    state: &mut DualTrainerState,
    prepared: &PreparedDomain,
    source: Domain,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<f64> {
    let mut order = prepared.train_idx.clone();
    let mut rng = rng_for(cfg.seed, &[epoch as u64, 3, source.tag()]);
    order.shuffle(&mut rng);
    let mut loss = LossMean::default();
    let mut buffer = BatchBuffer::new();
    let mapping = state.mapping.clone();
    for (batch_no, chunk) in order.chunks(cfg.batch).enumerate() {
        // Domain-A ratings are estimated by the domain-B model on mapped
        // user embeddings (and vice versa with the inverse map); only the
        // recommender parameters move, the mapping stays fixed here.
        let (users, items, model) = match source {
            Domain::A => (&state.user_emb_a, &state.item_emb_a, &mut state.rs_b),
            Domain::B => (&state.user_emb_b, &state.item_emb_b, &mut state.rs_a),
        };
        let map_user: Box<dyn Fn(&[f64]) -> Result<Vec<f64>>> = match source {
            Domain::A => Box::new(|u: &[f64]| mapping.apply(u)),
            Domain::B => Box::new(|u: &[f64]| mapping.apply_transpose(u)),
        };
        buffer.fill(prepared, chunk, users, items, Some(map_user.as_ref()))?;
        let examples = buffer.examples();
        let batch_loss = model
            .train_cross_step(&examples, cfg.lr_rs, &mut rng)
            .map_err(|e| divergence_context(e, epoch, "phase 3 (cross-domain)", batch_no))?;
        loss.add(batch_loss, chunk.len());
    }
    Ok(loss.mean())
}

fn validation_rmse(
    state: &DualTrainerState,
    prepared: &PreparedDomain,
    domain: Domain,
) -> Result<f64> {
    if prepared.val_idx.is_empty() {
        return Ok(0.0);
    }
    let (users, items, model) = match domain {
        Domain::A => (&state.user_emb_a, &state.item_emb_a, &state.rs_a),
        Domain::B => (&state.user_emb_b, &state.item_emb_b, &state.rs_b),
    };
    let mut preds = Vec::with_capacity(prepared.val_idx.len());
    let mut truths = Vec::with_capacity(prepared.val_idx.len());
    for &idx in &prepared.val_idx {
        let (u, i, r) = prepared.triples[idx];
        preds.push(model.predict(users.vector(u), items.vector(i))?);
        truths.push(r);
    }
    metrics::rmse(&preds, &truths)
}

/// Initializes models, mapping, and embeddings; the mapping starts at the
/// identity, a valid orthogonal point.
pub fn init_state(
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    cfg: &TrainConfig,
) -> Result<DualTrainerState> {
    cfg.validate()?;
    let (user_emb_a, item_emb_a) = build_embeddings(data_a, cfg, Domain::A)?;
    let (user_emb_b, item_emb_b) = build_embeddings(data_b, cfg, Domain::B)?;
    let rs_cfg = |tag: u64| RecommenderConfig {
        latent_dim: cfg.latent_dim,
        hidden: cfg.rs_hidden.clone(),
        dropout_rate: cfg.dropout_rate,
        hidden_activation: cfg.rs_activation,
        seed: crate::rng::subseed(cfg.seed, &[0x5, tag]),
    };
    Ok(DualTrainerState {
        rs_a: RecommenderModel::init(&rs_cfg(Domain::A.tag()))?,
        rs_b: RecommenderModel::init(&rs_cfg(Domain::B.tag()))?,
        mapping: OrthogonalMap::identity(cfg.latent_dim),
        user_emb_a,
        item_emb_a,
        user_emb_b,
        item_emb_b,
        epoch: 0,
        history: Vec::new(),
        converged: false,
        max_ortho_drift: 0.0,
    })
}

/// Full training run: epochs until the total loss moves less than
/// `convergence_eps` between epochs, or `max_epochs`.
pub fn train(
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    registry: &OverlapRegistry,
    cfg: &TrainConfig,
) -> Result<DualTrainerState> {
    let mut state = init_state(data_a, data_b, cfg)?;
    for _ in 0..cfg.max_epochs {
        run_epoch(&mut state, data_a, data_b, registry, cfg)?;
        if has_converged(&state.history, cfg.convergence_eps) {
            state.converged = true;
            break;
        }
    }
    Ok(state)
}

/// Final-stage prediction: the within-domain path serves lookups; the
/// cross-mapped path is a training signal only.
pub fn predict_final(
    state: &DualTrainerState,
    domain: Domain,
    user_id: &str,
    item_id: &str,
) -> Result<f64> {
    let (users, items, model) = match domain {
        Domain::A => (&state.user_emb_a, &state.item_emb_a, &state.rs_a),
        Domain::B => (&state.user_emb_b, &state.item_emb_b, &state.rs_b),
    };
    let u = users
        .get(user_id)
        .ok_or_else(|| Error::UnknownId(user_id.to_string()))?;
    let i = items
        .get(item_id)
        .ok_or_else(|| Error::UnknownId(item_id.to_string()))?;
    model.predict(u, i)
}

/// Scores test ratings with the trained state: rows of
/// `(user, item, predicted, truth)` ready for the metrics module.
pub fn score_ratings(
    state: &DualTrainerState,
    domain: Domain,
    test: &DomainDataset,
) -> Result<Vec<(String, String, f64, f64)>> {
    test.ratings
        .iter()
        .map(|r| {
            predict_final(state, domain, &r.user_id, &r.item_id)
                .map(|p| (r.user_id.clone(), r.item_id.clone(), p, r.rating))
        })
        .collect()
}

/// No-transfer reference: one domain, within-domain phase only. This is the
/// single-domain MLP baseline the transfer experiments compare against.
#[derive(Debug, Clone)]
pub struct SingleDomainModel {
    pub rs: RecommenderModel,
    pub user_emb: EmbeddingTable,
    pub item_emb: EmbeddingTable,
    /// (train loss, validation RMSE) per epoch.
    pub history: Vec<(f64, f64)>,
    pub converged: bool,
}

pub fn train_single_domain(ds: &DomainDataset, cfg: &TrainConfig) -> Result<SingleDomainModel> {
    cfg.validate()?;
    let (user_emb, item_emb) = build_embeddings(ds, cfg, Domain::A)?;
    let rs = RecommenderModel::init(&RecommenderConfig {
        latent_dim: cfg.latent_dim,
        hidden: cfg.rs_hidden.clone(),
        dropout_rate: cfg.dropout_rate,
        hidden_activation: cfg.rs_activation,
        seed: crate::rng::subseed(cfg.seed, &[0x5, Domain::A.tag()]),
    })?;
    let mut state = DualTrainerState {
        rs_a: rs,
        rs_b: RecommenderModel::init(&RecommenderConfig {
            latent_dim: cfg.latent_dim,
            hidden: vec![],
            dropout_rate: 0.0,
            hidden_activation: cfg.rs_activation,
            seed: 0,
        })?,
        mapping: OrthogonalMap::identity(cfg.latent_dim),
        user_emb_a: user_emb,
        item_emb_a: item_emb,
        user_emb_b: EmbeddingTable::random_unit(std::iter::empty(), cfg.latent_dim, 0)?,
        item_emb_b: EmbeddingTable::random_unit(std::iter::empty(), cfg.latent_dim, 0)?,
        epoch: 0,
        history: Vec::new(),
        converged: false,
        max_ortho_drift: 0.0,
    };
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..cfg.max_epochs {
        let prep = prepare_domain(ds, &state.user_emb_a, &state.item_emb_a, cfg, Domain::A)?;
        let epoch = state.epoch;
        let train_loss = phase_within(&mut state, &prep, Domain::A, cfg, epoch)?;
        let val = validation_rmse(&state, &prep, Domain::A)?;
        history.push((train_loss, val));
        state.epoch += 1;
        if history.len() >= 2 {
            let n = history.len();
            if (history[n - 1].0 - history[n - 2].0).abs() < cfg.convergence_eps {
                converged = true;
                break;
            }
        }
    }
    Ok(SingleDomainModel {
        rs: state.rs_a,
        user_emb: state.user_emb_a,
        item_emb: state.item_emb_a,
        history,
        converged,
    })
}

impl SingleDomainModel {
    pub fn predict(&self, user_id: &str, item_id: &str) -> Result<f64> {
        let u = self
            .user_emb
            .get(user_id)
            .ok_or_else(|| Error::UnknownId(user_id.to_string()))?;
        let i = self
            .item_emb
            .get(item_id)
            .ok_or_else(|| Error::UnknownId(item_id.to_string()))?;
        self.rs.predict(u, i)
    }

    pub fn score_ratings(&self, test: &DomainDataset) -> Result<Vec<(String, String, f64, f64)>> {
        test.ratings
            .iter()
            .map(|r| {
                self.predict(&r.user_id, &r.item_id)
                    .map(|p| (r.user_id.clone(), r.item_id.clone(), p, r.rating))
            })
            .collect()
    }
}

/// Writes the per-epoch loss record in the
/// `epoch,L_A,L_B,L_oA,L_oB,L_Astar,L_Bstar,val_A,val_B` format.
pub fn write_history_csv(history: &[EpochRecord], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,L_A,L_B,L_oA,L_oB,L_Astar,L_Bstar,val_A,val_B\n");
    for (i, r) in history.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            i + 1,
            r.l_a,
            r.l_b,
            r.l_oa,
            r.l_ob,
            r.l_astar,
            r.l_bstar,
            r.val_a,
            r.val_b
        );
    }
    fileio::write_file(path, &out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_synthetic_pair, SyntheticConfig};

    fn small_synth() -> SyntheticConfig {
        SyntheticConfig {
            users_per_domain: 40,
            items_per_domain: 25,
            latent_dim: 4,
            overlap_count: 12,
            noise_std: 0.0,
            feature_noise_std: 0.0,
            user_feature_dim: 6,
            item_feature_dim: 6,
            ratings_per_user: 10,
            seed: 5,
        }
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            latent_dim: 4,
            max_epochs: 3,
            lr_map: 2.0,
            batch: 32,
            dropout_rate: 0.0,
            ae_epochs: 15,
            ae_hidden: vec![8],
            rs_hidden: vec![8, 4],
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn convergence_flag_rules() {
        let rec = |total: f64| EpochRecord {
            l_a: total,
            l_b: 0.0,
            l_oa: 0.0,
            l_ob: 0.0,
            l_astar: 0.0,
            l_bstar: 0.0,
            val_a: 0.0,
            val_b: 0.0,
        };
        assert!(has_converged(&[rec(0.5), rec(0.5)], 1e-5));
        assert!(!has_converged(&[rec(0.5), rec(0.4)], 1e-5));
        assert!(!has_converged(&[rec(0.3)], 1e-5));
        assert!(!has_converged(&[], 1e-5));
    }

    #[test]
    fn empty_overlap_epoch_still_completes() {
        let pair = generate_synthetic_pair(&small_synth()).unwrap();
        let cfg = small_cfg();
        let empty = OverlapRegistry::default();
        let mut state = init_state(&pair.domain_a, &pair.domain_b, &cfg).unwrap();
        run_epoch(&mut state, &pair.domain_a, &pair.domain_b, &empty, &cfg).unwrap();
        assert_eq!(state.epoch, 1);
        let rec = state.history[0];
        assert_eq!(rec.l_oa, 0.0);
        assert_eq!(rec.l_ob, 0.0);
        assert!(rec.l_astar > 0.0);
        // Mapping untouched: still the identity.
        assert!(state
            .mapping
            .matrix()
            .frobenius_distance(&crate::tensor::DenseMatrix::identity(4))
            .unwrap()
            < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let pair = generate_synthetic_pair(&small_synth()).unwrap();
        let cfg = small_cfg();
        let s1 = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
        let s2 = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
        assert_eq!(s1.rs_a.mlp().params_flat(), s2.rs_a.mlp().params_flat());
        assert_eq!(s1.rs_b.mlp().params_flat(), s2.rs_b.mlp().params_flat());
        assert_eq!(s1.mapping.matrix(), s2.mapping.matrix());
        assert_eq!(s1.user_emb_a, s2.user_emb_a);
        assert_eq!(s1.history, s2.history);
    }

    #[test]
    fn mapping_stays_orthogonal_through_training() {
        let pair = generate_synthetic_pair(&small_synth()).unwrap();
        let mut cfg = small_cfg();
        cfg.max_epochs = 5;
        let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
        assert!(state.max_ortho_drift <= 1e-6, "drift {}", state.max_ortho_drift);
        assert!(state.mapping.orthogonality_error() <= 1e-6);
        assert_eq!(state.history.len(), state.epoch);
    }

    #[test]
    fn losses_are_finite_and_nonnegative() {
        let pair = generate_synthetic_pair(&small_synth()).unwrap();
        let cfg = small_cfg();
        let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
        for r in &state.history {
            for v in [r.l_a, r.l_b, r.l_oa, r.l_ob, r.l_astar, r.l_bstar, r.val_a, r.val_b] {
                assert!(v.is_finite() && v >= 0.0);
            }
        }
    }

    #[test]
    fn validation_improves_on_noiseless_planted_data() {
        let pair = generate_synthetic_pair(&small_synth()).unwrap();
        let mut cfg = small_cfg();
        cfg.max_epochs = 30;
        cfg.convergence_eps = 1e-12; // run all epochs
        let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
        let first = &state.history[0];
        let last = state.history.last().unwrap();
        assert!(
            last.val_a < first.val_a && last.val_b < first.val_b,
            "val A {} -> {}, val B {} -> {}",
            first.val_a,
            last.val_a,
            first.val_b,
            last.val_b
        );
    }

    #[test]
    fn ids_only_mode_trains_embeddings() {
        let pair = generate_synthetic_pair(&small_synth()).unwrap();
        let mut cfg = small_cfg();
        cfg.feature_mode = FeatureMode::IdsOnly;
        cfg.max_epochs = 2;
        let before = init_state(&pair.domain_a, &pair.domain_b, &cfg).unwrap();
        let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
        // Free embeddings must have moved and stayed inside the unit ball.
        assert_ne!(before.user_emb_a, state.user_emb_a);
        for idx in 0..state.user_emb_a.len() {
            let sq: f64 = state.user_emb_a.vector(idx).iter().map(|v| v * v).sum();
            assert!(sq <= 1.0 + crate::embed::UNIT_BALL_SLACK);
        }
    }

    #[test]
    fn predict_final_rejects_unknown_ids() {
        let pair = generate_synthetic_pair(&small_synth()).unwrap();
        let cfg = small_cfg();
        let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
        assert!(matches!(
            predict_final(&state, Domain::A, "nobody", "ia00000"),
            Err(Error::UnknownId(_))
        ));
        let r = predict_final(&state, Domain::A, "ou00000", "ia00000").unwrap();
        assert!(r > 0.0 && r < 1.0);
    }

    #[test]
    fn single_domain_baseline_trains_and_predicts() {
        let pair = generate_synthetic_pair(&small_synth()).unwrap();
        let mut cfg = small_cfg();
        cfg.max_epochs = 10;
        let model = train_single_domain(&pair.domain_a, &cfg).unwrap();
        assert!(!model.history.is_empty());
        let r = model.predict("ou00000", "ia00000").unwrap();
        assert!(r > 0.0 && r < 1.0);
        // Training loss should drop.
        assert!(model.history.last().unwrap().0 < model.history[0].0);
    }

    #[test]
    fn history_csv_has_expected_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let rec = EpochRecord {
            l_a: 0.5,
            l_b: 0.25,
            l_oa: 0.1,
            l_ob: 0.1,
            l_astar: 0.3,
            l_bstar: 0.2,
            val_a: 0.4,
            val_b: 0.35,
        };
        write_history_csv(&[rec], &path).unwrap();
        let lines = fileio::read_lines(&path).unwrap();
        assert_eq!(lines[0], "epoch,L_A,L_B,L_oA,L_oB,L_Astar,L_Bstar,val_A,val_B");
        assert!(lines[1].starts_with("1,0.5,0.25,"));
    }
}
