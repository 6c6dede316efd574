//! Synthetic coupled-domain data: two rating domains whose overlap users
//! share one latent preference vector, with the second domain's copy carried
//! through a planted orthogonal map. Gives the whole pipeline ground truth
//! to recover.

use crate::data::{DomainDataset, OverlapRegistry, RatingRecord};
use crate::embed::{project_unit_ball, EmbeddingTable};
use crate::error::{Error, Result};
use crate::rng::{rng_for, standard_normal};
use crate::tensor::{gram_schmidt_orthonormalize, DenseMatrix, OrthogonalMap};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub users_per_domain: usize,
    pub items_per_domain: usize,
    pub latent_dim: usize,
    /// Users present in both domains (same id on both sides).
    pub overlap_count: usize,
    /// Gaussian noise added to each rating before clamping.
    pub noise_std: f64,
    /// Gaussian noise added to each explicit feature entry.
    pub feature_noise_std: f64,
    /// Explicit user-feature dimension; must be ≥ `latent_dim` so the
    /// feature map stays invertible.
    pub user_feature_dim: usize,
    pub item_feature_dim: usize,
    pub ratings_per_user: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users_per_domain: 200,
            items_per_domain: 80,
            latent_dim: 16,
            overlap_count: 120,
            noise_std: 0.02,
            feature_noise_std: 0.02,
            user_feature_dim: 24,
            item_feature_dim: 24,
            ratings_per_user: 20,
            seed: 7,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Validation("latent_dim must be ≥ 1".into()));
        }
        if self.overlap_count > self.users_per_domain {
            return Err(Error::Validation(format!(
                "overlap_count {} exceeds users_per_domain {}",
                self.overlap_count, self.users_per_domain
            )));
        }
        if self.noise_std < 0.0 || self.feature_noise_std < 0.0 {
            return Err(Error::Validation("noise levels must be ≥ 0".into()));
        }
        if self.user_feature_dim < self.latent_dim || self.item_feature_dim < self.latent_dim {
            return Err(Error::Validation(format!(
                "feature dims ({}, {}) must be ≥ latent_dim {} for an invertible feature map",
                self.user_feature_dim, self.item_feature_dim, self.latent_dim
            )));
        }
        if self.ratings_per_user == 0 || self.ratings_per_user > self.items_per_domain {
            return Err(Error::Validation(format!(
                "ratings_per_user {} must be in 1..={}",
                self.ratings_per_user, self.items_per_domain
            )));
        }
        Ok(())
    }
}

/// Generator output: the two datasets, the registry of shared users, the
/// planted map, and the ground-truth latents behind every id.
#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub domain_a: DomainDataset,
    pub domain_b: DomainDataset,
    pub registry: OverlapRegistry,
    pub planted_map: OrthogonalMap,
    pub user_latents_a: EmbeddingTable,
    pub user_latents_b: EmbeddingTable,
    pub item_latents_a: EmbeddingTable,
    pub item_latents_b: EmbeddingTable,
}

fn draw_unit_ball(k: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| standard_normal(rng)).collect();
    project_unit_ball(&v)
}

/// Random orthogonal matrix with determinant +1. The planted map must be a
/// rotation: mapping training starts at the identity and Gram-Schmidt
/// retraction cannot cross into the reflection component.
pub fn random_rotation(k: usize, rng: &mut ChaCha20Rng) -> OrthogonalMap {
    loop {
        let gaussian: Vec<f64> = (0..k * k).map(|_| standard_normal(rng)).collect();
        let m = DenseMatrix::new(k, k, gaussian).expect("finite draws");
        if let Ok(q) = gram_schmidt_orthonormalize(&m) {
            return q.into_rotation();
        }
    }
}

/// Random matrix with orthonormal columns (`PᵀP = I`): an inner-product
/// preserving embedding of the latent space into feature space, so explicit
/// features are an invertible linear image of the latents.
fn semi_orthogonal_map(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> DenseMatrix {
    debug_assert!(rows >= cols);
    loop {
        let data: Vec<f64> = (0..rows * cols).map(|_| standard_normal(rng)).collect();
        let m = DenseMatrix::new(rows, cols, data).expect("finite draws");
        // Orthonormalize the columns via the row variant on the transpose.
        if let Ok(q) = gram_schmidt_orthonormalize_rect(&m.transpose()) {
            return q.transpose();
        }
    }
}

/// Modified Gram-Schmidt over the rows of a wide matrix (rows ≤ cols).
fn gram_schmidt_orthonormalize_rect(m: &DenseMatrix) -> crate::error::Result<DenseMatrix> {
    let mut q = m.clone();
    let cols = q.cols();
    for i in 0..q.rows() {
        for j in 0..i {
            let r: f64 = (0..cols).map(|c| q.get(i, c) * q.get(j, c)).sum();
            for c in 0..cols {
                let v = q.get(i, c) - r * q.get(j, c);
                q.set(i, c, v);
            }
        }
        let n: f64 = (0..cols).map(|c| q.get(i, c) * q.get(i, c)).sum::<f64>().sqrt();
        if n < crate::tensor::RANK_EPS {
            return Err(crate::error::Error::DegenerateInput("rank deficient".into()));
        }
        for c in 0..cols {
            let v = q.get(i, c) / n;
            q.set(i, c, v);
        }
    }
    Ok(q)
}

fn latent_rating(user: &[f64], item: &[f64], noise_std: f64, rng: &mut ChaCha20Rng) -> f64 {
    let dot: f64 = user.iter().zip(item).map(|(a, b)| a * b).sum();
    let noise = if noise_std > 0.0 {
        noise_std * standard_normal(rng)
    } else {
        0.0
    };
    (0.5 + 0.5 * dot + noise).clamp(0.0, 1.0)
}

struct DomainDraw {
    ratings: Vec<RatingRecord>,
    user_features: BTreeMap<String, Vec<f64>>,
    item_features: BTreeMap<String, Vec<f64>>,
}

#[allow(clippy::too_many_arguments)]
fn draw_domain(
    user_latents: &BTreeMap<String, Vec<f64>>,
    item_latents: &BTreeMap<String, Vec<f64>>,
    user_map: &DenseMatrix,
    item_map: &DenseMatrix,
    cfg: &SyntheticConfig,
    rating_rng: &mut ChaCha20Rng,
    feature_rng: &mut ChaCha20Rng,
    timestamp: &mut i64,
) -> DomainDraw {
    let item_ids: Vec<&String> = item_latents.keys().collect();
    let mut ratings = Vec::with_capacity(user_latents.len() * cfg.ratings_per_user);
    for (user_id, z_u) in user_latents {
        let chosen = rand::seq::index::sample(rating_rng, item_ids.len(), cfg.ratings_per_user);
        let mut chosen: Vec<usize> = chosen.into_iter().collect();
        chosen.sort_unstable();
        for idx in chosen {
            let item_id = item_ids[idx];
            let z_i = &item_latents[item_id];
            ratings.push(RatingRecord {
                user_id: user_id.clone(),
                item_id: item_id.clone(),
                rating: latent_rating(z_u, z_i, cfg.noise_std, rating_rng),
                timestamp: *timestamp,
            });
            *timestamp += 1;
        }
    }
    let mut user_features = BTreeMap::new();
    for (id, z) in user_latents {
        let mut f = user_map.mat_vec(z).expect("shape fixed by construction");
        if cfg.feature_noise_std > 0.0 {
            for v in &mut f {
                *v += cfg.feature_noise_std * standard_normal(feature_rng);
            }
        }
        user_features.insert(id.clone(), f);
    }
    let mut item_features = BTreeMap::new();
    for (id, z) in item_latents {
        let mut f = item_map.mat_vec(z).expect("shape fixed by construction");
        if cfg.feature_noise_std > 0.0 {
            for v in &mut f {
                *v += cfg.feature_noise_std * standard_normal(feature_rng);
            }
        }
        item_features.insert(id.clone(), f);
    }
    DomainDraw {
        ratings,
        user_features,
        item_features,
    }
}

fn table_from_map(map: &BTreeMap<String, Vec<f64>>, k: usize) -> EmbeddingTable {
    let mut ids: Vec<String> = Vec::with_capacity(map.len());
    let mut flat: Vec<f64> = Vec::with_capacity(map.len() * k);
    for (id, v) in map {
        ids.push(id.clone());
        flat.extend_from_slice(v);
    }
    EmbeddingTable::from_sorted_parts(k, ids, flat)
}

/// Deterministically generates the coupled domain pair described by `cfg`.
pub fn generate_synthetic_pair(cfg: &SyntheticConfig) -> Result<SyntheticPair> {
    cfg.validate()?;
    let k = cfg.latent_dim;
    let mut map_rng = rng_for(cfg.seed, &[0x51]);
    let planted = random_rotation(k, &mut map_rng);

    let mut latent_rng = rng_for(cfg.seed, &[0x52]);
    let mut user_latents_a: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut user_latents_b: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut registry_pairs = Vec::with_capacity(cfg.overlap_count);
    for i in 0..cfg.users_per_domain {
        if i < cfg.overlap_count {
            let id = format!("ou{i:05}");
            let z = draw_unit_ball(k, &mut latent_rng);
            let mapped = planted.apply(&z)?;
            user_latents_a.insert(id.clone(), z);
            user_latents_b.insert(id.clone(), mapped);
            registry_pairs.push((id.clone(), id));
        } else {
            let z_a = draw_unit_ball(k, &mut latent_rng);
            let z_b = draw_unit_ball(k, &mut latent_rng);
            user_latents_a.insert(format!("ua{i:05}"), z_a);
            user_latents_b.insert(format!("ub{i:05}"), z_b);
        }
    }
    let mut item_latents_a: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut item_latents_b: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for i in 0..cfg.items_per_domain {
        item_latents_a.insert(format!("ia{i:05}"), draw_unit_ball(k, &mut latent_rng));
        item_latents_b.insert(format!("ib{i:05}"), draw_unit_ball(k, &mut latent_rng));
    }

    // Per-domain feature maps. User maps are independent draws; the item
    // maps are coupled through the planted map (`M_A = M_B·Q`) so that the
    // two domains share one bilinear rating structure: the coupled-domain
    // premise the transfer pipeline is supposed to exploit.
    let mut fmap_rng = rng_for(cfg.seed, &[0x53]);
    let user_map_a = semi_orthogonal_map(cfg.user_feature_dim, k, &mut fmap_rng);
    let user_map_b = semi_orthogonal_map(cfg.user_feature_dim, k, &mut fmap_rng);
    let item_map_b = semi_orthogonal_map(cfg.item_feature_dim, k, &mut fmap_rng);
    let item_map_a = item_map_b.matmul(planted.matrix()).expect("k×k product");

    let mut timestamp = 1;
    let mut rating_rng_a = rng_for(cfg.seed, &[0x54, 0xa]);
    let mut feature_rng_a = rng_for(cfg.seed, &[0x55, 0xa]);
    let draw_a = draw_domain(
        &user_latents_a,
        &item_latents_a,
        &user_map_a,
        &item_map_a,
        cfg,
        &mut rating_rng_a,
        &mut feature_rng_a,
        &mut timestamp,
    );
    let mut rating_rng_b = rng_for(cfg.seed, &[0x54, 0xb]);
    let mut feature_rng_b = rng_for(cfg.seed, &[0x55, 0xb]);
    let draw_b = draw_domain(
        &user_latents_b,
        &item_latents_b,
        &user_map_b,
        &item_map_b,
        cfg,
        &mut rating_rng_b,
        &mut feature_rng_b,
        &mut timestamp,
    );

    let domain_a = DomainDataset::new(
        "synthetic_a",
        draw_a.ratings,
        draw_a.user_features,
        draw_a.item_features,
        (0.0, 1.0),
    )?;
    let domain_b = DomainDataset::new(
        "synthetic_b",
        draw_b.ratings,
        draw_b.user_features,
        draw_b.item_features,
        (0.0, 1.0),
    )?;

    Ok(SyntheticPair {
        domain_a,
        domain_b,
        registry: OverlapRegistry {
            pairs: registry_pairs,
        },
        planted_map: planted,
        user_latents_a: table_from_map(&user_latents_a, k),
        user_latents_b: table_from_map(&user_latents_b, k),
        item_latents_a: table_from_map(&item_latents_a, k),
        item_latents_b: table_from_map(&item_latents_b, k),
    })
}
