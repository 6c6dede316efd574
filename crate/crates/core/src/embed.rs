//! Latent embeddings: an MLP autoencoder per domain and entity kind whose
//! encoder output is constrained to the unit ball, plus id-keyed embedding
//! tables (either encoder-derived or free parameters for the feature-less
//! ablation mode).

use crate::error::{Error, Result};
use crate::fileio;
use crate::mlp::{Activation, Mlp, MlpGrads};
use crate::rng::rng_for;
use crate::tensor::DenseMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Slack allowed on the squared-norm invariant.
pub const UNIT_BALL_SLACK: f64 = 1e-9;

/// A user or item embedding confined to the unit ball.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentEmbedding {
    pub owner_id: String,
    vector: Vec<f64>,
}

impl LatentEmbedding {
    pub fn new(owner_id: impl Into<String>, vector: Vec<f64>) -> Result<Self> {
        let sq: f64 = vector.iter().map(|v| v * v).sum();
        if !sq.is_finite() {
            return Err(Error::NumericDivergence("embedding is not finite".into()));
        }
        if sq > 1.0 + UNIT_BALL_SLACK {
            return Err(Error::Validation(format!(
                "embedding norm² {sq} exceeds the unit ball"
            )));
        }
        Ok(Self {
            owner_id: owner_id.into(),
            vector,
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn vector(&self) -> &[f64] {
        &self.vector
    }
}

/// `v` if `‖v‖ ≤ 1`, otherwise `v/‖v‖`.
pub fn project_unit_ball(v: &[f64]) -> Vec<f64> {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 1.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Backward pass of [`project_unit_ball`]: identity inside the ball, the
/// exact rescaling Jacobian `(I − ẑẑᵀ)/‖z‖` outside.
pub fn project_unit_ball_backward(z: &[f64], grad_out: &[f64]) -> Vec<f64> {
    let n: f64 = z.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n <= 1.0 {
        return grad_out.to_vec();
    }
    let unit: Vec<f64> = z.iter().map(|x| x / n).collect();
    let along: f64 = unit.iter().zip(grad_out).map(|(u, g)| u * g).sum();
    unit.iter()
        .zip(grad_out)
        .map(|(u, g)| (g - u * along) / n)
        .collect()
}

#[derive(Debug, Clone)]
pub struct AutoencoderConfig {
    pub latent_dim: usize,
    /// Encoder hidden widths; the decoder mirrors them.
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden: vec![32, 16],
            epochs: 50,
            lr: 0.01,
            batch: 64,
            seed: 0,
        }
    }
}

/// Encoder/decoder pair. The encoder output is always projected into the
/// unit ball, during training and at inference.
#[derive(Debug, Clone)]
pub struct AutoencoderModel {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl AutoencoderModel {
    pub fn init(input_dim: usize, cfg: &AutoencoderConfig) -> Result<Self> {
        let mut enc_dims = vec![input_dim];
        enc_dims.extend_from_slice(&cfg.hidden);
        enc_dims.push(cfg.latent_dim);
        let mut dec_dims = enc_dims.clone();
        dec_dims.reverse();
        let mut rng = rng_for(cfg.seed, &[0xae]);
        Ok(Self {
            encoder: Mlp::new(&enc_dims, Activation::Tanh, Activation::Identity, &mut rng)?,
            decoder: Mlp::new(&dec_dims, Activation::Tanh, Activation::Identity, &mut rng)?,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    /// Encoder forward pass followed by unit-ball projection.
    pub fn encode(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(project_unit_ball(&self.encoder.forward(features)?))
    }

    pub fn encode_embedding(&self, owner_id: &str, features: &[f64]) -> Result<LatentEmbedding> {
        LatentEmbedding::new(owner_id, self.encode(features)?)
    }

    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        if latent.len() != self.latent_dim() {
            return Err(Error::Shape(format!(
                "latent has dimension {}, model expects {}",
                latent.len(),
                self.latent_dim()
            )));
        }
        self.decoder.forward(latent)
    }

    /// Squared reconstruction error `‖x − dec(proj(enc(x)))‖²` and its
    /// gradients for every parameter of both networks.
    pub fn reconstruction_grads(&self, x: &[f64]) -> Result<(f64, MlpGrads, MlpGrads)> {
        let enc_trace = self.encoder.forward_trace(x, None, &mut None)?;
        let z = enc_trace.output().to_vec();
        let projected = project_unit_ball(&z);
        let dec_trace = self.decoder.forward_trace(&projected, None, &mut None)?;
        let reconstruction = dec_trace.output();
        let loss: f64 = reconstruction
            .iter()
            .zip(x)
            .map(|(r, t)| (r - t) * (r - t))
            .sum();
        let d_rec: Vec<f64> = reconstruction
            .iter()
            .zip(x)
            .map(|(r, t)| 2.0 * (r - t))
            .collect();
        let (dec_grads, d_projected) = self.decoder.backward(&dec_trace, &d_rec);
        let d_z = project_unit_ball_backward(&z, &d_projected);
        let (enc_grads, _) = self.encoder.backward(&enc_trace, &d_z);
        Ok((loss, enc_grads, dec_grads))
    }

    pub fn reconstruction_loss(&self, x: &[f64]) -> Result<f64> {
        let z = self.encode(x)?;
        let rec = self.decode(&z)?;
        Ok(rec.iter().zip(x).map(|(r, t)| (r - t) * (r - t)).sum())
    }
}

#[derive(Debug, Clone)]
pub struct TrainedAutoencoder {
    pub model: AutoencoderModel,
    /// Mean pre-step reconstruction loss per epoch.
    pub loss_history: Vec<f64>,
}

/// Mini-batch gradient descent on the mean squared reconstruction error.
/// One domain, one entity kind; the caller never mixes domains here.
pub fn train_autoencoder(samples: &[Vec<f64>], cfg: &AutoencoderConfig) -> Result<TrainedAutoencoder> {
    if samples.is_empty() {
        return Err(Error::Validation(
            "autoencoder training needs at least one sample".into(),
        ));
    }
    let input_dim = samples[0].len();
    if samples.iter().any(|s| s.len() != input_dim) {
        return Err(Error::Shape("inconsistent feature dimensions".into()));
    }
    if cfg.batch == 0 || cfg.epochs == 0 {
        return Err(Error::Validation("batch and epochs must be positive".into()));
    }
    let mut model = AutoencoderModel::init(input_dim, cfg)?;
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..cfg.epochs {
        let mut rng = rng_for(cfg.seed, &[0xa0, epoch as u64]);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut enc_acc: Option<MlpGrads> = None;
            let mut dec_acc: Option<MlpGrads> = None;
            let mut batch_loss = 0.0;
            for &idx in chunk {
                let (loss, enc_g, dec_g) = model.reconstruction_grads(&samples[idx])?;
                batch_loss += loss;
                match enc_acc.as_mut() {
                    Some(acc) => acc.accumulate(&enc_g),
                    None => enc_acc = Some(enc_g),
                }
                match dec_acc.as_mut() {
                    Some(acc) => acc.accumulate(&dec_g),
                    None => dec_acc = Some(dec_g),
                }
            }
            let scale = 1.0 / chunk.len() as f64;
            batch_loss *= scale;
            if !batch_loss.is_finite() {
                return Err(Error::NumericDivergence(format!(
                    "autoencoder loss diverged at epoch {epoch}"
                )));
            }
            epoch_loss += batch_loss * chunk.len() as f64;
            let mut enc_g = enc_acc.expect("nonempty chunk");
            let mut dec_g = dec_acc.expect("nonempty chunk");
            enc_g.scale(scale);
            dec_g.scale(scale);
            model.encoder.apply_step(&enc_g, cfg.lr);
            model.decoder.apply_step(&dec_g, cfg.lr);
        }
        history.push(epoch_loss / samples.len() as f64);
    }
    Ok(TrainedAutoencoder {
        model,
        loss_history: history,
    })
}

/// Embeddings for a set of ids, stored densely in id-sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    k: usize,
    ids: Vec<String>,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|probe| probe.as_str().cmp(id)).ok()
    }

    pub fn vector(&self, idx: usize) -> &[f64] {
        &self.vectors[idx * self.k..(idx + 1) * self.k]
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index_of(id).map(|i| self.vector(i))
    }

    pub fn embedding(&self, id: &str) -> Result<LatentEmbedding> {
        let idx = self
            .index_of(id)
            .ok_or_else(|| Error::UnknownId(id.to_string()))?;
        LatentEmbedding::new(id, self.vector(idx).to_vec())
    }

    /// In-place gradient step on one row followed by unit-ball projection,
    /// for the feature-less mode where embeddings train with the recommender.
    pub fn apply_grad(&mut self, idx: usize, grad: &[f64], lr: f64) {
        debug_assert_eq!(grad.len(), self.k);
        let row = &mut self.vectors[idx * self.k..(idx + 1) * self.k];
        for (v, g) in row.iter_mut().zip(grad) {
            *v -= lr * g;
        }
        let n: f64 = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1.0 {
            for v in row.iter_mut() {
                *v /= n;
            }
        }
    }

    /// Encodes every feature row through a trained autoencoder.
    pub fn from_features(
        model: &AutoencoderModel,
        features: &BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        let k = model.latent_dim();
        let mut ids = Vec::with_capacity(features.len());
        let mut vectors = Vec::with_capacity(features.len() * k);
        for (id, f) in features {
            ids.push(id.clone());
            vectors.extend(model.encode(f)?);
        }
        Ok(Self { k, ids, vectors })
    }

    /// Assembles a table from ids already sorted and vectors already inside
    /// the unit ball. Internal building block for generators.
    pub(crate) fn from_sorted_parts(k: usize, ids: Vec<String>, vectors: Vec<f64>) -> Self {
        debug_assert_eq!(ids.len() * k, vectors.len());
        debug_assert!(ids.windows(2).all(|w| w[0] < w[1]));
        Self { k, ids, vectors }
    }

    /// Centers and whitens the table so the embedding cloud is isotropic
    /// with root-mean-square norm `target_rms`, then re-projects into the
    /// unit ball.
    ///
    /// Encoders recover latent structure only up to an arbitrary invertible
    /// linear distortion; whitening removes that distortion up to rotation,
    /// which is exactly the family the orthogonal alignment stage can
    /// absorb. This is the same conditioning step embedding-space alignment
    /// pipelines apply before fitting an orthogonal map.
    pub fn whiten(&mut self, target_rms: f64) -> Result<()> {
        let n = self.len();
        if n < 2 {
            return Ok(());
        }
        let k = self.k;
        let mut mean = vec![0.0; k];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(self.vector(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = DenseMatrix::zeros(k, k);
        for idx in 0..n {
            let row = self.vector(idx);
            for i in 0..k {
                let di = row[i] - mean[i];
                for j in 0..k {
                    let v = cov.get(i, j) + di * (row[j] - mean[j]) / n as f64;
                    cov.set(i, j, v);
                }
            }
        }
        // Symmetric PSD: singular vectors are eigenvectors, so the inverse
        // square root is U diag(1/√σ) Uᵀ with a floor on tiny directions.
        let (u, sigma, _) = crate::tensor::jacobi_svd(&cov)?;
        let floor = sigma.iter().copied().fold(0.0f64, f64::max).max(1e-12) * 1e-9;
        let mut inv_sqrt = DenseMatrix::zeros(k, k);
        for a in 0..k {
            for b in 0..k {
                let mut acc = 0.0;
                for c in 0..k {
                    acc += u.get(a, c) * u.get(b, c) / sigma[c].max(floor).sqrt();
                }
                inv_sqrt.set(a, b, acc);
            }
        }
        let scale = target_rms / (k as f64).sqrt();
        let mut new_vectors = Vec::with_capacity(self.vectors.len());
        for idx in 0..n {
            let row = self.vector(idx);
            let centered: Vec<f64> = row.iter().zip(&mean).map(|(v, m)| v - m).collect();
            let mut w = inv_sqrt.mat_vec(&centered)?;
            for v in &mut w {
                *v *= scale;
            }
            new_vectors.extend(project_unit_ball(&w));
        }
        self.vectors = new_vectors;
        Ok(())
    }

    /// Free embeddings for bare ids, seeded, inside the unit ball.
    pub fn random_unit(ids: impl IntoIterator<Item = String>, k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Validation("embedding dimension must be ≥ 1".into()));
        }
        let mut ids: Vec<String> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        let mut rng = rng_for(seed, &[0x1d]);
        let bound = 1.0 / (k as f64).sqrt();
        let mut vectors = Vec::with_capacity(ids.len() * k);
        for _ in 0..ids.len() {
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(-bound..=bound)).collect();
            vectors.extend(project_unit_ball(&v));
        }
        Ok(Self { k, ids, vectors })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("owner_id");
        for i in 1..=self.k {
            let _ = write!(out, ",e{i}");
        }
        out.push('\n');
        for (i, id) in self.ids.iter().enumerate() {
            out.push_str(id);
            for v in self.vector(i) {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        fileio::write_file(path, &out)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let lines = fileio::read_lines(path)?;
        let header = lines.first().ok_or_else(|| Error::Parse {
            file: path.display().to_string(),
            line: 1,
            message: "empty embedding file".into(),
        })?;
        let cols: Vec<&str> = header.split(',').collect();
        if cols.first() != Some(&"owner_id") || cols.len() < 2 {
            return Err(Error::Parse {
                file: path.display().to_string(),
                line: 1,
                message: format!("expected header `owner_id,e1..ek`, got {header:?}"),
            });
        }
        let k = cols.len() - 1;
        let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (i, row) in lines.iter().enumerate().skip(1) {
            if row.trim().is_empty() {
                continue;
            }
            let fields = fileio::split_row(row, k + 1, path, i + 1)?;
            let values = fields[1..]
                .iter()
                .map(|f| fileio::parse_f64(f, path, i + 1))
                .collect::<Result<Vec<f64>>>()?;
            rows.insert(fields[0].trim().to_string(), values);
        }
        let mut ids = Vec::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * k);
        for (id, v) in rows {
            ids.push(id);
            vectors.extend(v);
        }
        Ok(Self { k, ids, vectors })
    }
}

/// Feature-free mode: one free embedding per user id and per item id,
/// trained jointly with the recommender later.
pub fn embed_ids_only(
    ds: &crate::data::DomainDataset,
    k: usize,
    seed: u64,
) -> Result<(EmbeddingTable, EmbeddingTable)> {
    let users = EmbeddingTable::random_unit(ds.users(), k, crate::rng::subseed(seed, &[0x11]))?;
    let items = EmbeddingTable::random_unit(ds.items(), k, crate::rng::subseed(seed, &[0x22]))?;
    Ok((users, items))
}
