//! Per-domain neural recommender: an MLP over the concatenated user and item
//! embeddings with dropout on the hidden layers and a logistic output, so
//! predictions stay in the normalized rating range.

use crate::error::{Error, Result};
use crate::fileio;
use crate::mlp::{Activation, Linear, Mlp, MlpGrads};
use crate::rng::rng_for;
use crate::tensor::DenseMatrix;
use rand_chacha::ChaCha20Rng;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct RecommenderConfig {
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
    /// Hidden-layer nonlinearity; the output squashing is always logistic.
    pub hidden_activation: Activation,
    pub seed: u64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            latent_dim: 16,
            hidden: vec![32, 16],
            dropout_rate: 0.1,
            hidden_activation: Activation::Tanh,
            seed: 0,
        }
    }
}

/// One training example: user embedding, item embedding, normalized rating.
pub type RatingExample<'a> = (&'a [f64], &'a [f64], f64);

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Tanh => 1,
        Activation::Logistic => 2,
        Activation::Relu => 3,
    }
}

fn activation_from_code(code: f64, path: &Path, line: usize) -> Result<Activation> {
    match code as u8 {
        0 => Ok(Activation::Identity),
        1 => Ok(Activation::Tanh),
        2 => Ok(Activation::Logistic),
        3 => Ok(Activation::Relu),
        _ => Err(Error::Parse {
            file: path.display().to_string(),
            line,
            message: format!("unknown activation code {code}"),
        }),
    }
}

#[derive(Debug, Clone)]
pub struct RecommenderModel {
    mlp: Mlp,
    k: usize,
    dropout_rate: f64,
}

/// Gradients a training step propagates back into the embeddings, one
/// (user, item) pair per example. Consumed only in the feature-less mode.
pub struct EmbeddingGrads {
    pub per_example: Vec<(Vec<f64>, Vec<f64>)>,
}

impl RecommenderModel {
    pub fn init(cfg: &RecommenderConfig) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.dropout_rate) {
            return Err(Error::Validation(format!(
                "dropout rate must be in [0, 1), got {}",
                cfg.dropout_rate
            )));
        }
        let mut dims = vec![2 * cfg.latent_dim];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(1);
        let mut rng = rng_for(cfg.seed, &[0x75]);
        Ok(Self {
            mlp: Mlp::new(&dims, cfg.hidden_activation, Activation::Logistic, &mut rng)?,
            k: cfg.latent_dim,
            dropout_rate: cfg.dropout_rate,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.k
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// Rebuilds a model around an existing network, e.g. one whose
    /// parameters were perturbed for a gradient check.
    pub fn from_parts(mlp: Mlp, dropout_rate: f64) -> Result<Self> {
        if mlp.input_dim() % 2 != 0 || mlp.output_dim() != 1 {
            return Err(Error::Shape(
                "a rating model maps concatenated embedding pairs to one output".into(),
            ));
        }
        if mlp.output_activation() != Activation::Logistic {
            return Err(Error::Validation(
                "rating models squash predictions with the logistic output".into(),
            ));
        }
        Ok(Self {
            k: mlp.input_dim() / 2,
            mlp,
            dropout_rate,
        })
    }

    fn concat(&self, user: &[f64], item: &[f64]) -> Result<Vec<f64>> {
        if user.len() != self.k || item.len() != self.k {
            return Err(Error::Shape(format!(
                "expected embeddings of dimension {}, got {} and {}",
                self.k,
                user.len(),
                item.len()
            )));
        }
        let mut x = Vec::with_capacity(2 * self.k);
        x.extend_from_slice(user);
        x.extend_from_slice(item);
        Ok(x)
    }

    /// Inference-mode rating estimate in (0, 1); dropout off, deterministic.
    pub fn predict(&self, user: &[f64], item: &[f64]) -> Result<f64> {
        let x = self.concat(user, item)?;
        Ok(self.mlp.forward(&x)?[0])
    }

    /// One mini-batch gradient step on the mean squared rating error.
    /// Returns the pre-step batch loss. Dropout masks come from `rng`.
    pub fn train_step(
        &mut self,
        batch: &[RatingExample],
        lr: f64,
        rng: &mut ChaCha20Rng,
    ) -> Result<f64> {
        let (loss, _) = self.step_inner(batch, lr, rng, false)?;
        Ok(loss)
    }

    /// [`Self::train_step`] that also reports the loss gradient with respect
    /// to each input embedding, so free embedding tables can train jointly.
    pub fn train_step_with_embedding_grads(
        &mut self,
        batch: &[RatingExample],
        lr: f64,
        rng: &mut ChaCha20Rng,
    ) -> Result<(f64, EmbeddingGrads)> {
        let (loss, grads) = self.step_inner(batch, lr, rng, true)?;
        Ok((loss, grads.expect("requested embedding grads")))
    }

    /// Cross-domain phase step: identical arithmetic to [`Self::train_step`],
    /// but the user embeddings were mapped through the transitional map by
    /// the caller and the map itself stays fixed; only recommender
    /// parameters move.
    pub fn train_cross_step(
        &mut self,
        batch: &[RatingExample],
        lr: f64,
        rng: &mut ChaCha20Rng,
    ) -> Result<f64> {
        let (loss, _) = self.step_inner(batch, lr, rng, false)?;
        Ok(loss)
    }

    fn step_inner(
        &mut self,
        batch: &[RatingExample],
        lr: f64,
        rng: &mut ChaCha20Rng,
        want_embedding_grads: bool,
    ) -> Result<(f64, Option<EmbeddingGrads>)> {
        if batch.is_empty() {
            return Err(Error::Validation("training batch is empty".into()));
        }
        let dropout = if self.dropout_rate > 0.0 {
            Some(self.dropout_rate)
        } else {
            None
        };
        let mut acc: Option<MlpGrads> = None;
        let mut input_grads = Vec::new();
        let mut loss = 0.0;
        let scale = 1.0 / batch.len() as f64;
        for (user, item, rating) in batch {
            let x = self.concat(user, item)?;
            let trace = self.mlp.forward_trace(&x, dropout, &mut Some(rng))?;
            let predicted = trace.output()[0];
            let err = predicted - rating;
            loss += err * err;
            let (g, dx) = self.mlp.backward(&trace, &[2.0 * err * scale]);
            match acc.as_mut() {
                Some(a) => a.accumulate(&g),
                None => acc = Some(g),
            }
            if want_embedding_grads {
                input_grads.push((dx[..self.k].to_vec(), dx[self.k..].to_vec()));
            }
        }
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::NumericDivergence(
                "recommender batch loss is not finite".into(),
            ));
        }
        self.mlp.apply_step(&acc.expect("nonempty batch"), lr);
        let grads = want_embedding_grads.then_some(EmbeddingGrads {
            per_example: input_grads,
        });
        Ok((loss, grads))
    }

    /// Mean squared error without any parameter update (dropout off).
    pub fn batch_loss(&self, batch: &[RatingExample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Validation("batch is empty".into()));
        }
        let mut loss = 0.0;
        for (user, item, rating) in batch {
            let err = self.predict(user, item)? - rating;
            loss += err * err;
        }
        Ok(loss / batch.len() as f64)
    }

    /// Writes the checkpoint format: one named tensor per line,
    /// `name,rows,cols,values…`.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, layer) in self.mlp.layers().iter().enumerate() {
            let w = &layer.weight;
            let _ = write!(out, "layer{i}.weight,{},{}", w.rows(), w.cols());
            for v in w.data() {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
            let _ = write!(out, "layer{i}.bias,{},1", layer.bias.len());
            for v in &layer.bias {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "dropout_rate,1,1,{}", self.dropout_rate);
        let _ = writeln!(
            out,
            "hidden_activation,1,1,{}",
            activation_code(self.mlp.hidden_activation())
        );
        fileio::write_file(path, &out)
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let lines = fileio::read_lines(path)?;
        let mut weights: Vec<(usize, DenseMatrix)> = Vec::new();
        let mut biases: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut dropout_rate = 0.0;
        let mut hidden_activation = Activation::Tanh;
        for (ln, row) in lines.iter().enumerate() {
            if row.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() < 4 {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line: ln + 1,
                    message: "tensor line needs name,rows,cols,values…".into(),
                });
            }
            let name = fields[0].trim();
            let rows = fileio::parse_usize(fields[1], path, ln + 1)?;
            let cols = fileio::parse_usize(fields[2], path, ln + 1)?;
            let values = fields[3..]
                .iter()
                .map(|f| fileio::parse_f64(f, path, ln + 1))
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != rows * cols {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line: ln + 1,
                    message: format!(
                        "tensor {name} declares {rows}x{cols} but carries {} values",
                        values.len()
                    ),
                });
            }
            if name == "dropout_rate" {
                dropout_rate = values[0];
            } else if name == "hidden_activation" {
                hidden_activation = activation_from_code(values[0], path, ln + 1)?;
            } else if let Some(idx_str) = name
                .strip_prefix("layer")
                .and_then(|s| s.strip_suffix(".weight"))
            {
                let idx = idx_str.parse::<usize>().map_err(|_| Error::Parse {
                    file: path.display().to_string(),
                    line: ln + 1,
                    message: format!("bad tensor name {name:?}"),
                })?;
                weights.push((idx, DenseMatrix::new(rows, cols, values)?));
            } else if let Some(idx_str) = name
                .strip_prefix("layer")
                .and_then(|s| s.strip_suffix(".bias"))
            {
                let idx = idx_str.parse::<usize>().map_err(|_| Error::Parse {
                    file: path.display().to_string(),
                    line: ln + 1,
                    message: format!("bad tensor name {name:?}"),
                })?;
                biases.push((idx, values));
            } else {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line: ln + 1,
                    message: format!("unknown tensor {name:?}"),
                });
            }
        }
        weights.sort_by_key(|(i, _)| *i);
        biases.sort_by_key(|(i, _)| *i);
        if weights.len() != biases.len() || weights.is_empty() {
            return Err(Error::Validation(format!(
                "checkpoint {} has {} weight and {} bias tensors",
                path.display(),
                weights.len(),
                biases.len()
            )));
        }
        let layers: Vec<Linear> = weights
            .into_iter()
            .zip(biases)
            .map(|((_, weight), (_, bias))| Linear { weight, bias })
            .collect();
        let mlp = Mlp::from_layers(layers, hidden_activation, Activation::Logistic)?;
        if mlp.input_dim() % 2 != 0 || mlp.output_dim() != 1 {
            return Err(Error::Validation(
                "checkpoint does not describe a rating model".into(),
            ));
        }
        Ok(Self {
            k: mlp.input_dim() / 2,
            mlp,
            dropout_rate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{finite_diff_grad, gradient_relative_error, DenseVector};
    use rand::Rng;

    fn no_dropout_cfg(k: usize, seed: u64) -> RecommenderConfig {
        RecommenderConfig {
            latent_dim: k,
            hidden: vec![6, 4],
            dropout_rate: 0.0,
            hidden_activation: Activation::Tanh,
            seed,
        }
    }

    #[test]
    fn zero_parameters_predict_one_half() {
        let mut model = RecommenderModel::init(&no_dropout_cfg(3, 0)).unwrap();
        let zeros = vec![0.0; model.mlp.param_count()];
        let mut mlp = model.mlp.clone();
        mlp.set_params_flat(&zeros).unwrap();
        model.mlp = mlp;
        let r = model.predict(&[0.1, 0.2, 0.3], &[-0.1, 0.0, 0.4]).unwrap();
        assert_eq!(r, 0.5);
    }

    #[test]
    fn prediction_monotone_in_output_bias() {
        let base = RecommenderModel::init(&no_dropout_cfg(2, 3)).unwrap();
        let u = [0.3, -0.2];
        let i = [0.1, 0.4];
        let mut last = 0.0;
        for shift in [0.0, 1.0, 3.0, 6.0, 10.0] {
            let mut model = base.clone();
            let mut flat = model.mlp.params_flat();
            let n = flat.len();
            flat[n - 1] += shift; // final output bias
            let mut mlp = model.mlp.clone();
            mlp.set_params_flat(&flat).unwrap();
            model.mlp = mlp;
            let r = model.predict(&u, &i).unwrap();
            assert!(r > last, "logistic output must increase with bias");
            assert!(r < 1.0);
            last = r;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn prediction_is_deterministic_and_bounded() {
        let model = RecommenderModel::init(&RecommenderConfig {
            dropout_rate: 0.3,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        let mut rng = rng_for(1, &[]);
        let u: Vec<f64> = (0..16).map(|_| rng.random_range(-0.25..0.25)).collect();
        let i: Vec<f64> = (0..16).map(|_| rng.random_range(-0.25..0.25)).collect();
        let a = model.predict(&u, &i).unwrap();
        let b = model.predict(&u, &i).unwrap();
        assert_eq!(a, b, "dropout must be off at inference");
        assert!(a > 0.0 && a < 1.0);
    }

    #[test]
    fn perfect_batch_has_zero_loss_and_fixed_point() {
        let mut model = RecommenderModel::init(&no_dropout_cfg(2, 9)).unwrap();
        let u = [0.2, -0.1];
        let i = [0.3, 0.25];
        let target = model.predict(&u, &i).unwrap();
        let before = model.mlp.params_flat();
        let batch = vec![(&u[..], &i[..], target)];
        let loss = model
            .train_step(&batch, 0.5, &mut rng_for(0, &[]))
            .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(model.mlp.params_flat(), before);
    }

    #[test]
    fn training_gradient_matches_finite_differences() {
        let mut base = RecommenderModel::init(&no_dropout_cfg(2, 21)).unwrap();
        let mut rng = rng_for(2, &[]);
        let examples: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..5)
            .map(|_| {
                (
                    (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    rng.random_range(0.05..0.95),
                )
            })
            .collect();
        let batch: Vec<RatingExample> = examples
            .iter()
            .map(|(u, i, r)| (u.as_slice(), i.as_slice(), *r))
            .collect();

        // Analytic gradient read back from a unit-lr step: θ' = θ − g.
        let before = base.mlp.params_flat();
        let mut stepped = base.clone();
        stepped.train_step(&batch, 1.0, &mut rng_for(0, &[])).unwrap();
        let after = stepped.mlp.params_flat();
        let analytic: Vec<f64> = before.iter().zip(&after).map(|(b, a)| b - a).collect();

        let numeric = finite_diff_grad(
            |p| {
                let mut mlp = base.mlp.clone();
                mlp.set_params_flat(p).unwrap();
                let probe = RecommenderModel {
                    mlp,
                    k: base.k,
                    dropout_rate: 0.0,
                };
                probe.batch_loss(&batch).unwrap()
            },
            &DenseVector::new(before.clone()).unwrap(),
            1e-5,
        )
        .unwrap();
        let rel = gradient_relative_error(&analytic, numeric.data());
        assert!(rel <= 1e-4, "relative error {rel}");
        base.mlp.set_params_flat(&before).unwrap();
    }

    #[test]
    fn train_step_is_deterministic_under_seeded_dropout() {
        let cfg = RecommenderConfig {
            latent_dim: 3,
            hidden: vec![8, 4],
            dropout_rate: 0.2,
            hidden_activation: Activation::Tanh,
            seed: 4,
        };
        let batch_owned: Vec<(Vec<f64>, Vec<f64>, f64)> = vec![
            (vec![0.1, 0.2, 0.3], vec![0.3, -0.2, 0.1], 0.75),
            (vec![-0.4, 0.1, 0.0], vec![0.2, 0.2, -0.1], 0.25),
        ];
        let batch: Vec<RatingExample> = batch_owned
            .iter()
            .map(|(u, i, r)| (u.as_slice(), i.as_slice(), *r))
            .collect();
        let mut a = RecommenderModel::init(&cfg).unwrap();
        let mut b = RecommenderModel::init(&cfg).unwrap();
        for step in 0..3 {
            let la = a.train_step(&batch, 0.1, &mut rng_for(9, &[step])).unwrap();
            let lb = b.train_step(&batch, 0.1, &mut rng_for(9, &[step])).unwrap();
            assert_eq!(la, lb);
        }
        assert_eq!(a.mlp.params_flat(), b.mlp.params_flat());
    }

    #[test]
    fn embedding_grads_match_finite_differences() {
        let mut model = RecommenderModel::init(&no_dropout_cfg(3, 31)).unwrap();
        let u = vec![0.2, -0.3, 0.1];
        let i = vec![0.4, 0.0, -0.2];
        let r = 0.8;
        let batch = vec![(u.as_slice(), i.as_slice(), r)];
        let frozen = model.clone();
        let (_, grads) = model
            .train_step_with_embedding_grads(&batch, 0.0, &mut rng_for(0, &[]))
            .unwrap();
        let (du, di) = &grads.per_example[0];

        let numeric_u = finite_diff_grad(
            |p| {
                let e = frozen.predict(p, &i).unwrap() - r;
                e * e
            },
            &DenseVector::new(u.clone()).unwrap(),
            1e-6,
        )
        .unwrap();
        assert!(gradient_relative_error(du, numeric_u.data()) < 1e-6);
        let numeric_i = finite_diff_grad(
            |p| {
                let e = frozen.predict(&u, p).unwrap() - r;
                e * e
            },
            &DenseVector::new(i.clone()).unwrap(),
            1e-6,
        )
        .unwrap();
        assert!(gradient_relative_error(di, numeric_i.data()) < 1e-6);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let model = RecommenderModel::init(&no_dropout_cfg(3, 1)).unwrap();
        assert!(matches!(
            model.predict(&[0.1, 0.2], &[0.1, 0.2, 0.3]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn rejects_empty_batch() {
        let mut model = RecommenderModel::init(&no_dropout_cfg(2, 1)).unwrap();
        assert!(model.train_step(&[], 0.1, &mut rng_for(0, &[])).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = RecommenderModel::init(&RecommenderConfig {
            latent_dim: 4,
            hidden: vec![5, 3],
            dropout_rate: 0.15,
            hidden_activation: Activation::Relu,
            seed: 8,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        model.save_checkpoint(&path).unwrap();
        let loaded = RecommenderModel::load_checkpoint(&path).unwrap();
        assert_eq!(loaded.latent_dim(), 4);
        assert_eq!(loaded.dropout_rate(), 0.15);
        assert_eq!(loaded.mlp.params_flat(), model.mlp.params_flat());
        let u = [0.1, 0.2, -0.3, 0.0];
        let i = [0.0, -0.1, 0.2, 0.3];
        assert_eq!(
            loaded.predict(&u, &i).unwrap(),
            model.predict(&u, &i).unwrap()
        );
    }
}
