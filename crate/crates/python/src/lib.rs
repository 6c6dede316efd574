//! Python bindings over the core crate: the orthogonal mapping type plus the
//! metric, factorization, and synthetic-pipeline entry points.

use duorec_core::dual::{train, FeatureMode, TrainConfig};
use duorec_core::embed;
use duorec_core::mapping;
use duorec_core::mapping::AlignPair;
use duorec_core::metrics;
use duorec_core::nmf;
use duorec_core::synth::{generate_synthetic_pair, SyntheticConfig};
use duorec_core::tensor::{self, DenseMatrix, DenseVector, OrthogonalMap};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::collections::BTreeSet;

fn err(e: duorec_core::Error) -> PyErr {
    PyValueError::new_err(format!("{}: {e}", e.reason_slug()))
}

fn matrix_from_rows(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(&rows).map_err(err)
}

fn matrix_to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// Square orthogonal mapping between two embedding spaces.
#[pyclass(name = "Mapping")]
#[derive(Clone)]
struct PyMapping {
    inner: OrthogonalMap,
}

#[pymethods]
impl PyMapping {
    #[staticmethod]
    fn identity(k: usize) -> Self {
        Self {
            inner: OrthogonalMap::identity(k),
        }
    }

    /// Gram-Schmidt orthonormalization of the rows of a square matrix.
    #[staticmethod]
    fn orthonormalize(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = matrix_from_rows(rows)?;
        Ok(Self {
            inner: tensor::gram_schmidt_orthonormalize(&m).map_err(err)?,
        })
    }

    /// Closed-form optimum of the alignment problem over orthogonal maps.
    #[staticmethod]
    fn procrustes(sources: Vec<Vec<f64>>, targets: Vec<Vec<f64>>) -> PyResult<Self> {
        let sources: Vec<DenseVector> = sources.into_iter().map(DenseVector::from).collect();
        let targets: Vec<DenseVector> = targets.into_iter().map(DenseVector::from).collect();
        Ok(Self {
            inner: tensor::procrustes_oracle(&sources, &targets).map_err(err)?,
        })
    }

    /// Gradient training with re-orthonormalization on overlap pairs,
    /// starting from the identity in the reachable component.
    #[staticmethod]
    #[pyo3(signature = (pairs, lr=0.5, steps=1000))]
    fn fit(pairs: Vec<(Vec<f64>, Vec<f64>)>, lr: f64, steps: usize) -> PyResult<Self> {
        if pairs.is_empty() {
            return Err(PyValueError::new_err("need at least one pair"));
        }
        let k = pairs[0].0.len();
        let borrowed: Vec<AlignPair> = pairs
            .iter()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .collect();
        let mut x =
            mapping::orient_to_pairs(&OrthogonalMap::identity(k), &borrowed).map_err(err)?;
        let per_pair = lr / borrowed.len() as f64;
        for _ in 0..steps {
            let (next, _, _) = mapping::update_mapping(&x, &borrowed, per_pair).map_err(err)?;
            x = next;
        }
        Ok(Self { inner: x })
    }

    /// Chains hops so applying the result equals applying each in sequence.
    #[staticmethod]
    fn compose(maps: Vec<PyMapping>) -> PyResult<Self> {
        let inner: Vec<OrthogonalMap> = maps.into_iter().map(|m| m.inner).collect();
        Ok(Self {
            inner: mapping::compose_mappings(&inner).map_err(err)?,
        })
    }

    fn forward(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        mapping::map_forward(&self.inner, &v).map_err(err)
    }

    fn inverse(&self, v: Vec<f64>) -> PyResult<Vec<f64>> {
        mapping::map_inverse(&self.inner, &v).map_err(err)
    }

    /// (primal, dual) alignment losses over pairs.
    fn alignment_loss(&self, pairs: Vec<(Vec<f64>, Vec<f64>)>) -> PyResult<(f64, f64)> {
        let borrowed: Vec<AlignPair> = pairs
            .iter()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .collect();
        mapping::alignment_loss(&self.inner, &borrowed).map_err(err)
    }

    fn matrix(&self) -> Vec<Vec<f64>> {
        matrix_to_rows(self.inner.matrix())
    }

    fn orthogonality_error(&self) -> f64 {
        self.inner.orthogonality_error()
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k()
    }

    fn __repr__(&self) -> String {
        format!("Mapping(k={}, drift={:.2e})", self.inner.k(), self.inner.orthogonality_error())
    }
}

/// Overlap users needed to pin down a k-dimensional orthogonal mapping.
#[pyfunction]
fn min_overlap_required(k: usize) -> usize {
    mapping::min_overlap_required(k)
}

#[pyfunction]
fn project_unit_ball(v: Vec<f64>) -> Vec<f64> {
    embed::project_unit_ball(&v)
}

#[pyfunction]
fn rmse(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::rmse(&pred, &truth).map_err(err)
}

#[pyfunction]
fn mae(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::mae(&pred, &truth).map_err(err)
}

/// User-averaged Precision@K and Recall@K. Each user is a pair of
/// `(scored_items, relevant_ids)` where scored items are `(item_id, score)`.
#[pyfunction]
#[pyo3(signature = (users, k=5))]
fn precision_recall_at_k(
    users: Vec<(Vec<(String, f64)>, Vec<String>)>,
    k: usize,
) -> PyResult<(f64, f64)> {
    let users: Vec<metrics::UserPredictions> = users
        .into_iter()
        .map(|(predictions, relevant)| metrics::UserPredictions {
            predictions,
            relevant: relevant.into_iter().collect::<BTreeSet<String>>(),
        })
        .collect();
    metrics::precision_recall_at_k(&users, k).map_err(err)
}

/// Relative improvement percentage; `direction` is `"lower_better"` or
/// `"higher_better"`.
#[pyfunction]
fn improvement_pct(ours: f64, baseline: f64, direction: &str) -> PyResult<f64> {
    let direction = match direction {
        "lower_better" => metrics::Direction::LowerBetter,
        "higher_better" => metrics::Direction::HigherBetter,
        other => {
            return Err(PyValueError::new_err(format!(
                "direction must be lower_better or higher_better, got {other:?}"
            )))
        }
    };
    metrics::improvement_pct(ours, baseline, direction).map_err(err)
}

/// Generates a synthetic coupled domain pair on disk in the directory
/// layout the training pipeline reads.
#[pyfunction]
#[pyo3(signature = (out_dir, seed, users=200, items=80, dim=8, overlap=60, noise=0.02, feature_noise=0.02, ratings_per_user=10, feature_dim=None))]
#[allow(clippy::too_many_arguments)]
fn synth_to_dir(
    out_dir: &str,
    seed: u64,
    users: usize,
    items: usize,
    dim: usize,
    overlap: usize,
    noise: f64,
    feature_noise: f64,
    ratings_per_user: usize,
    feature_dim: Option<usize>,
) -> PyResult<()> {
    let cfg = SyntheticConfig {
        users_per_domain: users,
        items_per_domain: items,
        latent_dim: dim,
        overlap_count: overlap,
        noise_std: noise,
        feature_noise_std: feature_noise,
        user_feature_dim: feature_dim.unwrap_or(dim + 8),
        item_feature_dim: feature_dim.unwrap_or(dim + 8),
        ratings_per_user,
        seed,
    };
    let pair = generate_synthetic_pair(&cfg).map_err(err)?;
    let base = std::path::Path::new(out_dir);
    duorec_core::data::save_domain(&pair.domain_a, &base.join("domain_a")).map_err(err)?;
    duorec_core::data::save_domain(&pair.domain_b, &base.join("domain_b")).map_err(err)?;
    mapping::write_map_file(&pair.planted_map, &base.join("planted_map.txt")).map_err(err)?;
    Ok(())
}

/// End-to-end run on generated coupled data: returns the loss history and
/// final validation figures as a dict.
#[pyfunction]
#[pyo3(signature = (seed, users=120, items=60, dim=4, overlap=40, noise=0.02, ratings_per_user=8, epochs=20, lr=0.1, feature_mode="features"))]
#[allow(clippy::too_many_arguments)]
fn train_synthetic(
    py: Python<'_>,
    seed: u64,
    users: usize,
    items: usize,
    dim: usize,
    overlap: usize,
    noise: f64,
    ratings_per_user: usize,
    epochs: usize,
    lr: f64,
    feature_mode: &str,
) -> PyResult<Py<PyDict>> {
    let synth = SyntheticConfig {
        users_per_domain: users,
        items_per_domain: items,
        latent_dim: dim,
        overlap_count: overlap,
        noise_std: noise,
        feature_noise_std: noise,
        user_feature_dim: dim + 8,
        item_feature_dim: dim + 8,
        ratings_per_user,
        seed,
    };
    let pair = generate_synthetic_pair(&synth).map_err(err)?;
    let mode = match feature_mode {
        "features" => FeatureMode::Features,
        "ids" | "ids_only" => FeatureMode::IdsOnly,
        other => {
            return Err(PyValueError::new_err(format!(
                "feature_mode must be features or ids, got {other:?}"
            )))
        }
    };
    let cfg = TrainConfig {
        latent_dim: dim,
        max_epochs: epochs,
        lr_rs: lr,
        feature_mode: mode,
        ae_hidden: vec![],
        ae_epochs: 100,
        ae_lr: 0.05,
        seed,
        ..Default::default()
    };
    let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("epochs", state.epoch)?;
    out.set_item("converged", state.converged)?;
    out.set_item("max_ortho_drift", state.max_ortho_drift)?;
    out.set_item(
        "total_loss",
        state.history.iter().map(|r| r.total()).collect::<Vec<f64>>(),
    )?;
    out.set_item(
        "val_a",
        state.history.iter().map(|r| r.val_a).collect::<Vec<f64>>(),
    )?;
    out.set_item(
        "val_b",
        state.history.iter().map(|r| r.val_b).collect::<Vec<f64>>(),
    )?;
    Ok(out.into())
}

/// Coupled nonnegative factorization demonstrator; returns the recorded
/// objective history and condition report.
#[pyfunction]
#[pyo3(signature = (seed, alpha=0.3, rows=12, cols=10, rank=3, iters=500))]
fn nmf_demo(
    py: Python<'_>,
    seed: u64,
    alpha: f64,
    rows: usize,
    cols: usize,
    rank: usize,
    iters: usize,
) -> PyResult<Py<PyDict>> {
    let (v_a, v_b, x) = nmf::coupled_demo_instance(rows, cols, seed).map_err(err)?;
    let state = nmf::run_dual_nmf(&v_a, &v_b, &x, alpha, rank, iters, seed).map_err(err)?;
    let out = PyDict::new(py);
    out.set_item("history", state.loss_history.clone())?;
    out.set_item("perturbation", state.perturbation)?;
    out.set_item(
        "conditions",
        (state.conditions.a, state.conditions.b, state.conditions.c),
    )?;
    Ok(out.into())
}

#[pymodule]
fn duorec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMapping>()?;
    m.add_function(wrap_pyfunction!(min_overlap_required, m)?)?;
    m.add_function(wrap_pyfunction!(project_unit_ball, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(mae, m)?)?;
    m.add_function(wrap_pyfunction!(precision_recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(improvement_pct, m)?)?;
    m.add_function(wrap_pyfunction!(synth_to_dir, m)?)?;
    m.add_function(wrap_pyfunction!(train_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(nmf_demo, m)?)?;
    Ok(())
}
