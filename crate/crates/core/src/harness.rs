//! Experiment drivers: cross-validated evaluation, the overlap-count
//! ablation, embedding-dimension sweep, scalability timing, and the
//! feature-mode comparison. Cells are independent seeded runs and may be
//! spread across worker threads.

use crate::data::{kfold_split, subsample_overlap, DomainDataset, OverlapRegistry, SubsampleMode};
use crate::dual::{train, train_single_domain, score_ratings, Domain, FeatureMode, TrainConfig};
use crate::error::{Error, Result};
use crate::fileio;
use crate::metrics::{
    paired_t_test, report_from_rows, MetricsReport, TTestResult, DEFAULT_TOP_K,
    RELEVANCE_THRESHOLD,
};
use crate::synth::{generate_synthetic_pair, SyntheticConfig};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

/// One evaluated cell of an experiment grid.
#[derive(Debug, Clone)]
pub struct CurveCell {
    pub x: f64,
    pub seed: u64,
    pub domain: String,
    pub report: MetricsReport,
    pub seconds: f64,
}

/// Results over a grid of x-values, several seeds each.
#[derive(Debug, Clone)]
pub struct AblationCurve {
    pub x_values: Vec<f64>,
    pub cells: Vec<CurveCell>,
}

impl AblationCurve {
    pub fn from_cells(mut cells: Vec<CurveCell>) -> Self {
        cells.sort_by(|a, b| {
            a.x.partial_cmp(&b.x)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.seed.cmp(&b.seed))
                .then(a.domain.cmp(&b.domain))
        });
        let mut x_values: Vec<f64> = cells.iter().map(|c| c.x).collect();
        x_values.dedup();
        Self { x_values, cells }
    }

    /// Seed-averaged RMSE at one grid point, across both domains.
    pub fn mean_rmse_at(&self, x: f64) -> f64 {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.x == x)
            .map(|c| c.report.rmse)
            .collect();
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn mean_seconds_at(&self, x: f64) -> f64 {
        let vals: Vec<f64> = self
            .cells
            .iter()
            .filter(|c| c.x == x)
            .map(|c| c.seconds)
            .collect();
        // Each domain row carries the same run timing; the mean keeps it.
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    /// `x,seed,domain,metric,value,seconds` rows, one metric per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("x,seed,domain,metric,value,seconds\n");
        for c in &self.cells {
            let metrics = [
                ("rmse", c.report.rmse),
                ("mae", c.report.mae),
                (&format!("pre@{}", c.report.k) as &str, c.report.precision_at_k),
                (&format!("rec@{}", c.report.k) as &str, c.report.recall_at_k),
            ];
            for (name, value) in metrics {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    c.x, c.seed, c.domain, name, value, c.seconds
                );
            }
        }
        fileio::write_file(path, &out)
    }
}

/// `run_id,domain,metric,value` rows for a set of evaluation reports.
pub fn write_metrics_csv(rows: &[(String, MetricsReport)], path: &Path) -> Result<()> {
    let mut out = String::from("run_id,domain,metric,value\n");
    for (run_id, r) in rows {
        let metrics = [
            ("rmse", r.rmse),
            ("mae", r.mae),
            (&format!("pre@{}", r.k) as &str, r.precision_at_k),
            (&format!("rec@{}", r.k) as &str, r.recall_at_k),
        ];
        for (name, value) in metrics {
            let _ = writeln!(out, "{},{},{},{}", run_id, r.domain, name, value);
        }
    }
    fileio::write_file(path, &out)
}

/// Trains on four fifths of each domain's ratings and evaluates on the held
/// out fold (fold 0 of a seeded 5-fold split).
pub fn train_eval_split(
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    registry: &OverlapRegistry,
    cfg: &TrainConfig,
    run_seed: u64,
) -> Result<(MetricsReport, MetricsReport)> {
    let folds_a = kfold_split(data_a, 5, run_seed)?;
    let folds_b = kfold_split(data_b, 5, run_seed)?;
    let (train_a, test_a) = &folds_a[0];
    let (train_b, test_b) = &folds_b[0];
    let mut run_cfg = cfg.clone();
    run_cfg.seed = run_seed;
    let state = train(train_a, train_b, registry, &run_cfg)?;
    let rows_a = score_ratings(&state, Domain::A, test_a)?;
    let rows_b = score_ratings(&state, Domain::B, test_b)?;
    Ok((
        report_from_rows(&data_a.domain_name, &rows_a, DEFAULT_TOP_K, RELEVANCE_THRESHOLD)?,
        report_from_rows(&data_b.domain_name, &rows_b, DEFAULT_TOP_K, RELEVANCE_THRESHOLD)?,
    ))
}

/// Cross-validated evaluation with per-fold reports retained for paired
/// significance testing.
#[derive(Debug, Clone)]
pub struct CrossvalOutcome {
    pub fold_reports: Vec<(MetricsReport, MetricsReport)>,
}

impl CrossvalOutcome {
    pub fn mean_rmse(&self, domain: Domain) -> f64 {
        let vals = self.rmse_values(domain);
        vals.iter().sum::<f64>() / vals.len() as f64
    }

    pub fn std_rmse(&self, domain: Domain) -> f64 {
        crate::metrics::sample_std(&self.rmse_values(domain))
    }

    pub fn rmse_values(&self, domain: Domain) -> Vec<f64> {
        self.fold_reports
            .iter()
            .map(|(a, b)| match domain {
                Domain::A => a.rmse,
                Domain::B => b.rmse,
            })
            .collect()
    }

    /// Paired two-sided t-test of this run's per-fold RMSE against another.
    pub fn compare_rmse(&self, other: &CrossvalOutcome, domain: Domain) -> Result<TTestResult> {
        paired_t_test(&self.rmse_values(domain), &other.rmse_values(domain))
    }
}

pub fn crossval(
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    registry: &OverlapRegistry,
    cfg: &TrainConfig,
    folds: usize,
) -> Result<CrossvalOutcome> {
    let folds_a = kfold_split(data_a, folds, cfg.seed)?;
    let folds_b = kfold_split(data_b, folds, cfg.seed)?;
    let mut fold_reports = Vec::with_capacity(folds);
    for (fold, ((train_a, test_a), (train_b, test_b))) in
        folds_a.iter().zip(&folds_b).enumerate()
    {
        let mut run_cfg = cfg.clone();
        run_cfg.seed = crate::rng::subseed(cfg.seed, &[0xcf, fold as u64]);
        let state = train(train_a, train_b, registry, &run_cfg)?;
        let rows_a = score_ratings(&state, Domain::A, test_a)?;
        let rows_b = score_ratings(&state, Domain::B, test_b)?;
        fold_reports.push((
            report_from_rows(&data_a.domain_name, &rows_a, DEFAULT_TOP_K, RELEVANCE_THRESHOLD)?,
            report_from_rows(&data_b.domain_name, &rows_b, DEFAULT_TOP_K, RELEVANCE_THRESHOLD)?,
        ));
    }
    Ok(CrossvalOutcome { fold_reports })
}

/// Runs `work` over `n_cells` indices on up to `jobs` worker threads and
/// collects the produced cells. Each cell is independent and seeded, so the
/// result set does not depend on scheduling.
fn run_cells<F>(n_cells: usize, jobs: usize, work: F) -> Result<Vec<CurveCell>>
where
    F: Fn(usize) -> Result<Vec<CurveCell>> + Sync,
{
    let jobs = jobs.max(1).min(n_cells.max(1));
    let results: Mutex<Vec<CurveCell>> = Mutex::new(Vec::new());
    let errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= n_cells {
                    break;
                }
                match work(idx) {
                    Ok(mut cells) => results.lock().expect("poisoned").append(&mut cells),
                    Err(e) => errors.lock().expect("poisoned").push(e),
                }
            });
        }
    });
    let mut errors = errors.into_inner().expect("poisoned");
    if let Some(e) = errors.pop() {
        return Err(e);
    }
    Ok(results.into_inner().expect("poisoned"))
}

/// Overlap-count ablation: for each count and seed, keep that many overlap
/// pairs (seeded), retrain from scratch, and evaluate on the held-out fold.
#[allow(clippy::too_many_arguments)]
pub fn ablate_overlap(
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    registry: &OverlapRegistry,
    counts: &[usize],
    mode: SubsampleMode,
    seeds: &[u64],
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<AblationCurve> {
    for &count in counts {
        if count > registry.len() {
            return Err(Error::Validation(format!(
                "ablation count {count} exceeds the {} available overlap pairs",
                registry.len()
            )));
        }
    }
    let grid: Vec<(usize, u64)> = counts
        .iter()
        .flat_map(|&c| seeds.iter().map(move |&s| (c, s)))
        .collect();
    let cells = run_cells(grid.len(), jobs, |idx| {
        let (count, seed) = grid[idx];
        let started = Instant::now();
        let (kept, plan) = subsample_overlap(registry, count, mode, seed)?;
        let mut a = data_a.clone();
        let mut b = data_b.clone();
        plan.apply(&mut a, &mut b);
        let (rep_a, rep_b) = train_eval_split(&a, &b, &kept, cfg, seed)?;
        let seconds = started.elapsed().as_secs_f64();
        Ok(vec![
            CurveCell {
                x: count as f64,
                seed,
                domain: rep_a.domain.clone(),
                report: rep_a,
                seconds,
            },
            CurveCell {
                x: count as f64,
                seed,
                domain: rep_b.domain.clone(),
                report: rep_b,
                seconds,
            },
        ])
    })?;
    Ok(AblationCurve::from_cells(cells))
}

/// Embedding-dimension sweep: retrains embeddings and the full pipeline at
/// each dimension on the same data and splits.
pub fn sweep_dimension(
    dims: &[usize],
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    registry: &OverlapRegistry,
    cfg: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<AblationCurve> {
    let grid: Vec<(usize, u64)> = dims
        .iter()
        .flat_map(|&d| seeds.iter().map(move |&s| (d, s)))
        .collect();
    let cells = run_cells(grid.len(), jobs, |idx| {
        let (dim, seed) = grid[idx];
        let started = Instant::now();
        let mut dim_cfg = cfg.clone();
        dim_cfg.latent_dim = dim;
        let (rep_a, rep_b) = train_eval_split(data_a, data_b, registry, &dim_cfg, seed)?;
        let seconds = started.elapsed().as_secs_f64();
        Ok(vec![
            CurveCell {
                x: dim as f64,
                seed,
                domain: rep_a.domain.clone(),
                report: rep_a,
                seconds,
            },
            CurveCell {
                x: dim as f64,
                seed,
                domain: rep_b.domain.clone(),
                report: rep_b,
                seconds,
            },
        ])
    })?;
    Ok(AblationCurve::from_cells(cells))
}

/// Scalability timing: synthesizes coupled datasets at increasing record
/// counts (totals across both domains) and times the full training pipeline
/// at each size. Sizes above `max_records` are skipped so the suite stays
/// desk-scale by default. Timing cells run sequentially; parallel workers
/// would distort wall-clock measurements on shared cores.
pub fn sweep_scalability(
    sizes: &[usize],
    base: &SyntheticConfig,
    cfg: &TrainConfig,
    max_records: usize,
) -> Result<AblationCurve> {
    let mut cells = Vec::new();
    for &size in sizes.iter().filter(|&&s| s <= max_records) {
        let mut synth = base.clone();
        synth.users_per_domain = (size / (2 * base.ratings_per_user)).max(base.ratings_per_user.max(5));
        synth.overlap_count = synth.overlap_count.min(synth.users_per_domain);
        let pair = generate_synthetic_pair(&synth)?;
        // Fixed epoch budget: disable early convergence so measured time
        // scales with data volume alone.
        let mut run_cfg = cfg.clone();
        run_cfg.convergence_eps = f64::MIN_POSITIVE;
        let started = Instant::now();
        let (rep_a, rep_b) =
            train_eval_split(&pair.domain_a, &pair.domain_b, &pair.registry, &run_cfg, cfg.seed)?;
        let seconds = started.elapsed().as_secs_f64();
        let records = pair.domain_a.ratings.len() + pair.domain_b.ratings.len();
        for rep in [rep_a, rep_b] {
            cells.push(CurveCell {
                x: records as f64,
                seed: cfg.seed,
                domain: rep.domain.clone(),
                report: rep,
                seconds,
            });
        }
    }
    if cells.is_empty() {
        return Err(Error::Validation(
            "no scalability sizes at or below the record cap".into(),
        ));
    }
    Ok(AblationCurve::from_cells(cells))
}

/// Log-log regression slope of seconds against record count.
pub fn scaling_exponent(curve: &AblationCurve) -> Result<f64> {
    let points: Vec<(f64, f64)> = curve
        .x_values
        .iter()
        .map(|&x| (x.ln(), curve.mean_seconds_at(x).max(1e-9).ln()))
        .collect();
    if points.len() < 2 {
        return Err(Error::Validation(
            "scaling exponent needs at least two sizes".into(),
        ));
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Ok(sxy / sxx)
}

/// Feature-mode comparison on identical splits and seeds.
#[derive(Debug, Clone)]
pub struct FeatureModeCell {
    pub seed: u64,
    pub with_features: (MetricsReport, MetricsReport),
    pub ids_only: (MetricsReport, MetricsReport),
}

pub fn feature_mode_comparison(
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    registry: &OverlapRegistry,
    cfg: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<Vec<FeatureModeCell>> {
    let results: Mutex<Vec<FeatureModeCell>> = Mutex::new(Vec::new());
    let errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let jobs = jobs.max(1).min(seeds.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= seeds.len() {
                    break;
                }
                let seed = seeds[idx];
                let run = || -> Result<FeatureModeCell> {
                    let mut feat_cfg = cfg.clone();
                    feat_cfg.feature_mode = FeatureMode::Features;
                    let mut ids_cfg = cfg.clone();
                    ids_cfg.feature_mode = FeatureMode::IdsOnly;
                    Ok(FeatureModeCell {
                        seed,
                        with_features: train_eval_split(data_a, data_b, registry, &feat_cfg, seed)?,
                        ids_only: train_eval_split(data_a, data_b, registry, &ids_cfg, seed)?,
                    })
                };
                match run() {
                    Ok(cell) => results.lock().expect("poisoned").push(cell),
                    Err(e) => errors.lock().expect("poisoned").push(e),
                }
            });
        }
    });
    let mut errors = errors.into_inner().expect("poisoned");
    if let Some(e) = errors.pop() {
        return Err(e);
    }
    let mut cells = results.into_inner().expect("poisoned");
    cells.sort_by_key(|c| c.seed);
    Ok(cells)
}

/// Transfer-benefit comparison: the dual pipeline against independent
/// single-domain baselines on the same splits; one paired sample per seed.
#[derive(Debug, Clone)]
pub struct TransferComparison {
    pub dual_rmse_a: Vec<f64>,
    pub dual_rmse_b: Vec<f64>,
    pub baseline_rmse_a: Vec<f64>,
    pub baseline_rmse_b: Vec<f64>,
}

impl TransferComparison {
    pub fn mean(values: &[f64]) -> f64 {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

pub fn transfer_comparison(
    data_a: &DomainDataset,
    data_b: &DomainDataset,
    registry: &OverlapRegistry,
    cfg: &TrainConfig,
    seeds: &[u64],
    jobs: usize,
) -> Result<TransferComparison> {
    #[derive(Clone)]
    struct Sample {
        seed: u64,
        dual_a: f64,
        dual_b: f64,
        base_a: f64,
        base_b: f64,
    }
    let samples: Mutex<Vec<Sample>> = Mutex::new(Vec::new());
    let errors: Mutex<Vec<Error>> = Mutex::new(Vec::new());
    let next = AtomicUsize::new(0);
    let jobs = jobs.max(1).min(seeds.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                if idx >= seeds.len() {
                    break;
                }
                let seed = seeds[idx];
                let run = || -> Result<Sample> {
                    let (dual_a, dual_b) = train_eval_split(data_a, data_b, registry, cfg, seed)?;
                    // Baselines see one domain each, same folds and seed.
                    let folds_a = kfold_split(data_a, 5, seed)?;
                    let folds_b = kfold_split(data_b, 5, seed)?;
                    let mut base_cfg = cfg.clone();
                    base_cfg.seed = seed;
                    let model_a = train_single_domain(&folds_a[0].0, &base_cfg)?;
                    let model_b = train_single_domain(&folds_b[0].0, &base_cfg)?;
                    let rows_a = model_a.score_ratings(&folds_a[0].1)?;
                    let rows_b = model_b.score_ratings(&folds_b[0].1)?;
                    let base_a =
                        report_from_rows("a", &rows_a, DEFAULT_TOP_K, RELEVANCE_THRESHOLD)?.rmse;
                    let base_b =
                        report_from_rows("b", &rows_b, DEFAULT_TOP_K, RELEVANCE_THRESHOLD)?.rmse;
                    Ok(Sample {
                        seed,
                        dual_a: dual_a.rmse,
                        dual_b: dual_b.rmse,
                        base_a,
                        base_b,
                    })
                };
                match run() {
                    Ok(s) => samples.lock().expect("poisoned").push(s),
                    Err(e) => errors.lock().expect("poisoned").push(e),
                }
            });
        }
    });
    let mut errors = errors.into_inner().expect("poisoned");
    if let Some(e) = errors.pop() {
        return Err(e);
    }
    let mut samples = samples.into_inner().expect("poisoned");
    samples.sort_by_key(|s| s.seed);
    Ok(TransferComparison {
        dual_rmse_a: samples.iter().map(|s| s.dual_a).collect(),
        dual_rmse_b: samples.iter().map(|s| s.dual_b).collect(),
        baseline_rmse_a: samples.iter().map(|s| s.base_a).collect(),
        baseline_rmse_b: samples.iter().map(|s| s.base_b).collect(),
    })
}
