//! Implementations behind the subcommands.

use crate::config::{parse_usize_list, parse_widths, FileConfig};
use crate::{Command, SynthFlags, TrainFlags};
use duorec_core::data::{
    find_overlap, load_domain, normalize_ratings, save_domain, DomainDataset, SubsampleMode,
};
use duorec_core::dual::{
    predict_final, train, write_history_csv, Domain, DualTrainerState, FeatureMode, TrainConfig,
};
use duorec_core::embed::EmbeddingTable;
use duorec_core::error::{Error, Result};
use duorec_core::harness::{
    ablate_overlap, feature_mode_comparison, sweep_dimension, sweep_scalability, write_metrics_csv,
    AblationCurve, CurveCell,
};
use duorec_core::mapping::{read_map_file, write_map_file};
use duorec_core::metrics::{report_from_rows, DEFAULT_TOP_K, RELEVANCE_THRESHOLD};
use duorec_core::nmf::{check_conditions, coupled_demo_instance, run_dual_nmf};
use duorec_core::recsys::RecommenderModel;
use duorec_core::synth::{generate_synthetic_pair, SyntheticConfig};
use std::fmt::Write as _;
use std::path::Path;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth {
            out,
            seed,
            config,
            dim,
            synth,
        } => cmd_synth(&out, seed, config.as_deref(), dim, &synth),
        Command::Train {
            domain_a,
            domain_b,
            out,
            train,
        } => cmd_train(&domain_a, &domain_b, &out, &train),
        Command::Eval {
            domain_a,
            domain_b,
            model,
            out,
        } => cmd_eval(&domain_a, &domain_b, &model, &out),
        Command::AblateOverlap {
            out,
            counts,
            mode,
            seeds,
            jobs,
            synth,
            train,
        } => cmd_ablate_overlap(&out, &counts, &mode, seeds, jobs, &synth, &train),
        Command::SweepDim {
            out,
            dims,
            seeds,
            jobs,
            synth,
            train,
        } => cmd_sweep_dim(&out, &dims, seeds, jobs, &synth, &train),
        Command::Scalability {
            out,
            sizes,
            max_records,
            synth,
            train,
        } => cmd_scalability(&out, &sizes, max_records, &synth, &train),
        Command::FeatureModes {
            out,
            seeds,
            jobs,
            synth,
            train,
        } => cmd_feature_modes(&out, seeds, jobs, &synth, &train),
        Command::NmfDemo {
            out,
            alpha,
            seed,
            rows,
            cols,
            rank,
            iters,
        } => cmd_nmf_demo(&out, alpha, seed, rows, cols, rank, iters),
    }
}

fn require_dir(path: &Path) -> Result<()> {
    if !path.is_dir() {
        return Err(Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "input-not-found"),
        });
    }
    Ok(())
}

fn synth_config(flags: &SynthFlags, dim: Option<usize>, seed: u64, file: &FileConfig) -> Result<SyntheticConfig> {
    let defaults = SyntheticConfig::default();
    let latent_dim = file.resolve(dim, "dim", defaults.latent_dim)?;
    let feature_dim_default = (latent_dim + 8).max(defaults.latent_dim);
    let feature_dim = file.resolve(flags.feature_dim, "feature_dim", feature_dim_default)?;
    Ok(SyntheticConfig {
        users_per_domain: file.resolve(flags.users, "users", defaults.users_per_domain)?,
        items_per_domain: file.resolve(flags.items, "items", defaults.items_per_domain)?,
        latent_dim,
        overlap_count: file.resolve(flags.overlap, "overlap", defaults.overlap_count)?,
        noise_std: file.resolve(flags.noise, "noise", defaults.noise_std)?,
        feature_noise_std: file.resolve(flags.feature_noise, "feature_noise", defaults.feature_noise_std)?,
        user_feature_dim: feature_dim,
        item_feature_dim: feature_dim,
        ratings_per_user: file.resolve(flags.ratings_per_user, "ratings_per_user", defaults.ratings_per_user)?,
        seed,
    })
}

fn train_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let file = FileConfig::load(flags.config.as_deref())?;
    let defaults = TrainConfig::default();
    let feature_mode = match file
        .resolve_opt(flags.feature_mode.clone(), "feature_mode")?
        .as_deref()
    {
        None | Some("features") => FeatureMode::Features,
        Some("ids") | Some("ids_only") => FeatureMode::IdsOnly,
        Some(other) => {
            return Err(Error::Validation(format!(
                "feature mode must be `features` or `ids`, got {other:?}"
            )))
        }
    };
    let rs_activation = match file
        .resolve_opt(flags.rs_activation.clone(), "rs_activation")?
        .as_deref()
    {
        None | Some("tanh") => duorec_core::mlp::Activation::Tanh,
        Some("relu") => duorec_core::mlp::Activation::Relu,
        Some(other) => {
            return Err(Error::Validation(format!(
                "recommender activation must be `tanh` or `relu`, got {other:?}"
            )))
        }
    };
    let ae_hidden = match file.resolve_opt(flags.ae_hidden.clone(), "ae_hidden")? {
        Some(raw) => parse_widths(&raw)?,
        None => defaults.ae_hidden.clone(),
    };
    Ok(TrainConfig {
        latent_dim: file.resolve(flags.dim, "dim", defaults.latent_dim)?,
        max_epochs: file.resolve(flags.epochs, "epochs", defaults.max_epochs)?,
        convergence_eps: file.resolve(flags.eps, "eps", defaults.convergence_eps)?,
        lr_rs: file.resolve(flags.lr, "lr", defaults.lr_rs)?,
        lr_map: file.resolve(flags.lr_map, "lr_map", defaults.lr_map)?,
        batch: file.resolve(flags.batch, "batch", defaults.batch)?,
        map_batch: file.resolve(None, "map_batch", defaults.map_batch)?,
        dropout_rate: file.resolve(flags.dropout, "dropout", defaults.dropout_rate)?,
        rs_activation,
        whiten_embeddings: file.resolve(flags.whiten, "whiten", defaults.whiten_embeddings)?,
        feature_mode,
        rs_hidden: defaults.rs_hidden.clone(),
        ae_hidden,
        ae_epochs: file.resolve(flags.ae_epochs, "ae_epochs", defaults.ae_epochs)?,
        ae_lr: file.resolve(flags.ae_lr, "ae_lr", defaults.ae_lr)?,
        val_fraction: defaults.val_fraction,
        seed: flags.seed,
    })
}

fn cmd_synth(
    out: &Path,
    seed: u64,
    config: Option<&Path>,
    dim: Option<usize>,
    flags: &SynthFlags,
) -> Result<()> {
    let file = FileConfig::load(config)?;
    let cfg = synth_config(flags, dim, seed, &file)?;
    let pair = generate_synthetic_pair(&cfg)?;
    save_domain(&pair.domain_a, &out.join("domain_a"))?;
    save_domain(&pair.domain_b, &out.join("domain_b"))?;
    write_map_file(&pair.planted_map, &out.join("planted_map.txt"))?;
    println!(
        "wrote {} + {} ratings across {} shared users to {}",
        pair.domain_a.ratings.len(),
        pair.domain_b.ratings.len(),
        pair.registry.len(),
        out.display()
    );
    Ok(())
}

fn load_normalized(dir: &Path) -> Result<DomainDataset> {
    require_dir(dir)?;
    normalize_ratings(&load_domain(dir)?)
}

fn cmd_train(domain_a: &Path, domain_b: &Path, out: &Path, flags: &TrainFlags) -> Result<()> {
    let data_a = load_normalized(domain_a)?;
    let data_b = load_normalized(domain_b)?;
    let registry = find_overlap(&data_a, &data_b);
    let cfg = train_config(flags)?;
    let state = train(&data_a, &data_b, &registry, &cfg)?;

    write_history_csv(&state.history, &out.join("history.csv"))?;
    state.rs_a.save_checkpoint(&out.join("rs_a.ckpt"))?;
    state.rs_b.save_checkpoint(&out.join("rs_b.ckpt"))?;
    write_map_file(&state.mapping, &out.join("mapping.txt"))?;
    state.user_emb_a.write_csv(&out.join("embeddings_user_a.csv"))?;
    state.item_emb_a.write_csv(&out.join("embeddings_item_a.csv"))?;
    state.user_emb_b.write_csv(&out.join("embeddings_user_b.csv"))?;
    state.item_emb_b.write_csv(&out.join("embeddings_item_b.csv"))?;
    let last = state.history.last();
    println!(
        "trained {} epochs (converged: {}); final validation RMSE a={} b={}; outputs in {}",
        state.epoch,
        state.converged,
        last.map(|r| r.val_a).unwrap_or(f64::NAN),
        last.map(|r| r.val_b).unwrap_or(f64::NAN),
        out.display()
    );
    Ok(())
}

fn cmd_eval(domain_a: &Path, domain_b: &Path, model: &Path, out: &Path) -> Result<()> {
    require_dir(model)?;
    let data_a = load_normalized(domain_a)?;
    let data_b = load_normalized(domain_b)?;
    let state = DualTrainerState {
        rs_a: RecommenderModel::load_checkpoint(&model.join("rs_a.ckpt"))?,
        rs_b: RecommenderModel::load_checkpoint(&model.join("rs_b.ckpt"))?,
        mapping: read_map_file(&model.join("mapping.txt"))?,
        user_emb_a: EmbeddingTable::read_csv(&model.join("embeddings_user_a.csv"))?,
        item_emb_a: EmbeddingTable::read_csv(&model.join("embeddings_item_a.csv"))?,
        user_emb_b: EmbeddingTable::read_csv(&model.join("embeddings_user_b.csv"))?,
        item_emb_b: EmbeddingTable::read_csv(&model.join("embeddings_item_b.csv"))?,
        epoch: 0,
        history: Vec::new(),
        converged: false,
        max_ortho_drift: 0.0,
    };
    let mut rows = Vec::new();
    for (domain, data) in [(Domain::A, &data_a), (Domain::B, &data_b)] {
        let scored: Result<Vec<(String, String, f64, f64)>> = data
            .ratings
            .iter()
            .map(|r| {
                predict_final(&state, domain, &r.user_id, &r.item_id)
                    .map(|p| (r.user_id.clone(), r.item_id.clone(), p, r.rating))
            })
            .collect();
        let report = report_from_rows(
            data.domain_name.clone(),
            &scored?,
            DEFAULT_TOP_K,
            RELEVANCE_THRESHOLD,
        )?;
        println!(
            "{}: rmse {:.4} mae {:.4} pre@{} {:.4} rec@{} {:.4} over {} ratings",
            report.domain,
            report.rmse,
            report.mae,
            report.k,
            report.precision_at_k,
            report.k,
            report.recall_at_k,
            report.n_test
        );
        rows.push((format!("domain_{}", domain.label()), report));
    }
    write_metrics_csv(&rows, &out.join("metrics.csv"))?;
    println!("metrics written to {}", out.join("metrics.csv").display());
    Ok(())
}

fn experiment_inputs(
    flags: &SynthFlags,
    train_flags: &TrainFlags,
) -> Result<(SyntheticConfig, TrainConfig)> {
    let file = FileConfig::load(train_flags.config.as_deref())?;
    let train_cfg = train_config(train_flags)?;
    let synth = synth_config(flags, Some(train_cfg.latent_dim), train_flags.seed, &file)?;
    Ok((synth, train_cfg))
}

fn cmd_ablate_overlap(
    out: &Path,
    counts: &str,
    mode: &str,
    seeds: u64,
    jobs: usize,
    synth_flags: &SynthFlags,
    train_flags: &TrainFlags,
) -> Result<()> {
    let (synth, cfg) = experiment_inputs(synth_flags, train_flags)?;
    let pair = generate_synthetic_pair(&synth)?;
    let counts: Vec<usize> = counts
        .split(',')
        .map(|c| {
            let c = c.trim();
            if c == "all" {
                Ok(pair.registry.len())
            } else {
                c.parse::<usize>()
                    .map_err(|_| Error::Validation(format!("bad overlap count {c:?}")))
            }
        })
        .collect::<Result<_>>()?;
    let mode = match mode {
        "unlink" => SubsampleMode::Unlink,
        "discard" => SubsampleMode::Discard,
        other => {
            return Err(Error::Validation(format!(
                "mode must be `unlink` or `discard`, got {other:?}"
            )))
        }
    };
    let seed_list: Vec<u64> = (1..=seeds).collect();
    let curve = ablate_overlap(
        &pair.domain_a,
        &pair.domain_b,
        &pair.registry,
        &counts,
        mode,
        &seed_list,
        &cfg,
        jobs,
    )?;
    curve.write_csv(&out.join("curve.csv"))?;
    for &x in &curve.x_values {
        println!("overlap {:>6}: mean rmse {:.4}", x as usize, curve.mean_rmse_at(x));
    }
    println!("curve written to {}", out.join("curve.csv").display());
    Ok(())
}

fn cmd_sweep_dim(
    out: &Path,
    dims: &str,
    seeds: u64,
    jobs: usize,
    synth_flags: &SynthFlags,
    train_flags: &TrainFlags,
) -> Result<()> {
    let (synth, cfg) = experiment_inputs(synth_flags, train_flags)?;
    let pair = generate_synthetic_pair(&synth)?;
    let dims = parse_usize_list(dims)?;
    let seed_list: Vec<u64> = (1..=seeds).collect();
    let curve = sweep_dimension(
        &dims,
        &pair.domain_a,
        &pair.domain_b,
        &pair.registry,
        &cfg,
        &seed_list,
        jobs,
    )?;
    curve.write_csv(&out.join("curve.csv"))?;
    for &x in &curve.x_values {
        println!("dim {:>4}: mean rmse {:.4}", x as usize, curve.mean_rmse_at(x));
    }
    println!("curve written to {}", out.join("curve.csv").display());
    Ok(())
}

fn cmd_scalability(
    out: &Path,
    sizes: &str,
    max_records: usize,
    synth_flags: &SynthFlags,
    train_flags: &TrainFlags,
) -> Result<()> {
    let (synth, cfg) = experiment_inputs(synth_flags, train_flags)?;
    let sizes = parse_usize_list(sizes)?;
    let curve = sweep_scalability(&sizes, &synth, &cfg, max_records)?;
    curve.write_csv(&out.join("curve.csv"))?;
    for &x in &curve.x_values {
        println!(
            "records {:>8}: {:.2}s",
            x as usize,
            curve.mean_seconds_at(x)
        );
    }
    if curve.x_values.len() >= 2 {
        println!(
            "fitted scaling exponent: {:.3}",
            duorec_core::harness::scaling_exponent(&curve)?
        );
    }
    println!("curve written to {}", out.join("curve.csv").display());
    Ok(())
}

fn cmd_feature_modes(
    out: &Path,
    seeds: u64,
    jobs: usize,
    synth_flags: &SynthFlags,
    train_flags: &TrainFlags,
) -> Result<()> {
    let (synth, cfg) = experiment_inputs(synth_flags, train_flags)?;
    let pair = generate_synthetic_pair(&synth)?;
    let seed_list: Vec<u64> = (1..=seeds).collect();
    let cells = feature_mode_comparison(
        &pair.domain_a,
        &pair.domain_b,
        &pair.registry,
        &cfg,
        &seed_list,
        jobs,
    )?;
    // x = 0 rows are feature-based runs, x = 1 rows are id-only runs.
    let mut curve_cells = Vec::new();
    for cell in &cells {
        for (x, (rep_a, rep_b)) in [(0.0, &cell.with_features), (1.0, &cell.ids_only)] {
            for rep in [rep_a, rep_b] {
                curve_cells.push(CurveCell {
                    x,
                    seed: cell.seed,
                    domain: rep.domain.clone(),
                    report: rep.clone(),
                    seconds: 0.0,
                });
            }
        }
    }
    let curve = AblationCurve::from_cells(curve_cells);
    curve.write_csv(&out.join("curve.csv"))?;
    println!(
        "features mean rmse {:.4} vs ids-only {:.4}",
        curve.mean_rmse_at(0.0),
        curve.mean_rmse_at(1.0)
    );
    println!("curve written to {}", out.join("curve.csv").display());
    Ok(())
}

fn cmd_nmf_demo(
    out: &Path,
    alpha: f64,
    seed: u64,
    rows: usize,
    cols: usize,
    rank: usize,
    iters: usize,
) -> Result<()> {
    let (v_a, v_b, x) = coupled_demo_instance(rows, cols, seed)?;
    let raw_conditions = check_conditions(&v_a, &v_b, &x, alpha)?;
    let state = run_dual_nmf(&v_a, &v_b, &x, alpha, rank, iters, seed)?;

    let mut history = String::from("iter,objective,delta\n");
    for (i, w) in state.loss_history.iter().enumerate() {
        let delta = if i == 0 {
            0.0
        } else {
            w - state.loss_history[i - 1]
        };
        let _ = writeln!(history, "{i},{w},{delta}");
    }
    duorec_core::fileio::write_file(&out.join("nmf_history.csv"), &history)?;

    let mut report = String::new();
    let _ = writeln!(report, "alpha,{alpha}");
    let _ = writeln!(report, "raw_condition_a,{}", raw_conditions.a);
    let _ = writeln!(report, "raw_condition_b,{}", raw_conditions.b);
    let _ = writeln!(report, "raw_condition_c,{}", raw_conditions.c);
    let _ = writeln!(report, "perturbation,{}", state.perturbation);
    let _ = writeln!(report, "final_condition_a,{}", state.conditions.a);
    let _ = writeln!(report, "final_condition_b,{}", state.conditions.b);
    let _ = writeln!(report, "final_condition_c,{}", state.conditions.c);
    let _ = writeln!(report, "final_objective,{}", state.loss_history.last().unwrap());
    duorec_core::fileio::write_file(&out.join("condition_report.csv"), &report)?;

    for (i, w) in state.loss_history.windows(2).enumerate() {
        if w[1] > w[0] + 1e-10 * w[0].max(1.0) {
            return Err(Error::NumericDivergence(format!(
                "monotonicity-violated: objective rose from {} to {} at iteration {}",
                w[0],
                w[1],
                i + 1
            )));
        }
    }
    println!(
        "objective {} -> {} over {} iterations (perturbation {}); outputs in {}",
        state.loss_history.first().unwrap(),
        state.loss_history.last().unwrap(),
        iters,
        state.perturbation,
        out.display()
    );
    Ok(())
}
