//! Acceptance suite: one test per acceptance criterion, each pinning its
//! tolerances in code. Criteria that train models use fixed seeds and fixed
//! configurations, so every outcome here is deterministic.

use duorec_core::data::SubsampleMode;
use duorec_core::dual::{
    has_converged, train, FeatureMode, TrainConfig,
};
use duorec_core::embed::{AutoencoderConfig, AutoencoderModel};
use duorec_core::harness::{
    ablate_overlap, feature_mode_comparison, scaling_exponent, sweep_scalability,
    transfer_comparison, TransferComparison,
};
use duorec_core::mapping::{
    alignment_grad, alignment_loss, map_forward, map_inverse, min_overlap_required,
    orient_to_pairs, update_mapping, AlignPair,
};
use duorec_core::metrics::{
    improvement_pct, mae, paired_t_test, precision_recall_at_k, rmse, Direction, UserPredictions,
};
use duorec_core::mlp::Activation;
use duorec_core::nmf::{check_conditions, coupled_demo_instance, run_dual_nmf};
use duorec_core::recsys::{RecommenderConfig, RecommenderModel};
use duorec_core::rng::rng_for;
use duorec_core::synth::{generate_synthetic_pair, SyntheticConfig};
use duorec_core::tensor::{
    finite_diff_grad, gradient_relative_error, gram_schmidt_orthonormalize, procrustes_oracle,
    DenseMatrix, DenseVector, OrthogonalMap,
};
use duorec_core::Error;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeSet;

fn random_orthogonal(k: usize, rng: &mut ChaCha20Rng) -> OrthogonalMap {
    loop {
        let data: Vec<f64> = (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(q) = gram_schmidt_orthonormalize(&DenseMatrix::new(k, k, data).unwrap()) {
            return q;
        }
    }
}

fn random_unit_ball(k: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    duorec_core::embed::project_unit_ball(&v)
}

/// Criterion 1: `‖XXᵀ − I‖_F ≤ 1e-6` after every mapping update across a
/// full 100-epoch run at k = 16.
#[test]
fn criterion_01_orthogonality_through_full_run() {
    let pair = generate_synthetic_pair(&SyntheticConfig::default()).unwrap();
    assert_eq!(SyntheticConfig::default().latent_dim, 16);
    let cfg = TrainConfig {
        max_epochs: 100,
        convergence_eps: 1e-12, // run all 100 epochs
        ..Default::default()
    };
    let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
    assert_eq!(state.epoch, 100);
    assert!(
        state.max_ortho_drift <= 1e-6,
        "worst orthogonality drift {:.3e}",
        state.max_ortho_drift
    );
    println!(
        "criterion 1: PASS — max ‖XXᵀ−I‖_F over {} epochs = {:.2e} ≤ 1e-6",
        state.epoch, state.max_ortho_drift
    );
}

/// Criterion 2: inner-product preservation, inverse round trip, and
/// primal/dual equality, each within 1e-9 on 1,000 random instances.
#[test]
fn criterion_02_mapping_algebra() {
    let mut rng = rng_for(2024, &[2]);
    for i in 0..1000 {
        let k = rng.random_range(2..=32);
        let x = random_orthogonal(k, &mut rng);
        let a = random_unit_ball(k, &mut rng);
        let b = random_unit_ball(k, &mut rng);

        let xa = map_forward(&x, &a).unwrap();
        let xb = map_forward(&x, &b).unwrap();
        let ip: f64 = a.iter().zip(&b).map(|(u, v)| u * v).sum();
        let ip_mapped: f64 = xa.iter().zip(&xb).map(|(u, v)| u * v).sum();
        assert!(
            (ip - ip_mapped).abs() <= 1e-9,
            "instance {i}: inner product drifted by {:.2e}",
            (ip - ip_mapped).abs()
        );

        let round = map_inverse(&x, &xa).unwrap();
        for (orig, back) in a.iter().zip(&round) {
            assert!((orig - back).abs() <= 1e-9, "instance {i}: round trip failed");
        }

        let pairs = vec![(a.as_slice(), b.as_slice())];
        let (primal, dual) = alignment_loss(&x, &pairs).unwrap();
        assert!(
            (primal - dual).abs() <= 1e-9,
            "instance {i}: primal {primal} vs dual {dual}"
        );
    }
    println!("criterion 2: PASS — 1000 instances within 1e-9 on all three identities");
}

/// Criterion 3: gradient-trained mapping on 120 noiseless latent pairs at
/// k = 16 recovers the Procrustes optimum; held-out pairs align to 1e-3.
#[test]
fn criterion_03_procrustes_recovery_at_overlap_bound() {
    assert_eq!(min_overlap_required(16), 120);
    let synth = SyntheticConfig {
        users_per_domain: 160,
        items_per_domain: 20,
        latent_dim: 16,
        overlap_count: 160,
        noise_std: 0.0,
        feature_noise_std: 0.0,
        user_feature_dim: 16,
        item_feature_dim: 16,
        ratings_per_user: 5,
        seed: 316,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let all: Vec<(Vec<f64>, Vec<f64>)> = pair
        .registry
        .pairs
        .iter()
        .map(|(a, b)| {
            (
                pair.user_latents_a.get(a).unwrap().to_vec(),
                pair.user_latents_b.get(b).unwrap().to_vec(),
            )
        })
        .collect();
    let train_pairs: Vec<AlignPair> = all[..120]
        .iter()
        .map(|(a, b)| (a.as_slice(), b.as_slice()))
        .collect();
    let held: Vec<AlignPair> = all[120..]
        .iter()
        .map(|(a, b)| (a.as_slice(), b.as_slice()))
        .collect();

    let mut x = orient_to_pairs(&OrthogonalMap::identity(16), &train_pairs).unwrap();
    let lr = 0.5 / train_pairs.len() as f64;
    let mut primal = f64::INFINITY;
    for _ in 0..30_000 {
        let (next, p, _) = update_mapping(&x, &train_pairs, lr).unwrap();
        x = next;
        primal = p;
        if primal <= 1e-7 {
            break;
        }
    }
    assert!(primal <= 1e-6, "training stalled at primal loss {primal:.2e}");

    let sources: Vec<DenseVector> = all[..120]
        .iter()
        .map(|(a, _)| DenseVector::new(a.clone()).unwrap())
        .collect();
    let targets: Vec<DenseVector> = all[..120]
        .iter()
        .map(|(_, b)| DenseVector::new(b.clone()).unwrap())
        .collect();
    let oracle = procrustes_oracle(&sources, &targets).unwrap();
    let frob = x.matrix().frobenius_distance(oracle.matrix()).unwrap();
    assert!(frob <= 1e-2, "trained map is {frob:.2e} from the oracle");

    let worst_held = held
        .iter()
        .map(|(a, b)| {
            let mapped = map_forward(&x, a).unwrap();
            mapped
                .iter()
                .zip(*b)
                .map(|(p, q)| (p - q) * (p - q))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0f64, f64::max);
    assert!(worst_held <= 1e-3, "held-out alignment error {worst_held:.2e}");
    println!(
        "criterion 3: PASS — ‖X−oracle‖_F {frob:.2e} ≤ 1e-2, held-out ≤ {worst_held:.2e}"
    );
}

/// Tuned experiment trainer shared by the ablation-style criteria.
fn experiment_train_cfg(latent_dim: usize) -> TrainConfig {
    TrainConfig {
        latent_dim,
        convergence_eps: 1e-12, // fixed epoch budgets
        lr_rs: 0.3,
        lr_map: 2.0,
        rs_activation: Activation::Relu,
        whiten_embeddings: true,
        feature_mode: FeatureMode::Features,
        ae_lr: 0.05,
        ae_hidden: vec![],
        rs_hidden: vec![32, 16],
        ..Default::default()
    }
}

/// Criterion 4: overlap ablation on the pinned coupled dataset
/// (2,000 users/domain, 500 items, 200 overlap, rating noise 0.05):
/// mean test RMSE at n = 8 strictly below n = 0 and within 5% of n = 200.
#[test]
fn criterion_04_overlap_ablation_elbow() {
    let synth = SyntheticConfig {
        users_per_domain: 2000,
        items_per_domain: 500,
        latent_dim: 8,
        overlap_count: 200,
        noise_std: 0.05,
        feature_noise_std: 0.005,
        user_feature_dim: 64,
        item_feature_dim: 64,
        ratings_per_user: 3,
        seed: 777,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        max_epochs: 250,
        dropout_rate: 0.3,
        ae_epochs: 800,
        ..experiment_train_cfg(8)
    };
    let curve = ablate_overlap(
        &pair.domain_a,
        &pair.domain_b,
        &pair.registry,
        &[0, 8, 200],
        SubsampleMode::Unlink,
        &[1, 2, 3, 4, 5],
        &cfg,
        1,
    )
    .unwrap();
    let out = tempfile::tempdir().unwrap();
    let curve_path = out.path().join("curve.csv");
    curve.write_csv(&curve_path).unwrap();
    assert!(curve_path.exists(), "ablation curve must be emitted");

    let r0 = curve.mean_rmse_at(0.0);
    let r8 = curve.mean_rmse_at(8.0);
    let r200 = curve.mean_rmse_at(200.0);
    assert!(
        r8 < r0,
        "8 overlap users must beat zero: RMSE(8)={r8:.4} vs RMSE(0)={r0:.4}"
    );
    let rel_gap = (r8 - r200).abs() / r200;
    assert!(
        rel_gap <= 0.05,
        "RMSE(8)={r8:.4} must be within 5% of RMSE(200)={r200:.4}, gap {:.2}%",
        100.0 * rel_gap
    );
    println!(
        "criterion 4: PASS — RMSE(0)={r0:.4} > RMSE(8)={r8:.4}, gap to RMSE(200)={r200:.4} is {:.2}% ≤ 5%",
        100.0 * rel_gap
    );
}

/// Criterion 5: the dual pipeline beats the no-transfer single-domain MLP
/// baseline in BOTH domains by ≥ 2% relative mean RMSE, paired t-test
/// p < 0.05 over 5 seeds.
#[test]
fn criterion_05_transfer_beats_no_transfer_baseline() {
    let synth = SyntheticConfig {
        users_per_domain: 400,
        items_per_domain: 300,
        latent_dim: 8,
        overlap_count: 400,
        noise_std: 0.02,
        feature_noise_std: 0.02,
        user_feature_dim: 16,
        item_feature_dim: 16,
        ratings_per_user: 3,
        seed: 424,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        max_epochs: 500,
        ae_epochs: 400,
        ..experiment_train_cfg(8)
    };
    let cmp = transfer_comparison(
        &pair.domain_a,
        &pair.domain_b,
        &pair.registry,
        &cfg,
        &[1, 2, 3, 4, 5],
        1,
    )
    .unwrap();
    for (domain, dual, base) in [
        ("A", &cmp.dual_rmse_a, &cmp.baseline_rmse_a),
        ("B", &cmp.dual_rmse_b, &cmp.baseline_rmse_b),
    ] {
        let dual_mean = TransferComparison::mean(dual);
        let base_mean = TransferComparison::mean(base);
        let improvement = 100.0 * (base_mean - dual_mean) / base_mean;
        let t = paired_t_test(dual, base).unwrap();
        assert!(
            improvement >= 2.0,
            "domain {domain}: improvement {improvement:.2}% < 2% (dual {dual_mean:.4} vs baseline {base_mean:.4})"
        );
        assert!(
            t.p_two_sided < 0.05,
            "domain {domain}: p = {:.4} not significant",
            t.p_two_sided
        );
        println!(
            "criterion 5 [{domain}]: PASS — dual {dual_mean:.4} vs baseline {base_mean:.4} (+{improvement:.1}%, p={:.4})",
            t.p_two_sided
        );
    }
}

/// Criterion 6: coupled factorization demonstrator — objective non-increasing
/// at every recorded iteration, final relative change < 1e-5 after 500
/// iterations over 20 seeds; α = 0.5 and α = 0.6 refused via condition (a).
#[test]
fn criterion_06_dual_nmf_convergence() {
    let mut worst_rel: f64 = 0.0;
    for seed in 0..20u64 {
        let (v_a, v_b, x) = coupled_demo_instance(12, 10, seed).unwrap();
        let raw = check_conditions(&v_a, &v_b, &x, 0.3).unwrap();
        assert!(
            !raw.b || !raw.c,
            "seed {seed}: instance must exercise the perturbation path"
        );
        let state = run_dual_nmf(&v_a, &v_b, &x, 0.3, 3, 500, seed).unwrap();
        assert!(state.perturbation > 0.0);
        assert!(state.conditions.all_hold());
        let h = &state.loss_history;
        assert_eq!(h.len(), 501);
        for (t, w) in h.windows(2).enumerate() {
            assert!(
                w[1] <= w[0] + 1e-10 * w[0].max(1.0),
                "seed {seed}: objective increased at step {t}: {} -> {}",
                w[0],
                w[1]
            );
        }
        let rel = (h[500] - h[499]).abs() / h[499].max(1e-12);
        assert!(rel < 1e-5, "seed {seed}: final relative change {rel:.2e}");
        worst_rel = worst_rel.max(rel);
    }
    for alpha in [0.5, 0.6] {
        let (v_a, v_b, x) = coupled_demo_instance(12, 10, 3).unwrap();
        let err = run_dual_nmf(&v_a, &v_b, &x, alpha, 3, 10, 0).unwrap_err();
        match &err {
            Error::ConditionViolated { condition, .. } => assert_eq!(*condition, 'a'),
            other => panic!("α = {alpha} should violate condition (a), got {other:?}"),
        }
        assert_eq!(err.reason_slug(), "condition-a-violated");
    }
    println!(
        "criterion 6: PASS — monotone over 20 seeds, worst final rel change {worst_rel:.2e}; α ∈ {{0.5, 0.6}} refused"
    );
}

/// Criterion 7: the dual loop on the default synthetic pair converges
/// (total-loss delta < 1e-5) within 100 epochs, and the total loss at epoch
/// 10 is within 10% of the final converged value.
#[test]
fn criterion_07_dual_loop_convergence() {
    let pair = generate_synthetic_pair(&SyntheticConfig::default()).unwrap();
    // Stock dual loop (learning rates, batch sizes, convergence rule all
    // default); the embedding stage uses the plain linear encoder so the
    // loop starts from well-conditioned inputs.
    let cfg = TrainConfig {
        ae_hidden: vec![],
        ..Default::default()
    };
    assert_eq!(cfg.max_epochs, 100);
    assert_eq!(cfg.convergence_eps, 1e-5);
    let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
    assert!(
        state.converged && state.epoch <= 100,
        "no convergence within 100 epochs (ran {})",
        state.epoch
    );
    assert!(has_converged(&state.history, cfg.convergence_eps));
    let totals: Vec<f64> = state.history.iter().map(|r| r.total()).collect();
    let final_total = *totals.last().unwrap();
    let at_10 = totals[9.min(totals.len() - 1)];
    let ratio = at_10 / final_total;
    assert!(
        (0.9..=1.1).contains(&ratio),
        "epoch-10 loss {at_10:.4e} vs final {final_total:.4e}: ratio {ratio:.3} outside ±10%"
    );
    println!(
        "criterion 7: PASS — converged at epoch {} with epoch-10/final ratio {ratio:.3}",
        state.epoch
    );
}

/// Criterion 8: analytic gradients of the reconstruction loss, the
/// recommender MSE, and the alignment loss match central finite differences
/// within relative error 1e-4 on ≥ 50 random small instances each.
#[test]
fn criterion_08_gradient_correctness() {
    // Autoencoder reconstruction loss, both projection branches exercised.
    for i in 0..50u64 {
        let cfg = AutoencoderConfig {
            latent_dim: 3,
            hidden: vec![4],
            seed: 1000 + i,
            ..Default::default()
        };
        let model = AutoencoderModel::init(6, &cfg).unwrap();
        let mut rng = rng_for(42, &[8, i]);
        let scale = if i % 2 == 0 { 0.4 } else { 2.5 };
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-scale..scale)).collect();
        let (_, enc_g, dec_g) = model.reconstruction_grads(&x).unwrap();
        let mut analytic = Vec::new();
        for l in enc_g.layers.iter().chain(dec_g.layers.iter()) {
            analytic.extend_from_slice(l.weight.data());
            analytic.extend_from_slice(&l.bias);
        }
        let enc_n = model.encoder.param_count();
        let mut flat = model.encoder.params_flat();
        flat.extend(model.decoder.params_flat());
        let mut probe = model.clone();
        let numeric = finite_diff_grad(
            |p| {
                probe.encoder.set_params_flat(&p[..enc_n]).unwrap();
                probe.decoder.set_params_flat(&p[enc_n..]).unwrap();
                probe.reconstruction_loss(&x).unwrap()
            },
            &DenseVector::new(flat).unwrap(),
            1e-5,
        )
        .unwrap();
        let rel = gradient_relative_error(&analytic, numeric.data());
        assert!(rel <= 1e-4, "autoencoder instance {i}: relative error {rel:.2e}");
    }

    // Recommender MSE (dropout disabled for the check).
    for i in 0..50u64 {
        let activation = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let base = RecommenderModel::init(&RecommenderConfig {
            latent_dim: 2,
            hidden: vec![5, 3],
            dropout_rate: 0.0,
            hidden_activation: activation,
            seed: 2000 + i,
        })
        .unwrap();
        let mut rng = rng_for(43, &[8, i]);
        let examples: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..4)
            .map(|_| {
                (
                    (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    rng.random_range(0.05..0.95),
                )
            })
            .collect();
        let batch: Vec<(&[f64], &[f64], f64)> = examples
            .iter()
            .map(|(u, it, r)| (u.as_slice(), it.as_slice(), *r))
            .collect();
        let before = base.mlp().params_flat();
        let mut stepped = base.clone();
        stepped.train_step(&batch, 1.0, &mut rng_for(0, &[])).unwrap();
        let after = stepped.mlp().params_flat();
        let analytic: Vec<f64> = before.iter().zip(&after).map(|(b, a)| b - a).collect();
        let numeric = finite_diff_grad(
            |p| {
                let mut mlp = base.mlp().clone();
                mlp.set_params_flat(p).unwrap();
                let probe = RecommenderModel::from_parts(mlp, 0.0).unwrap();
                probe.batch_loss(&batch).unwrap()
            },
            &DenseVector::new(before).unwrap(),
            1e-5,
        )
        .unwrap();
        let rel = gradient_relative_error(&analytic, numeric.data());
        assert!(rel <= 1e-4, "recommender instance {i}: relative error {rel:.2e}");
    }

    // Alignment loss (primal+dual)/2 at arbitrary, non-orthogonal X.
    for i in 0..50u64 {
        let k = 4;
        let mut rng = rng_for(44, &[8, i]);
        let data: Vec<f64> = (0..k * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pairs_owned: Vec<(Vec<f64>, Vec<f64>)> = (0..5)
            .map(|_| (random_unit_ball(k, &mut rng), random_unit_ball(k, &mut rng)))
            .collect();
        let pairs: Vec<AlignPair> = pairs_owned
            .iter()
            .map(|(a, b)| (a.as_slice(), b.as_slice()))
            .collect();
        let x = DenseMatrix::new(k, k, data.clone()).unwrap();
        let analytic = alignment_grad(&x, &pairs).unwrap();
        let numeric = finite_diff_grad(
            |flat| {
                let m = DenseMatrix::new(k, k, flat.to_vec()).unwrap();
                let mut total = 0.0;
                for (a, b) in &pairs {
                    let xa = m.mat_vec(a).unwrap();
                    let p: f64 = xa.iter().zip(*b).map(|(u, v)| (u - v) * (u - v)).sum();
                    let xtb = m.mat_vec_transposed(b).unwrap();
                    let d: f64 = a.iter().zip(&xtb).map(|(u, v)| (u - v) * (u - v)).sum();
                    total += 0.5 * (p + d);
                }
                total
            },
            &DenseVector::new(data).unwrap(),
            1e-5,
        )
        .unwrap();
        let rel = gradient_relative_error(analytic.data(), numeric.data());
        assert!(rel <= 1e-4, "alignment instance {i}: relative error {rel:.2e}");
    }
    println!("criterion 8: PASS — 150 gradient checks within 1e-4 relative error");
}

/// Criterion 9: RMSE/MAE/P@5/R@5 equal brute-force references on 1,000
/// random instances; RMSE ≥ MAE on every report.
#[test]
fn criterion_09_metric_oracles() {
    let mut rng = rng_for(99, &[9]);
    for i in 0..1000 {
        let n = rng.random_range(1..50);
        let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let truth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let mut sq = 0.0;
        let mut ab = 0.0;
        for (p, t) in pred.iter().zip(&truth) {
            sq += (p - t) * (p - t);
            ab += (p - t).abs();
        }
        let ref_rmse = (sq / n as f64).sqrt();
        let ref_mae = ab / n as f64;
        let got_rmse = rmse(&pred, &truth).unwrap();
        let got_mae = mae(&pred, &truth).unwrap();
        assert!((got_rmse - ref_rmse).abs() <= 1e-12, "instance {i}: rmse");
        assert!((got_mae - ref_mae).abs() <= 1e-12, "instance {i}: mae");
        assert!(got_rmse >= got_mae - 1e-12, "instance {i}: RMSE ≥ MAE violated");

        // Top-K oracle: exhaustive set intersection with the same tie rule.
        let n_items = rng.random_range(1..12);
        let preds: Vec<(String, f64)> = (0..n_items)
            .map(|j| (format!("i{j:02}"), rng.random_range(0.0..1.0)))
            .collect();
        let relevant: BTreeSet<String> = preds
            .iter()
            .filter(|_| rng.random_range(0.0..1.0) < 0.4)
            .map(|(id, _)| id.clone())
            .collect();
        let mut order = preds.clone();
        order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        let top: BTreeSet<String> = order.iter().take(5).map(|(id, _)| id.clone()).collect();
        let hits = top.intersection(&relevant).count();
        let ref_p = hits as f64 / 5.0;
        let user = UserPredictions {
            predictions: preds,
            relevant: relevant.clone(),
        };
        let (got_p, got_r) = precision_recall_at_k(std::slice::from_ref(&user), 5).unwrap();
        assert!((got_p - ref_p).abs() <= 1e-12, "instance {i}: precision");
        if !relevant.is_empty() {
            let ref_r = hits as f64 / relevant.len() as f64;
            assert!((got_r - ref_r).abs() <= 1e-12, "instance {i}: recall");
        }
    }
    println!("criterion 9: PASS — 1000 instances match brute-force references to 1e-12");
}

/// Criterion 10: `improvement_pct` reproduces every "Improved %" cell of the
/// two published comparison tables from their tabulated metric values within
/// 0.01 percentage points.
#[test]
fn criterion_10_published_improvement_fixtures() {
    // (table, domain, metric, ours, best baseline, direction, printed %).
    let cells: [(&str, &str, &str, f64, f64, Direction, f64); 16] = [
        ("T3", "book", "rmse", 0.2184, 0.2213, Direction::LowerBetter, 1.31),
        ("T3", "book", "mae", 0.1646, 0.1708, Direction::LowerBetter, 3.63),
        ("T3", "book", "pre@5", 0.8826, 0.8595, Direction::HigherBetter, 2.69),
        ("T3", "book", "rec@5", 0.9850, 0.9594, Direction::HigherBetter, 3.71),
        ("T3", "movie", "rmse", 0.2109, 0.2213, Direction::LowerBetter, 4.70),
        ("T3", "movie", "mae", 0.1606, 0.1714, Direction::LowerBetter, 6.30),
        ("T3", "movie", "pre@5", 0.9002, 0.8925, Direction::HigherBetter, 0.86),
        ("T3", "movie", "rec@5", 0.9962, 0.9871, Direction::HigherBetter, 0.92),
        ("T4", "book", "rmse", 0.2162, 0.2209, Direction::LowerBetter, 2.13),
        ("T4", "book", "mae", 0.1615, 0.1704, Direction::LowerBetter, 5.22),
        ("T4", "book", "pre@5", 0.8649, 0.8570, Direction::HigherBetter, 0.92),
        ("T4", "book", "rec@5", 0.9645, 0.9602, Direction::HigherBetter, 0.44),
        ("T4", "music", "rmse", 0.2689, 0.2753, Direction::LowerBetter, 4.94),
        ("T4", "music", "mae", 0.2255, 0.2302, Direction::LowerBetter, 2.04),
        ("T4", "music", "pre@5", 0.8475, 0.8392, Direction::HigherBetter, 0.99),
        ("T4", "music", "rec@5", 0.9070, 0.8928, Direction::HigherBetter, 1.59),
    ];
    let mut failures = Vec::new();
    for (table, domain, metric, ours, baseline, direction, printed) in cells {
        let recomputed = improvement_pct(ours, baseline, direction).unwrap();
        if (recomputed - printed).abs() > 0.01 {
            failures.push(format!(
                "{table}/{domain}/{metric}: published +{printed}% but {baseline} -> {ours} computes {recomputed:+.2}%"
            ));
        }
    }
    assert!(
        failures.is_empty(),
        "{} of 16 published cells are not reproducible from their own tabulated values within 0.01 pp:\n  {}\n\
         Every other cell reproduces exactly; these cells are internally inconsistent in the source tables \
         (no tabulated baseline yields the printed percentage).",
        failures.len(),
        failures.join("\n  ")
    );
    println!("criterion 10: PASS — all 16 published improvement cells reproduced");
}

/// Criterion 11: training wall-clock over record counts 1e2..1e5 fits
/// `time ∝ records^β` with β ≤ 1.3.
#[test]
fn criterion_11_scalability_exponent() {
    let base = SyntheticConfig {
        users_per_domain: 0, // set per size
        items_per_domain: 100,
        latent_dim: 8,
        overlap_count: 20,
        noise_std: 0.05,
        feature_noise_std: 0.01,
        user_feature_dim: 16,
        item_feature_dim: 16,
        ratings_per_user: 5,
        seed: 31,
    };
    let cfg = TrainConfig {
        max_epochs: 20,
        ae_epochs: 100,
        dropout_rate: 0.1,
        seed: 5,
        ..experiment_train_cfg(8)
    };
    let curve = sweep_scalability(&[100, 1_000, 10_000, 100_000], &base, &cfg, 1_000_000).unwrap();
    assert_eq!(curve.x_values.len(), 4);
    let beta = scaling_exponent(&curve).unwrap();
    assert!(beta <= 1.3, "scaling exponent {beta:.3} exceeds 1.3");
    println!("criterion 11: PASS — wall-clock scaling exponent β = {beta:.3} ≤ 1.3");
}

/// Criterion 12: with informative explicit features, feature-based runs
/// reach RMSE at or below id-only runs (5-seed mean).
#[test]
fn criterion_12_feature_mode_ordering() {
    let synth = SyntheticConfig {
        users_per_domain: 400,
        items_per_domain: 300,
        latent_dim: 8,
        overlap_count: 400,
        noise_std: 0.05,
        feature_noise_std: 0.01,
        user_feature_dim: 16,
        item_feature_dim: 16,
        ratings_per_user: 4,
        seed: 99,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        max_epochs: 300,
        ae_epochs: 400,
        ..experiment_train_cfg(8)
    };
    let cells = feature_mode_comparison(
        &pair.domain_a,
        &pair.domain_b,
        &pair.registry,
        &cfg,
        &[1, 2, 3, 4, 5],
        1,
    )
    .unwrap();
    let feat_mean: f64 = cells
        .iter()
        .map(|c| (c.with_features.0.rmse + c.with_features.1.rmse) / 2.0)
        .sum::<f64>()
        / cells.len() as f64;
    let ids_mean: f64 = cells
        .iter()
        .map(|c| (c.ids_only.0.rmse + c.ids_only.1.rmse) / 2.0)
        .sum::<f64>()
        / cells.len() as f64;
    assert!(
        feat_mean <= ids_mean,
        "features {feat_mean:.4} must not lose to ids-only {ids_mean:.4}"
    );
    println!(
        "criterion 12: PASS — features RMSE {feat_mean:.4} ≤ ids-only RMSE {ids_mean:.4}"
    );
}

/// Zero-overlap degradation (dual-trainer invariant): the no-anchor run is
/// strictly worse than the full-overlap run on coupled data, averaged over
/// five seeds.
#[test]
fn zero_overlap_is_strictly_worse_than_full() {
    let synth = SyntheticConfig {
        users_per_domain: 300,
        items_per_domain: 200,
        latent_dim: 8,
        overlap_count: 300,
        noise_std: 0.02,
        feature_noise_std: 0.02,
        user_feature_dim: 16,
        item_feature_dim: 16,
        ratings_per_user: 3,
        seed: 55,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        max_epochs: 300,
        ae_epochs: 400,
        ..experiment_train_cfg(8)
    };
    let curve = ablate_overlap(
        &pair.domain_a,
        &pair.domain_b,
        &pair.registry,
        &[0, 300],
        SubsampleMode::Unlink,
        &[1, 2, 3, 4, 5],
        &cfg,
        1,
    )
    .unwrap();
    let zero = curve.mean_rmse_at(0.0);
    let full = curve.mean_rmse_at(300.0);
    assert!(
        full < zero,
        "full overlap {full:.4} must beat zero overlap {zero:.4}"
    );
    println!("zero-overlap check: PASS — RMSE {zero:.4} (none) > {full:.4} (full)");
}
