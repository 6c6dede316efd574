use duorec_core::dual::*;
use duorec_core::synth::*;
use std::time::Instant;

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "c7".into());
    match which.as_str() {
        "c7" => c7(),
        "c5" => c5(),
        "learn" => learn(),
        "learn2" => learn2(),
        "ae" => ae(),
        "dyn" => dyn_probe(),
        "c4" => c4(),
        "xq" => xq(),
        "c12" => c12(),
        "c3" => c3(),
        "c11" => c11(),
        "c1" => c1(),
        "c7b" => c7b(),
        other => eprintln!("unknown probe {other}"),
    }
}

fn c7() {
    let synth = SyntheticConfig::default();
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig::default();
    let started = Instant::now();
    let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    println!("epochs {} converged {} in {:.1}s", state.epoch, state.converged, secs);
    let totals: Vec<f64> = state.history.iter().map(|r| r.total()).collect();
    for (i, t) in totals.iter().enumerate() {
        if i < 12 || i + 3 >= totals.len() || (i % 10 == 0) {
            let delta = if i > 0 { (totals[i] - totals[i-1]).abs() } else { f64::NAN };
            let r = &state.history[i];
            println!("epoch {:3}: total {:.6e} delta {:.2e} [L_A {:.4} L_B {:.4} L_oA {:.4} L_oB {:.4} L_A* {:.4} L_B* {:.4}] val_a {:.4}", i+1, t, delta, r.l_a, r.l_b, r.l_oa, r.l_ob, r.l_astar, r.l_bstar, r.val_a);
        }
    }
    if totals.len() >= 10 {
        let final_t = *totals.last().unwrap();
        let e10 = totals[9];
        println!("epoch10 {:.4e} vs final {:.4e}: ratio {:.3}", e10, final_t, e10 / final_t);
    }
}

fn c5() {
    use duorec_core::harness::*;
    use duorec_core::metrics::paired_t_test;
    let args: Vec<String> = std::env::args().collect();
    let users: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(800);
    let items: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(300);
    let rpu: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(6);
    let k: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(8);
    let mode = args.get(6).cloned().unwrap_or_else(|| "ids".into());
    let epochs: usize = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(30);
    let noise: f64 = args.get(9).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let dropout: f64 = args.get(10).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let lr_map: f64 = args.get(11).map(|s| s.parse().unwrap()).unwrap_or(0.5);
    let synth = SyntheticConfig {
        users_per_domain: users,
        items_per_domain: items,
        latent_dim: k,
        overlap_count: users,
        noise_std: noise,
        feature_noise_std: noise,
        user_feature_dim: k + 8,
        item_feature_dim: k + 8,
        ratings_per_user: rpu,
        seed: 424,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let lr: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let cfg = TrainConfig {
        latent_dim: k,
        max_epochs: epochs,
        convergence_eps: 1e-9,
        lr_rs: lr,
        lr_map,
        rs_activation: duorec_core::mlp::Activation::Relu,
        whiten_embeddings: true,
        feature_mode: if mode == "ids" { FeatureMode::IdsOnly } else { FeatureMode::Features },
        dropout_rate: dropout,
        ae_epochs: 400,
        ae_lr: 0.05,
        ae_hidden: vec![],
        rs_hidden: vec![32, 16],
        ..Default::default()
    };
    let started = Instant::now();
    let cmp = transfer_comparison(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg, &[1, 2, 3, 4, 5], 1).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let ma = TransferComparison::mean(&cmp.dual_rmse_a);
    let mb = TransferComparison::mean(&cmp.dual_rmse_b);
    let ba = TransferComparison::mean(&cmp.baseline_rmse_a);
    let bb = TransferComparison::mean(&cmp.baseline_rmse_b);
    let pa = paired_t_test(&cmp.dual_rmse_a, &cmp.baseline_rmse_a).unwrap();
    let pb = paired_t_test(&cmp.dual_rmse_b, &cmp.baseline_rmse_b).unwrap();
    println!("mode={mode} users={users} items={items} rpu={rpu} k={k} epochs={epochs} [{secs:.0}s]");
    println!("  A: dual {ma:.5} vs base {ba:.5} -> improve {:+.2}% p={:.4}", 100.0*(ba-ma)/ba, pa.p_two_sided);
    println!("  B: dual {mb:.5} vs base {bb:.5} -> improve {:+.2}% p={:.4}", 100.0*(bb-mb)/bb, pb.p_two_sided);
    for i in 0..cmp.dual_rmse_a.len() {
        println!("    seed{}: A {:.4} vs {:.4} | B {:.4} vs {:.4}", i+1,
            cmp.dual_rmse_a[i], cmp.baseline_rmse_a[i], cmp.dual_rmse_b[i], cmp.baseline_rmse_b[i]);
    }
}

fn learn() {
    let args: Vec<String> = std::env::args().collect();
    let users: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(800);
    let rpu: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(20);
    let k: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(8);
    let lr: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.05);
    let epochs: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(60);
    let synth = SyntheticConfig {
        users_per_domain: users,
        items_per_domain: 300,
        latent_dim: k,
        overlap_count: 0,
        noise_std: 0.05,
        feature_noise_std: 0.05,
        user_feature_dim: k + 8,
        item_feature_dim: k + 8,
        ratings_per_user: rpu,
        seed: 9,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        latent_dim: k,
        max_epochs: epochs,
        convergence_eps: 1e-12,
        lr_rs: lr,
        feature_mode: FeatureMode::Features,
        dropout_rate: 0.0,
        ae_epochs: 200,
        ae_lr: 0.05,
        ..Default::default()
    };
    let started = Instant::now();
    let model = train_single_domain(&pair.domain_a, &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let ratings: Vec<f64> = pair.domain_a.ratings.iter().map(|r| r.rating).collect();
    let mean = ratings.iter().sum::<f64>() / ratings.len() as f64;
    let std = (ratings.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / ratings.len() as f64).sqrt();
    let (first, last) = (model.history[0], model.history.last().unwrap());
    println!("users={users} rpu={rpu} k={k} lr={lr} epochs={epochs} [{secs:.0}s]: rating_std {std:.4}; val {:.4} -> {:.4} (train loss {:.5} -> {:.5})",
        first.1, last.1, first.0, last.0);
}

fn learn2() {
    use duorec_core::recsys::*;
    use duorec_core::rng::rng_for;
    let args: Vec<String> = std::env::args().collect();
    let rpu: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20);
    let k: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(8);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let epochs: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(100);
    let hidden: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(32);
    let synth = SyntheticConfig {
        users_per_domain: 800,
        items_per_domain: 300,
        latent_dim: k,
        overlap_count: 0,
        noise_std: 0.05,
        feature_noise_std: 0.05,
        user_feature_dim: k + 8,
        item_feature_dim: k + 8,
        ratings_per_user: rpu,
        seed: 9,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    // train recommender directly on true latents
    let mut model = RecommenderModel::init(&RecommenderConfig {
        latent_dim: k, hidden: vec![hidden, hidden/2], dropout_rate: 0.0,
        hidden_activation: duorec_core::mlp::Activation::Relu, seed: 3,
    }).unwrap();
    let triples: Vec<(usize, usize, f64)> = pair.domain_a.ratings.iter().map(|r| {
        (pair.user_latents_a.index_of(&r.user_id).unwrap(),
         pair.item_latents_a.index_of(&r.item_id).unwrap(), r.rating)
    }).collect();
    let n = triples.len();
    let split = n * 9 / 10;
    let mut rng = rng_for(1, &[]);
    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);
    let eval_rmse = |model: &RecommenderModel| -> f64 {
        let mut se = 0.0;
        for &idx in &order[split..] {
            let (u, i, r) = triples[idx];
            let p = model.predict(pair.user_latents_a.vector(u), pair.item_latents_a.vector(i)).unwrap();
            se += (p - r) * (p - r);
        }
        (se / (n - split) as f64).sqrt()
    };
    println!("before: val {:.4}", eval_rmse(&model));
    for epoch in 0..epochs {
        let mut ord = order[..split].to_vec();
        ord.shuffle(&mut rng);
        for chunk in ord.chunks(64) {
            let batch_owned: Vec<(&[f64], &[f64], f64)> = chunk.iter().map(|&idx| {
                let (u, i, r) = triples[idx];
                (pair.user_latents_a.vector(u), pair.item_latents_a.vector(i), r)
            }).collect();
            model.train_step(&batch_owned, lr, &mut rng_for(7, &[epoch as u64])).unwrap();
        }
        if epoch % 20 == 19 || epoch == 0 {
            println!("epoch {:3}: val {:.4}", epoch + 1, eval_rmse(&model));
        }
    }
}

fn ae() {
    use duorec_core::embed::*;
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(4);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(50);
    let lr: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let synth = SyntheticConfig {
        users_per_domain: 800,
        items_per_domain: 300,
        latent_dim: k,
        overlap_count: 0,
        noise_std: 0.05,
        feature_noise_std: 0.05,
        user_feature_dim: k + 8,
        item_feature_dim: k + 8,
        ratings_per_user: 5,
        seed: 9,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let samples: Vec<Vec<f64>> = pair.domain_a.user_features.values().cloned().collect();
    let dim = samples[0].len();
    let var: f64 = {
        let n = samples.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
        samples.iter().map(|s| s.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()).sum::<f64>() / n
    };
    let cfg = AutoencoderConfig { latent_dim: k, hidden: vec![32, 16], epochs, lr, batch: 64, seed: 5 };
    let out = train_autoencoder(&samples, &cfg).unwrap();
    let mse: f64 = samples.iter().map(|s| out.model.reconstruction_loss(s).unwrap()).sum::<f64>() / samples.len() as f64;
    // raw code norms (pre-projection)
    let mut big = 0usize;
    let mut norms = Vec::new();
    for s in samples.iter().take(200) {
        let raw = out.model.encoder.forward(s).unwrap();
        let n: f64 = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1.0 { big += 1; }
        norms.push(n);
    }
    norms.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!("k={k} epochs={epochs} lr={lr}: feature var/sample {var:.4}, recon MSE {mse:.5} (ratio {:.3}); raw code norm median {:.3}, >1 in {}/200",
        mse / var, norms[100], big);
}

fn dyn_probe() {
    use duorec_core::data::kfold_split;
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(300);
    let users: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(300);
    let rpu: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(3);
    let k: usize = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(4);
    let synth = SyntheticConfig {
        users_per_domain: users,
        items_per_domain: 150,
        latent_dim: k,
        overlap_count: users,
        noise_std: 0.05,
        feature_noise_std: 0.05,
        user_feature_dim: k + 8,
        item_feature_dim: k + 8,
        ratings_per_user: rpu,
        seed: 424,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        latent_dim: k,
        max_epochs: epochs,
        convergence_eps: 1e-12,
        lr_rs: 0.3,
        feature_mode: FeatureMode::Features,
        dropout_rate: 0.1,
        ae_epochs: 200,
        ae_lr: 0.05,
        ae_hidden: vec![],
        rs_hidden: vec![32, 16],
        seed,
        ..Default::default()
    };
    let folds_a = kfold_split(&pair.domain_a, 5, seed).unwrap();
    let folds_b = kfold_split(&pair.domain_b, 5, seed).unwrap();
    let state = train(&folds_a[0].0, &folds_b[0].0, &pair.registry, &cfg).unwrap();
    for (i, r) in state.history.iter().enumerate() {
        if i < 16 || i % 25 == 0 || i + 1 == state.history.len() {
            println!("ep {:3}: L_A {:.4} L_oA {:.5} L_A* {:.4} val_a {:.4} val_b {:.4}",
                i + 1, r.l_a, r.l_oa, r.l_astar, r.val_a, r.val_b);
        }
    }
}

fn c4() {
    use duorec_core::data::SubsampleMode;
    use duorec_core::harness::*;
    let args: Vec<String> = std::env::args().collect();
    let rpu: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(3);
    let k: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(8);
    let epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(250);
    let fdim: usize = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(k + 8);
    let fnoise: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let dropout: f64 = args.get(7).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let lr: f64 = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let synth = SyntheticConfig {
        users_per_domain: 2000,
        items_per_domain: 500,
        latent_dim: k,
        overlap_count: 200,
        noise_std: 0.05,
        feature_noise_std: fnoise,
        user_feature_dim: fdim,
        item_feature_dim: fdim,
        ratings_per_user: rpu,
        seed: 777,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        latent_dim: k,
        max_epochs: epochs,
        convergence_eps: 1e-12,
        lr_rs: lr,
        lr_map: 2.0,
        rs_activation: duorec_core::mlp::Activation::Relu,
        whiten_embeddings: true,
        feature_mode: FeatureMode::Features,
        dropout_rate: dropout,
        ae_epochs: 800,
        ae_lr: 0.05,
        ae_hidden: vec![],
        rs_hidden: vec![32, 16],
        ..Default::default()
    };
    let started = Instant::now();
    let curve = ablate_overlap(
        &pair.domain_a, &pair.domain_b, &pair.registry,
        &[0, 8, 200], SubsampleMode::Unlink, &[1, 2, 3, 4, 5], &cfg, 1,
    ).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let r0 = curve.mean_rmse_at(0.0);
    let r8 = curve.mean_rmse_at(8.0);
    let r200 = curve.mean_rmse_at(200.0);
    println!("rpu={rpu} k={k} epochs={epochs} [{secs:.0}s]: RMSE(0)={r0:.5} RMSE(8)={r8:.5} RMSE(200)={r200:.5}");
    println!("  8 < 0: {}   |8-200|/200 = {:.3}% (need ≤5%)", r8 < r0, 100.0 * (r8 - r200).abs() / r200);
}

fn xq() {
    use duorec_core::mapping::*;
    let args: Vec<String> = std::env::args().collect();
    let k: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(8);
    let fdim: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(48);
    let ae_epochs: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(400);
    let fnoise: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let synth = SyntheticConfig {
        users_per_domain: 2000,
        items_per_domain: 500,
        latent_dim: k,
        overlap_count: 200,
        noise_std: 0.05,
        feature_noise_std: fnoise,
        user_feature_dim: fdim,
        item_feature_dim: fdim,
        ratings_per_user: 3,
        seed: 777,
    };
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        latent_dim: k,
        ae_epochs,
        ae_lr: 0.05,
        ae_hidden: vec![],
        whiten_embeddings: true,
        feature_mode: FeatureMode::Features,
        seed: 1,
        ..Default::default()
    };
    let (users_a, _) = build_embeddings(&pair.domain_a, &cfg, Domain::A).unwrap();
    let (users_b, _) = build_embeddings(&pair.domain_b, &cfg, Domain::B).unwrap();
    let all: Vec<(Vec<f64>, Vec<f64>)> = pair.registry.pairs.iter().map(|(a, b)| {
        (users_a.get(a).unwrap().to_vec(), users_b.get(b).unwrap().to_vec())
    }).collect();
    let fit = |n: usize| -> duorec_core::tensor::OrthogonalMap {
        let pairs: Vec<(&[f64], &[f64])> = all[..n].iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
        let mut x = duorec_core::tensor::OrthogonalMap::identity(k);
        x = orient_to_pairs(&x, &pairs).unwrap();
        for _ in 0..3000 {
            let (next, _, _) = update_mapping(&x, &pairs, 0.5 / n as f64).unwrap();
            x = next;
        }
        x
    };
    let x8 = fit(8);
    let x200 = fit(200);
    let held: Vec<(&[f64], &[f64])> = all[100..].iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    let (p8, _) = alignment_loss(&x8, &held).unwrap();
    let (p200, _) = alignment_loss(&x200, &held).unwrap();
    let rms = |v: f64| (v / held.len() as f64).sqrt();
    println!("k={k} fdim={fdim} ae={ae_epochs}: held-out RMS align err: X8 {:.4}, X200 {:.4}; ‖X8−X200‖_F {:.4}",
        rms(p8), rms(p200), x8.matrix().frobenius_distance(x200.matrix()).unwrap());
    // scale reference: typical embedding norm
    let norm0: f64 = all[0].0.iter().map(|v| v * v).sum::<f64>();
    println!("typical user embedding norm {:.3}", norm0.sqrt());
}

fn c12() {
    use duorec_core::harness::*;
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
        latent_dim: 8,
        max_epochs: 300,
        convergence_eps: 1e-12,
        lr_rs: 0.3,
        lr_map: 2.0,
        rs_activation: duorec_core::mlp::Activation::Relu,
        whiten_embeddings: true,
        feature_mode: FeatureMode::Features,
        dropout_rate: 0.1,
        ae_epochs: 400,
        ae_lr: 0.05,
        ae_hidden: vec![],
        rs_hidden: vec![32, 16],
        ..Default::default()
    };
    let started = Instant::now();
    let cells = feature_mode_comparison(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg, &[1, 2, 3, 4, 5], 1).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let mean = |f: &dyn Fn(&FeatureModeCell) -> f64| -> f64 {
        cells.iter().map(|c| f(c)).sum::<f64>() / cells.len() as f64
    };
    let feat = mean(&|c| (c.with_features.0.rmse + c.with_features.1.rmse) / 2.0);
    let ids = mean(&|c| (c.ids_only.0.rmse + c.ids_only.1.rmse) / 2.0);
    println!("[{secs:.0}s] features {feat:.5} vs ids-only {ids:.5}: features ≤ ids: {}", feat <= ids);
    for c in &cells {
        println!("  seed{}: feat A {:.4} B {:.4} | ids A {:.4} B {:.4}", c.seed,
            c.with_features.0.rmse, c.with_features.1.rmse, c.ids_only.0.rmse, c.ids_only.1.rmse);
    }
}

fn c3() {
    use duorec_core::mapping::*;
    use duorec_core::tensor::*;
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
    let all: Vec<(Vec<f64>, Vec<f64>)> = pair.registry.pairs.iter().map(|(a, b)| {
        (pair.user_latents_a.get(a).unwrap().to_vec(), pair.user_latents_b.get(b).unwrap().to_vec())
    }).collect();
    assert_eq!(min_overlap_required(16), 120);
    let train_pairs: Vec<(&[f64], &[f64])> = all[..120].iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    let held: Vec<(&[f64], &[f64])> = all[120..].iter().map(|(a, b)| (a.as_slice(), b.as_slice())).collect();
    let started = Instant::now();
    let mut x = OrthogonalMap::identity(16);
    x = orient_to_pairs(&x, &train_pairs).unwrap();
    let lr = 0.5 / 120.0;
    let mut primal = f64::INFINITY;
    let mut iters = 0;
    for i in 0..30000 {
        let (next, p, _) = update_mapping(&x, &train_pairs, lr).unwrap();
        x = next;
        primal = p;
        iters = i + 1;
        if primal <= 1e-7 { break; }
    }
    let secs = started.elapsed().as_secs_f64();
    let sources: Vec<DenseVector> = all[..120].iter().map(|(a, _)| DenseVector::new(a.clone()).unwrap()).collect();
    let targets: Vec<DenseVector> = all[..120].iter().map(|(_, b)| DenseVector::new(b.clone()).unwrap()).collect();
    let oracle = procrustes_oracle(&sources, &targets).unwrap();
    let frob = x.matrix().frobenius_distance(oracle.matrix()).unwrap();
    let max_held_err = held.iter().map(|(a, b)| {
        let m = map_forward(&x, a).unwrap();
        m.iter().zip(*b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    }).fold(0.0f64, f64::max);
    let frob_planted = x.matrix().frobenius_distance(pair.planted_map.matrix()).unwrap();
    println!("[{secs:.1}s] iters {iters} primal {primal:.2e}; ‖X−oracle‖_F {frob:.2e}; max held-out err {max_held_err:.2e}; ‖X−planted‖_F {frob_planted:.2e}");
}

fn c11() {
    use duorec_core::harness::*;
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
        latent_dim: 8,
        max_epochs: 20,
        lr_rs: 0.3,
        lr_map: 2.0,
        feature_mode: FeatureMode::Features,
        dropout_rate: 0.1,
        ae_epochs: 100,
        ae_lr: 0.05,
        ae_hidden: vec![],
        rs_hidden: vec![32, 16],
        seed: 5,
        ..Default::default()
    };
    let started = Instant::now();
    let curve = sweep_scalability(&[100, 1_000, 10_000, 100_000], &base, &cfg, 1_000_000).unwrap();
    let secs = started.elapsed().as_secs_f64();
    for &x in &curve.x_values {
        println!("  records {:>7}: {:.2}s", x as usize, curve.mean_seconds_at(x));
    }
    let beta = scaling_exponent(&curve).unwrap();
    println!("[{secs:.0}s total] beta = {beta:.3} (need ≤ 1.3)");
}

fn c1() {
    let synth = SyntheticConfig::default();
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        max_epochs: 100,
        convergence_eps: 1e-12,
        ..Default::default()
    };
    let started = Instant::now();
    let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
    println!("[{:.0}s] epochs {} max_ortho_drift {:.2e} (need ≤ 1e-6)",
        started.elapsed().as_secs_f64(), state.epoch, state.max_ortho_drift);
}

fn c7b() {
    let args: Vec<String> = std::env::args().collect();
    let lr: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(0.3);
    let dropout: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let synth = SyntheticConfig::default();
    let pair = generate_synthetic_pair(&synth).unwrap();
    let cfg = TrainConfig {
        lr_rs: lr,
        lr_map: 2.0,
        dropout_rate: dropout,
        ae_hidden: vec![],
        ae_epochs: 200,
        ae_lr: 0.05,
        ..Default::default()
    };
    let started = Instant::now();
    let state = train(&pair.domain_a, &pair.domain_b, &pair.registry, &cfg).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let totals: Vec<f64> = state.history.iter().map(|r| r.total()).collect();
    let final_t = *totals.last().unwrap();
    println!("[{secs:.0}s] lr={lr} dropout={dropout}: epochs {} converged {}", state.epoch, state.converged);
    if totals.len() >= 10 {
        println!("  epoch10 {:.4e} vs final {:.4e}: ratio {:.3}", totals[9], final_t, totals[9] / final_t);
    }
    for (i, t) in totals.iter().enumerate() {
        if i % 10 == 9 || i + 2 >= totals.len() {
            let delta = if i > 0 { (totals[i] - totals[i-1]).abs() } else { f64::NAN };
            println!("  ep {:3}: total {:.5e} delta {:.2e}", i + 1, t, delta);
        }
    }
}
