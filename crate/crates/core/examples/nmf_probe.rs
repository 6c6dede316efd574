use duorec_core::nmf::*;

fn main() {
    let mut worst_rel: f64 = 0.0;
    let mut worst_seed = 0;
    for seed in 0..20u64 {
        let (v_a, v_b, x) = coupled_demo_instance(12, 10, seed).unwrap();
        let raw = check_conditions(&v_a, &v_b, &x, 0.3).unwrap();
        assert!(!raw.b || !raw.c, "seed {seed}: perturbation not needed");
        let state = run_dual_nmf(&v_a, &v_b, &x, 0.3, 3, 500, seed).unwrap();
        assert!(state.perturbation > 0.0);
        let h = &state.loss_history;
        assert_eq!(h.len(), 501);
        for w in h.windows(2) {
            assert!(w[1] <= w[0] + 1e-10 * w[0].max(1.0), "seed {seed}: increase {} -> {}", w[0], w[1]);
        }
        let rel = (h[500] - h[499]).abs() / h[499].max(1e-12);
        if rel > worst_rel { worst_rel = rel; worst_seed = seed; }
        assert!(*h.last().unwrap() < 1e-3 * h[0], "seed {seed}: final {} vs initial {}", h.last().unwrap(), h[0]);
    }
    println!("20 seeds OK; worst rel@500 = {worst_rel:.2e} (seed {worst_seed})");
}
