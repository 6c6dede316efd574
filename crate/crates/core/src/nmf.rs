//! Coupled nonnegative matrix factorization of two rating matrices mixed
//! through an orthogonal map: condition checking, the positive-perturbation
//! construction, elimination into two standard factorizations on effective
//! targets, and multiplicative updates with a monotone objective.

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{DenseMatrix, OrthogonalMap};
use rand::Rng;

/// Denominator guard in the multiplicative updates.
pub const MU_EPS: f64 = 1e-12;

/// Multiplicative rounds applied to each factor pair per recorded
/// iteration. A recorded iteration is one block-coordinate pass; a few
/// inner sweeps per block let each pass make substantive progress on its
/// target before control alternates.
pub const MU_ROUNDS_PER_ITER: usize = 6;

/// Outcome of the three sufficient conditions for monotone convergence of
/// the coupled factorization at mixing weight `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionReport {
    /// `2α − 1 < 0`.
    pub a: bool,
    /// Every entry of `(1−α)V_B − αXᵀV_A` is nonnegative.
    pub b: bool,
    /// Every entry of `(1−α)V_A − αXV_B` is nonnegative.
    pub c: bool,
    /// Smallest entry of the condition-(b) matrix.
    pub min_b: f64,
    /// Smallest entry of the condition-(c) matrix.
    pub min_c: f64,
}

impl ConditionReport {
    pub fn all_hold(&self) -> bool {
        self.a && self.b && self.c
    }
}

fn check_shapes(v_a: &DenseMatrix, v_b: &DenseMatrix, x: &OrthogonalMap) -> Result<()> {
    if v_a.rows() != v_b.rows() || v_a.cols() != v_b.cols() {
        return Err(Error::Shape(format!(
            "rating matrices must share a shape, got {}x{} and {}x{}",
            v_a.rows(),
            v_a.cols(),
            v_b.rows(),
            v_b.cols()
        )));
    }
    if x.k() != v_a.rows() {
        return Err(Error::Shape(format!(
            "map is {}x{} but rating matrices have {} rows",
            x.k(),
            x.k(),
            v_a.rows()
        )));
    }
    Ok(())
}

pub fn check_conditions(
    v_a: &DenseMatrix,
    v_b: &DenseMatrix,
    x: &OrthogonalMap,
    alpha: f64,
) -> Result<ConditionReport> {
    check_shapes(v_a, v_b, x)?;
    let a = 2.0 * alpha - 1.0 < 0.0;
    let xt_va = x.matrix().transpose().matmul(v_a)?;
    let mut cond_b = v_b.clone();
    scale_in_place(&mut cond_b, 1.0 - alpha);
    cond_b.add_scaled(&xt_va, -alpha)?;
    let x_vb = x.matrix().matmul(v_b)?;
    let mut cond_c = v_a.clone();
    scale_in_place(&mut cond_c, 1.0 - alpha);
    cond_c.add_scaled(&x_vb, -alpha)?;
    let min_b = min_entry(&cond_b);
    let min_c = min_entry(&cond_c);
    Ok(ConditionReport {
        a,
        b: min_b >= 0.0,
        c: min_c >= 0.0,
        min_b,
        min_c,
    })
}

fn scale_in_place(m: &mut DenseMatrix, factor: f64) {
    let zero = DenseMatrix::zeros(m.rows(), m.cols());
    let mut scaled = zero;
    scaled.add_scaled(m, factor).expect("same shape");
    *m = scaled;
}

fn min_entry(m: &DenseMatrix) -> f64 {
    m.data().iter().copied().fold(f64::INFINITY, f64::min)
}

/// `V + m·k·1`: shifts every entry up by the map rank times the rating
/// bound, making the nonnegativity conditions attainable. The shift is
/// recorded by the caller and subtracted from reconstructions.
pub fn positive_perturbation(v: &DenseMatrix, m: usize, k_scale: f64) -> DenseMatrix {
    let shift = m as f64 * k_scale;
    let mut out = v.clone();
    for i in 0..out.rows() {
        for j in 0..out.cols() {
            let val = out.get(i, j) + shift;
            out.set(i, j, val);
        }
    }
    out
}

/// Eliminates each factor pair from the coupled objective, leaving the two
/// matrices the factorizations must reconstruct:
/// `T_B = ((1−α)V_B − αXᵀV_A)/(1−2α)` and `T_A = ((1−α)V_A − αXV_B)/(1−2α)`.
pub fn effective_targets(
    v_a: &DenseMatrix,
    v_b: &DenseMatrix,
    x: &OrthogonalMap,
    alpha: f64,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_shapes(v_a, v_b, x)?;
    let denom = 1.0 - 2.0 * alpha;
    if denom.abs() < 1e-12 {
        return Err(Error::SingularMixing(format!(
            "α = {alpha} makes 1 − 2α vanish; the factor pairs cannot be separated"
        )));
    }
    let xt_va = x.matrix().transpose().matmul(v_a)?;
    let mut t_b = v_b.clone();
    scale_in_place(&mut t_b, (1.0 - alpha) / denom);
    t_b.add_scaled(&xt_va, -alpha / denom)?;

    let x_vb = x.matrix().matmul(v_b)?;
    let mut t_a = v_a.clone();
    scale_in_place(&mut t_a, (1.0 - alpha) / denom);
    t_a.add_scaled(&x_vb, -alpha / denom)?;
    Ok((t_a, t_b))
}

fn ensure_nonnegative(m: &DenseMatrix, what: &str) -> Result<()> {
    if min_entry(m) < 0.0 {
        return Err(Error::Validation(format!(
            "{what} must be entrywise nonnegative (min entry {})",
            min_entry(m)
        )));
    }
    Ok(())
}

/// One multiplicative update round on `‖T − WH‖²_F`:
/// `H ← H ∘ (WᵀT)/(WᵀWH + ε)` then `W ← W ∘ (THᵀ)/(WHHᵀ + ε)`.
/// Preserves nonnegativity and never increases the objective.
pub fn mu_step(t: &DenseMatrix, w: &DenseMatrix, h: &DenseMatrix) -> Result<(DenseMatrix, DenseMatrix)> {
    ensure_nonnegative(t, "target")?;
    ensure_nonnegative(w, "W factor")?;
    ensure_nonnegative(h, "H factor")?;
    if w.cols() != h.rows() || w.rows() != t.rows() || h.cols() != t.cols() {
        return Err(Error::Shape(format!(
            "factor shapes {}x{} · {}x{} do not produce {}x{}",
            w.rows(),
            w.cols(),
            h.rows(),
            h.cols(),
            t.rows(),
            t.cols()
        )));
    }
    // H update.
    let wt_t = w.transpose().matmul(t)?;
    let wt_w_h = w.transpose().matmul(w)?.matmul(h)?;
    let mut h_new = h.clone();
    for i in 0..h_new.rows() {
        for j in 0..h_new.cols() {
            let v = h_new.get(i, j) * wt_t.get(i, j) / (wt_w_h.get(i, j) + MU_EPS);
            h_new.set(i, j, v);
        }
    }
    // W update with the fresh H.
    let t_ht = t.matmul(&h_new.transpose())?;
    let w_h_ht = w.matmul(&h_new)?.matmul(&h_new.transpose())?;
    let mut w_new = w.clone();
    for i in 0..w_new.rows() {
        for j in 0..w_new.cols() {
            let v = w_new.get(i, j) * t_ht.get(i, j) / (w_h_ht.get(i, j) + MU_EPS);
            w_new.set(i, j, v);
        }
    }
    if !w_new.is_finite() || !h_new.is_finite() {
        return Err(Error::NumericDivergence(
            "multiplicative update produced non-finite factors".into(),
        ));
    }
    Ok((w_new, h_new))
}

/// Full state of one coupled factorization run.
#[derive(Debug, Clone)]
pub struct NmfState {
    /// Raw inputs, before any perturbation.
    pub v_a: DenseMatrix,
    pub v_b: DenseMatrix,
    pub w_a: DenseMatrix,
    pub h_a: DenseMatrix,
    pub w_b: DenseMatrix,
    pub h_b: DenseMatrix,
    pub alpha: f64,
    pub mapping: OrthogonalMap,
    pub rank: usize,
    /// Rating-scale bound used for the perturbation.
    pub k_scale: f64,
    /// Constant added to every entry before factorizing (0 when the raw
    /// inputs already satisfied the conditions).
    pub perturbation: f64,
    /// Conditions measured on the matrices that were actually factorized.
    pub conditions: ConditionReport,
    /// Effective targets the two factorizations reconstruct.
    pub t_a: DenseMatrix,
    pub t_b: DenseMatrix,
    /// Coupled objective per iteration (index 0 = before the first update),
    /// evaluated through the elimination identities; see
    /// [`NmfState::decomposed_objective`].
    pub loss_history: Vec<f64>,
}

impl NmfState {
    fn perturbed(&self, v: &DenseMatrix) -> DenseMatrix {
        if self.perturbation == 0.0 {
            v.clone()
        } else {
            let mut out = v.clone();
            for i in 0..out.rows() {
                for j in 0..out.cols() {
                    let val = out.get(i, j) + self.perturbation;
                    out.set(i, j, val);
                }
            }
            out
        }
    }

    /// The coupled objective evaluated through the elimination identities:
    /// the sum of squared residuals of
    /// `(1−α)V_B' − αXᵀV_A' = (1−2α)W_B H_B` and
    /// `(1−α)V_A' − αXV_B' = (1−2α)W_A H_A`, i.e.
    /// `(1−2α)²(‖T_A − W_A H_A‖²_F + ‖T_B − W_B H_B‖²_F)`.
    ///
    /// Each multiplicative update provably never increases this quantity;
    /// the direct form ([`NmfState::combined_objective`]) additionally
    /// carries a sign-indefinite cross term between the two residuals that
    /// the decoupled solver does not control, so monotonicity is checked
    /// here, where the convergence argument actually provides it.
    pub fn decomposed_objective(&self) -> Result<f64> {
        let scale = (1.0 - 2.0 * self.alpha) * (1.0 - 2.0 * self.alpha);
        let da = self.w_a.matmul(&self.h_a)?.frobenius_distance(&self.t_a)?;
        let db = self.w_b.matmul(&self.h_b)?.frobenius_distance(&self.t_b)?;
        Ok(scale * (da * da + db * db))
    }

    /// Coupled objective on the (possibly perturbed) problem, direct form:
    /// `‖V_A' − (1−α)W_A H_A − αXW_B H_B‖²_F + ‖V_B' − (1−α)W_B H_B − αXᵀW_A H_A‖²_F`.
    pub fn combined_objective(&self) -> Result<f64> {
        let wa_ha = self.w_a.matmul(&self.h_a)?;
        let wb_hb = self.w_b.matmul(&self.h_b)?;
        let x_wb_hb = self.mapping.matrix().matmul(&wb_hb)?;
        let xt_wa_ha = self.mapping.matrix().transpose().matmul(&wa_ha)?;

        let mut res_a = self.perturbed(&self.v_a);
        res_a.add_scaled(&wa_ha, -(1.0 - self.alpha))?;
        res_a.add_scaled(&x_wb_hb, -self.alpha)?;
        let mut res_b = self.perturbed(&self.v_b);
        res_b.add_scaled(&wb_hb, -(1.0 - self.alpha))?;
        res_b.add_scaled(&xt_wa_ha, -self.alpha)?;
        let na = res_a.frobenius_norm();
        let nb = res_b.frobenius_norm();
        Ok(na * na + nb * nb)
    }

    /// Reconstruction of the original `V_A`: mixes both factorizations and
    /// subtracts the perturbation back out.
    pub fn reconstruction_a(&self) -> Result<DenseMatrix> {
        let mut rec = self.w_a.matmul(&self.h_a)?;
        scale_in_place(&mut rec, 1.0 - self.alpha);
        let x_wb_hb = self
            .mapping
            .matrix()
            .matmul(&self.w_b.matmul(&self.h_b)?)?;
        rec.add_scaled(&x_wb_hb, self.alpha)?;
        subtract_constant(&mut rec, self.perturbation);
        Ok(rec)
    }

    pub fn reconstruction_b(&self) -> Result<DenseMatrix> {
        let mut rec = self.w_b.matmul(&self.h_b)?;
        scale_in_place(&mut rec, 1.0 - self.alpha);
        let xt_wa_ha = self
            .mapping
            .matrix()
            .transpose()
            .matmul(&self.w_a.matmul(&self.h_a)?)?;
        rec.add_scaled(&xt_wa_ha, self.alpha)?;
        subtract_constant(&mut rec, self.perturbation);
        Ok(rec)
    }
}

fn subtract_constant(m: &mut DenseMatrix, c: f64) {
    if c == 0.0 {
        return;
    }
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j) - c;
            m.set(i, j, v);
        }
    }
}

fn random_positive(rows: usize, cols: usize, rng: &mut rand_chacha::ChaCha20Rng) -> DenseMatrix {
    DenseMatrix::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| {
                let v: f64 = rng.random();
                v.max(1e-6)
            })
            .collect(),
    )
    .expect("finite draws")
}

fn clamp_tiny_negatives(m: &mut DenseMatrix) -> Result<()> {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            let v = m.get(i, j);
            if v < 0.0 {
                if v < -1e-9 {
                    return Err(Error::NumericDivergence(format!(
                        "effective target has a genuinely negative entry {v}"
                    )));
                }
                m.set(i, j, 0.0);
            }
        }
    }
    Ok(())
}

/// Runs the coupled factorization end to end: verifies condition (a),
/// applies the positive perturbation when (b)/(c) fail on the raw inputs,
/// forms the effective targets, and iterates multiplicative updates.
pub fn run_dual_nmf(
    v_a: &DenseMatrix,
    v_b: &DenseMatrix,
    x: &OrthogonalMap,
    alpha: f64,
    rank: usize,
    iters: usize,
    seed: u64,
) -> Result<NmfState> {
    check_shapes(v_a, v_b, x)?;
    ensure_nonnegative(v_a, "V_A")?;
    ensure_nonnegative(v_b, "V_B")?;
    if rank == 0 || iters == 0 {
        return Err(Error::Validation("rank and iters must be positive".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let raw = check_conditions(v_a, v_b, x, alpha)?;
    if !raw.a {
        return Err(Error::ConditionViolated {
            condition: 'a',
            detail: format!("2α − 1 = {} must be negative (α = {alpha})", 2.0 * alpha - 1.0),
        });
    }
    // Observed rating bound; the perturbation shift is rank(X) times it.
    let k_scale = v_a
        .data()
        .iter()
        .chain(v_b.data())
        .copied()
        .fold(0.0, f64::max)
        .max(1e-12);
    let (work_a, work_b, perturbation, conditions) = if raw.b && raw.c {
        (v_a.clone(), v_b.clone(), 0.0, raw)
    } else {
        let m = x.k();
        let pa = positive_perturbation(v_a, m, k_scale);
        let pb = positive_perturbation(v_b, m, k_scale);
        let shifted = check_conditions(&pa, &pb, x, alpha)?;
        if !shifted.b {
            return Err(Error::ConditionViolated {
                condition: 'b',
                detail: format!(
                    "even after the positive perturbation, (1−α)V_B − αXᵀV_A has min entry {}",
                    shifted.min_b
                ),
            });
        }
        if !shifted.c {
            return Err(Error::ConditionViolated {
                condition: 'c',
                detail: format!(
                    "even after the positive perturbation, (1−α)V_A − αXV_B has min entry {}",
                    shifted.min_c
                ),
            });
        }
        (pa, pb, m as f64 * k_scale, shifted)
    };

    let (mut t_a, mut t_b) = effective_targets(&work_a, &work_b, x, alpha)?;
    clamp_tiny_negatives(&mut t_a)?;
    clamp_tiny_negatives(&mut t_b)?;

    let (rows, cols) = (v_a.rows(), v_a.cols());
    let mut rng = rng_for(seed, &[0xf0]);
    let mut state = NmfState {
        v_a: v_a.clone(),
        v_b: v_b.clone(),
        w_a: random_positive(rows, rank, &mut rng),
        h_a: random_positive(rank, cols, &mut rng),
        w_b: random_positive(rows, rank, &mut rng),
        h_b: random_positive(rank, cols, &mut rng),
        alpha,
        mapping: x.clone(),
        rank,
        k_scale,
        perturbation,
        conditions,
        t_a,
        t_b,
        loss_history: Vec::with_capacity(iters + 1),
    };
    state.loss_history.push(state.decomposed_objective()?);
    for _ in 0..iters {
        for _ in 0..MU_ROUNDS_PER_ITER {
            let (w_a, h_a) = mu_step(&state.t_a, &state.w_a, &state.h_a)?;
            state.w_a = w_a;
            state.h_a = h_a;
        }
        for _ in 0..MU_ROUNDS_PER_ITER {
            let (w_b, h_b) = mu_step(&state.t_b, &state.w_b, &state.h_b)?;
            state.w_b = w_b;
            state.h_b = h_b;
        }
        let objective = state.decomposed_objective()?;
        if !objective.is_finite() {
            return Err(Error::NumericDivergence(
                "coupled objective diverged".into(),
            ));
        }
        state.loss_history.push(objective);
    }
    Ok(state)
}

/// Builds a coupled demonstrator instance of two popularity-dominated
/// rating matrices: `V_A` is a constant mean rating plus small per-pair
/// jitter, `X` is a seeded permutation, and `V_B = β·Xᵀ·V_A` with
/// `β < α/(1−α)` for `α = 0.3`, so condition (b) fails on the raw inputs
/// and the positive-perturbation path is exercised.
///
/// After the perturbation the effective targets have one dominant component
/// and a jitter tail far below it. Multiplicative updates capture the
/// dominant structure within tens of iterations and then sit on a flat
/// locally-optimal plateau: the shape of trajectory the convergence
/// guarantee describes. Mid-scale structure would instead creep for
/// thousands of iterations (the per-component rate goes as the squared
/// singular-value ratio), which demonstrates nothing about convergence.
pub fn coupled_demo_instance(
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<(DenseMatrix, DenseMatrix, OrthogonalMap)> {
    if rows == 0 || cols == 0 {
        return Err(Error::Validation("instance must be nonempty".into()));
    }
    let mut rng = rng_for(seed, &[0xde]);
    let mean = rng.random_range(0.45..0.6);
    let jitter = 0.005;
    let mut v_a = DenseMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            v_a.set(i, j, mean + rng.random_range(-jitter..jitter));
        }
    }

    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..rows).collect();
    perm.shuffle(&mut rng);
    let mut p = DenseMatrix::zeros(rows, rows);
    for (row, &col) in perm.iter().enumerate() {
        p.set(row, col, 1.0);
    }
    let x = OrthogonalMap::from_matrix(p)?;

    let beta = rng.random_range(0.15..0.35);
    let mut v_b = x.matrix().transpose().matmul(&v_a)?;
    scale_in_place(&mut v_b, beta);
    Ok((v_a, v_b, x))
}
