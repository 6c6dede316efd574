//! Evaluation metrics and the small statistics toolbox used by the
//! experiment harness: RMSE, MAE, Precision@K / Recall@K, improvement
//! percentages, and a paired two-sided t-test.

use crate::error::{Error, Result};
use std::collections::BTreeSet;

/// Normalized rating at or above this counts as relevant for top-K metrics.
pub const RELEVANCE_THRESHOLD: f64 = 0.75;

/// Default ranking cutoff.
pub const DEFAULT_TOP_K: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub domain: String,
    pub rmse: f64,
    pub mae: f64,
    pub precision_at_k: f64,
    pub recall_at_k: f64,
    pub k: usize,
    pub n_test: usize,
}

impl MetricsReport {
    pub fn new(
        domain: impl Into<String>,
        rmse: f64,
        mae: f64,
        precision_at_k: f64,
        recall_at_k: f64,
        k: usize,
        n_test: usize,
    ) -> Result<Self> {
        if n_test == 0 {
            return Err(Error::Validation("report needs n_test ≥ 1".into()));
        }
        // Power-mean inequality; a violation means the computation is wrong.
        assert!(
            rmse >= mae - 1e-12,
            "RMSE {rmse} must be ≥ MAE {mae}"
        );
        assert!(rmse >= 0.0 && mae >= 0.0);
        assert!((0.0..=1.0).contains(&precision_at_k), "P@k {precision_at_k}");
        assert!((0.0..=1.0).contains(&recall_at_k), "R@k {recall_at_k}");
        Ok(Self {
            domain: domain.into(),
            rmse,
            mae,
            precision_at_k,
            recall_at_k,
            k,
            n_test,
        })
    }
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_paired(pred, truth)?;
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_paired(pred, truth)?;
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / pred.len() as f64)
}

fn check_paired(pred: &[f64], truth: &[f64]) -> Result<()> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::Validation(format!(
            "need equal nonzero lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    Ok(())
}

/// One user's scored test items and the subset that is actually relevant.
#[derive(Debug, Clone)]
pub struct UserPredictions {
    pub predictions: Vec<(String, f64)>,
    pub relevant: BTreeSet<String>,
}

/// User-averaged Precision@K and Recall@K. Ranking ties break by ascending
/// item id; users with no relevant items are excluded from the recall
/// average (their recall is undefined) but still count toward precision.
pub fn precision_recall_at_k(users: &[UserPredictions], k: usize) -> Result<(f64, f64)> {
    if k < 1 {
        return Err(Error::Validation("k must be ≥ 1".into()));
    }
    if users.is_empty() {
        return Err(Error::Validation("need at least one user".into()));
    }
    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut recall_users = 0usize;
    for user in users {
        if user.predictions.is_empty() {
            return Err(Error::Validation(
                "every user needs at least one scored item".into(),
            ));
        }
        let mut ranked: Vec<&(String, f64)> = user.predictions.iter().collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.cmp(&b.0))
        });
        let hits = ranked
            .iter()
            .take(k)
            .filter(|(id, _)| user.relevant.contains(id))
            .count();
        precision_sum += hits as f64 / k as f64;
        if !user.relevant.is_empty() {
            recall_sum += hits as f64 / user.relevant.len() as f64;
            recall_users += 1;
        }
    }
    let precision = precision_sum / users.len() as f64;
    let recall = if recall_users > 0 {
        recall_sum / recall_users as f64
    } else {
        0.0
    };
    Ok((precision, recall))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    LowerBetter,
    HigherBetter,
}

/// Relative improvement of `ours` over `baseline`, in percent, positive when
/// `ours` wins.
pub fn improvement_pct(ours: f64, baseline: f64, direction: Direction) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::Validation(
            "improvement is undefined for a zero baseline".into(),
        ));
    }
    Ok(match direction {
        Direction::LowerBetter => 100.0 * (baseline - ours) / baseline,
        Direction::HigherBetter => 100.0 * (ours - baseline) / baseline,
    })
}

/// Builds a full report from scored test rows `(user_id, item_id, predicted,
/// truth)`; relevance is `truth ≥ threshold`.
pub fn report_from_rows(
    domain: impl Into<String>,
    rows: &[(String, String, f64, f64)],
    k: usize,
    threshold: f64,
) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(Error::Validation("no test rows".into()));
    }
    let preds: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let truths: Vec<f64> = rows.iter().map(|r| r.3).collect();
    let rmse_v = rmse(&preds, &truths)?;
    let mae_v = mae(&preds, &truths)?;

    let mut by_user: std::collections::BTreeMap<&str, UserPredictions> =
        std::collections::BTreeMap::new();
    for (user, item, pred, truth) in rows {
        let entry = by_user.entry(user).or_insert_with(|| UserPredictions {
            predictions: Vec::new(),
            relevant: BTreeSet::new(),
        });
        entry.predictions.push((item.clone(), *pred));
        if *truth >= threshold {
            entry.relevant.insert(item.clone());
        }
    }
    let users: Vec<UserPredictions> = by_user.into_values().collect();
    let (p_at_k, r_at_k) = precision_recall_at_k(&users, k)?;
    MetricsReport::new(domain, rmse_v, mae_v, p_at_k, r_at_k, k, rows.len())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy)]
pub struct TTestResult {
    pub t: f64,
    pub df: usize,
    pub p_two_sided: f64,
}

/// Two-sided paired t-test of `xs` against `ys`.
pub fn paired_t_test(xs: &[f64], ys: &[f64]) -> Result<TTestResult> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Validation(format!(
            "paired test needs equal lengths ≥ 2, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let diffs: Vec<f64> = xs.iter().zip(ys).map(|(a, b)| a - b).collect();
    let m = mean(&diffs);
    let sd = sample_std(&diffs);
    let n = diffs.len() as f64;
    let df = diffs.len() - 1;
    if sd < 1e-300 {
        // All differences identical: either no effect at all or a perfectly
        // consistent one.
        return Ok(TTestResult {
            t: if m == 0.0 { 0.0 } else { f64::INFINITY * m.signum() },
            df,
            p_two_sided: if m == 0.0 { 1.0 } else { 0.0 },
        });
    }
    let t = m / (sd / n.sqrt());
    Ok(TTestResult {
        t,
        df,
        p_two_sided: student_t_two_sided_p(t, df as f64),
    })
}

/// `P(|T_df| ≥ |t|)` via the regularized incomplete beta function.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7.
    const COEFFS: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEFFS[0];
    for (i, c) in COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Regularized incomplete beta `I_x(a, b)` by continued fraction.
pub fn regularized_incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 3e-16;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn exact_predictions_are_zero_error() {
        let v = vec![0.2, 0.5, 0.9];
        assert_eq!(rmse(&v, &v).unwrap(), 0.0);
        assert_eq!(mae(&v, &v).unwrap(), 0.0);
    }

    #[test]
    fn two_point_hand_computation() {
        let pred = vec![0.0, 1.0];
        let truth = vec![1.0, 1.0];
        assert!((rmse(&pred, &truth).unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert!((mae(&pred, &truth).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(rmse(&[0.1], &[0.1, 0.2]).is_err());
        assert!(mae(&[], &[]).is_err());
    }

    /// Brute-force oracle over 1,000 random instances.
    #[test]
    fn matches_elementwise_reference() {
        let mut rng = ChaCha20Rng::seed_from_u64(101);
        for _ in 0..1000 {
            let n = rng.random_range(1..40);
            let pred: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let truth: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut sq = 0.0;
            let mut ab = 0.0;
            for i in 0..n {
                let d: f64 = pred[i] - truth[i];
                sq += d * d;
                ab += d.abs();
            }
            let ref_rmse = (sq / n as f64).sqrt();
            let ref_mae = ab / n as f64;
            assert!((rmse(&pred, &truth).unwrap() - ref_rmse).abs() <= 1e-12);
            assert!((mae(&pred, &truth).unwrap() - ref_mae).abs() <= 1e-12);
            assert!(ref_rmse >= ref_mae - 1e-12);
        }
    }

    fn user(preds: &[(&str, f64)], relevant: &[&str]) -> UserPredictions {
        UserPredictions {
            predictions: preds.iter().map(|(i, p)| (i.to_string(), *p)).collect(),
            relevant: relevant.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn perfect_user_scores_one() {
        let u = user(
            &[("a", 0.9), ("b", 0.8), ("c", 0.7), ("d", 0.6), ("e", 0.5)],
            &["a", "b", "c", "d", "e"],
        );
        let (p, r) = precision_recall_at_k(&[u], 5).unwrap();
        assert_eq!((p, r), (1.0, 1.0));
    }

    #[test]
    fn user_with_no_relevant_in_top_k() {
        let u = user(
            &[
                ("a", 0.9),
                ("b", 0.8),
                ("c", 0.7),
                ("d", 0.6),
                ("e", 0.5),
                ("x", 0.1),
                ("y", 0.05),
                ("z", 0.01),
            ],
            &["x", "y", "z"],
        );
        let (p, r) = precision_recall_at_k(&[u], 5).unwrap();
        assert_eq!((p, r), (0.0, 0.0));
    }

    #[test]
    fn ties_break_by_ascending_item_id() {
        let u = user(&[("b", 0.5), ("a", 0.5), ("c", 0.5)], &["a"]);
        let (p, _) = precision_recall_at_k(&[u], 1).unwrap();
        assert_eq!(p, 1.0, "tie at 0.5 must rank item `a` first");
    }

    #[test]
    fn rejects_bad_k_and_empty_users() {
        assert!(precision_recall_at_k(&[], 5).is_err());
        let u = user(&[("a", 0.5)], &[]);
        assert!(precision_recall_at_k(&[u], 0).is_err());
    }

    /// Brute-force oracle on 200 random users: exhaustive set intersection.
    #[test]
    fn matches_set_intersection_reference() {
        let mut rng = ChaCha20Rng::seed_from_u64(55);
        let mut users = Vec::new();
        let mut ref_p_sum = 0.0;
        let mut ref_r_sum = 0.0;
        let mut ref_r_users = 0usize;
        let k = 5;
        for _ in 0..200 {
            let n_items = rng.random_range(1..15);
            let preds: Vec<(String, f64)> = (0..n_items)
                .map(|i| (format!("i{i:02}"), rng.random_range(0.0..1.0)))
                .collect();
            let relevant: BTreeSet<String> = preds
                .iter()
                .filter(|_| rng.random_range(0.0..1.0) < 0.4)
                .map(|(id, _)| id.clone())
                .collect();

            // Reference: sort a copy with the same tie rule, count overlap.
            let mut order = preds.clone();
            order.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap()
                    .then_with(|| a.0.cmp(&b.0))
            });
            let top: BTreeSet<String> =
                order.iter().take(k).map(|(id, _)| id.clone()).collect();
            let hits = top.intersection(&relevant).count();
            ref_p_sum += hits as f64 / k as f64;
            if !relevant.is_empty() {
                ref_r_sum += hits as f64 / relevant.len() as f64;
                ref_r_users += 1;
            }
            users.push(UserPredictions {
                predictions: preds,
                relevant,
            });
        }
        let (p, r) = precision_recall_at_k(&users, k).unwrap();
        assert!((p - ref_p_sum / 200.0).abs() < 1e-15);
        assert!((r - ref_r_sum / ref_r_users as f64).abs() < 1e-15);
    }

    #[test]
    fn improvement_matches_published_style_fixtures() {
        let p = improvement_pct(0.2184, 0.2213, Direction::LowerBetter).unwrap();
        assert!((p - 1.31).abs() < 0.01);
        let p = improvement_pct(0.8826, 0.8595, Direction::HigherBetter).unwrap();
        assert!((p - 2.69).abs() < 0.01);
        assert_eq!(
            improvement_pct(0.5, 0.5, Direction::LowerBetter).unwrap(),
            0.0
        );
        assert!(improvement_pct(0.5, 0.0, Direction::LowerBetter).is_err());
    }

    #[test]
    fn report_invariants_hold() {
        let rows = vec![
            ("u1".to_string(), "i1".to_string(), 0.9, 0.8),
            ("u1".to_string(), "i2".to_string(), 0.2, 0.3),
            ("u2".to_string(), "i1".to_string(), 0.6, 0.9),
        ];
        let r = report_from_rows("d", &rows, 5, RELEVANCE_THRESHOLD).unwrap();
        assert!(r.rmse >= r.mae);
        assert_eq!(r.n_test, 3);
    }

    /// Quadrature oracle for the t-distribution tail probability.
    fn t_two_sided_by_quadrature(t: f64, df: f64) -> f64 {
        // Simpson's rule on [0, |t|]; p = 1 − 2∫₀^|t| pdf.
        let half = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0)
            - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (half - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let n = 20_000;
        let hi = t.abs();
        let h = hi / n as f64;
        let mut acc = pdf(0.0) + pdf(hi);
        for i in 1..n {
            let x = i as f64 * h;
            acc += pdf(x) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = acc * h / 3.0;
        (1.0 - 2.0 * integral).max(0.0)
    }

    #[test]
    fn t_distribution_matches_quadrature_and_critical_values() {
        for (t, df) in [(2.7764451052, 4.0), (1.0, 10.0), (12.7062047364, 1.0), (0.5, 7.0)] {
            let p = student_t_two_sided_p(t, df);
            let q = t_two_sided_by_quadrature(t, df);
            assert!((p - q).abs() < 1e-6, "t={t} df={df}: betai {p} vs quad {q}");
        }
        // Classical 95% critical values.
        assert!((student_t_two_sided_p(2.7764451052, 4.0) - 0.05).abs() < 1e-6);
        assert!((student_t_two_sided_p(12.7062047364, 1.0) - 0.05).abs() < 1e-6);
        assert_eq!(student_t_two_sided_p(0.0, 5.0), 1.0);
    }

    #[test]
    fn paired_test_detects_consistent_difference() {
        let xs = [0.50, 0.52, 0.49, 0.51, 0.50];
        let ys = [0.60, 0.63, 0.58, 0.62, 0.61];
        let r = paired_t_test(&xs, &ys).unwrap();
        assert_eq!(r.df, 4);
        assert!(r.t < 0.0);
        assert!(r.p_two_sided < 0.001, "p {}", r.p_two_sided);

        let same = paired_t_test(&xs, &xs).unwrap();
        assert_eq!(same.p_two_sided, 1.0);
    }
}
