//! Training and algebra of the cross-domain transitional mapping: dual
//! alignment losses over overlap-user embedding pairs, gradient updates with
//! re-orthonormalization, inversion by transpose, multi-domain composition,
//! and the minimal-overlap bound.

use crate::error::{Error, Result};
use crate::tensor::{determinant_sign, gram_schmidt_orthonormalize, DenseMatrix, OrthogonalMap};

/// An (source embedding, target embedding) pair for one overlap user.
pub type AlignPair<'a> = (&'a [f64], &'a [f64]);

/// Drift above which a composed map is re-orthonormalized.
const COMPOSE_DRIFT_TOL: f64 = 1e-9;

/// Forward mapping `X · e` into the target domain's embedding space.
pub fn map_forward(x: &OrthogonalMap, e: &[f64]) -> Result<Vec<f64>> {
    x.apply(e)
}

/// Inverse mapping `Xᵀ · e`; exact inverse of [`map_forward`] for an
/// orthogonal map.
pub fn map_inverse(x: &OrthogonalMap, e: &[f64]) -> Result<Vec<f64>> {
    x.apply_transpose(e)
}

/// Primal and dual alignment losses over overlap pairs:
/// `Σ‖X·a − b‖²` and `Σ‖a − Xᵀ·b‖²`. Equal for orthogonal `X`.
pub fn alignment_loss(x: &OrthogonalMap, pairs: &[AlignPair]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Validation(
            "alignment loss needs at least one pair".into(),
        ));
    }
    let mut primal = 0.0;
    let mut dual = 0.0;
    for (a, b) in pairs {
        let xa = x.apply(a)?;
        if b.len() != xa.len() {
            return Err(Error::Shape("pair dimension mismatch".into()));
        }
        primal += xa
            .iter()
            .zip(*b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>();
        let xtb = x.apply_transpose(b)?;
        dual += a
            .iter()
            .zip(&xtb)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>();
    }
    Ok((primal, dual))
}

/// Gradient of `(primal + dual)/2` with respect to the raw matrix `X`,
/// valid at any square `X` (orthogonality not assumed).
pub fn alignment_grad(x: &DenseMatrix, pairs: &[AlignPair]) -> Result<DenseMatrix> {
    let k = x.rows();
    let mut grad = DenseMatrix::zeros(k, k);
    for (a, b) in pairs {
        if a.len() != k || b.len() != k {
            return Err(Error::Shape("pair dimension mismatch".into()));
        }
        // d/dX ½‖Xa − b‖² = (Xa − b) aᵀ
        let xa = x.mat_vec(a)?;
        for i in 0..k {
            let r = xa[i] - b[i];
            if r == 0.0 {
                continue;
            }
            let row = grad.row_mut(i);
            for (g, &aj) in row.iter_mut().zip(*a) {
                *g += r * aj;
            }
        }
        // d/dX ½‖a − Xᵀb‖² = −b (a − Xᵀb)ᵀ
        let xtb = x.mat_vec_transposed(b)?;
        for i in 0..k {
            let bi = b[i];
            if bi == 0.0 {
                continue;
            }
            let row = grad.row_mut(i);
            for j in 0..k {
                row[j] -= bi * (a[j] - xtb[j]);
            }
        }
    }
    Ok(grad)
}

/// One gradient step on the mean of the primal and dual alignment losses,
/// followed by Gram-Schmidt re-orthonormalization. Returns the new map and
/// the pre-step (primal, dual) losses.
pub fn update_mapping(
    x: &OrthogonalMap,
    pairs: &[AlignPair],
    lr: f64,
) -> Result<(OrthogonalMap, f64, f64)> {
    let (primal, dual) = alignment_loss(x, pairs)?;
    let grad = alignment_grad(x.matrix(), pairs)?;
    let mut stepped = x.matrix().clone();
    stepped.add_scaled(&grad, -lr)?;
    if !stepped.is_finite() {
        return Err(Error::NumericDivergence(
            "mapping update produced non-finite entries".into(),
        ));
    }
    let next = gram_schmidt_orthonormalize(&stepped).map_err(|e| match e {
        Error::DegenerateInput(msg) => Error::DegenerateInput(format!(
            "gradient step collapsed the mapping rank ({msg}); lower the mapping learning rate"
        )),
        other => other,
    })?;
    Ok((next, primal, dual))
}

/// Moves the map into the orthogonal component — rotations or reflections —
/// whose best alignment of `pairs` is the global one. Gradient steps with
/// Gram-Schmidt retraction cannot cross between the two components, and the
/// optimal component is the sign of the cross-covariance determinant, so a
/// training run should orient its starting point once before stepping.
pub fn orient_to_pairs(x: &OrthogonalMap, pairs: &[AlignPair]) -> Result<OrthogonalMap> {
    let k = x.k();
    let mut cross = DenseMatrix::zeros(k, k);
    for (a, b) in pairs {
        if a.len() != k || b.len() != k {
            return Err(Error::Shape("pair dimension mismatch".into()));
        }
        for i in 0..k {
            let bi = b[i];
            if bi == 0.0 {
                continue;
            }
            let row = cross.row_mut(i);
            for (entry, &aj) in row.iter_mut().zip(*a) {
                *entry += bi * aj;
            }
        }
    }
    let target = determinant_sign(&cross);
    if target == 0.0 || determinant_sign(x.matrix()) == target {
        return Ok(x.clone());
    }
    let mut flipped = x.matrix().clone();
    for j in 0..k {
        let v = -flipped.get(k - 1, j);
        flipped.set(k - 1, j, v);
    }
    OrthogonalMap::from_matrix(flipped)
}

/// Composes hop maps `[X_12, X_23, …]` into the single map that carries a
/// domain-1 embedding all the way to the last domain; applying the result
/// equals applying each hop in sequence.
pub fn compose_mappings(maps: &[OrthogonalMap]) -> Result<OrthogonalMap> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Validation("compose needs at least one map".into()))?;
    let k = first.k();
    let mut product = first.matrix().clone();
    for m in &maps[1..] {
        if m.k() != k {
            return Err(Error::Shape(format!(
                "cannot compose {}x{} map with {}x{} chain",
                m.k(),
                m.k(),
                k,
                k
            )));
        }
        // Later hops apply after earlier ones, i.e. multiply from the left.
        product = m.matrix().matmul(&product)?;
    }
    let candidate = OrthogonalMap::from_matrix(product.clone())?;
    if candidate.orthogonality_error() > COMPOSE_DRIFT_TOL {
        return gram_schmidt_orthonormalize(&product);
    }
    Ok(candidate)
}

/// Overlap users needed to pin down a k-dimensional orthogonal mapping:
/// `k(k−1)/2` constraints.
pub fn min_overlap_required(k: usize) -> usize {
    k * (k - 1) / 2
}

/// Writes the map in its text format: first line `k`, then `k` rows of `k`
/// values.
pub fn write_map_file(x: &OrthogonalMap, path: &std::path::Path) -> Result<()> {
    use std::fmt::Write as _;
    let mut out = format!("{}\n", x.k());
    for i in 0..x.k() {
        let row: Vec<String> = x.matrix().row(i).iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    crate::fileio::write_file(path, &out)
}

pub fn read_map_file(path: &std::path::Path) -> Result<OrthogonalMap> {
    let lines = crate::fileio::read_lines(path)?;
    let first = lines.first().ok_or_else(|| Error::Parse {
        file: path.display().to_string(),
        line: 1,
        message: "empty map file".into(),
    })?;
    let k = crate::fileio::parse_usize(first, path, 1)?;
    if lines.len() < k + 1 {
        return Err(Error::Parse {
            file: path.display().to_string(),
            line: lines.len(),
            message: format!("expected {k} matrix rows"),
        });
    }
    let mut data = Vec::with_capacity(k * k);
    for (i, row) in lines[1..=k].iter().enumerate() {
        let fields: Vec<&str> = row.split_whitespace().collect();
        if fields.len() != k {
            return Err(Error::Parse {
                file: path.display().to_string(),
                line: i + 2,
                message: format!("expected {k} values, got {}", fields.len()),
            });
        }
        for f in fields {
            data.push(crate::fileio::parse_f64(f, path, i + 2)?);
        }
    }
    OrthogonalMap::from_matrix(DenseMatrix::new(k, k, data)?)
}
