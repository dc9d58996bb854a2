//! Small dense linear-algebra helpers shared across modules.
//!
//! Matrices are `nalgebra::DMatrix<f64>` with one observation per row. A
//! mapping `W` acts on row vectors from the right, so the mapped source space
//! is `X * W`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

/// Frobenius norm of `WᵀW − I`.
pub fn orthogonality_defect(w: &DMatrix<f64>) -> f64 {
    let d = w.ncols();
    let mut gram = w.tr_mul(w);
    for i in 0..d {
        gram[(i, i)] -= 1.0;
    }
    gram.norm()
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with
/// the sign of R's diagonal folded into Q).
pub fn random_orthogonal<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Mean of the `k` largest values in `values` (reorders the slice).
pub fn top_k_mean(values: &mut [f64], k: usize) -> f64 {
    let k = k.min(values.len());
    if k == 0 {
        return 0.0;
    }
    let n = values.len();
    if k < n {
        values.select_nth_unstable_by(n - k, |a, b| a.total_cmp(b));
    }
    values[n - k..].iter().sum::<f64>() / k as f64
}

/// Indices of the `k` largest values, best first. Ties resolve to the lower index.
pub fn top_k_indices(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let by_score = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    let k = k.min(idx.len());
    if k < idx.len() && k > 0 {
        idx.select_nth_unstable_by(k - 1, by_score);
        idx.truncate(k);
    }
    idx.sort_by(by_score);
    idx.truncate(k);
    idx
}

/// Index of the largest value; first index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Copy of the rows of `m` selected by `rows`, in the given order.
pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Rows rescaled to unit Euclidean norm; zero rows stay zero.
pub fn unit_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let n = row.norm();
        if n > 0.0 {
            row /= n;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2, 7, 50] {
            let q = random_orthogonal(d, &mut rng);
            assert!(orthogonality_defect(&q) < 1e-12, "d={d}");
        }
    }

    #[test]
    fn defect_of_scaled_identity() {
        let w = DMatrix::<f64>::identity(2, 2) * 2.0;
        // diag(3, 3) -> sqrt(18)
        assert!((orthogonality_defect(&w) - 18f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn top_k_helpers() {
        let mut v = vec![0.1, 0.9, 0.5, 0.7];
        assert!((top_k_mean(&mut v.clone(), 2) - 0.8).abs() < 1e-12);
        assert!((top_k_mean(&mut v, 10) - 0.55).abs() < 1e-12);
        assert_eq!(top_k_indices(&[0.1, 0.9, 0.5, 0.9], 3), vec![1, 3, 2]);
        assert_eq!(argmax(&[0.3, 0.8, 0.8]), 1);
    }
}
