//! Small dense linear-algebra helpers shared by the learning modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Replaces `m` by `(m + mᵀ) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let ev = SymmetricEigen::new(m.clone()).eigenvalues;
    let lo = ev.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ev.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power
/// iteration. `guess` is reused as the start vector and receives the final
/// iterate so repeated calls on slowly changing matrices converge in a few
/// steps.
pub fn power_max_eigenvalue(m: &DMatrix<f64>, guess: &mut DVector<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    if guess.len() != n || guess.norm() == 0.0 || !guess.iter().all(|v| v.is_finite()) {
        *guess = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    }
    let mut lambda = 0.0;
    for _ in 0..iters {
        let next = m * &*guess;
        let norm = next.norm();
        if norm == 0.0 || !norm.is_finite() {
            return max_eigenvalue(m);
        }
        let new_lambda = guess.dot(&next);
        *guess = next / norm;
        if (new_lambda - lambda).abs() <= 1e-10 * new_lambda.abs() {
            return new_lambda;
        }
        lambda = new_lambda;
    }
    lambda
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let chol = m.clone().cholesky()?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// `(x - c)ᵀ M (x - c)` restricted to the leading `dim` coordinates.
pub fn quad_form_leading(m: &DMatrix<f64>, c: &DVector<f64>, x: &[f64], dim: usize) -> f64 {
    let diff: Vec<f64> = (0..dim).map(|j| x[j] - c[j]).collect();
    let mut acc = 0.0;
    for i in 0..dim {
        let di = diff[i];
        if di == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (j, dj) in diff.iter().enumerate() {
            row += m[(i, j)] * dj;
        }
        acc += di * row;
    }
    acc.max(0.0)
}

/// `tr(Aᵀ B)` for equally shaped matrices.
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Row-major `Vec<Vec<f64>>` serde representation for matrices.
pub mod serde_matrix {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().cloned().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

pub mod serde_vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        Ok(DVector::from_vec(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_matches_dense_eigen() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let mut guess = DVector::zeros(0);
        let approx = power_max_eigenvalue(&m, &mut guess, 500);
        assert!((approx - max_eigenvalue(&m)).abs() < 1e-8);
    }

    #[test]
    fn spd_inverse_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(spd_inverse(&m).is_none());
    }

    #[test]
    fn leading_quad_form_ignores_trailing_coordinates() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0, 100.0]));
        let c = DVector::from_vec(vec![0.0, 0.0, 0.0]);
        let q = quad_form_leading(&m, &c, &[1.0, 1.0, 5.0], 2);
        assert!((q - 5.0).abs() < 1e-15);
    }
}
