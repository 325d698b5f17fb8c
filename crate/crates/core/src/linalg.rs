//! Small dense helpers for the 2×2 and 4×4 matrices used throughout.

use nalgebra::{Matrix2, Matrix4, Vector2};

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;
pub type Mat4 = Matrix4<f64>;

/// `(X + Xᵀ) / 2`.
pub fn symmetrize(m: &Mat2) -> Mat2 {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry.
pub fn max_abs<R: nalgebra::Dim, C: nalgebra::Dim, S>(m: &nalgebra::Matrix<f64, R, C, S>) -> f64
where
    S: nalgebra::RawStorage<f64, R, C>,
{
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Eigenvalues of a symmetric 2×2 matrix, ascending.
pub fn sym_eigenvalues(m: &Mat2) -> [f64; 2] {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let radius = half_diff.hypot(off);
    [mean - radius, mean + radius]
}

/// Orthonormal eigenvectors (columns) of a symmetric 2×2 matrix, matching
/// the ordering of [`sym_eigenvalues`].
pub fn sym_eigenvectors(m: &Mat2) -> Mat2 {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    // rotation angle diagonalising the matrix
    let theta = 0.5 * (2.0 * off).atan2(2.0 * half_diff);
    let (s, c) = theta.sin_cos();
    // columns: largest eigenvalue direction is (c, s)
    Mat2::new(-s, c, c, s)
}

pub fn is_finite2(m: &Mat2) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Block matrix `[[a, b], [c, d]]` from four 2×2 blocks.
pub fn block4(a: &Mat2, b: &Mat2, c: &Mat2, d: &Mat2) -> Mat4 {
    let mut out = Mat4::zeros();
    out.fixed_view_mut::<2, 2>(0, 0).copy_from(a);
    out.fixed_view_mut::<2, 2>(0, 2).copy_from(b);
    out.fixed_view_mut::<2, 2>(2, 0).copy_from(c);
    out.fixed_view_mut::<2, 2>(2, 2).copy_from(d);
    out
}

/// Sum in a fixed pairwise order so the result does not depend on how the
/// terms were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (lo, hi) = values.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}

pub fn pairwise_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        pairwise_sum(values) / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn eigen_pairs_diagonalise() {
        let m = Mat2::new(0.347222, 0.2, 0.2, 0.5);
        let vals = sym_eigenvalues(&m);
        let vecs = sym_eigenvectors(&m);
        for (k, &lambda) in vals.iter().enumerate() {
            let v = vecs.column(k);
            let r = m * v - v * lambda;
            assert!(r.norm() < 1e-14, "residual {r}");
        }
        assert!(vals[0] <= vals[1]);
    }

    #[test]
    fn eigenvalues_of_diagonal() {
        let vals = sym_eigenvalues(&Mat2::new(3.0, 0.0, 0.0, -1.0));
        assert_eq!(vals, [-1.0, 3.0]);
    }

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs = [1.0, 2.0, 3.0, 4.5, -0.5];
        assert_relative_eq!(pairwise_sum(&xs), 10.0);
        assert!(pairwise_mean(&[]).is_nan());
    }
}
