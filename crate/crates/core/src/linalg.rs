//! Small dense complex linear algebra: numerical rank, null spaces,
//! orthonormal bases and principal angles, all on top of nalgebra's SVD.

use nalgebra::DMatrix;
use num_complex::Complex;

use crate::scalar::{lit, Real};

pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Full SVD `A = U Σ Vᴴ` with square `U` (m×m) and `V` (n×n); singular values
/// sorted descending and padded with zeros up to `max(m, n)`.
pub(crate) struct FullSvd<T: Real> {
    pub u: CMatrix<T>,
    pub sigma: Vec<T>,
    pub v: CMatrix<T>,
}

pub(crate) fn full_svd<T: Real>(a: &CMatrix<T>) -> FullSvd<T> {
    let (m, n) = a.shape();
    let d = m.max(n);
    // Zero padding to a square matrix makes nalgebra's thin SVD a full one.
    let mut sq = CMatrix::<T>::zeros(d, d);
    sq.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = sq.svd(true, true);
    let u_all = svd.u.expect("u requested");
    let vt_all = svd.v_t.expect("v_t requested");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .partial_cmp(&svd.singular_values[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = CMatrix::from_fn(m, m, |r, c| u_all[(r, order[c])]);
    let v = CMatrix::from_fn(n, n, |r, c| vt_all[(order[c], r)].conj());
    FullSvd { u, sigma, v }
}

/// Singular values in descending order (`min(m, n)` of them).
pub fn singular_values<T: Real>(a: &CMatrix<T>) -> Vec<T> {
    let k = a.nrows().min(a.ncols());
    if k == 0 {
        return Vec::new();
    }
    let mut s: Vec<T> = a.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    s.truncate(k);
    s
}

/// Threshold below which a singular value counts as zero:
/// `multiplier · max(m, n) · ε · σ_max`.
pub fn rank_threshold<T: Real>(shape: (usize, usize), sigma_max: T, multiplier: T) -> T {
    multiplier * lit::<T>(shape.0.max(shape.1) as f64) * T::machine_epsilon() * sigma_max
}

pub fn numerical_rank<T: Real>(a: &CMatrix<T>, multiplier: T) -> usize {
    let s = singular_values(a);
    let Some(&smax) = s.first() else { return 0 };
    let thr = rank_threshold(a.shape(), smax, multiplier);
    s.iter().filter(|&&x| x > thr).count()
}

/// Orthonormal basis (columns) of the null space.
pub fn null_space<T: Real>(a: &CMatrix<T>, multiplier: T) -> CMatrix<T> {
    let n = a.ncols();
    let svd = full_svd(a);
    let smax = svd.sigma.first().copied().unwrap_or_else(T::zero);
    let thr = rank_threshold(a.shape(), smax, multiplier);
    let rank = svd.sigma.iter().take(a.nrows().min(n)).filter(|&&x| x > thr).count();
    svd.v.columns(rank, n - rank).into_owned()
}

/// Orthonormal basis of the column space, dimension equal to the numerical rank.
pub fn column_basis<T: Real>(a: &CMatrix<T>, multiplier: T) -> CMatrix<T> {
    let m = a.nrows();
    let svd = full_svd(a);
    let smax = svd.sigma.first().copied().unwrap_or_else(T::zero);
    let thr = rank_threshold(a.shape(), smax, multiplier);
    let rank = svd.sigma.iter().take(m.min(a.ncols())).filter(|&&x| x > thr).count();
    svd.u.columns(0, rank).into_owned()
}

/// First `dim` left singular vectors, i.e. the best `dim`-dimensional
/// approximation of the column space.
pub fn dominant_basis<T: Real>(a: &CMatrix<T>, dim: usize) -> CMatrix<T> {
    let svd = full_svd(a);
    svd.u.columns(0, dim.min(a.nrows())).into_owned()
}

/// Orthonormal basis of the orthogonal complement of an orthonormal basis `q`.
pub fn complement<T: Real>(q: &CMatrix<T>) -> CMatrix<T> {
    let (m, r) = q.shape();
    let svd = full_svd(q);
    svd.u.columns(r.min(m), m - r.min(m)).into_owned()
}

/// Largest principal angle (radians) between the column spaces of `a` and `b`.
///
/// Computed as `asin ‖(I − Q_a Q_aᴴ) Q_b‖₂`, which stays accurate for angles
/// near zero. Subspaces of different numerical dimension are at `π/2`.
pub fn max_principal_angle<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>, multiplier: T) -> T {
    let qa = column_basis(a, multiplier);
    let qb = column_basis(b, multiplier);
    if qa.ncols() != qb.ncols() {
        return T::frac_pi_2();
    }
    if qa.ncols() == 0 {
        return T::zero();
    }
    let resid = &qb - &qa * (qa.adjoint() * &qb);
    let s = singular_values(&resid).first().copied().unwrap_or_else(T::zero);
    s.min(T::one()).asin()
}

/// Moore–Penrose pseudo-inverse via the SVD.
pub fn pinv<T: Real>(a: &CMatrix<T>, multiplier: T) -> CMatrix<T> {
    let (m, n) = a.shape();
    let svd = full_svd(a);
    let smax = svd.sigma.first().copied().unwrap_or_else(T::zero);
    let thr = rank_threshold(a.shape(), smax, multiplier);
    let mut out = CMatrix::<T>::zeros(n, m);
    for k in 0..m.min(n) {
        let s = svd.sigma[k];
        if s <= thr {
            break;
        }
        let vk = svd.v.column(k);
        let uk = svd.u.column(k);
        out += (vk * uk.adjoint()).map(|z| z / Complex::from(s));
    }
    out
}

/// Builds a diagonal matrix from its diagonal.
pub fn diag<T: Real>(d: &[Complex<T>]) -> CMatrix<T> {
    let mut m = CMatrix::<T>::zeros(d.len(), d.len());
    for (i, &z) in d.iter().enumerate() {
        m[(i, i)] = z;
    }
    m
}

/// `diag(d) · m` without materialising the diagonal matrix.
pub fn scale_rows<T: Real>(d: &[Complex<T>], m: &CMatrix<T>) -> CMatrix<T> {
    CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| d[r] * m[(r, c)])
}

/// Spectral-norm-free max-abs entry.
pub fn max_abs<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().map(|z| z.re.hypot(z.im)).fold(T::zero(), |a, b| a.max(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn rank_of_rank_one_outer_product() {
        let u = CMatrix::<f64>::from_column_slice(3, 1, &[c(1.0, 0.5), c(-2.0, 0.0), c(0.0, 1.0)]);
        let v = CMatrix::<f64>::from_row_slice(1, 4, &[c(1.0, 0.0), c(2.0, 1.0), c(0.0, -1.0), c(3.0, 0.0)]);
        assert_eq!(numerical_rank(&(u * v), 1.0), 1);
    }

    #[test]
    fn null_space_of_wide_matrix() {
        let a = CMatrix::<f64>::from_row_slice(1, 3, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        let ns = null_space(&a, 1.0);
        assert_eq!(ns.ncols(), 2);
        assert!(max_abs(&(&a * &ns)) < 1e-14);
    }

    #[test]
    fn principal_angle_of_rotated_line() {
        let a = CMatrix::<f64>::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let th = 0.3f64;
        let b = CMatrix::<f64>::from_column_slice(2, 1, &[c(th.cos(), 0.0), c(th.sin(), 0.0)]);
        assert!((max_principal_angle(&a, &b, 1.0) - th).abs() < 1e-14);
        assert!(max_principal_angle(&a, &a, 1.0) < 1e-15);
    }

    #[test]
    fn complement_is_orthogonal() {
        let q = CMatrix::<f64>::from_column_slice(3, 1, &[c(0.6, 0.0), c(0.0, 0.8), c(0.0, 0.0)]);
        let qc = complement(&q);
        assert_eq!(qc.ncols(), 2);
        assert!(max_abs(&(q.adjoint() * &qc)) < 1e-14);
    }

    #[test]
    fn pinv_inverts_square() {
        let a = CMatrix::<f64>::from_row_slice(2, 2, &[c(2.0, 1.0), c(0.0, 1.0), c(1.0, 0.0), c(3.0, -1.0)]);
        let p = pinv(&a, 1.0);
        let id = &a * p - CMatrix::<f64>::identity(2, 2);
        assert!(max_abs(&id) < 1e-14);
    }
}
