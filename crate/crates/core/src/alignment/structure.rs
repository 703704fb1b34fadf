//! Block structure of the alignment matrices and its eigenvector basis.
//!
//! A diagonal `2n×2n` matrix admits perfect alignment exactly when it can be
//! permuted into `blockdiag(T̃, T̃, f(T̃))` where `f(T̃) = Bᵀ T̃ B` has distinct
//! entries. On the multiset of diagonal values that means: no value occurs
//! exactly once. Values occurring `m` times contribute `⌊m/2⌋` pairs, and
//! each odd-multiplicity value leaves one entry for the `f` block.

use num_complex::Complex;

use crate::error::{param, shape, CaiaError, Result};
use crate::linalg::{column_basis, CMatrix};
use crate::scalar::{lit, modulus, rel_close, Real};

/// Numerical tolerances used by structure detection and verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<T: Real> {
    /// Relative tolerance for two diagonal values to count as equal.
    pub value_match: T,
    /// Multiplier on `max(m,n)·ε·σ_max` for numerical rank decisions.
    pub rank_multiplier: T,
    /// Largest principal angle (radians) accepted as span equality.
    pub span_angle: T,
    /// Maximum relative error of a noise-free zero-forcing decode.
    pub decode: T,
    /// `e_k ∈ span(Q)` iff `‖Qᴴ e_k‖ ≥ 1 − span_membership`.
    pub span_membership: T,
    /// A row with norm below this puts `e_k` in the kernel.
    pub kernel_row: T,
}

impl<T: Real> Default for Tolerances<T> {
    fn default() -> Self {
        Self {
            value_match: lit(1e-9),
            rank_multiplier: T::one(),
            span_angle: lit(1e-9),
            decode: lit(1e-9),
            span_membership: lit(1e-9),
            kernel_row: lit(1e-12),
        }
    }
}

/// Certificate that a diagonal matrix has the aligned block form.
///
/// Diagonal indices are 0-based. The layout lists the first entries of every
/// pair, then the second entries, then the `f` indices; `perm[p]` is the
/// diagonal index placed at block position `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct TStructure<T: Real> {
    n: usize,
    pairs: Vec<[usize; 2]>,
    f_indices: Vec<usize>,
    perm: Vec<usize>,
    t_tilde: Vec<Complex<T>>,
}

impl<T: Real> TStructure<T> {
    /// Half the extension length (`τ = 2n`).
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n1(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[[usize; 2]] {
        &self.pairs
    }

    pub fn f_indices(&self) -> &[usize] {
        &self.f_indices
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Diagonal of `T̃`.
    pub fn t_tilde(&self) -> &[Complex<T>] {
        &self.t_tilde
    }

    /// Diagonal of `f(T̃) = Bᵀ T̃ B`. The `c`-th `f` entry is attached to pair `c`.
    pub fn f_values(&self) -> Vec<Complex<T>> {
        (0..self.f_indices.len()).map(|c| self.t_tilde[c]).collect()
    }

    /// The `n1 × (2n − 2n1)` zero/one selector `B`.
    pub fn b_selector(&self) -> Vec<Vec<u8>> {
        let cols = self.f_indices.len();
        (0..self.n1())
            .map(|r| (0..cols).map(|c| u8::from(r == c)).collect())
            .collect()
    }

    /// `P · blockdiag(T̃, T̃, f(T̃)) · Pᵀ` as a diagonal.
    pub fn reconstruct(&self) -> Vec<Complex<T>> {
        let mut out = vec![Complex::new(T::zero(), T::zero()); 2 * self.n];
        for (p, &idx) in self.perm.iter().enumerate() {
            out[idx] = self.block_value(p);
        }
        out
    }

    /// Diagonal entry at block position `p` of `blockdiag(T̃, T̃, f(T̃))`.
    fn block_value(&self, p: usize) -> Complex<T> {
        let n1 = self.n1();
        if p < 2 * n1 {
            self.t_tilde[p % n1]
        } else {
            self.t_tilde[p - 2 * n1]
        }
    }

    /// Permutation matrix `P` with `P[perm[p], p] = 1`.
    pub fn permutation_matrix(&self) -> CMatrix<T> {
        let d = 2 * self.n;
        let mut m = CMatrix::<T>::zeros(d, d);
        for (p, &idx) in self.perm.iter().enumerate() {
            m[(idx, p)] = Complex::new(T::one(), T::zero());
        }
        m
    }

    /// `blockdiag(T̃, f(T̃))`, the eigenvalue matrix paired with [`build_r`].
    pub fn eigenvalue_diagonal(&self) -> Vec<Complex<T>> {
        self.t_tilde.iter().copied().chain(self.f_values()).collect()
    }

    /// Same layout, different `T̃` values (used when several matrices share a partition).
    pub fn with_values_from(&self, diag: &[Complex<T>]) -> Self {
        let t_tilde = self.pairs.iter().map(|p| diag[p[0]]).collect();
        Self { t_tilde, ..self.clone() }
    }
}

/// A diagonal entry that prevents the block form.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation<T: Real> {
    /// `(i, j)` of the offending `T_j^{[i]}`, or `None` for a single matrix
    /// or for the shared partition.
    pub matrix: Option<(usize, usize)>,
    pub index: usize,
    pub value: Complex<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Infeasible<T: Real> {
    pub violations: Vec<Violation<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Feasibility<T: Real> {
    Feasible(TStructure<T>),
    Infeasible(Infeasible<T>),
}

impl<T: Real> Feasibility<T> {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible(_))
    }

    pub fn structure(&self) -> Option<&TStructure<T>> {
        match self {
            Feasibility::Feasible(s) => Some(s),
            Feasibility::Infeasible(_) => None,
        }
    }

    pub fn into_structure(self) -> Option<TStructure<T>> {
        match self {
            Feasibility::Feasible(s) => Some(s),
            Feasibility::Infeasible(_) => None,
        }
    }
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Single-linkage grouping: `a ~ b` when `same(a, b)`, closed transitively.
/// Labels are numbered by first occurrence.
pub(crate) fn group_indices(len: usize, same: impl Fn(usize, usize) -> bool) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..len).collect();
    for a in 0..len {
        for b in a + 1..len {
            if same(a, b) {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut labels = vec![usize::MAX; len];
    let mut next = 0;
    let mut root_label = vec![usize::MAX; len];
    for (i, label) in labels.iter_mut().enumerate() {
        let r = find(&mut parent, i);
        if root_label[r] == usize::MAX {
            root_label[r] = next;
            next += 1;
        }
        *label = root_label[r];
    }
    labels
}

/// Builds the block layout from equivalence-class labels, or returns the
/// indices that sit alone in their class.
pub(crate) fn layout_from_labels<T: Real>(
    labels: &[usize],
    values: &[Complex<T>],
) -> std::result::Result<TStructure<T>, Vec<usize>> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    let singles: Vec<usize> = members.iter().filter(|m| m.len() == 1).map(|m| m[0]).collect();
    if !singles.is_empty() {
        return Err(singles);
    }
    // Pairs that own an f entry come first so the last n columns of R (the
    // user-1 beamformer) still touch every coordinate.
    let mut attached = Vec::new();
    let mut free = Vec::new();
    let mut f_indices = Vec::new();
    for m in &members {
        let mut chunks = m.chunks_exact(2);
        let first = chunks.next().expect("class has at least two members");
        let rest: Vec<[usize; 2]> = chunks.by_ref().map(|c| [c[0], c[1]]).collect();
        if let Some(&left) = chunks.remainder().first() {
            attached.push([first[0], first[1]]);
            f_indices.push(left);
        } else {
            free.push([first[0], first[1]]);
        }
        free.extend(rest);
    }
    free.sort_by_key(|p| p[0]);
    let pairs: Vec<[usize; 2]> = attached.into_iter().chain(free).collect();
    let perm = pairs
        .iter()
        .map(|p| p[0])
        .chain(pairs.iter().map(|p| p[1]))
        .chain(f_indices.iter().copied())
        .collect();
    let t_tilde = pairs.iter().map(|p| values[p[0]]).collect();
    Ok(TStructure { n: labels.len() / 2, pairs, f_indices, perm, t_tilde })
}

fn check_diagonal<T: Real>(t_diag: &[Complex<T>]) -> Result<()> {
    if t_diag.is_empty() || !t_diag.len().is_multiple_of(2) {
        return Err(shape(format!("diagonal length {} is not a positive even number", t_diag.len())));
    }
    if let Some(i) = t_diag.iter().position(|z| modulus(*z) == T::zero()) {
        return Err(CaiaError::Singular(format!("diagonal entry {i} is zero")));
    }
    Ok(())
}

/// Decides whether a diagonal matrix has the aligned block form and, if so,
/// returns its certificate.
pub fn detect_structure<T: Real>(t_diag: &[Complex<T>], tol: T) -> Result<Feasibility<T>> {
    check_diagonal(t_diag)?;
    if !(tol >= T::zero()) {
        return Err(param("tolerance must be nonnegative"));
    }
    let labels = group_indices(t_diag.len(), |a, b| rel_close(t_diag[a], t_diag[b], tol));
    Ok(match layout_from_labels(&labels, t_diag) {
        Ok(s) => Feasibility::Feasible(s),
        Err(singles) => Feasibility::Infeasible(Infeasible {
            violations: singles
                .into_iter()
                .map(|index| Violation { matrix: None, index, value: t_diag[index] })
                .collect(),
        }),
    })
}

/// The eigenvector matrix `R = P·[[Ṽ, B], [Ṽ, −B], [0, f(Ṽ)]]` with `Ṽ = I`.
///
/// `R` is `2n × (2n − n1)`; `T·R = R·blockdiag(T̃, f(T̃))`.
pub fn build_r<T: Real>(s: &TStructure<T>) -> CMatrix<T> {
    let (d, n1, nf) = (2 * s.n, s.n1(), s.f_indices.len());
    let one = Complex::new(T::one(), T::zero());
    let mut r = CMatrix::<T>::zeros(d, n1 + nf);
    for (k, pair) in s.pairs.iter().enumerate() {
        r[(pair[0], k)] = one;
        r[(pair[1], k)] = one;
    }
    for (c, &fi) in s.f_indices.iter().enumerate() {
        // B column c selects pair c; f(Ṽ) = BᵀB = I.
        let pair = s.pairs[c];
        r[(pair[0], n1 + c)] = one;
        r[(pair[1], n1 + c)] = -one;
        r[(fi, n1 + c)] = one;
    }
    r
}

/// True when no `e_k` lies in the column space of `m` and no row of `m` is
/// zero (so no `e_k` lies in the kernel of `mᵀ`).
pub fn excludes_coordinate_axes<T: Real>(m: &CMatrix<T>, tol: &Tolerances<T>) -> bool {
    let q = column_basis(m, tol.rank_multiplier);
    (0..m.nrows()).all(|k| {
        let in_span = q.row(k).norm() >= T::one() - tol.span_membership;
        let in_kernel = m.row(k).norm() < tol.kernel_row;
        !in_span && !in_kernel
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{diag, max_abs};

    fn real(v: &[f64]) -> Vec<Complex<f64>> {
        v.iter().map(|&x| Complex::new(x, 0.0)).collect()
    }

    #[test]
    fn paper_example_structure() {
        let t = real(&[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let s = detect_structure(&t, 1e-9).unwrap().into_structure().unwrap();
        assert_eq!((s.n(), s.n1()), (3, 2));
        assert_eq!(s.t_tilde(), real(&[1.0, 2.0]).as_slice());
        assert_eq!(s.f_values(), real(&[1.0, 2.0]));
        assert_eq!(s.perm(), &[0, 1, 2, 3, 4, 5]);
        assert_eq!(s.b_selector(), vec![vec![1, 0], vec![0, 1]]);
        let r = build_r(&s);
        let expected = [
            [1, 0, 1, 0],
            [0, 1, 0, 1],
            [1, 0, -1, 0],
            [0, 1, 0, -1],
            [0, 0, 1, 0],
            [0, 0, 0, 1],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(r[(i, j)], Complex::new(v as f64, 0.0));
            }
        }
    }

    #[test]
    fn four_distinct_values_are_infeasible() {
        let t = vec![
            Complex::new(1.0, 0.5),
            Complex::new(-0.3, 2.0),
            Complex::new(0.7, -1.1),
            Complex::new(4.0, 0.0),
        ];
        match detect_structure(&t, 1e-9).unwrap() {
            Feasibility::Infeasible(inf) => assert_eq!(inf.violations.len(), 4),
            Feasibility::Feasible(_) => panic!("expected infeasible"),
        }
    }

    #[test]
    fn odd_length_is_shape_error() {
        assert!(matches!(detect_structure(&real(&[1.0, 1.0, 1.0]), 1e-9), Err(CaiaError::Shape(_))));
        assert!(matches!(detect_structure(&real(&[1.0, 0.0]), 1e-9), Err(CaiaError::Singular(_))));
    }

    #[test]
    fn tolerance_groups_near_values() {
        let t = real(&[1.0, 1.0 + 1e-12, 3.0, 3.0 * (1.0 - 1e-12)]);
        let s = detect_structure(&t, 1e-9).unwrap().into_structure().unwrap();
        assert_eq!(s.n1(), 2);
        let t = real(&[1.0, 1.0 + 1e-6, 3.0, 3.0]);
        assert!(!detect_structure(&t, 1e-9).unwrap().is_feasible());
    }

    #[test]
    fn special_form_gives_identity_stack() {
        // diag(a, b, a, b): n1 = n, R = P[I; I]
        let t = real(&[5.0, 7.0, 5.0, 7.0]);
        let s = detect_structure(&t, 1e-9).unwrap().into_structure().unwrap();
        assert_eq!(s.n1(), s.n());
        let r = build_r(&s);
        assert_eq!(r.shape(), (4, 2));
        let stack = CMatrix::<f64>::from_fn(4, 2, |i, j| Complex::new(f64::from(u8::from(i % 2 == j)), 0.0));
        let pt_stack = s.permutation_matrix() * stack;
        assert_eq!(r, pt_stack);
    }

    #[test]
    fn eigenvector_identity_on_mixed_multiplicities() {
        let t = real(&[2.0, 2.0, 3.0, 3.0, 3.0, 5.0, 5.0, 5.0]);
        let s = detect_structure(&t, 1e-9).unwrap().into_structure().unwrap();
        assert_eq!(s.n1(), 3);
        let r = build_r(&s);
        let lhs = diag(&t) * &r;
        let rhs = &r * diag(&s.eigenvalue_diagonal());
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
        // last n columns must still touch every coordinate
        let v1 = r.columns(r.ncols() - s.n(), s.n()).into_owned();
        assert!(excludes_coordinate_axes(&v1, &Tolerances::default()));
        assert!(excludes_coordinate_axes(&r, &Tolerances::default()));
    }

    #[test]
    fn coordinate_axis_detection() {
        let tol = Tolerances::<f64>::default();
        let e0 = CMatrix::<f64>::from_fn(3, 1, |i, _| Complex::new(f64::from(u8::from(i == 0)), 0.0));
        assert!(!excludes_coordinate_axes(&e0, &tol));
        let ones = CMatrix::<f64>::from_element(3, 1, Complex::new(1.0, 0.0));
        assert!(excludes_coordinate_axes(&ones, &tol));
    }
}
