//! Alignment feasibility on extended channels and aligning beamformers.
//!
//! `T = (H^{[13]})⁻¹H^{[23]}(H^{[21]})⁻¹H^{[12]}(H^{[32]})⁻¹H^{[31]}` is the
//! closed loop around the three users; `T_j^{[i]}` generalises it to `K`
//! users. Everything is diagonal, so all products are entrywise.

mod beamform;
mod structure;

pub use beamform::{
    design_beamformers, random_structured_diagonal, structured_diagonal, synthesize_aided_channel, verify_alignment,
    AlignmentReport, AlignmentSolution, ReceiverReport, StructuredDiagonal,
};
pub use structure::{
    build_r, detect_structure, excludes_coordinate_axes, Feasibility, Infeasible, TStructure,
    Tolerances, Violation,
};

use num_complex::Complex;

use crate::channel::ExtendedChannel;
use crate::error::{param, shape, Result};
use crate::scalar::{rel_close, Real};
use structure::{group_indices, layout_from_labels};

fn check_even_extension<T: Real>(ch: &ExtendedChannel<T>) -> Result<()> {
    if ch.k_users() < 3 {
        return Err(param("alignment matrices need K >= 3"));
    }
    if !ch.tau().is_multiple_of(2) {
        return Err(shape(format!("extension length {} is odd", ch.tau())));
    }
    ch.check_nonsingular()
}

/// Diagonal of the three-user loop matrix `T`.
pub fn compute_t<T: Real>(ch: &ExtendedChannel<T>) -> Result<Vec<Complex<T>>> {
    check_even_extension(ch)?;
    let (h12, h13, h21, h23, h31, h32) =
        (ch.link(1, 2), ch.link(1, 3), ch.link(2, 1), ch.link(2, 3), ch.link(3, 1), ch.link(3, 2));
    Ok((0..ch.tau())
        .map(|t| (h23[t] / h13[t]) * (h12[t] / h21[t]) * (h31[t] / h32[t]))
        .collect())
}

/// Diagonal of `T_j^{[i]} = (H^{[i1]})⁻¹H^{[ij]}(H^{[1j]})⁻¹H^{[13]}(H^{[23]})⁻¹H^{[21]}`.
///
/// Evaluated as `(h_ij/h_23)(h_13/h_1j)(h_21/h_i1)`, so `T_3^{[2]}` is exactly
/// the identity.
pub fn compute_t_j_i<T: Real>(ch: &ExtendedChannel<T>, i: usize, j: usize) -> Result<Vec<Complex<T>>> {
    check_even_extension(ch)?;
    let k = ch.k_users();
    if !(2..=k).contains(&i) || !(2..=k).contains(&j) || i == j {
        return Err(param(format!("need 2 <= i, j <= {k} and i != j, got ({i}, {j})")));
    }
    let (hij, h23, h13, h1j, h21, hi1) =
        (ch.link(i, j), ch.link(2, 3), ch.link(1, 3), ch.link(1, j), ch.link(2, 1), ch.link(i, 1));
    Ok((0..ch.tau())
        .map(|t| (hij[t] / h23[t]) * (h13[t] / h1j[t]) * (h21[t] / hi1[t]))
        .collect())
}

/// The `(i, j)` pairs whose `T_j^{[i]}` carries a real condition: all
/// `2 ≤ i ≠ j ≤ K` except `(2, 3)`. There are `(K−1)(K−2)−1` of them.
pub fn condition_pairs(k_users: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 2..=k_users {
        for j in 2..=k_users {
            if i != j && (i, j) != (2, 3) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Checks every `T_j^{[i]}` for the block form and requires one layout that
/// fits all of them at once. The returned certificate carries `T̃` values of
/// the three-user loop matrix [`compute_t`].
pub fn joint_feasibility<T: Real>(ch: &ExtendedChannel<T>, tol: T) -> Result<Feasibility<T>> {
    let t = compute_t(ch)?;
    let mut matrices = Vec::new();
    let mut violations = Vec::new();
    for (i, j) in condition_pairs(ch.k_users()) {
        let m = compute_t_j_i(ch, i, j)?;
        if let Feasibility::Infeasible(inf) = detect_structure(&m, tol)? {
            violations.extend(inf.violations.into_iter().map(|v| Violation { matrix: Some((i, j)), ..v }));
        }
        matrices.push(m);
    }
    if !violations.is_empty() {
        return Ok(Feasibility::Infeasible(Infeasible { violations }));
    }
    matrices.push(t.clone());
    // Meet of the per-matrix partitions.
    let labels = group_indices(t.len(), |a, b| matrices.iter().all(|m| rel_close(m[a], m[b], tol)));
    Ok(match layout_from_labels(&labels, &t) {
        Ok(s) => Feasibility::Feasible(s),
        Err(singles) => Feasibility::Infeasible(Infeasible {
            violations: singles
                .into_iter()
                .map(|index| Violation { matrix: None, index, value: t[index] })
                .collect(),
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{extend, sample_slot, ChannelSlot};

    fn ones(k: usize, tau: usize) -> ExtendedChannel<f64> {
        ExtendedChannel::from_fn(k, tau, |_, _, _| Complex::new(1.0, 0.0))
    }

    #[test]
    fn identity_links_give_identity() {
        let ch = ones(3, 4);
        assert!(compute_t(&ch).unwrap().iter().all(|z| *z == Complex::new(1.0, 0.0)));
        assert!(compute_t_j_i(&ch, 3, 2).unwrap().iter().all(|z| *z == Complex::new(1.0, 0.0)));
    }

    #[test]
    fn t_3_2_is_exact_identity() {
        let ch = ExtendedChannel::generic(5, 6, 1.0f64, 3).unwrap();
        assert!(compute_t_j_i(&ch, 2, 3).unwrap().iter().all(|z| *z == Complex::new(1.0, 0.0)));
    }

    #[test]
    fn t_is_inverse_of_t_2_3() {
        let ch = ExtendedChannel::generic(3, 4, 1.0f64, 8).unwrap();
        let t = compute_t(&ch).unwrap();
        let t32 = compute_t_j_i(&ch, 3, 2).unwrap();
        for (a, b) in t.iter().zip(&t32) {
            assert!((a * b - 1.0).norm() < 1e-13);
        }
    }

    #[test]
    fn user_range_and_shape_errors() {
        let ch = ExtendedChannel::generic(3, 4, 1.0f64, 8).unwrap();
        assert!(compute_t_j_i(&ch, 1, 2).is_err());
        assert!(compute_t_j_i(&ch, 2, 2).is_err());
        assert!(compute_t_j_i(&ch, 2, 4).is_err());
        let odd = ExtendedChannel::generic(3, 3, 1.0f64, 8).unwrap();
        assert!(compute_t(&odd).is_err());
        let two = ExtendedChannel::generic(2, 2, 1.0f64, 8).unwrap();
        assert!(compute_t(&two).is_err());
    }

    #[test]
    fn condition_counts() {
        for k in 3..=7 {
            assert_eq!(condition_pairs(k).len(), (k - 1) * (k - 2) - 1);
        }
    }

    #[test]
    fn aided_two_slot_channel_has_scalar_t() {
        // Second slot's h23 fixed so the loop ratio matches the first slot.
        let a = sample_slot(3, 1.0f64, 1).unwrap();
        let mut b = sample_slot(3, 1.0f64, 2).unwrap();
        let ratio = |s: &ChannelSlot<f64>| {
            s.h(2, 3) * s.h(1, 2) * s.h(3, 1) / (s.h(1, 3) * s.h(2, 1) * s.h(3, 2))
        };
        let t = ratio(&a);
        let fixed = b.h(2, 3) * t / ratio(&b);
        b.set(2, 3, fixed);
        let ch = extend(&[a, b]).unwrap();
        let d = compute_t(&ch).unwrap();
        assert!((d[0] - t).norm() < 1e-12 * t.norm());
        assert!((d[1] - t).norm() < 1e-12 * t.norm());
        let s = joint_feasibility(&ch, 1e-9).unwrap().into_structure().unwrap();
        assert_eq!((s.n(), s.n1()), (1, 1));
    }
}
