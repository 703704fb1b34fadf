//! Two-slot, three-user combining scheme.
//!
//! Symbols sent in slot `t` are resent in slot `t′` scaled by `v_j`;
//! receiver `k` forms `u_k·y_k + y′_k`. Interference from `j` cancels at `k`
//! when `u_k·h_kj + v_j·h′_kj = 0`. The six conditions stack into `F·c = 0`
//! with `c = [v1 v2 v3 u1 u2 u3]ᵀ`; `F` is generically full rank, so one
//! coefficient of `t′` (the aided link) must take a prescribed value and its
//! row is dropped from the system.

use std::io::Write;

use num_complex::Complex;

use crate::channel::ChannelSlot;
use crate::error::{param, shape, CaiaError, Result};
use crate::linalg::{null_space, CMatrix};
use crate::scalar::{lit, modulus, modulus_sqr, to_f64, Real};

/// Row order of `F`: the `(receiver, transmitter)` of each cancellation condition.
pub const CONDITION_ROWS: [(usize, usize); 6] = [(2, 1), (3, 1), (1, 2), (3, 2), (1, 3), (2, 3)];

fn require_three_users<T: Real>(slot: &ChannelSlot<T>) -> Result<()> {
    if slot.k_users() != 3 {
        return Err(shape(format!("two-slot scheme needs K = 3, got {}", slot.k_users())));
    }
    Ok(())
}

fn is_zero<T: Real>(z: Complex<T>) -> bool {
    z.re == T::zero() && z.im == T::zero()
}

/// `t = h23·h12·h31 / (h13·h21·h32)`.
pub fn t_ratio<T: Real>(slot: &ChannelSlot<T>) -> Result<Complex<T>> {
    require_three_users(slot)?;
    for (rx, tx) in [(1, 3), (2, 1), (3, 2)] {
        if is_zero(slot.h(rx, tx)) {
            return Err(CaiaError::Singular(format!("h{rx}{tx} = 0")));
        }
    }
    Ok((slot.h(2, 3) / slot.h(1, 3)) * (slot.h(1, 2) / slot.h(2, 1)) * (slot.h(3, 1) / slot.h(3, 2)))
}

/// The 6×6 unified system matrix; rows follow [`CONDITION_ROWS`], columns
/// `(v1, v2, v3, u1, u2, u3)`.
pub fn build_f<T: Real>(slot_t: &ChannelSlot<T>, slot_tp: &ChannelSlot<T>) -> Result<CMatrix<T>> {
    require_three_users(slot_t)?;
    require_three_users(slot_tp)?;
    let mut f = CMatrix::<T>::zeros(6, 6);
    for (row, &(k, j)) in CONDITION_ROWS.iter().enumerate() {
        f[(row, j - 1)] = slot_tp.h(k, j);
        f[(row, 3 + k - 1)] = slot_t.h(k, j);
    }
    Ok(f)
}

/// `F` with the aided link's row removed.
pub fn build_f_reduced<T: Real>(
    slot_t: &ChannelSlot<T>,
    slot_tp: &ChannelSlot<T>,
    aided_link: (usize, usize),
) -> Result<CMatrix<T>> {
    let row = row_of(aided_link)?;
    Ok(build_f(slot_t, slot_tp)?.remove_row(row))
}

fn row_of(link: (usize, usize)) -> Result<usize> {
    CONDITION_ROWS
        .iter()
        .position(|&l| l == link)
        .ok_or_else(|| param(format!("aided link {link:?} is not a cross link of a 3-user channel")))
}

/// Combining coefficients and the coefficient the aided link must carry.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingSolution<T: Real> {
    /// Retransmission scalars `v1, v2, v3`.
    pub v: [Complex<T>; 3],
    /// Combining scalars `u1, u2, u3`.
    pub u: [Complex<T>; 3],
    /// `(i, j)`: receiver and transmitter of the aided coefficient.
    pub aided_link: (usize, usize),
    /// Value `h′_ij` must take for the dropped condition to hold.
    pub required_coeff: Complex<T>,
    /// Index into `c = [v1 v2 v3 u1 u2 u3]` fixed to one.
    pub normalization: usize,
}

impl<T: Real> PairingSolution<T> {
    /// `c = [v1 v2 v3 u1 u2 u3]`.
    pub fn c(&self) -> [Complex<T>; 6] {
        [self.v[0], self.v[1], self.v[2], self.u[0], self.u[1], self.u[2]]
    }

    /// `h_kk·u_k + h′_kk·v_k`, the desired-signal gain after combining.
    pub fn desired_gain(&self, slot_t: &ChannelSlot<T>, slot_tp: &ChannelSlot<T>, k: usize) -> Complex<T> {
        slot_t.h(k, k) * self.u[k - 1] + slot_tp.h(k, k) * self.v[k - 1]
    }

    /// Combined gain from transmitter `j` at receiver `k`.
    pub fn combined_gain(&self, slot_t: &ChannelSlot<T>, slot_tp: &ChannelSlot<T>, k: usize, j: usize) -> Complex<T> {
        slot_t.h(k, j) * self.u[k - 1] + slot_tp.h(k, j) * self.v[j - 1]
    }

    /// `slot_tp` with the aided coefficient set to its required value.
    pub fn aided_slot(&self, slot_tp: &ChannelSlot<T>) -> ChannelSlot<T> {
        let mut s = slot_tp.clone();
        s.set(self.aided_link.0, self.aided_link.1, self.required_coeff);
        s
    }
}

/// Solves the reduced system for the one-dimensional kernel, normalised to
/// `v1 = 1`, and derives the required aided coefficient
/// `h′_ij = −u_i·h_ij / v_j`.
///
/// `rank_multiplier` scales the `6·ε·σ_max` nullity threshold.
pub fn solve_combining<T: Real>(
    slot_t: &ChannelSlot<T>,
    slot_tp: &ChannelSlot<T>,
    aided_link: (usize, usize),
    rank_multiplier: T,
) -> Result<PairingSolution<T>> {
    let fr = build_f_reduced(slot_t, slot_tp, aided_link)?;
    let ns = null_space(&fr, rank_multiplier);
    if ns.ncols() != 1 {
        return Err(CaiaError::Degenerate { nullity: ns.ncols() });
    }
    let v1 = ns[(0, 0)];
    if modulus(v1) <= T::machine_epsilon() * ns.column(0).norm() {
        return Err(CaiaError::Degenerate { nullity: 1 });
    }
    let c: Vec<Complex<T>> = ns.column(0).iter().map(|z| z / v1).collect();
    let v = [Complex::new(T::one(), T::zero()), c[1], c[2]];
    let u = [c[3], c[4], c[5]];
    let (i, j) = aided_link;
    let required_coeff = -(u[i - 1] * slot_t.h(i, j)) / v[j - 1];
    Ok(PairingSolution { v, u, aided_link, required_coeff, normalization: 0 })
}

/// The cross link with the smallest `|h′_ij|`; aiding it minimises the
/// residual interference.
pub fn select_aided_link<T: Real>(slot_tp: &ChannelSlot<T>) -> (usize, usize) {
    CONDITION_ROWS
        .iter()
        .copied()
        .min_by(|&(a, b), &(c, d)| {
            modulus(slot_tp.h(a, b))
                .partial_cmp(&modulus(slot_tp.h(c, d)))
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("six cross links")
}

/// `U·y + y′` with `U = diag(u1, u2, u3)`.
pub fn combine<T: Real>(
    y: &[Complex<T>; 3],
    y_prime: &[Complex<T>; 3],
    sol: &PairingSolution<T>,
) -> [Complex<T>; 3] {
    std::array::from_fn(|k| sol.u[k] * y[k] + y_prime[k])
}

/// `h′ = h^c + (h^c / t)·Δt`: the coefficient actually observed when the loop
/// ratio is off by `Δt`.
pub fn mismatched_coefficient<T: Real>(h_c: Complex<T>, t: Complex<T>, delta_t: Complex<T>) -> Complex<T> {
    h_c + (h_c / t) * delta_t
}

/// Residual interference power `|h^c|²·|Δt/t|²·|v_j|²·p`.
pub fn residual_interference<T: Real>(
    h_c: Complex<T>,
    t: Complex<T>,
    delta_t: Complex<T>,
    v_j: Complex<T>,
    p: T,
) -> Result<T> {
    if is_zero(t) {
        return Err(CaiaError::Singular("t = 0".into()));
    }
    if !(p >= T::zero()) {
        return Err(param("power must be nonnegative"));
    }
    Ok(modulus_sqr(h_c) * modulus_sqr(delta_t / t) * modulus_sqr(v_j) * p)
}

/// Residual interference and SINR at the aided receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport<T: Real> {
    pub residual_power: T,
    pub sinr: T,
    pub delta_t: Complex<T>,
    pub t_ratio: Complex<T>,
    /// Noise variance after combining, `(1 + |u_i|²)·σ_n²`.
    pub n2: T,
    /// `|h_ii·u_i + h′_ii·v_i| < 1e-9`: the desired signal cancels as well.
    pub degenerate_gain: bool,
}

/// SINR at the aided receiver `i` (receiver 2 when the aided link is `(2,3)`):
/// `|h_ii·u_i + h′_ii·v_i|²·p / (|h^c/t|²·|Δt|²·|v_j|²·p + N)`.
pub fn residual_report<T: Real>(
    sol: &PairingSolution<T>,
    slot_t: &ChannelSlot<T>,
    slot_tp: &ChannelSlot<T>,
    delta_t: Complex<T>,
    p: T,
    sigma_n2: T,
) -> Result<ResidualReport<T>> {
    if !(p > T::zero()) {
        return Err(param("power must be positive"));
    }
    if !(sigma_n2 >= T::zero()) {
        return Err(param("noise variance must be nonnegative"));
    }
    let (i, j) = sol.aided_link;
    let t = t_ratio(slot_t)?;
    let residual_power = residual_interference(sol.required_coeff, t, delta_t, sol.v[j - 1], p)?;
    let gain = sol.desired_gain(slot_t, slot_tp, i);
    let n2 = (T::one() + modulus_sqr(sol.u[i - 1])) * sigma_n2;
    let signal = modulus_sqr(gain) * p;
    let denom = residual_power + n2;
    let sinr = if denom > T::zero() { signal / denom } else { T::max_value().unwrap_or(signal) };
    Ok(ResidualReport {
        residual_power,
        sinr,
        delta_t,
        t_ratio: t,
        n2,
        degenerate_gain: modulus(gain) < lit(1e-9),
    })
}

/// Largest tolerable phase error `Δφ = (p·ψ)^{−1/2}`.
pub fn phase_tolerance<T: Real>(p: T, psi: T) -> Result<T> {
    let prod = p * psi;
    if !(prod > T::zero()) || !prod.is_finite() {
        return Err(param("p*psi must be positive"));
    }
    Ok(T::one() / prod.sqrt())
}

/// One line of the pairing experiment CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PairingRecord<T: Real> {
    pub seed: u64,
    pub solution: PairingSolution<T>,
    pub residual_power: T,
    pub sinr: T,
}

pub const PAIRING_CSV_HEADER: [&str; 13] = [
    "seed", "aided_i", "aided_j", "v1", "v2", "v3", "u1", "u2", "u3", "required_re", "required_im",
    "residual_power", "sinr",
];

fn fmt_complex<T: Real>(z: Complex<T>) -> String {
    Complex::new(to_f64(z.re), to_f64(z.im)).to_string()
}

/// Writes pairing records; complex scalars use the `a+bi` notation.
pub fn write_pairing_csv<T: Real, W: Write>(w: W, records: &[PairingRecord<T>]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(PAIRING_CSV_HEADER)?;
    for r in records {
        let s = &r.solution;
        let mut row = vec![r.seed.to_string(), s.aided_link.0.to_string(), s.aided_link.1.to_string()];
        row.extend(s.v.iter().chain(&s.u).map(|&z| fmt_complex(z)));
        row.push(to_f64(s.required_coeff.re).to_string());
        row.push(to_f64(s.required_coeff.im).to_string());
        row.push(to_f64(r.residual_power).to_string());
        row.push(to_f64(r.sinr).to_string());
        wr.write_record(&row)?;
    }
    wr.flush().map_err(|e| CaiaError::Csv(e.to_string()))
}
