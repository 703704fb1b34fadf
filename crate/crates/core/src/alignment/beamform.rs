use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::Rng;

use super::structure::{build_r, detect_structure, Feasibility, TStructure, Tolerances};
use crate::channel::ExtendedChannel;
use crate::error::{param, shape, CaiaError, Result};
use crate::linalg::{
    complement, dominant_basis, max_principal_angle, numerical_rank, pinv, scale_rows, CMatrix,
};
use crate::rng::{complex_gaussian, stream_rng};
use crate::scalar::{lit, modulus, polar, rel_close, to_f64, Real};

use super::condition_pairs;

/// Per-user beamformers together with each receiver's zero-forcing data.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentSolution<T: Real> {
    n: usize,
    v: Vec<CMatrix<T>>,
    interference_basis: Vec<CMatrix<T>>,
    decoders: Vec<CMatrix<T>>,
}

impl<T: Real> AlignmentSolution<T> {
    /// Derives interference bases and zero-forcing decoders for arbitrary
    /// `2n × n` beamformers.
    ///
    /// Receiver `k` projects onto the orthogonal complement of the dominant
    /// `n`-dimensional interference subspace and inverts the projected
    /// desired channel (pseudo-inverse, so rank-deficient cases still yield a
    /// decoder whose residual exposes the failure).
    pub fn from_beamformers(ch: &ExtendedChannel<T>, v: Vec<CMatrix<T>>, tol: &Tolerances<T>) -> Result<Self> {
        let k = ch.k_users();
        let tau = ch.tau();
        if v.len() != k || !tau.is_multiple_of(2) {
            return Err(shape(format!("need {k} beamformers over an even extension")));
        }
        let n = tau / 2;
        if v.iter().any(|m| m.shape() != (tau, n)) {
            return Err(shape(format!("beamformers must be {tau}x{n}")));
        }
        let mut interference_basis = Vec::with_capacity(k);
        let mut decoders = Vec::with_capacity(k);
        for rx in 1..=k {
            let interf = interference_matrix(ch, &v, rx);
            let basis = dominant_basis(&interf, n);
            let perp = complement(&basis);
            let desired = scale_rows(ch.link(rx, rx), &v[rx - 1]);
            let eff = perp.adjoint() * desired;
            decoders.push(pinv(&eff, tol.rank_multiplier) * perp.adjoint());
            interference_basis.push(basis);
        }
        Ok(Self { n, v, interference_basis, decoders })
    }

    /// Streams per user.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Beamformer `V^{[k]}` (1-based user).
    pub fn v(&self, k: usize) -> &CMatrix<T> {
        &self.v[k - 1]
    }

    pub fn beamformers(&self) -> &[CMatrix<T>] {
        &self.v
    }

    pub fn interference_basis(&self, rx: usize) -> &CMatrix<T> {
        &self.interference_basis[rx - 1]
    }

    pub fn decoder(&self, rx: usize) -> &CMatrix<T> {
        &self.decoders[rx - 1]
    }
}

/// `[H^{[kj]} V^{[j]}]_{j≠k}` side by side.
fn interference_matrix<T: Real>(ch: &ExtendedChannel<T>, v: &[CMatrix<T>], rx: usize) -> CMatrix<T> {
    let blocks: Vec<CMatrix<T>> = (1..=ch.k_users())
        .filter(|&tx| tx != rx)
        .map(|tx| scale_rows(ch.link(rx, tx), &v[tx - 1]))
        .collect();
    hcat(ch.tau(), &blocks)
}

fn hcat<T: Real>(rows: usize, blocks: &[CMatrix<T>]) -> CMatrix<T> {
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::<T>::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), b.shape()).copy_from(b);
        c += b.ncols();
    }
    out
}

fn ratio<T: Real>(num: &[Complex<T>], den: &[Complex<T>]) -> Vec<Complex<T>> {
    num.iter().zip(den).map(|(a, b)| a / b).collect()
}

/// Three-user beamformers from the eigenvector basis of `T`.
///
/// `V^{[1]}` is the last `n` columns of [`build_r`];
/// `V^{[3]} = (H^{[23]})⁻¹H^{[21]}V^{[1]}` aligns interference at receiver 2
/// and `V^{[2]} = (H^{[32]})⁻¹H^{[31]}V^{[1]}` at receiver 3. Receiver 1's
/// span equality is then checked numerically.
pub fn design_beamformers<T: Real>(
    ch: &ExtendedChannel<T>,
    s: &TStructure<T>,
    tol: &Tolerances<T>,
) -> Result<AlignmentSolution<T>> {
    if ch.k_users() != 3 {
        return Err(param("beamformer design is defined for K = 3"));
    }
    let n = s.n();
    if ch.tau() != 2 * n {
        return Err(shape(format!("structure is for 2n = {}, channel has tau = {}", 2 * n, ch.tau())));
    }
    ch.check_nonsingular()?;
    let r = build_r(s);
    let v1 = r.columns(r.ncols() - n, n).into_owned();
    let v3 = scale_rows(&ratio(ch.link(2, 1), ch.link(2, 3)), &v1);
    let v2 = scale_rows(&ratio(ch.link(3, 1), ch.link(3, 2)), &v1);

    let a = scale_rows(ch.link(1, 2), &v2);
    let b = scale_rows(ch.link(1, 3), &v3);
    let angle = max_principal_angle(&a, &b, tol.rank_multiplier);
    if !(angle < tol.span_angle) {
        return Err(CaiaError::Inconsistent(format!(
            "receiver 1 interference spans differ by {:.3e} rad",
            to_f64(angle)
        )));
    }
    AlignmentSolution::from_beamformers(ch, vec![v1, v2, v3], tol)
}

/// Draws a generic channel and overwrites the cross links `H^{[ij]}`,
/// `i, j ≥ 2`, `(i, j) ≠ (2, 3)`, so that every `T_j^{[i]}` equals the inverse
/// of the target diagonal. The three-user loop matrix [`super::compute_t`] then
/// equals the target, and all conditions share its partition.
pub fn synthesize_aided_channel<T: Real>(
    k_users: usize,
    n: usize,
    target: &TStructure<T>,
    seed: u64,
) -> Result<ExtendedChannel<T>> {
    if target.n() != n {
        return Err(shape(format!("target is for n = {}, requested n = {n}", target.n())));
    }
    synthesize_from_diagonal(k_users, &target.reconstruct(), seed)
}

pub(crate) fn synthesize_from_diagonal<T: Real>(
    k_users: usize,
    t: &[Complex<T>],
    seed: u64,
) -> Result<ExtendedChannel<T>> {
    if k_users < 3 {
        return Err(param("need K >= 3"));
    }
    let mut ch = ExtendedChannel::generic(k_users, t.len(), T::one(), seed)?;
    for (i, j) in condition_pairs(k_users) {
        let d: Vec<Complex<T>> = (0..t.len())
            .map(|s| {
                (ch.link(i, 1)[s] / t[s]) * (ch.link(1, j)[s] / ch.link(1, 3)[s]) * (ch.link(2, 3)[s] / ch.link(2, 1)[s])
            })
            .collect();
        *ch.link_mut(i, j) = d;
    }
    Ok(ch)
}

/// One receiver's line of an [`AlignmentReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverReport {
    pub receiver: usize,
    pub interference_rank: usize,
    pub total_rank: usize,
    pub decode_residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub n: usize,
    pub receivers: Vec<ReceiverReport>,
}

impl AlignmentReport {
    pub fn all_pass(&self) -> bool {
        self.receivers.iter().all(|r| r.pass)
    }

    /// Achieved DoF per user: decodable streams over the `2n` slots.
    pub fn dof(&self) -> Vec<f64> {
        self.receivers
            .iter()
            .map(|r| {
                let streams = if r.pass { self.n } else { r.total_rank.saturating_sub(r.interference_rank).min(self.n) };
                streams as f64 / (2 * self.n) as f64
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["receiver", "interference_rank", "total_rank", "decode_residual", "pass"])?;
        for r in &self.receivers {
            wr.write_record([
                r.receiver.to_string(),
                r.interference_rank.to_string(),
                r.total_rank.to_string(),
                format!("{:e}", r.decode_residual),
                r.pass.to_string(),
            ])?;
        }
        wr.flush().map_err(|e| CaiaError::Csv(e.to_string()))
    }
}

const DECODE_STREAM_SEED: u64 = 0x00DE_C0DE;

/// Rank and noise-free decode checks at every receiver.
///
/// A receiver passes when its interference occupies at most `n` dimensions,
/// desired signal plus interference span all `2n`, and zero-forcing
/// recovers random symbols with relative error below `tol.decode`.
pub fn verify_alignment<T: Real>(
    ch: &ExtendedChannel<T>,
    sol: &AlignmentSolution<T>,
    tol: &Tolerances<T>,
) -> Result<AlignmentReport> {
    let k = ch.k_users();
    let n = sol.n();
    if sol.beamformers().len() != k || ch.tau() != 2 * n {
        return Err(shape("solution does not match channel"));
    }
    let symbols: Vec<CMatrix<T>> = (0..k as u64)
        .map(|u| {
            let mut rng = stream_rng(DECODE_STREAM_SEED, u);
            DMatrix::from_fn(n, 1, |_, _| complex_gaussian(&mut rng, T::one()))
        })
        .collect();
    let mut receivers = Vec::with_capacity(k);
    for rx in 1..=k {
        let interf = interference_matrix(ch, sol.beamformers(), rx);
        let desired = scale_rows(ch.link(rx, rx), sol.v(rx));
        let interference_rank = numerical_rank(&interf, tol.rank_multiplier);
        let total_rank = numerical_rank(&hcat(2 * n, &[desired, interf]), tol.rank_multiplier);

        let mut y = CMatrix::<T>::zeros(2 * n, 1);
        for tx in 1..=k {
            y += scale_rows(ch.link(rx, tx), &(sol.v(tx) * &symbols[tx - 1]));
        }
        let x_hat = sol.decoder(rx) * y;
        let x = &symbols[rx - 1];
        let scale = x.iter().map(|z| modulus(*z)).fold(T::zero(), |a, b| a.max(b));
        let err = (x_hat - x).iter().map(|z| modulus(*z)).fold(T::zero(), |a, b| a.max(b));
        let residual = to_f64(err / scale);
        let pass = interference_rank <= n && total_rank == 2 * n && residual < to_f64(tol.decode);
        receivers.push(ReceiverReport { receiver: rx, interference_rank, total_rank, decode_residual: residual, pass });
    }
    Ok(AlignmentReport { n, receivers })
}

/// A random diagonal with the aligned block form and its expected `n1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredDiagonal<T: Real> {
    pub diag: Vec<Complex<T>>,
    pub n1: usize,
}

/// Draws a random length-`2n` diagonal with the aligned block form and
/// `n1` uniform over its admissible range `⌈2n/3⌉..=n`.
pub fn random_structured_diagonal<T: Real, R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<StructuredDiagonal<T>> {
    if n == 0 {
        return Err(param("n must be positive"));
    }
    let n1 = rng.random_range((2 * n).div_ceil(3)..=n);
    structured_diagonal(n, n1, rng)
}

/// Draws a random length-`2n` diagonal with `n1` pairs.
///
/// The `2n − 2n1` odd-multiplicity values each get one pair plus a leftover
/// entry, and the remaining pairs either start new values or join existing
/// ones. Values are well separated (relative distance above `1e-3`) and
/// positions shuffled. Needs `⌈2n/3⌉ ≤ n1 ≤ n`, since every leftover entry
/// must take a distinct value.
pub fn structured_diagonal<T: Real, R: Rng + ?Sized>(n: usize, n1: usize, rng: &mut R) -> Result<StructuredDiagonal<T>> {
    if n == 0 || n1 > n || 3 * n1 < 2 * n {
        return Err(param(format!("n1 = {n1} is outside ceil(2n/3)..=n for n = {n}")));
    }
    let odd = 2 * n - 2 * n1;
    let mut values: Vec<Complex<T>> = Vec::new();
    let fresh = |rng: &mut R, values: &[Complex<T>]| loop {
        let z = polar(lit::<T>(rng.random_range(0.5..2.0)), lit::<T>(rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)));
        if values.iter().all(|&v| !rel_close(v, z, lit(1e-3))) {
            return z;
        }
    };
    let mut multiplicity = Vec::new();
    for _ in 0..odd {
        let z = fresh(rng, &values);
        values.push(z);
        multiplicity.push(3usize);
    }
    for _ in odd..n1 {
        if values.is_empty() || rng.random_bool(0.5) {
            let z = fresh(rng, &values);
            values.push(z);
            multiplicity.push(2);
        } else {
            let c = rng.random_range(0..values.len());
            multiplicity[c] += 2;
        }
    }
    let mut diag: Vec<Complex<T>> = values
        .iter()
        .zip(&multiplicity)
        .flat_map(|(&v, &m)| std::iter::repeat_n(v, m))
        .collect();
    diag.shuffle(rng);
    debug_assert_eq!(diag.len(), 2 * n);
    Ok(StructuredDiagonal { diag, n1 })
}

impl<T: Real> StructuredDiagonal<T> {
    pub fn structure(&self, tol: T) -> Result<TStructure<T>> {
        match detect_structure(&self.diag, tol)? {
            Feasibility::Feasible(s) => Ok(s),
            Feasibility::Infeasible(_) => Err(CaiaError::Inconsistent("generated diagonal is not structured".into())),
        }
    }
}
