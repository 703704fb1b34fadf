//! Time-extended diagonal fading channels and the noisy received signal model.
//!
//! Users are labelled `1..=K` throughout the public API; `h(rx, tx)` is the
//! gain from transmitter `tx` to receiver `rx`.

use std::io::{Read, Write};

use num_complex::Complex;
use rand::Rng;

use crate::error::{param, shape, CaiaError, Result};
use crate::rng::{complex_gaussian, stream_rng};
use crate::scalar::{lit, modulus, to_f64, Real};

/// One time instant's `K×K` coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSlot<T: Real> {
    k_users: usize,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> ChannelSlot<T> {
    /// Builds a slot from row-major coefficients (`coeffs[(rx-1)*K + (tx-1)]`).
    pub fn new(k_users: usize, coeffs: Vec<Complex<T>>) -> Result<Self> {
        if k_users < 1 || coeffs.len() != k_users * k_users {
            return Err(shape(format!(
                "expected {k_users}x{k_users} coefficients, got {}",
                coeffs.len()
            )));
        }
        Ok(Self { k_users, coeffs })
    }

    pub fn from_fn(k_users: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let coeffs = (0..k_users * k_users)
            .map(|i| f(i / k_users + 1, i % k_users + 1))
            .collect();
        Self { k_users, coeffs }
    }

    /// Every coefficient equal to `value`.
    pub fn constant(k_users: usize, value: Complex<T>) -> Self {
        Self::from_fn(k_users, |_, _| value)
    }

    pub fn k_users(&self) -> usize {
        self.k_users
    }

    #[inline]
    pub fn h(&self, rx: usize, tx: usize) -> Complex<T> {
        self.coeffs[self.index(rx, tx)]
    }

    pub fn set(&mut self, rx: usize, tx: usize, value: Complex<T>) {
        let i = self.index(rx, tx);
        self.coeffs[i] = value;
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    #[inline]
    fn index(&self, rx: usize, tx: usize) -> usize {
        assert!(
            (1..=self.k_users).contains(&rx) && (1..=self.k_users).contains(&tx),
            "user index out of range"
        );
        (rx - 1) * self.k_users + (tx - 1)
    }
}

/// Rejection sampler for bounded Rayleigh-fading slots.
///
/// Coefficients are circularly-symmetric complex Gaussian with per-component
/// variance `σ²`, so magnitudes are Rayleigh with scale `σ`. Draws whose
/// magnitude falls outside `[h_min, h_max]` are redrawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotSampler<T: Real> {
    pub sigma: T,
    pub h_min: T,
    pub h_max: T,
}

impl<T: Real> SlotSampler<T> {
    /// Default bounds `h_min = 1e-4·σ`, `h_max = 1e4·σ`.
    pub fn new(sigma: T) -> Result<Self> {
        Self::with_bounds(sigma, sigma * lit(1e-4), sigma * lit(1e4))
    }

    pub fn with_bounds(sigma: T, h_min: T, h_max: T) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(param("sigma must be positive and finite"));
        }
        if !(h_min > T::zero()) || !(h_max > h_min) || !h_max.is_finite() {
            return Err(param("need 0 < h_min < h_max < inf"));
        }
        Ok(Self { sigma, h_min, h_max })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex<T> {
        loop {
            let z = complex_gaussian(rng, self.sigma);
            let m = modulus(z);
            if m >= self.h_min && m <= self.h_max {
                return z;
            }
        }
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, k_users: usize, rng: &mut R) -> Result<ChannelSlot<T>> {
        if k_users < 2 {
            return Err(param("K must be at least 2"));
        }
        Ok(ChannelSlot::from_fn(k_users, |_, _| self.draw(rng)))
    }

    /// Deterministic slot from `(seed, stream)`.
    pub fn sample(&self, k_users: usize, seed: u64, stream: u64) -> Result<ChannelSlot<T>> {
        self.sample_with(k_users, &mut stream_rng(seed, stream))
    }
}

/// Draws a `K×K` slot with default magnitude bounds.
pub fn sample_slot<T: Real>(k_users: usize, sigma: T, seed: u64) -> Result<ChannelSlot<T>> {
    SlotSampler::new(sigma)?.sample(k_users, seed, 0)
}

/// Per-link diagonals `H^{[kj]} = diag(h^{[kj]}(1), …, h^{[kj]}(τ))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedChannel<T: Real> {
    k_users: usize,
    tau: usize,
    links: Vec<Vec<Complex<T>>>,
}

impl<T: Real> ExtendedChannel<T> {
    pub fn from_links(k_users: usize, tau: usize, links: Vec<Vec<Complex<T>>>) -> Result<Self> {
        if k_users < 1 || tau < 1 {
            return Err(shape("K and tau must be positive"));
        }
        if links.len() != k_users * k_users || links.iter().any(|l| l.len() != tau) {
            return Err(shape(format!("expected {k_users}x{k_users} links of length {tau}")));
        }
        Ok(Self { k_users, tau, links })
    }

    /// Every link diagonal filled by `f(rx, tx, t)` with `t` in `1..=τ`.
    pub fn from_fn(
        k_users: usize,
        tau: usize,
        mut f: impl FnMut(usize, usize, usize) -> Complex<T>,
    ) -> Self {
        let links = (0..k_users * k_users)
            .map(|i| (1..=tau).map(|t| f(i / k_users + 1, i % k_users + 1, t)).collect())
            .collect();
        Self { k_users, tau, links }
    }

    /// `τ` independent slots drawn from streams `0..τ` of `seed`.
    pub fn generic(k_users: usize, tau: usize, sigma: T, seed: u64) -> Result<Self> {
        let sampler = SlotSampler::new(sigma)?;
        let slots = (0..tau as u64)
            .map(|t| sampler.sample(k_users, seed, t))
            .collect::<Result<Vec<_>>>()?;
        extend(&slots)
    }

    pub fn k_users(&self) -> usize {
        self.k_users
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn link(&self, rx: usize, tx: usize) -> &[Complex<T>] {
        &self.links[self.index(rx, tx)]
    }

    pub fn link_mut(&mut self, rx: usize, tx: usize) -> &mut Vec<Complex<T>> {
        let i = self.index(rx, tx);
        &mut self.links[i]
    }

    /// The `t`-th slot (1-based).
    pub fn slot(&self, t: usize) -> ChannelSlot<T> {
        assert!((1..=self.tau).contains(&t), "slot index out of range");
        ChannelSlot::from_fn(self.k_users, |rx, tx| self.link(rx, tx)[t - 1])
    }

    /// Fails with a singular-channel error if any diagonal entry is zero.
    pub fn check_nonsingular(&self) -> Result<()> {
        for rx in 1..=self.k_users {
            for tx in 1..=self.k_users {
                if let Some(t) = self.link(rx, tx).iter().position(|z| z.re == T::zero() && z.im == T::zero()) {
                    return Err(CaiaError::Singular(format!("h[{rx}{tx}]({}) = 0", t + 1)));
                }
            }
        }
        Ok(())
    }

    fn index(&self, rx: usize, tx: usize) -> usize {
        assert!(
            (1..=self.k_users).contains(&rx) && (1..=self.k_users).contains(&tx),
            "user index out of range"
        );
        (rx - 1) * self.k_users + (tx - 1)
    }

    /// Writes the `t,rx,tx,re,im` CSV representation (1-based indices).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["t", "rx", "tx", "re", "im"])?;
        for t in 1..=self.tau {
            for rx in 1..=self.k_users {
                for tx in 1..=self.k_users {
                    let z = self.link(rx, tx)[t - 1];
                    wr.write_record([
                        t.to_string(),
                        rx.to_string(),
                        tx.to_string(),
                        to_f64(z.re).to_string(),
                        to_f64(z.im).to_string(),
                    ])?;
                }
            }
        }
        wr.flush().map_err(|e| CaiaError::Csv(e.to_string()))
    }

    /// Parses the `t,rx,tx,re,im` CSV representation; every `(t, rx, tx)`
    /// cell must appear exactly once.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let header = rd.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["t", "rx", "tx", "re", "im"] {
            return Err(CaiaError::Csv(format!("unexpected header {header:?}")));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let idx = |i: usize| -> Result<usize> {
                rec[i].trim().parse().map_err(|_| CaiaError::Csv(format!("bad index {:?}", &rec[i])))
            };
            let val = |i: usize| -> Result<f64> {
                rec[i].trim().parse().map_err(|_| CaiaError::Csv(format!("bad value {:?}", &rec[i])))
            };
            rows.push((idx(0)?, idx(1)?, idx(2)?, val(3)?, val(4)?));
        }
        let tau = rows.iter().map(|r| r.0).max().unwrap_or(0);
        let k = rows.iter().map(|r| r.1.max(r.2)).max().unwrap_or(0);
        if tau == 0 || k == 0 || rows.iter().any(|r| r.0 == 0 || r.1 == 0 || r.2 == 0) {
            return Err(CaiaError::Csv("indices must be 1-based and nonempty".into()));
        }
        let mut links = vec![vec![None; tau]; k * k];
        for (t, rx, tx, re, im) in rows {
            let cell = &mut links[(rx - 1) * k + (tx - 1)][t - 1];
            if cell.is_some() {
                return Err(CaiaError::Csv(format!("duplicate cell t={t} rx={rx} tx={tx}")));
            }
            *cell = Some(Complex::new(lit::<T>(re), lit::<T>(im)));
        }
        let links = links
            .into_iter()
            .map(|l| l.into_iter().collect::<Option<Vec<_>>>())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| CaiaError::Csv("missing cells".into()))?;
        Self::from_links(k, tau, links)
    }
}

/// Stacks slots into per-link diagonals; `τ` is the number of slots.
pub fn extend<T: Real>(slots: &[ChannelSlot<T>]) -> Result<ExtendedChannel<T>> {
    let first = slots.first().ok_or_else(|| shape("need at least one slot"))?;
    let k = first.k_users();
    if slots.iter().any(|s| s.k_users() != k) {
        return Err(shape("slots have different user counts"));
    }
    Ok(ExtendedChannel::from_fn(k, slots.len(), |rx, tx, t| slots[t - 1].h(rx, tx)))
}

/// Additive noise variance and per-user transmit power.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel<T: Real> {
    pub variance: T,
    pub power: T,
}

impl<T: Real> NoiseModel<T> {
    pub fn new(variance: T, power: T) -> Result<Self> {
        if !(variance >= T::zero()) {
            return Err(param("noise variance must be nonnegative"));
        }
        if !(power > T::zero()) {
            return Err(param("power must be positive"));
        }
        Ok(Self { variance, power })
    }

    pub fn noiseless() -> Self {
        Self { variance: T::zero(), power: T::one() }
    }
}

impl<T: Real> Default for NoiseModel<T> {
    fn default() -> Self {
        Self { variance: T::one(), power: T::one() }
    }
}

/// `y^{[k]} = Σ_j H^{[kj]} x^{[j]} + z^{[k]}`, with `z` i.i.d. `CN(0, variance)`.
pub fn transmit<T: Real>(
    ch: &ExtendedChannel<T>,
    x: &[Vec<Complex<T>>],
    noise: &NoiseModel<T>,
    seed: u64,
) -> Result<Vec<Vec<Complex<T>>>> {
    let (k, tau) = (ch.k_users(), ch.tau());
    if x.len() != k || x.iter().any(|v| v.len() != tau) {
        return Err(shape(format!("expected {k} signals of length {tau}")));
    }
    let mut rng = stream_rng(seed, 0);
    let scale = (noise.variance / lit(2.0)).sqrt();
    let noisy = noise.variance > T::zero();
    Ok((1..=k)
        .map(|rx| {
            (0..tau)
                .map(|t| {
                    let mut acc = Complex::new(T::zero(), T::zero());
                    for tx in 1..=k {
                        acc += ch.link(rx, tx)[t] * x[tx - 1][t];
                    }
                    if noisy {
                        acc += complex_gaussian(&mut rng, scale);
                    }
                    acc
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn same_seed_same_slot() {
        let a = sample_slot(3, 1.0f64, 42).unwrap();
        let b = sample_slot(3, 1.0f64, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_slot(3, 1.0f64, 43).unwrap());
    }

    #[test]
    fn magnitudes_respect_bounds() {
        let s = SlotSampler::with_bounds(1.0f64, 0.5, 1.5).unwrap();
        for seed in 0..200 {
            let slot = s.sample(2, seed, 0).unwrap();
            assert!(slot.coeffs().iter().all(|z| (0.5..=1.5).contains(&z.norm())));
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(sample_slot(1, 1.0f64, 0), Err(CaiaError::Parameter(_))));
        assert!(matches!(sample_slot(3, 0.0f64, 0), Err(CaiaError::Parameter(_))));
        assert!(matches!(sample_slot(3, -1.0f64, 0), Err(CaiaError::Parameter(_))));
    }

    #[test]
    fn extend_identical_slots() {
        let s = sample_slot(3, 1.0f64, 1).unwrap();
        let ch = extend(&[s.clone(), s.clone()]).unwrap();
        assert_eq!(ch.tau(), 2);
        for rx in 1..=3 {
            for tx in 1..=3 {
                let d = ch.link(rx, tx);
                assert_eq!(d[0], d[1]);
            }
        }
        let one = extend(&[s]).unwrap();
        assert_eq!(one.link(2, 3).len(), 1);
    }

    #[test]
    fn extend_reads_link_from_inputs() {
        let a = sample_slot(3, 1.0f64, 5).unwrap();
        let b = sample_slot(3, 1.0f64, 6).unwrap();
        let ch = extend(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ch.link(2, 3), &[a.h(2, 3), b.h(2, 3)]);
    }

    #[test]
    fn extend_rejects_mixed_k() {
        let a = sample_slot(3, 1.0f64, 5).unwrap();
        let b = sample_slot(2, 1.0f64, 6).unwrap();
        assert!(matches!(extend(&[a, b]), Err(CaiaError::Shape(_))));
        assert!(matches!(extend::<f64>(&[]), Err(CaiaError::Shape(_))));
    }

    #[test]
    fn transmit_trivial_cases() {
        let ones = ExtendedChannel::from_fn(2, 1, |_, _, _| c(1.0, 0.0));
        let y = transmit(&ones, &[vec![c(1.0, 0.0)], vec![c(1.0, 0.0)]], &NoiseModel::noiseless(), 0).unwrap();
        assert_eq!(y, vec![vec![c(2.0, 0.0)], vec![c(2.0, 0.0)]]);

        let ch = ExtendedChannel::generic(3, 4, 1.0f64, 9).unwrap();
        let zeros = vec![vec![c(0.0, 0.0); 4]; 3];
        let y = transmit(&ch, &zeros, &NoiseModel::noiseless(), 0).unwrap();
        assert!(y.iter().flatten().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn transmit_rejects_bad_shape() {
        let ch = ExtendedChannel::generic(3, 4, 1.0f64, 9).unwrap();
        let x = vec![vec![c(0.0, 0.0); 3]; 3];
        assert!(matches!(
            transmit(&ch, &x, &NoiseModel::noiseless(), 0),
            Err(CaiaError::Shape(_))
        ));
    }

    #[test]
    fn noise_has_requested_variance() {
        let ch = ExtendedChannel::from_fn(1, 20000, |_, _, _| c(1.0, 0.0));
        let x = vec![vec![c(0.0, 0.0); 20000]];
        let y = transmit(&ch, &x, &NoiseModel::new(2.0, 1.0).unwrap(), 3).unwrap();
        let var = y[0].iter().map(|z| z.norm_sqr()).sum::<f64>() / 20000.0;
        assert!((var - 2.0).abs() < 0.06, "{var}");
    }

    #[test]
    fn zero_entry_is_singular() {
        let mut ch = ExtendedChannel::generic(3, 2, 1.0f64, 1).unwrap();
        assert!(ch.check_nonsingular().is_ok());
        ch.link_mut(1, 3)[1] = c(0.0, 0.0);
        assert!(matches!(ch.check_nonsingular(), Err(CaiaError::Singular(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ch = ExtendedChannel::generic(3, 4, 1.0f64, 77).unwrap();
        let mut buf = Vec::new();
        ch.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,rx,tx,re,im\n"));
        assert_eq!(text.lines().count(), 1 + 4 * 9);
        let back = ExtendedChannel::<f64>::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, ch);
    }

    #[test]
    fn csv_rejects_missing_cells() {
        let text = "t,rx,tx,re,im\n1,1,1,1,0\n1,2,2,1,0\n";
        assert!(ExtendedChannel::<f64>::read_csv(text.as_bytes()).is_err());
        let bad = "t,k,j,re,im\n1,1,1,1,0\n";
        assert!(ExtendedChannel::<f64>::read_csv(bad.as_bytes()).is_err());
    }
}
