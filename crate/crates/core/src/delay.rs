//! Expected waiting times until a usable complementary slot appears.
//!
//! Phase matching: each constraint's phase is uniform on `(−π, π]` and must
//! fall within `±Δφ` of its target, so one constraint succeeds with
//! probability `Δφ/π` per slot and the wait is geometric. The three-user
//! scheme has `(K−1)(K−2)−1` constraints, ergodic alignment `K²`.
//!
//! Magnitude matching uses a Gaussian model for `z = ln|t′|`: a sum of three
//! and difference of three log-Rayleigh terms, each with variance `π²/24`, so
//! `z ≈ N(0, π²/4)`.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{param, CaiaError, Result};
use crate::rng::{rayleigh, stream_rng, uniform_phase, StreamRng};
use crate::scalar::{lit, to_f64, Real};

/// Euler–Mascheroni constant to 20 significant digits.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Channel-aided alignment.
    Caia,
    /// Ergodic alignment.
    Eia,
}

impl Scheme {
    /// Number of simultaneous matching constraints for `K` users.
    pub fn constraints(self, k_users: usize) -> usize {
        match self {
            Scheme::Caia => (k_users - 1) * (k_users - 2) - 1,
            Scheme::Eia => k_users * k_users,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Caia => "CAIA",
            Scheme::Eia => "EIA",
        }
    }
}

fn positive_product<T: Real>(p: T, psi: T) -> Result<T> {
    let prod = p * psi;
    if !(p > T::zero()) || !(psi > T::zero()) || !prod.is_finite() {
        return Err(param("p and psi must be positive"));
    }
    Ok(prod)
}

/// `π·(pψ)^{1/2}` slots.
pub fn expected_phase_delay_caia<T: Real>(p: T, psi: T) -> Result<T> {
    Ok(T::pi() * positive_product(p, psi)?.sqrt())
}

/// `(2pψ)^{9/2}` slots.
pub fn expected_phase_delay_eia<T: Real>(p: T, psi: T) -> Result<T> {
    Ok((lit::<T>(2.0) * positive_product(p, psi)?).powf(lit(4.5)))
}

/// `(π/Δφ)^c` with `c` the scheme's constraint count: each constraint
/// matches with probability `Δφ/π` per slot.
pub fn expected_phase_delay(scheme: Scheme, k_users: usize, delta_phi: f64) -> Result<f64> {
    if k_users < 3 {
        return Err(param("K must be at least 3"));
    }
    if !(delta_phi > 0.0 && delta_phi <= std::f64::consts::PI) {
        return Err(param("delta_phi must lie in (0, pi]"));
    }
    Ok((std::f64::consts::PI / delta_phi).powi(scheme.constraints(k_users) as i32))
}

/// Monte Carlo execution settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarlo {
    /// Worker cap; `None` uses rayon's global pool.
    pub threads: Option<usize>,
    /// Refuse simulations whose expected total slot count exceeds this.
    pub max_expected_slots: f64,
}

impl Default for MonteCarlo {
    fn default() -> Self {
        Self { threads: None, max_expected_slots: 2e9 }
    }
}

impl MonteCarlo {
    /// Whether `trials` waits of mean `expected` slots fit in the budget.
    pub fn tractable(&self, expected: f64, trials: usize) -> bool {
        expected.is_finite() && expected * trials as f64 <= self.max_expected_slots
    }

    /// Runs `trial(rng_i)` for `i in 0..trials`, each on stream `i` of `seed`,
    /// and returns the results in trial order.
    pub fn run<F>(&self, trials: usize, seed: u64, trial: F) -> Result<Vec<u64>>
    where
        F: Fn(&mut StreamRng) -> u64 + Sync + Send,
    {
        let work = || -> Vec<u64> {
            (0..trials as u64)
                .into_par_iter()
                .map(|i| trial(&mut stream_rng(seed, i)))
                .collect()
        };
        match self.threads {
            None => Ok(work()),
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| CaiaError::Inconsistent(e.to_string()))?;
                Ok(pool.install(work))
            }
        }
    }
}

/// Summary of one waiting-time configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayStats {
    pub scheme: Scheme,
    pub k_users: usize,
    pub p: Option<f64>,
    pub psi: Option<f64>,
    pub delta_phi: Option<f64>,
    pub delta_h: Option<f64>,
    pub sigma: Option<f64>,
    /// Monte Carlo trials actually run (zero when only the analytic value is reported).
    pub trials: usize,
    pub empirical_mean: Option<f64>,
    pub empirical_std: Option<f64>,
    pub theoretical: f64,
}

fn mean_std(samples: &[u64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|&x| x as f64).sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn wrapped_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

/// Simulates phase-matching waits: each trial fixes target phases, then
/// draws fresh uniform phases every slot until all constraints are within
/// `±Δφ` simultaneously. The count includes the successful slot.
pub fn simulate_phase_delay(
    scheme: Scheme,
    k_users: usize,
    delta_phi: f64,
    trials: usize,
    seed: u64,
    mc: &MonteCarlo,
) -> Result<DelayStats> {
    let theoretical = expected_phase_delay(scheme, k_users, delta_phi)?;
    if trials == 0 {
        return Err(param("trials must be positive"));
    }
    let c = scheme.constraints(k_users);
    if !mc.tractable(theoretical, trials) {
        return Err(param(format!(
            "expected {:.3e} slots per trial is beyond the simulation budget",
            theoretical
        )));
    }
    let waits = mc.run(trials, seed, |rng| {
        let targets: Vec<f64> = (0..c).map(|_| uniform_phase(rng)).collect();
        let mut slots = 0u64;
        loop {
            slots += 1;
            // Slots are independent, so stopping at the first miss leaves the
            // distribution of the waiting time unchanged.
            if targets.iter().all(|&tg| wrapped_distance(uniform_phase(rng), tg) <= delta_phi) {
                return slots;
            }
        }
    })?;
    let (mean, std) = mean_std(&waits);
    Ok(DelayStats {
        scheme,
        k_users,
        p: None,
        psi: None,
        delta_phi: Some(delta_phi),
        delta_h: None,
        sigma: None,
        trials,
        empirical_mean: Some(mean),
        empirical_std: Some(std),
        theoretical,
    })
}

/// Log-normal density of `r′` with `ln r′ ~ N(0, v_z)`.
pub fn lognormal_magnitude_pdf<T: Real>(r_prime: T, v_z: T) -> Result<T> {
    if !(r_prime > T::zero()) {
        return Err(param("r' must be positive"));
    }
    if !(v_z > T::zero()) {
        return Err(param("v_z must be positive"));
    }
    let l = r_prime.ln();
    Ok((-(l * l) / (lit::<T>(2.0) * v_z)).exp() / (r_prime * (T::two_pi() * v_z).sqrt()))
}

/// Mean and variance of `ln R` for `R ~ Rayleigh(σ)`:
/// `m = ln σ + ln √2 − γ/2`, `v = π²/24`.
pub fn log_rayleigh_moments<T: Real>(sigma: T) -> Result<(T, T)> {
    if !(sigma > T::zero()) {
        return Err(param("sigma must be positive"));
    }
    let m = sigma.ln() + lit::<T>(2.0).sqrt().ln() - lit::<T>(EULER_GAMMA) / lit(2.0);
    let v = T::pi() * T::pi() / lit(24.0);
    Ok((m, v))
}

/// Gaussian model of `ln|t′|` built from six log-Rayleigh factors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagnitudeModel<T: Real> {
    pub sigma: T,
    pub m_ij: T,
    pub v_ij: T,
    /// Variance of `z = ln r′`; three added and three subtracted terms give `6·v_ij`.
    pub v_z: T,
}

impl<T: Real> MagnitudeModel<T> {
    pub fn new(sigma: T) -> Result<Self> {
        let (m_ij, v_ij) = log_rayleigh_moments(sigma)?;
        Ok(Self { sigma, m_ij, v_ij, v_z: lit::<T>(6.0) * v_ij })
    }
}

/// Gaussian tail `Q(x) = ½·erfc(x/√2)`.
pub fn q_function<T: Real>(x: T) -> T {
    let x = to_f64(x);
    lit(0.5 * libm::erfc(x / std::f64::consts::SQRT_2))
}

/// `Q(a) − Q(b)` for `a ≤ b`, evaluated on whichever tail avoids cancellation.
fn q_difference(a: f64, b: f64) -> f64 {
    if b <= 0.0 {
        q_function(-b) - q_function(-a)
    } else {
        q_function(a) - q_function(b)
    }
}

/// `P(|r′ − r| ≤ dr)` under the log-normal model:
/// `Q(ln(r−dr)/√v_z) − Q(ln(r+dr)/√v_z)`, with the lower limit clamped at zero.
pub fn prob_magnitude_match_caia<T: Real>(r: T, dr: T, v_z: T) -> Result<T> {
    let (r, dr, v_z) = (to_f64(r), to_f64(dr), to_f64(v_z));
    if !(r > 0.0) || !(dr >= 0.0) || !(v_z > 0.0) {
        return Err(param("need r > 0, dr >= 0, v_z > 0"));
    }
    if dr == 0.0 {
        return Ok(T::zero());
    }
    let s = v_z.sqrt();
    let lo = if r - dr <= 0.0 { f64::NEG_INFINITY } else { (r - dr).ln() / s };
    let hi = (r + dr).ln() / s;
    Ok(lit(q_difference(lo, hi).max(0.0)))
}

/// Rayleigh probability `P(|r′ − r| ≤ Δh)`:
/// `exp(−(r−Δh)²/2σ²) − exp(−(r+Δh)²/2σ²)`, lower limit clamped at zero.
pub fn prob_magnitude_match_eia<T: Real>(r_ij: T, delta_h: T, sigma: T) -> Result<T> {
    let (r, dh, s) = (to_f64(r_ij), to_f64(delta_h), to_f64(sigma));
    if !(r > 0.0) || !(dh >= 0.0) || !(s > 0.0) {
        return Err(param("need r > 0, delta_h >= 0, sigma > 0"));
    }
    let lo = (r - dh).max(0.0);
    let hi = r + dh;
    let two_s2 = 2.0 * s * s;
    // e^{-lo²/2σ²} − e^{-hi²/2σ²} = e^{-lo²/2σ²}·(1 − e^{-(hi²−lo²)/2σ²})
    let p = (-(lo * lo) / two_s2).exp() * -(-(hi * hi - lo * lo) / two_s2).exp_m1();
    Ok(lit(p))
}

/// Expected EIA magnitude delay `1 / ∏ p_ij`.
pub fn expected_magnitude_delay_eia(r_ij: &[f64], delta_h: f64, sigma: f64) -> Result<f64> {
    let mut prod = 1.0;
    for &r in r_ij {
        prod *= prob_magnitude_match_eia(r, delta_h, sigma)?;
    }
    Ok(1.0 / prod)
}

/// `|t|` of a 3×3 magnitude matrix (row-major, `r[(rx-1)*3 + (tx-1)]`).
pub fn loop_magnitude(r: &[f64; 9]) -> f64 {
    (r[5] * r[1] * r[6]) / (r[2] * r[3] * r[7])
}

fn draw_loop_magnitude<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let m: [f64; 6] = std::array::from_fn(|_| rayleigh(rng, sigma));
    (m[0] * m[1] * m[2]) / (m[3] * m[4] * m[5])
}

/// Waiting time until a slot's `|t′|` lands within `dr` of `r`, with the six
/// magnitudes drawn Rayleigh(σ) each slot.
pub fn simulate_magnitude_delay_caia(
    r: f64,
    dr: f64,
    sigma: f64,
    trials: usize,
    seed: u64,
    mc: &MonteCarlo,
) -> Result<DelayStats> {
    let v_z = MagnitudeModel::new(sigma)?.v_z;
    let q = prob_magnitude_match_caia(r, dr, v_z)?;
    let theoretical = 1.0 / q;
    if trials == 0 || !mc.tractable(theoretical, trials) {
        return Err(param("magnitude simulation intractable or no trials"));
    }
    let waits = mc.run(trials, seed, |rng| {
        let mut slots = 0u64;
        loop {
            slots += 1;
            if (draw_loop_magnitude(rng, sigma) - r).abs() <= dr {
                return slots;
            }
        }
    })?;
    let (mean, std) = mean_std(&waits);
    Ok(DelayStats {
        scheme: Scheme::Caia,
        k_users: 3,
        p: None,
        psi: None,
        delta_phi: None,
        delta_h: Some(dr),
        sigma: Some(sigma),
        trials,
        empirical_mean: Some(mean),
        empirical_std: Some(std),
        theoretical,
    })
}

/// Waiting time until every magnitude `r′_ij` lands within `Δh` of its target.
pub fn simulate_magnitude_delay_eia(
    r_ij: &[f64],
    delta_h: f64,
    sigma: f64,
    trials: usize,
    seed: u64,
    mc: &MonteCarlo,
) -> Result<DelayStats> {
    let theoretical = expected_magnitude_delay_eia(r_ij, delta_h, sigma)?;
    if trials == 0 || !mc.tractable(theoretical, trials) {
        return Err(param("magnitude simulation intractable or no trials"));
    }
    let waits = mc.run(trials, seed, |rng| {
        let mut slots = 0u64;
        loop {
            slots += 1;
            if r_ij.iter().all(|&r| (rayleigh(rng, sigma) - r).abs() <= delta_h) {
                return slots;
            }
        }
    })?;
    let (mean, std) = mean_std(&waits);
    let k = (r_ij.len() as f64).sqrt().round() as usize;
    Ok(DelayStats {
        scheme: Scheme::Eia,
        k_users: k,
        p: None,
        psi: None,
        delta_phi: None,
        delta_h: Some(delta_h),
        sigma: Some(sigma),
        trials,
        empirical_mean: Some(mean),
        empirical_std: Some(std),
        theoretical,
    })
}

/// Analytic magnitude-matching delays for one drawn target slot.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeTarget {
    pub r_ij: [f64; 9],
    /// CAIA tolerance `dr = |Δt/t|·|t|`.
    pub dr: f64,
    /// EIA tolerance `Δh = |Δt/t|·min r_ij / √2`.
    pub delta_h: f64,
    pub caia_delay: f64,
    pub eia_delay: f64,
}

impl MagnitudeTarget {
    pub fn new(r_ij: [f64; 9], delta_t_over_t: f64, sigma: f64) -> Result<Self> {
        let r = loop_magnitude(&r_ij);
        let dr = delta_t_over_t * r;
        let v_z = MagnitudeModel::new(sigma)?.v_z;
        let caia_delay = 1.0 / prob_magnitude_match_caia(r, dr, v_z)?;
        let min = r_ij.iter().copied().fold(f64::INFINITY, f64::min);
        let delta_h = delta_t_over_t * min / std::f64::consts::SQRT_2;
        let eia_delay = expected_magnitude_delay_eia(&r_ij, delta_h, sigma)?;
        Ok(Self { r_ij, dr, delta_h, caia_delay, eia_delay })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeExperiment {
    pub caia: DelayStats,
    pub eia: DelayStats,
    pub targets: Vec<MagnitudeTarget>,
}

fn median_index(values: &[f64]) -> usize {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    idx[idx.len() / 2]
}

/// Draws `targets` slots with Rayleigh(σ) magnitudes and evaluates both
/// schemes' analytic magnitude delays under matched residual interference.
///
/// Each scheme's `theoretical` is the median analytic delay over the drawn
/// targets. The Monte Carlo wait is run at that median target with `trials`
/// trials when the expected work fits the budget; otherwise only the
/// analytic value is reported.
pub fn magnitude_delay_experiment(
    sigma: f64,
    delta_t_over_t: f64,
    targets: usize,
    trials: usize,
    seed: u64,
    mc: &MonteCarlo,
) -> Result<MagnitudeExperiment> {
    if !(sigma > 0.0) || !(delta_t_over_t > 0.0) || targets == 0 {
        return Err(param("need sigma > 0, delta_t_over_t > 0, targets > 0"));
    }
    // Stream 0 draws targets; Monte Carlo uses seeds derived from `seed + 1`.
    let mut rng = stream_rng(seed, u64::MAX);
    let drawn = (0..targets)
        .map(|_| MagnitudeTarget::new(std::array::from_fn(|_| rayleigh(&mut rng, sigma)), delta_t_over_t, sigma))
        .collect::<Result<Vec<_>>>()?;

    let caia_delays: Vec<f64> = drawn.iter().map(|t| t.caia_delay).collect();
    let eia_delays: Vec<f64> = drawn.iter().map(|t| t.eia_delay).collect();
    let ci = median_index(&caia_delays);
    let ei = median_index(&eia_delays);
    let ct = &drawn[ci];
    let et = &drawn[ei];

    let mut caia = DelayStats {
        scheme: Scheme::Caia,
        k_users: 3,
        p: None,
        psi: None,
        delta_phi: None,
        delta_h: Some(ct.dr),
        sigma: Some(sigma),
        trials: 0,
        empirical_mean: None,
        empirical_std: None,
        theoretical: ct.caia_delay,
    };
    if trials > 0 && mc.tractable(ct.caia_delay, trials) {
        let sim = simulate_magnitude_delay_caia(loop_magnitude(&ct.r_ij), ct.dr, sigma, trials, seed.wrapping_add(1), mc)?;
        caia.trials = trials;
        caia.empirical_mean = sim.empirical_mean;
        caia.empirical_std = sim.empirical_std;
    }
    let mut eia = DelayStats {
        scheme: Scheme::Eia,
        k_users: 3,
        p: None,
        psi: None,
        delta_phi: None,
        delta_h: Some(et.delta_h),
        sigma: Some(sigma),
        trials: 0,
        empirical_mean: None,
        empirical_std: None,
        theoretical: et.eia_delay,
    };
    if trials > 0 && mc.tractable(et.eia_delay, trials) {
        let sim = simulate_magnitude_delay_eia(&et.r_ij, et.delta_h, sigma, trials, seed.wrapping_add(2), mc)?;
        eia.trials = trials;
        eia.empirical_mean = sim.empirical_mean;
        eia.empirical_std = sim.empirical_std;
    }
    Ok(MagnitudeExperiment { caia, eia, targets: drawn })
}

pub const DELAY_CSV_HEADER: [&str; 10] = [
    "scheme", "K", "p", "psi", "delta_phi", "delta_h", "trials", "empirical_mean", "empirical_std",
    "theoretical",
];

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes delay rows; quantities that do not apply to a row are left empty.
pub fn write_delay_csv<W: Write>(w: W, rows: &[DelayStats]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(DELAY_CSV_HEADER)?;
    for r in rows {
        wr.write_record([
            r.scheme.label().to_string(),
            r.k_users.to_string(),
            opt(r.p),
            opt(r.psi),
            opt(r.delta_phi),
            opt(r.delta_h),
            r.trials.to_string(),
            opt(r.empirical_mean),
            opt(r.empirical_std),
            r.theoretical.to_string(),
        ])?;
    }
    wr.flush().map_err(|e| CaiaError::Csv(e.to_string()))
}
