use caia_core::channel::{extend, sample_slot, transmit, ExtendedChannel, NoiseModel, SlotSampler};
use caia_core::rng::{complex_gaussian, stream_rng};
use caia_core::{CaiaError, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn random_signals(k: usize, tau: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = stream_rng(seed, 99);
    (0..k).map(|_| (0..tau).map(|_| complex_gaussian(&mut rng, 1.0)).collect()).collect()
}

#[test]
fn magnitudes_follow_rayleigh_cdf() {
    let mut r: Vec<f64> = (0..100_000u64)
        .flat_map(|s| sample_slot(3, 1.0f64, s).unwrap().coeffs().iter().map(|z| z.norm()).collect::<Vec<_>>())
        .collect();
    r.sort_by(f64::total_cmp);
    let n = r.len() as f64;
    let sup = r
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x * x / 2.0).exp();
            ((i as f64 + 1.0) / n - f).abs().max((i as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(sup < 0.01, "sup distance {sup}");
}

#[test]
fn sampling_is_bit_reproducible() {
    for seed in 0..20 {
        assert_eq!(sample_slot(3, 1.0f64, seed).unwrap(), sample_slot(3, 1.0f64, seed).unwrap());
    }
    assert_ne!(sample_slot(3, 1.0f64, 1).unwrap(), sample_slot(3, 1.0f64, 2).unwrap());
}

#[test]
fn rejection_keeps_magnitudes_in_bounds() {
    let sampler = SlotSampler::with_bounds(1.0f64, 0.5, 1.5).unwrap();
    for seed in 0..200 {
        let s = sampler.sample(2, seed, 0).unwrap();
        assert!(s.coeffs().iter().all(|z| (0.5..=1.5).contains(&z.norm())));
    }
    for seed in 0..200 {
        let s = sample_slot(2, 1.0f64, seed).unwrap();
        assert!(s.coeffs().iter().all(|z| z.norm() >= 1e-4 && z.norm() <= 1e4));
    }
}

#[test]
fn extend_reads_links_from_slots() {
    let a = sample_slot(3, 1.0f64, 10).unwrap();
    let b = sample_slot(3, 1.0f64, 11).unwrap();
    let ch = extend(&[a.clone(), b.clone()]).unwrap();
    assert_eq!(ch.link(2, 3), &[a.h(2, 3), b.h(2, 3)]);
    assert_eq!(ch.slot(2), b);
    let c = sample_slot(2, 1.0f64, 12).unwrap();
    assert!(matches!(extend(&[a, c]), Err(CaiaError::Shape(_))));
}

#[test]
fn noise_free_output_matches_dense_products() {
    for seed in 0..20 {
        let (k, tau) = (4, 5);
        let ch = ExtendedChannel::generic(k, tau, 1.0f64, seed).unwrap();
        let x = random_signals(k, tau, seed);
        let y = transmit(&ch, &x, &NoiseModel::noiseless(), seed).unwrap();
        for rx in 1..=k {
            let mut expected = DVector::<C64>::zeros(tau);
            for tx in 1..=k {
                let h = DMatrix::from_diagonal(&DVector::from_column_slice(ch.link(rx, tx)));
                expected += h * DVector::from_column_slice(&x[tx - 1]);
            }
            for t in 0..tau {
                let err = (y[rx - 1][t] - expected[t]).norm();
                assert!(err <= 1e-14 * expected[t].norm().max(1.0), "rx {rx} t {t}");
            }
        }
    }
}

#[test]
fn csv_round_trip_through_files() {
    let ch = ExtendedChannel::generic(3, 4, 1.0f64, 3).unwrap();
    let mut buf = Vec::new();
    ch.write_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("t,rx,tx,re,im\n"));
    assert_eq!(ExtendedChannel::<f64>::read_csv(buf.as_slice()).unwrap(), ch);
}

proptest! {
    #[test]
    fn transmission_is_linear(seed in 0u64..1000, ar in -3.0f64..3.0, ai in -3.0f64..3.0, br in -3.0f64..3.0, bi in -3.0f64..3.0) {
        let (k, tau) = (3, 4);
        let ch = ExtendedChannel::generic(k, tau, 1.0f64, seed).unwrap();
        let x = random_signals(k, tau, seed);
        let xp = random_signals(k, tau, seed + 7);
        let (a, b) = (C64::new(ar, ai), C64::new(br, bi));
        let mix: Vec<Vec<C64>> = x.iter().zip(&xp).map(|(u, v)| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect()).collect();
        let quiet = NoiseModel::noiseless();
        let y = transmit(&ch, &x, &quiet, 0).unwrap();
        let yp = transmit(&ch, &xp, &quiet, 0).unwrap();
        let ym = transmit(&ch, &mix, &quiet, 0).unwrap();
        for rx in 0..k {
            for t in 0..tau {
                let want = a * y[rx][t] + b * yp[rx][t];
                let scale = (a.norm() * y[rx][t].norm() + b.norm() * yp[rx][t].norm()).max(1e-300);
                prop_assert!((ym[rx][t] - want).norm() <= 1e-12 * scale);
            }
        }
    }
}
