#![allow(dead_code)]

use coalition_sense::detection::{ChannelModel, DetectionParams, Point};
use coalition_sense::Network;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ALPHA: f64 = 0.1;
pub const REPORT_POWER_W: f64 = 0.01;
pub const AREA_M: f64 = 3000.0;

pub fn params(pf: f64) -> DetectionParams {
    DetectionParams::for_false_alarm(5, pf, ALPHA).unwrap()
}

/// Network with the PU at the origin.
pub fn net_at(positions: &[(f64, f64)], pf: f64) -> Network {
    let pts: Vec<Point> = positions.iter().map(|&(x, y)| Point::new(x, y)).collect();
    Network::from_positions(&pts, REPORT_POWER_W, Point::new(0.0, 0.0), ChannelModel::default(), params(pf)).unwrap()
}

/// Uniform users over the default square with the PU at its center.
pub fn random_net(seed: u64, n: usize, pf: f64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<Point> = (0..n)
        .map(|_| Point::new(rng.random_range(0.0..=AREA_M), rng.random_range(0.0..=AREA_M)))
        .collect();
    let pu = Point::new(AREA_M / 2.0, AREA_M / 2.0);
    Network::from_positions(&pts, REPORT_POWER_W, pu, ChannelModel::default(), params(pf)).unwrap()
}

/// Users packed into a smaller square so that cooperation is common.
pub fn dense_net(seed: u64, n: usize, side: f64, pf: f64) -> Network {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let off = (AREA_M - side) / 2.0;
    let pts: Vec<Point> = (0..n)
        .map(|_| Point::new(off + rng.random_range(0.0..=side), off + rng.random_range(0.0..=side)))
        .collect();
    let pu = Point::new(AREA_M / 2.0, AREA_M / 2.0);
    Network::from_positions(&pts, REPORT_POWER_W, pu, ChannelModel::default(), params(pf)).unwrap()
}

/// Geometric false-alarm grid strictly inside (0, α).
pub fn pf_grid() -> Vec<f64> {
    let (lo, hi, k) = (1e-3_f64, 0.09_f64, 10);
    (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(f64::MIN_POSITIVE)
}

/// Simulated energy detector under Rayleigh fading: the instantaneous SNR is
/// exponential with mean `snr`, and the statistic is noncentral χ² with 2m
/// degrees of freedom and noncentrality 2·SNR. Returns the miss rate and its
/// standard error.
pub fn monte_carlo_miss(m: u32, lambda: f64, snr: f64, samples: usize, seed: u64) -> (f64, f64) {
    use rand_distr::{ChiSquared, Distribution, Exp, StandardNormal};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fading = Exp::new(1.0 / snr).unwrap();
    let central = ChiSquared::new(f64::from(2 * m - 1)).unwrap();
    let mut misses = 0usize;
    for _ in 0..samples {
        let g: f64 = fading.sample(&mut rng);
        let z: f64 = StandardNormal.sample(&mut rng);
        let y = (z + (2.0 * g).sqrt()).powi(2) + central.sample(&mut rng);
        if y <= lambda {
            misses += 1;
        }
    }
    let p = misses as f64 / samples as f64;
    (p, (p * (1.0 - p) / samples as f64).sqrt())
}

/// e^{-x} Σ_{k<m} x^k/k!, summed term by term.
pub fn naive_upper_gamma(m: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 0..m {
        if k > 0 {
            term *= x / f64::from(k);
        }
        sum += term;
    }
    (-x).exp() * sum
}
