//! Single-user and coalition-level detection probabilities for an energy
//! detector under Rayleigh fading, with OR-rule fusion at a coalition head.
//!
//! Every function here is pure. Probabilities are plain `f64` in `[0, 1]`;
//! distances are meters and powers are watts.

use serde::{Deserialize, Serialize};

use crate::error::{domain, structural, Result};

/// Round-off allowance when asserting that a computed probability lies in `[0, 1]`.
pub const PROBABILITY_SLACK: f64 = 1e-12;

/// Identifier of a secondary user. Ids index into the owning network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SuId(pub usize);

impl std::fmt::Display for SuId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Propagation and noise constants shared by every link in the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    /// Path-loss constant κ.
    pub kappa: f64,
    /// Path-loss exponent μ.
    pub mu: f64,
    /// Noise power σ² in watts.
    pub noise_power: f64,
    /// Primary-user transmit power in watts.
    pub pu_tx_power: f64,
}

impl ChannelModel {
    pub fn new(kappa: f64, mu: f64, noise_power: f64, pu_tx_power: f64) -> Result<Self> {
        for (name, v) in [
            ("kappa", kappa),
            ("mu", mu),
            ("noise_power", noise_power),
            ("pu_tx_power", pu_tx_power),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(Self {
            kappa,
            mu,
            noise_power,
            pu_tx_power,
        })
    }
}

impl Default for ChannelModel {
    /// κ = 1, μ = 3, σ² = −90 dBm, P_PU = 100 mW.
    fn default() -> Self {
        Self {
            kappa: 1.0,
            mu: 3.0,
            noise_power: dbm_to_watts(-90.0),
            pu_tx_power: 0.1,
        }
    }
}

/// Energy-detector settings and the per-coalition false-alarm cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionParams {
    /// Time-bandwidth product.
    pub m: u32,
    /// Energy threshold λ.
    pub lambda: f64,
    /// False-alarm constraint α.
    pub alpha: f64,
}

impl DetectionParams {
    pub fn new(m: u32, lambda: f64, alpha: f64) -> Result<Self> {
        if m < 2 {
            return Err(domain(format!("time-bandwidth product must be >= 2, got {m}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(domain(format!("threshold must be finite and >= 0, got {lambda}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { m, lambda, alpha })
    }

    /// Builds parameters whose non-cooperative false alarm equals `pf`.
    pub fn for_false_alarm(m: u32, pf: f64, alpha: f64) -> Result<Self> {
        let lambda = threshold_for_false_alarm(m, pf)?;
        Self::new(m, lambda, alpha)
    }
}

/// A secondary user: where it is and how loudly it reports its sensing bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondaryUser {
    pub id: SuId,
    pub position: Point,
    /// Transmit power used for reporting, watts.
    pub report_tx_power: f64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts * 1e3).log10()
}

/// κ / d^μ.
pub fn path_gain(distance: f64, channel: &ChannelModel) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(domain(format!("distance must be positive, got {distance}")));
    }
    Ok(channel.kappa / distance.powf(channel.mu))
}

/// Average received SNR P·h/σ² over a link of the given length.
pub fn avg_snr(tx_power: f64, distance: f64, channel: &ChannelModel) -> Result<f64> {
    if !(tx_power > 0.0) {
        return Err(domain(format!("transmit power must be positive, got {tx_power}")));
    }
    Ok(tx_power * path_gain(distance, channel)? / channel.noise_power)
}

/// ln(n!), exact product below 171 and a Stirling series above.
pub(crate) fn ln_factorial(n: u32) -> f64 {
    if n <= 170 {
        let mut p = 1.0f64;
        for k in 2..=n {
            p *= f64::from(k);
        }
        p.ln()
    } else {
        let x = f64::from(n) + 1.0;
        let inv = 1.0 / x;
        let inv2 = inv * inv;
        (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln()
            + inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    }
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// e^{-x} Σ_{n<a} xⁿ/n!, valid (and accurate) for x ≥ a.
fn upper_tail_sum(a: u32, x: f64) -> f64 {
    // Terms grow with n while n < x, so start from the largest and walk down.
    let mut term = (-x + f64::from(a - 1) * x.ln() - ln_factorial(a - 1)).exp();
    let mut acc = CompensatedSum::default();
    for n in (0..a).rev() {
        acc.add(term);
        term *= f64::from(n) / x;
    }
    acc.value()
}

/// ln of e^{-x} x^a/a! · Σ_k x^k / ((a+1)…(a+k)), i.e. ln P(a, x); valid for x < a.
fn ln_lower_series(a: u32, x: f64) -> f64 {
    let prefactor = -x + f64::from(a) * x.ln() - ln_factorial(a);
    let mut term = 1.0;
    let mut acc = CompensatedSum::default();
    let mut k = 1.0;
    loop {
        acc.add(term);
        term *= x / (f64::from(a) + k);
        if term < acc.value() * 1e-18 {
            break;
        }
        k += 1.0;
    }
    prefactor + acc.value().ln()
}

/// ln P(a, x) for integer a ≥ 1.
fn ln_regularized_lower_gamma(a: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x < f64::from(a) {
        ln_lower_series(a, x)
    } else {
        (-upper_tail_sum(a, x)).ln_1p()
    }
}

/// Regularized upper incomplete gamma Γ(m, x)/Γ(m) for integer m ≥ 1.
///
/// Equals e^{-x} Σ_{n=0}^{m-1} xⁿ/n!; evaluated in log space so m in the
/// thousands neither overflows nor underflows.
pub fn regularized_upper_gamma(m: u32, x: f64) -> Result<f64> {
    if m == 0 {
        return Err(domain("gamma order must be >= 1"));
    }
    if !(x >= 0.0) {
        return Err(domain(format!("gamma argument must be >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let q = if x < f64::from(m) {
        -ln_lower_series(m, x).exp_m1()
    } else {
        upper_tail_sum(m, x)
    };
    Ok(q.clamp(0.0, 1.0))
}

/// Regularized lower incomplete gamma 1 − Γ(m, x)/Γ(m) for integer m ≥ 1.
pub fn regularized_lower_gamma(m: u32, x: f64) -> Result<f64> {
    if m == 0 {
        return Err(domain("gamma order must be >= 1"));
    }
    if !(x >= 0.0) {
        return Err(domain(format!("gamma argument must be >= 0, got {x}")));
    }
    Ok(ln_regularized_lower_gamma(m, x).exp().clamp(0.0, 1.0))
}

/// Non-cooperative false-alarm probability Γ(m, λ/2)/Γ(m). Location independent.
pub fn prob_false_alarm_noncoop(params: &DetectionParams) -> f64 {
    regularized_upper_gamma(params.m, params.lambda / 2.0)
        .expect("validated detection parameters")
}

/// Non-cooperative miss probability of an energy detector whose received
/// SNR is Rayleigh distributed with mean `snr_pu`.
///
/// Uses P_m = P(m−1, λ/2) − ((1+γ̄)/γ̄)^{m−1} e^{−λ/(2(1+γ̄))} P(m−1, λγ̄/(2(1+γ̄)))
/// where P is the regularized lower gamma. This is the closed form with both
/// partial sums over n = 0..m−2 folded into incomplete gamma functions, so the
/// large prefactor and the tiny bracket are combined in log space.
pub fn prob_miss_noncoop(snr_pu: f64, params: &DetectionParams) -> Result<f64> {
    if !(snr_pu > 0.0) {
        return Err(domain(format!("PU SNR must be positive, got {snr_pu}")));
    }
    if params.m < 2 {
        return Err(domain("time-bandwidth product must be >= 2"));
    }
    let a = params.m - 1;
    let half = params.lambda / 2.0;
    if half == 0.0 {
        return Ok(0.0);
    }
    let detect_floor = ln_regularized_lower_gamma(a, half).exp();
    if snr_pu.is_infinite() {
        return Ok(0.0);
    }
    let y = half * snr_pu / (1.0 + snr_pu);
    let ln_faded = f64::from(a) * (1.0 / snr_pu).ln_1p() - half / (1.0 + snr_pu)
        + ln_regularized_lower_gamma(a, y);
    let pm = detect_floor - ln_faded.exp();
    debug_assert!(
        (-PROBABILITY_SLACK..=1.0 + PROBABILITY_SLACK).contains(&pm),
        "miss probability {pm} out of range (snr {snr_pu}, {params:?})"
    );
    Ok(pm.clamp(0.0, 1.0))
}

/// Average BPSK bit-error probability over a Rayleigh link: ½(1 − √(γ̄/(1+γ̄))).
pub fn prob_reporting_error(snr_link: f64) -> Result<f64> {
    if !(snr_link >= 0.0) {
        return Err(domain(format!("link SNR must be >= 0, got {snr_link}")));
    }
    if snr_link.is_infinite() {
        return Ok(0.0);
    }
    // 1 − r = (1 − r²)/(1 + r) avoids cancellation at high SNR.
    let r = (snr_link / (1.0 + snr_link)).sqrt();
    Ok(0.5 / ((1.0 + snr_link) * (1.0 + r)))
}

/// The member with the lowest non-cooperative miss probability; ties go to the lowest id.
pub fn select_head(members: &[(SuId, f64)]) -> Result<SuId> {
    members
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|m| m.0)
        .ok_or_else(|| domain("cannot select a head for an empty coalition"))
}

fn check_probability(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(domain(format!("{what} must lie in [0, 1], got {p}")))
    }
}

/// OR-rule coalition miss probability.
///
/// `member_pms[i]` and `report_errors[i]` describe the non-head members and
/// their reporting error towards the head. The head's own bit is never sent,
/// so it enters the product with zero error.
pub fn coalition_miss(head_pm: f64, member_pms: &[f64], report_errors: &[f64]) -> Result<f64> {
    if member_pms.len() != report_errors.len() {
        return Err(structural(format!(
            "{} member miss probabilities but {} reporting errors",
            member_pms.len(),
            report_errors.len()
        )));
    }
    check_probability(head_pm, "head miss probability")?;
    let mut q = head_pm;
    for (&pm, &pe) in member_pms.iter().zip(report_errors) {
        check_probability(pm, "member miss probability")?;
        check_probability(pe, "reporting error")?;
        q *= pm * (1.0 - pe) + (1.0 - pm) * pe;
    }
    Ok(q)
}

/// OR-rule coalition false-alarm probability; `report_errors` lists non-head members only.
pub fn coalition_false_alarm(pf: f64, report_errors: &[f64]) -> Result<f64> {
    check_probability(pf, "false-alarm probability")?;
    let mut ln_quiet = (-pf).ln_1p();
    for &pe in report_errors {
        check_probability(pe, "reporting error")?;
        ln_quiet += ((1.0 - pf) * (1.0 - pe) + pf * pe).ln();
    }
    Ok((-ln_quiet.exp_m1()).clamp(0.0, 1.0))
}

/// Inverts the false-alarm expression: the threshold λ with Γ(m, λ/2)/Γ(m) = `pf`.
pub fn threshold_for_false_alarm(m: u32, pf: f64) -> Result<f64> {
    if m == 0 {
        return Err(domain("gamma order must be >= 1"));
    }
    if !(pf > 0.0 && pf < 1.0) {
        return Err(domain(format!("target false alarm must lie in (0, 1), got {pf}")));
    }
    let f = |lambda: f64| regularized_upper_gamma(m, lambda / 2.0).expect("valid order") - pf;
    let mut hi = 2.0 * f64::from(m).max(1.0);
    while f(hi) > 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
