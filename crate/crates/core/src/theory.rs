//! Analytic merge thresholds for a pair of users, the distance and angle they
//! translate to, and exhaustive stability certificates for small networks.

use serde::{Deserialize, Serialize};

use crate::detection::{avg_snr, prob_miss_noncoop, ChannelModel, DetectionParams, SuId};
use crate::error::{domain, Error, Result};
use crate::game::{coalition_value, pareto_dominates, Partition, Value};
use crate::network::Network;
use crate::oracle::PartitionIterator;

/// Constants of the pairwise merge inequality with user `i` as head.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Coefficients {
    pub pm_i: f64,
    pub pm_j: f64,
    pub pf: f64,
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub eta: f64,
}

impl Theorem1Coefficients {
    pub fn new(pm_i: f64, pm_j: f64, pf: f64, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pm_i) || !(0.0..=1.0).contains(&pm_j) {
            return Err(domain(format!("miss probabilities must lie in [0, 1], got {pm_i}, {pm_j}")));
        }
        if pm_i > pm_j {
            return Err(domain(format!("head must have the lower miss probability: {pm_i} > {pm_j}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if !(pf > 0.0 && pf < alpha) {
            return Err(domain(format!("need 0 < pf < alpha, got pf = {pf}, alpha = {alpha}")));
        }
        let r = pf / alpha;
        Ok(Self {
            pm_i,
            pm_j,
            pf,
            alpha,
            a: (2.0 * pf - 1.0) * (pf - 1.0),
            b: pf * (2.0 - pf),
            c: pm_i * (pm_j - 1.0) + alpha * alpha * (-r * r).ln_1p(),
            d: pm_i * (1.0 - 2.0 * pm_j),
            eta: if pm_j <= 0.5 { alpha } else { 0.0 },
        })
    }

    /// Error probability at which the pair's false alarm reaches α.
    pub fn barrier_error(&self) -> f64 {
        (self.alpha - self.b) / self.a
    }

    /// v({i, j}) at reporting error `pe`.
    pub fn pair_value(&self, pe: f64) -> Value {
        let q_miss = self.pm_i * (self.pm_j * (1.0 - pe) + (1.0 - self.pm_j) * pe);
        let q_fa = self.a * pe + self.b;
        coalition_value(q_miss, q_fa, self.alpha)
    }

    /// v({i}).
    pub fn head_value(&self) -> Value {
        coalition_value(self.pm_i, self.pf, self.alpha)
    }

    /// v({i, j}) − v({i}); −∞ maps to `f64::NEG_INFINITY`.
    pub fn merge_margin(&self, pe: f64) -> f64 {
        match (self.pair_value(pe), self.head_value()) {
            (Value::Finite(s), Value::Finite(h)) => s - h,
            _ => f64::NEG_INFINITY,
        }
    }
}

/// Closed-form approximation of the largest reporting error that still makes
/// the pair merge, clamped to [0, ½].
pub fn merge_error_threshold_approx(pm_i: f64, pm_j: f64, pf: f64, alpha: f64) -> Result<f64> {
    let k = Theorem1Coefficients::new(pm_i, pm_j, pf, alpha)?;
    let r2 = (pf / alpha).powi(2);
    let expo = pm_i * (1.0 - k.eta) * (pm_j - 1.0) / (alpha * alpha);
    let root = (1.0 - (1.0 - r2) * expo.exp()).sqrt();
    let pe = (pf * (pf - 2.0) + alpha * root) / k.a;
    Ok(pe.clamp(0.0, 0.5))
}

/// Largest reporting error for which v({i, j}) > v({i}), by scanning for the
/// last sign change below the false-alarm barrier and bisecting it to `tol`.
pub fn merge_error_threshold_exact(pm_i: f64, pm_j: f64, pf: f64, alpha: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(domain(format!("tolerance must be positive, got {tol}")));
    }
    let k = Theorem1Coefficients::new(pm_i, pm_j, pf, alpha)?;
    let upper = k.barrier_error().min(0.5);
    if !(upper > 0.0) {
        return Ok(0.0);
    }
    let holds = |pe: f64| k.merge_margin(pe) > 0.0;
    if k.barrier_error() > 0.5 && holds(0.5) {
        return Ok(0.5);
    }
    // The margin need not be monotone, so locate the last satisfied grid cell.
    const SCAN: usize = 2000;
    let step = upper / SCAN as f64;
    let last_ok = (0..SCAN).rev().find(|&i| holds(i as f64 * step));
    let Some(i) = last_ok else {
        return Ok(0.0);
    };
    let (mut lo, mut hi) = (i as f64 * step, ((i + 1) as f64 * step).min(upper));
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// The (pm_i, pm_j, pf) grid the approximation is checked on: miss
/// probabilities in steps of 0.05 with pm_i ≤ pm_j, three false-alarm levels.
pub fn theorem1_grid() -> Vec<(f64, f64, f64)> {
    let pms: Vec<f64> = (0..=20).map(|k| k as f64 * 0.05).collect();
    let mut out = Vec::new();
    for &pf in &[0.001, 0.01, 0.05] {
        for (a, &pm_i) in pms.iter().enumerate() {
            for &pm_j in &pms[a..] {
                out.push((pm_i, pm_j, pf));
            }
        }
    }
    out
}

/// Worst merge margin over `samples` evenly spaced errors in (0, approx].
/// Negative values mean the approximation admits errors that do not merge.
/// A zero threshold admits no error, so the margin is infinite.
pub fn sufficiency_margin(pm_i: f64, pm_j: f64, pf: f64, alpha: f64, samples: usize) -> Result<f64> {
    let k = Theorem1Coefficients::new(pm_i, pm_j, pf, alpha)?;
    let approx = merge_error_threshold_approx(pm_i, pm_j, pf, alpha)?;
    if approx == 0.0 {
        return Ok(f64::INFINITY);
    }
    let n = samples.max(1);
    Ok((1..=n)
        .map(|s| k.merge_margin(approx * s as f64 / n as f64))
        .fold(f64::INFINITY, f64::min))
}

/// A distance that may be unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Distance {
    Finite(f64),
    Unbounded,
}

impl Distance {
    pub fn meters(self) -> Option<f64> {
        match self {
            Distance::Finite(d) => Some(d),
            Distance::Unbounded => None,
        }
    }
}

/// Link length at which the reporting error equals `p_e`.
pub fn merge_distance_threshold(p_e: f64, report_tx_power: f64, channel: &ChannelModel) -> Result<Distance> {
    if p_e.is_nan() {
        return Err(domain("error probability is NaN"));
    }
    if p_e <= 0.0 {
        return Ok(Distance::Finite(0.0));
    }
    if p_e >= 0.5 {
        return Ok(Distance::Unbounded);
    }
    if !(report_tx_power > 0.0) {
        return Err(domain(format!("transmit power must be positive, got {report_tx_power}")));
    }
    let x = 1.0 - 2.0 * p_e;
    let snr = x * x / (4.0 * p_e * (1.0 - p_e));
    let d = (report_tx_power * channel.kappa / (channel.noise_power * snr)).powf(1.0 / channel.mu);
    Ok(Distance::Finite(d))
}

/// Distance from the PU at which a user's non-cooperative miss equals `pm`.
pub fn distance_for_miss(pm: f64, params: &DetectionParams, channel: &ChannelModel) -> Result<f64> {
    if !(pm > 0.0 && pm < 1.0) {
        return Err(domain(format!("miss probability must lie in (0, 1), got {pm}")));
    }
    let miss_at = |d: f64| -> Result<f64> { prob_miss_noncoop(avg_snr(channel.pu_tx_power, d, channel)?, params) };
    let (mut lo, mut hi) = (1e-3, 1.0);
    while miss_at(hi)? < pm {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(domain(format!("miss probability {pm} is not reached at any finite distance")));
        }
    }
    if miss_at(lo)? > pm {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if miss_at(mid)? < pm {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Angle, in degrees, of the sector centered at a user `d1` from the PU whose
/// rays hit the part of the circle of radius `r2` (around the PU) lying within
/// `d_threshold` of the user.
pub fn merge_region_angle(d1: f64, r2: f64, d_threshold: f64) -> f64 {
    let cos_phi = || ((d1 * d1 + d_threshold * d_threshold - r2 * r2) / (2.0 * d1 * d_threshold)).clamp(-1.0, 1.0);
    let angle = if d1 <= r2 {
        if d_threshold >= d1 + r2 {
            return 360.0;
        }
        if d_threshold <= r2 - d1 {
            return 0.0;
        }
        // Inside the circle the reachable arc faces away from the PU.
        360.0 - 2.0 * cos_phi().acos().to_degrees()
    } else {
        if d_threshold <= d1 - r2 {
            return 0.0;
        }
        // Outside the circle the sector cannot open past the tangent lines.
        let tangent = (r2 / d1).asin().to_degrees();
        if d_threshold * d_threshold >= d1 * d1 - r2 * r2 {
            2.0 * tangent
        } else {
            2.0 * cos_phi().acos().to_degrees()
        }
    };
    angle.clamp(0.0, 360.0)
}

/// Largest network the stability checks accept.
pub const MAX_STABILITY_CHECK: usize = 10;

/// Largest network on which the D_c conditions are checked.
pub const MAX_DC_CHECK: usize = 8;

fn subset_values(net: &Network) -> Vec<Value> {
    let n = net.len();
    let alpha = net.alpha();
    let mut v = vec![Value::NegInfinity; 1 << n];
    for (mask, slot) in v.iter_mut().enumerate().skip(1) {
        *slot = net.coalition_unchecked(members_of_mask(mask)).value(alpha);
    }
    v
}

fn members_of_mask(mask: usize) -> Vec<SuId> {
    (0..usize::BITS as usize).filter(|i| mask & (1 << i) != 0).map(SuId).collect()
}

fn mask_of(ids: &[SuId]) -> usize {
    ids.iter().fold(0, |m, id| m | (1 << id.0))
}

fn check_net(net: &Network, partition: &Partition, limit: usize) -> Result<()> {
    if net.len() > limit {
        return Err(Error::TooLarge {
            what: "network",
            actual: net.len(),
            limit,
        });
    }
    if partition.universe().len() != net.len() {
        return Err(crate::error::structural("partition does not cover the network"));
    }
    Ok(())
}

/// Which merges [`is_dhp_stable`] examines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergeScope {
    #[default]
    Pairwise,
    /// Every collection of two or more coalitions.
    AllSubsets,
}

/// True iff no merge in `scope` and no split of any coalition is Pareto-improving.
pub fn is_dhp_stable(partition: &Partition, net: &Network, scope: MergeScope, eps: f64) -> Result<bool> {
    check_net(net, partition, MAX_STABILITY_CHECK)?;
    let values = subset_values(net);
    let blocks: Vec<usize> = partition.coalitions().iter().map(|c| mask_of(c.members())).collect();
    let l = blocks.len();
    let merge_improves = |picked: &[usize]| -> bool {
        let union = picked.iter().fold(0, |m, &b| m | b);
        let v = values[union];
        pareto_dominates(
            picked
                .iter()
                .flat_map(|&b| std::iter::repeat_n((v, values[b]), b.count_ones() as usize)),
            eps,
        )
    };
    match scope {
        MergeScope::Pairwise => {
            for a in 0..l {
                for b in a + 1..l {
                    if merge_improves(&[blocks[a], blocks[b]]) {
                        return Ok(false);
                    }
                }
            }
        }
        MergeScope::AllSubsets => {
            for sel in 1usize..(1 << l) {
                if sel.count_ones() < 2 {
                    continue;
                }
                let picked: Vec<usize> = (0..l).filter(|i| sel & (1 << i) != 0).map(|i| blocks[i]).collect();
                if merge_improves(&picked) {
                    return Ok(false);
                }
            }
        }
    }
    for &block in &blocks {
        let members: Vec<usize> = (0..net.len()).filter(|i| block & (1 << i) != 0).collect();
        let current = values[block];
        for split in PartitionIterator::new(members.len())? {
            if split.len() < 2 {
                continue;
            }
            let pairs = split.iter().flat_map(|part| {
                let m = part.iter().fold(0, |m, &i| m | (1 << members[i]));
                std::iter::repeat_n((values[m], current), part.len())
            });
            if pareto_dominates(pairs, eps) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Evidence that a partition is not D_c-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DcWitness {
    /// Two disjoint parts of one coalition that would rather stay apart.
    Inner {
        coalition: Vec<SuId>,
        s1: Vec<SuId>,
        s2: Vec<SuId>,
    },
    /// A cross-coalition group whose members do not all prefer their own blocks.
    Incompatible { group: Vec<SuId> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DcVerdict {
    Stable,
    Unstable(DcWitness),
    NotApplicable,
}

/// Checks both D_c conditions: (i) inside each coalition, every union of two
/// disjoint parts is preferred to the parts; (ii) every group spanning several
/// coalitions is beaten by its projection onto the partition.
pub fn is_dc_stable(partition: &Partition, net: &Network, eps: f64) -> Result<DcVerdict> {
    if net.len() > MAX_DC_CHECK {
        return Ok(DcVerdict::NotApplicable);
    }
    check_net(net, partition, MAX_DC_CHECK)?;
    let values = subset_values(net);
    let blocks: Vec<usize> = partition.coalitions().iter().map(|c| mask_of(c.members())).collect();

    for &t in &blocks {
        let mut u = t;
        while u != 0 {
            if u.count_ones() >= 2 {
                let low = u & u.wrapping_neg();
                let rest = u ^ low;
                // S1 holds the lowest member of U so each unordered pair is seen once.
                let mut s2 = rest;
                while s2 != 0 {
                    let s1 = u ^ s2;
                    let v = values[u];
                    let pairs = [(v, values[s1], s1.count_ones()), (v, values[s2], s2.count_ones())]
                        .into_iter()
                        .flat_map(|(n, o, k)| std::iter::repeat_n((n, o), k as usize));
                    if !pareto_dominates(pairs, eps) {
                        return Ok(DcVerdict::Unstable(DcWitness::Inner {
                            coalition: members_of_mask(t),
                            s1: members_of_mask(s1),
                            s2: members_of_mask(s2),
                        }));
                    }
                    s2 = (s2 - 1) & rest;
                }
            }
            u = (u - 1) & t;
        }
    }

    let full = (1usize << net.len()) - 1;
    for g in 1..=full {
        if blocks.iter().any(|&t| g & t == g) {
            continue;
        }
        let vg = values[g];
        let pairs = blocks
            .iter()
            .map(|&t| g & t)
            .filter(|&p| p != 0)
            .flat_map(|p| std::iter::repeat_n((values[p], vg), p.count_ones() as usize));
        if !pareto_dominates(pairs, eps) {
            return Ok(DcVerdict::Unstable(DcWitness::Incompatible {
                group: members_of_mask(g),
            }));
        }
    }
    Ok(DcVerdict::Stable)
}

/// Searches every partition of the network for one certified D_c-stable.
pub fn find_dc_stable_partition(net: &Network, eps: f64) -> Result<Option<Partition>> {
    if net.len() > MAX_DC_CHECK {
        return Err(Error::TooLarge {
            what: "network",
            actual: net.len(),
            limit: MAX_DC_CHECK,
        });
    }
    for groups in PartitionIterator::new(net.len())? {
        let groups: Vec<Vec<SuId>> = groups.into_iter().map(|g| g.into_iter().map(SuId).collect()).collect();
        let p = Partition::from_groups(net, &groups)?;
        if is_dc_stable(&p, net, eps)? == DcVerdict::Stable {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::prob_reporting_error;
    use approx::assert_relative_eq;

    #[test]
    fn approx_matches_hand_evaluation() {
        let p = merge_error_threshold_approx(0.2, 0.4, 0.01, 0.1).unwrap();
        assert_relative_eq!(p, 0.082_559_3, max_relative = 1e-5);
        let e = merge_error_threshold_exact(0.2, 0.4, 0.01, 0.1, 1e-12).unwrap();
        assert!((e - p).abs() <= 0.05 * e);
    }

    #[test]
    fn approx_with_perfect_head_clamps_to_zero() {
        // pm_i = 0 makes the root equal P_f/α, leaving P_f/(2P_f − 1) < 0.
        assert_eq!(merge_error_threshold_approx(0.0, 0.3, 0.01, 0.1).unwrap(), 0.0);
        assert_eq!(merge_error_threshold_exact(0.0, 0.0, 0.01, 0.1, 1e-12).unwrap(), 0.0);
    }

    #[test]
    fn eta_branch_switches_at_one_half() {
        let at = Theorem1Coefficients::new(0.3, 0.5, 0.01, 0.1).unwrap();
        assert_eq!(at.eta, 0.1);
        let above = Theorem1Coefficients::new(0.3, 0.5 + 1e-6, 0.01, 0.1).unwrap();
        assert_eq!(above.eta, 0.0);
        let lo = merge_error_threshold_approx(0.3, 0.5 - 1e-6, 0.01, 0.1).unwrap();
        let hi = merge_error_threshold_approx(0.3, 0.5 + 1e-6, 0.01, 0.1).unwrap();
        assert!(hi > lo, "dropping η widens the exponent: {lo} vs {hi}");
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(merge_error_threshold_approx(0.2, 0.4, 0.1, 0.1).is_err());
        assert!(merge_error_threshold_approx(0.5, 0.4, 0.01, 0.1).is_err());
        assert!(merge_error_threshold_exact(0.2, 0.4, 0.01, 0.1, 0.0).is_err());
    }

    #[test]
    fn distance_threshold_round_trips() {
        let ch = ChannelModel::default();
        for &p in &[1e-4, 0.01, 0.0826, 0.2, 0.4, 0.499] {
            let d = merge_distance_threshold(p, 0.01, &ch).unwrap().meters().unwrap();
            let back = prob_reporting_error(avg_snr(0.01, d, &ch).unwrap()).unwrap();
            assert_relative_eq!(back, p, max_relative = 1e-9);
        }
        let d = merge_distance_threshold(0.0826, 0.01, &ch).unwrap().meters().unwrap();
        assert!((d - 1633.0).abs() < 5.0, "{d}");
        assert_eq!(merge_distance_threshold(0.5, 0.01, &ch).unwrap(), Distance::Unbounded);
        assert_eq!(merge_distance_threshold(-1.0, 0.01, &ch).unwrap(), Distance::Finite(0.0));
    }

    #[test]
    fn angle_limits() {
        assert_eq!(merge_region_angle(800.0, 2000.0, 3000.0), 360.0);
        assert_eq!(merge_region_angle(800.0, 2000.0, 1000.0), 0.0);
        let a = merge_region_angle(800.0, 2000.0, 1633.0);
        assert!((a - 149.2).abs() < 0.2, "{a}");
    }

    #[test]
    fn distance_for_miss_inverts() {
        let params = DetectionParams::for_false_alarm(5, 0.01, 0.1).unwrap();
        let ch = ChannelModel::default();
        for &pm in &[0.05, 0.2, 0.5, 0.9] {
            let d = distance_for_miss(pm, &params, &ch).unwrap();
            let back = prob_miss_noncoop(avg_snr(ch.pu_tx_power, d, &ch).unwrap(), &params).unwrap();
            assert_relative_eq!(back, pm, max_relative = 1e-6);
        }
    }
}
