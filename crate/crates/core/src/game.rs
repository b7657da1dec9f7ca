//! Coalition values and payoffs, the Pareto order, the adjunct winning/losing
//! game and the adjust rule that trims a winning coalition to a minimal one.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::detection::SuId;
use crate::error::{domain, structural, Result};
use crate::network::Network;

/// Pareto strictness deadband: a payoff only counts as strictly better when it
/// beats the other by more than this.
pub const DEFAULT_EPSILON: f64 = 1e-12;

/// Value of a coalition, or the −∞ sentinel when the false-alarm cap is hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    NegInfinity,
    Finite(f64),
}

impl Value {
    pub fn finite(self) -> Option<f64> {
        match self {
            Value::Finite(v) => Some(v),
            Value::NegInfinity => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Value::Finite(_))
    }

    /// `self > other + eps` on the sentinel-extended line. −∞ never exceeds anything.
    pub fn exceeds(self, other: Value, eps: f64) -> bool {
        match (self, other) {
            (Value::NegInfinity, _) => false,
            (Value::Finite(_), Value::NegInfinity) => true,
            (Value::Finite(a), Value::Finite(b)) => a > b + eps,
        }
    }

    /// Finite difference `self − other`, `None` if either side is −∞.
    pub fn delta(self, other: Value) -> Option<f64> {
        Some(self.finite()? - other.finite()?)
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Value::NegInfinity, Value::NegInfinity) => Ordering::Equal,
            (Value::NegInfinity, Value::Finite(_)) => Ordering::Less,
            (Value::Finite(_), Value::NegInfinity) => Ordering::Greater,
            (Value::Finite(a), Value::Finite(b)) => a.total_cmp(b),
        }
    }
}

/// False-alarm penalty, +∞ at and beyond the cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarrierCost {
    Finite(f64),
    Infinite,
}

/// Logarithmic barrier −α²·ln(1 − (Q_f/α)²) below α, +∞ from α on.
pub fn barrier_cost(q_false_alarm: f64, alpha: f64) -> BarrierCost {
    if q_false_alarm < alpha {
        let r = q_false_alarm / alpha;
        BarrierCost::Finite(-alpha * alpha * (-r * r).ln_1p())
    } else {
        BarrierCost::Infinite
    }
}

/// v(S) = (1 − Q_m) − C(Q_f, α).
pub fn coalition_value(q_miss: f64, q_false_alarm: f64, alpha: f64) -> Value {
    match barrier_cost(q_false_alarm, alpha) {
        BarrierCost::Finite(c) => Value::Finite((1.0 - q_miss) - c),
        BarrierCost::Infinite => Value::NegInfinity,
    }
}

/// A set of users sensing together, with its head and fused probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coalition {
    members: Vec<SuId>,
    head: SuId,
    q_miss: f64,
    q_false_alarm: f64,
}

impl Coalition {
    pub(crate) fn from_parts(members: Vec<SuId>, head: SuId, q_miss: f64, q_false_alarm: f64) -> Self {
        debug_assert!(members.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(members.contains(&head));
        Self {
            members,
            head,
            q_miss,
            q_false_alarm,
        }
    }

    /// Sorted ascending.
    pub fn members(&self) -> &[SuId] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn head(&self) -> SuId {
        self.head
    }

    pub fn q_miss(&self) -> f64 {
        self.q_miss
    }

    pub fn q_detect(&self) -> f64 {
        1.0 - self.q_miss
    }

    pub fn q_false_alarm(&self) -> f64 {
        self.q_false_alarm
    }

    pub fn contains(&self, id: SuId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    pub fn min_id(&self) -> SuId {
        self.members[0]
    }

    pub fn value(&self, alpha: f64) -> Value {
        coalition_value(self.q_miss, self.q_false_alarm, alpha)
    }

    pub fn is_disjoint(&self, other: &Coalition) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.members.len() && j < other.members.len() {
            match self.members[i].cmp(&other.members[j]) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => return false,
            }
        }
        true
    }

    /// Sorted union of the two member lists.
    pub fn union_members(&self, other: &Coalition) -> Vec<SuId> {
        let mut v: Vec<SuId> = self.members.iter().chain(&other.members).copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Recomputes head and probabilities from the network and compares them to the cache.
    pub fn cache_matches(&self, net: &Network, tol: f64) -> bool {
        match net.coalition(&self.members) {
            Ok(fresh) => {
                fresh.head == self.head
                    && (fresh.q_miss - self.q_miss).abs() <= tol
                    && (fresh.q_false_alarm - self.q_false_alarm).abs() <= tol
            }
            Err(_) => false,
        }
    }
}

/// Disjoint coalitions covering a universe of users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    coalitions: Vec<Coalition>,
    universe: Vec<SuId>,
}

impl Partition {
    pub fn new(coalitions: Vec<Coalition>, universe: Vec<SuId>) -> Result<Self> {
        let mut universe = universe;
        universe.sort_unstable();
        universe.dedup();
        let mut seen: Vec<SuId> = coalitions.iter().flat_map(|c| c.members().iter().copied()).collect();
        if coalitions.iter().any(|c| c.is_empty()) {
            return Err(structural("partition contains an empty coalition"));
        }
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(structural("coalitions overlap"));
        }
        if seen != universe {
            return Err(structural("coalitions do not cover the universe exactly"));
        }
        Ok(Self { coalitions, universe })
    }

    /// Every user on its own.
    pub fn singletons(net: &Network) -> Self {
        let coalitions = net.ids().map(|id| net.singleton(id)).collect();
        Self {
            coalitions,
            universe: net.ids().collect(),
        }
    }

    /// Builds a partition of the whole network from member lists.
    pub fn from_groups(net: &Network, groups: &[Vec<SuId>]) -> Result<Self> {
        let coalitions = groups.iter().map(|g| net.coalition(g)).collect::<Result<Vec<_>>>()?;
        Self::new(coalitions, net.ids().collect())
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn into_coalitions(self) -> Vec<Coalition> {
        self.coalitions
    }

    pub fn universe(&self) -> &[SuId] {
        &self.universe
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn coalition_of(&self, id: SuId) -> Option<&Coalition> {
        self.coalitions.iter().find(|c| c.contains(id))
    }

    /// Member lists sorted by smallest member; equal partitions give equal output.
    pub fn canonical(&self) -> Vec<Vec<SuId>> {
        let mut groups: Vec<Vec<SuId>> = self.coalitions.iter().map(|c| c.members().to_vec()).collect();
        groups.sort();
        groups
    }

    pub fn payoffs(&self, alpha: f64) -> PayoffVector {
        PayoffVector::from_coalitions(&self.coalitions, alpha)
    }

    /// Σ|S|·Q_m,S / N.
    pub fn avg_miss(&self) -> f64 {
        self.weighted_mean(|c| c.q_miss())
    }

    /// Σ|S|·Q_f,S / N.
    pub fn avg_false_alarm(&self) -> f64 {
        self.weighted_mean(|c| c.q_false_alarm())
    }

    fn weighted_mean(&self, f: impl Fn(&Coalition) -> f64) -> f64 {
        let n = self.universe.len();
        if n == 0 {
            return 0.0;
        }
        self.coalitions.iter().map(|c| c.len() as f64 * f(c)).sum::<f64>() / n as f64
    }

    /// Re-scores every coalition against a (possibly changed) network.
    pub fn rescored(&self, net: &Network) -> Result<Self> {
        let coalitions = self
            .coalitions
            .iter()
            .map(|c| net.coalition(c.members()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(coalitions, self.universe.clone())
    }
}

/// Per-user payoffs; every member of a coalition receives the coalition value.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PayoffVector(pub BTreeMap<SuId, Value>);

impl PayoffVector {
    pub fn from_coalitions(coalitions: &[Coalition], alpha: f64) -> Self {
        let mut map = BTreeMap::new();
        for c in coalitions {
            let v = c.value(alpha);
            for &id in c.members() {
                map.insert(id, v);
            }
        }
        Self(map)
    }

    pub fn get(&self, id: SuId) -> Option<Value> {
        self.0.get(&id).copied()
    }
}

/// Pareto dominance over paired payoffs `(new, old)`: nobody loses and
/// somebody gains by more than `eps`.
pub fn pareto_dominates(pairs: impl IntoIterator<Item = (Value, Value)>, eps: f64) -> bool {
    let mut strict = false;
    for (new, old) in pairs {
        if new < old {
            return false;
        }
        strict |= new.exceeds(old, eps);
    }
    strict
}

/// `R ▷ S` under the Pareto order. Both vectors must cover the same users.
pub fn pareto_preferred(r: &PayoffVector, s: &PayoffVector, eps: f64) -> Result<bool> {
    if r.0.len() != s.0.len() || r.0.keys().zip(s.0.keys()).any(|(a, b)| a != b) {
        return Err(structural("payoff vectors cover different users"));
    }
    Ok(pareto_dominates(r.0.values().copied().zip(s.0.values().copied()), eps))
}

/// Target detection probability χ and the matching miss target γ = 1 − χ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionRequirement {
    pub chi: f64,
    pub gamma_target: f64,
}

impl DetectionRequirement {
    pub fn new(chi: f64) -> Result<Self> {
        if !(chi > 0.0 && chi < 1.0) {
            return Err(domain(format!("target detection probability must lie in (0, 1), got {chi}")));
        }
        Ok(Self {
            chi,
            gamma_target: 1.0 - chi,
        })
    }
}

/// 1 when the coalition meets both the detection target and the false-alarm cap.
pub fn adjunct_utility(q_detect: f64, q_false_alarm: f64, req: &DetectionRequirement, alpha: f64) -> u8 {
    u8::from(q_detect >= req.chi && q_false_alarm <= alpha)
}

pub fn is_winning(c: &Coalition, req: &DetectionRequirement, alpha: f64) -> bool {
    adjunct_utility(c.q_detect(), c.q_false_alarm(), req, alpha) == 1
}

/// u(T) for an arbitrary member list; u(∅) = 0.
fn utility_of(net: &Network, members: &[SuId], req: &DetectionRequirement) -> bool {
    if members.is_empty() {
        return false;
    }
    is_winning(&net.coalition_unchecked(members.to_vec()), req, net.alpha())
}

/// Largest coalition for which the brute-force subset checks are attempted.
pub const MAX_EXHAUSTIVE_COALITION: usize = 20;

/// Winning, and every proper subset losing (heads re-selected per subset).
pub fn is_minimal_winning(c: &Coalition, net: &Network, req: &DetectionRequirement) -> bool {
    if !is_winning(c, req, net.alpha()) {
        return false;
    }
    first_winning_proper_subset(c.members(), net, req).is_none()
}

/// The smallest winning proper subset (ties broken by subset mask order), if any.
fn first_winning_proper_subset(members: &[SuId], net: &Network, req: &DetectionRequirement) -> Option<Vec<SuId>> {
    let s = members.len();
    assert!(s <= MAX_EXHAUSTIVE_COALITION, "coalition of {s} too large for subset enumeration");
    let full: u32 = (1u32 << s) - 1;
    let mut masks: Vec<u32> = (1..full).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks.into_iter().find_map(|mask| {
        let sub: Vec<SuId> = (0..s).filter(|i| mask & (1 << i) != 0).map(|i| members[i]).collect();
        utility_of(net, &sub, req).then_some(sub)
    })
}

/// Outcome of the adjust rule: the retained coalition and the users it shed.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjusted {
    pub coalition: Coalition,
    pub excluded: Vec<Coalition>,
}

/// Adjust rule. A losing coalition is returned unchanged. A winning one sheds,
/// in increasing order of non-cooperative miss probability, every member whose
/// removal leaves it winning; head and probabilities are recomputed after each
/// removal. Should the result still contain a smaller winning subset (possible
/// when a head change improves reporting), the smallest such subset is kept.
pub fn adjust(c: &Coalition, net: &Network, req: &DetectionRequirement) -> Adjusted {
    if !is_winning(c, req, net.alpha()) {
        return Adjusted {
            coalition: c.clone(),
            excluded: Vec::new(),
        };
    }
    let mut current: Vec<SuId> = c.members().to_vec();
    let mut excluded: Vec<SuId> = Vec::new();
    loop {
        let mut order = current.clone();
        order.sort_by(|a, b| net.pm(*a).total_cmp(&net.pm(*b)).then(a.cmp(b)));
        for id in order {
            let rest: Vec<SuId> = current.iter().copied().filter(|&m| m != id).collect();
            if utility_of(net, &rest, req) {
                current = rest;
                excluded.push(id);
            }
        }
        match first_winning_proper_subset(&current, net, req) {
            None => break,
            Some(sub) => {
                excluded.extend(current.iter().copied().filter(|m| !sub.contains(m)));
                current = sub;
            }
        }
    }
    Adjusted {
        coalition: net.coalition_unchecked(current),
        excluded: excluded.into_iter().map(|id| net.singleton(id)).collect(),
    }
}

/// Upper bound on coalition size implied by the false-alarm cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeBound {
    Limited(usize),
    Unbounded,
}

impl SizeBound {
    pub fn admits(self, size: usize) -> bool {
        match self {
            SizeBound::Limited(n) => size <= n,
            SizeBound::Unbounded => true,
        }
    }
}

/// Bounds above this are reported as [`SizeBound::Unbounded`].
pub const SIZE_BOUND_CAP: f64 = 1e9;

/// ⌊ln(1 − α) / ln(1 − P_f)⌋, at least 1; 1 when P_f ≥ α.
pub fn max_coalition_size(alpha: f64, pf: f64) -> SizeBound {
    if pf >= alpha {
        return SizeBound::Limited(1);
    }
    if pf <= 0.0 {
        return SizeBound::Unbounded;
    }
    let raw = (-alpha).ln_1p() / (-pf).ln_1p();
    if !(raw < SIZE_BOUND_CAP) {
        return SizeBound::Unbounded;
    }
    SizeBound::Limited((raw.floor() as usize).max(1))
}
