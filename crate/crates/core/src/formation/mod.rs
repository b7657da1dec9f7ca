//! Distributed coalition formation by merge-and-split.
//!
//! [`cf_round`] alternates merge and split passes over the whole partition
//! until neither changes anything. [`cfpd_round`] first adjusts every
//! coalition to a minimal winning one where possible, freezes the winners and
//! runs merge-and-split over the losing remainder, adjusting and freezing each
//! newly formed coalition that reaches the detection target.

mod mobility;
mod split;
mod trace;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detection::SuId;
use crate::error::{config, structural, Result};
use crate::game::{
    adjust, is_winning, pareto_dominates, Coalition, DetectionRequirement, Partition, DEFAULT_EPSILON,
};
use crate::network::Network;
use crate::oracle::bell_number;

pub use mobility::{periodic_reformation, Mobility, Snapshot};
pub use split::find_split;
pub use trace::{EventKind, FormationEvent, FormationTrace};

/// Order in which coalitions act and in which each one visits its neighbors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderPolicy {
    /// Ascending smallest member id.
    #[default]
    IdOrder,
    /// Coalitions act in id order; neighbors are visited closest first.
    NearestFirst,
    /// Reproducible shuffles drawn from the given seed.
    SeededRandom(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Cf,
    CfPd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormationConfig {
    /// Meters; `None` means every coalition sees every other one.
    pub discovery_radius: Option<f64>,
    pub order: OrderPolicy,
    pub epsilon: f64,
    pub mode: Mode,
    pub requirement: Option<DetectionRequirement>,
}

impl Default for FormationConfig {
    fn default() -> Self {
        Self::cf()
    }
}

impl FormationConfig {
    pub fn cf() -> Self {
        Self {
            discovery_radius: None,
            order: OrderPolicy::IdOrder,
            epsilon: DEFAULT_EPSILON,
            mode: Mode::Cf,
            requirement: None,
        }
    }

    pub fn cf_pd(requirement: DetectionRequirement) -> Self {
        Self {
            mode: Mode::CfPd,
            requirement: Some(requirement),
            ..Self::cf()
        }
    }

    pub fn with_order(mut self, order: OrderPolicy) -> Self {
        self.order = order;
        self
    }

    pub fn with_radius(mut self, radius: Option<f64>) -> Self {
        self.discovery_radius = radius;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(r) = self.discovery_radius {
            if !(r >= 0.0) {
                return Err(config("discovery_radius", format!("must be non-negative, got {r}")));
            }
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(config("epsilon", format!("must be finite and non-negative, got {}", self.epsilon)));
        }
        if self.mode == Mode::CfPd && self.requirement.is_none() {
            return Err(config("requirement", "CF-PD mode needs a detection requirement"));
        }
        Ok(())
    }
}

/// Where a coalition of a CF-PD outcome came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Class {
    /// Winning after adjusting the round's input partition.
    InitialWinning,
    /// Became minimal winning during merge-and-split.
    FormedWinning,
    /// Still losing at convergence.
    Losing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub partition: Partition,
    pub trace: FormationTrace,
    /// Parallel to `partition.coalitions()`; empty for CF.
    pub classes: Vec<Class>,
}

impl RoundOutcome {
    pub fn coalitions_of(&self, class: Class) -> impl Iterator<Item = &Coalition> {
        self.partition
            .coalitions()
            .iter()
            .zip(&self.classes)
            .filter(move |(_, c)| **c == class)
            .map(|(s, _)| s)
    }
}

fn min_pair_distance(a: &Coalition, b: &Coalition, net: &Network) -> f64 {
    a.members()
        .iter()
        .flat_map(|&x| b.members().iter().map(move |&y| net.distance(x, y)))
        .fold(f64::INFINITY, f64::min)
}

fn round_rng(order: OrderPolicy, round: usize) -> Option<ChaCha8Rng> {
    match order {
        OrderPolicy::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(round as u64);
            Some(rng)
        }
        _ => None,
    }
}

/// Indices of `others` visible from `target`, in visiting order. `target`
/// itself (matched by smallest member) is skipped.
fn neighbor_indices(
    target: &Coalition,
    others: &[Coalition],
    cfg: &FormationConfig,
    net: &Network,
    rng: Option<&mut ChaCha8Rng>,
) -> Vec<usize> {
    let mut found: Vec<(usize, f64)> = others
        .iter()
        .enumerate()
        .filter(|(_, c)| c.min_id() != target.min_id())
        .map(|(i, c)| (i, min_pair_distance(target, c, net)))
        .filter(|&(_, d)| match cfg.discovery_radius {
            None => true,
            Some(r) => r > 0.0 && d <= r,
        })
        .collect();
    found.sort_by_key(|&(i, _)| others[i].min_id());
    match cfg.order {
        OrderPolicy::IdOrder => {}
        OrderPolicy::NearestFirst => found.sort_by(|a, b| a.1.total_cmp(&b.1)),
        OrderPolicy::SeededRandom(_) => {
            if let Some(rng) = rng {
                found.shuffle(rng);
            }
        }
    }
    found.into_iter().map(|(i, _)| i).collect()
}

/// Coalitions of `partition` that `coalition` can discover, in visiting order.
pub fn discover_neighbors(
    coalition: &Coalition,
    partition: &Partition,
    config: &FormationConfig,
    net: &Network,
) -> Vec<Coalition> {
    let mut rng = round_rng(config.order, 0);
    neighbor_indices(coalition, partition.coalitions(), config, net, rng.as_mut())
        .into_iter()
        .map(|i| partition.coalitions()[i].clone())
        .collect()
}

/// The merged coalition when every member of `a` and `b` weakly prefers it and
/// at least one strictly does.
pub fn try_merge(a: &Coalition, b: &Coalition, net: &Network, eps: f64) -> Result<Option<Coalition>> {
    if !a.is_disjoint(b) {
        return Err(structural("cannot merge overlapping coalitions"));
    }
    let alpha = net.alpha();
    let merged = net.coalition_unchecked(a.union_members(b));
    let (v, va, vb) = (merged.value(alpha), a.value(alpha), b.value(alpha));
    let pairs = std::iter::repeat_n((v, va), a.len()).chain(std::iter::repeat_n((v, vb), b.len()));
    Ok(pareto_dominates(pairs, eps).then_some(merged))
}

fn deltas(net: &Network, before: &[&Coalition], after: &[&Coalition]) -> BTreeMap<SuId, Option<f64>> {
    let alpha = net.alpha();
    let mut out = BTreeMap::new();
    for new in after {
        for &id in new.members() {
            let old = before.iter().find(|c| c.contains(id)).expect("event conserves members");
            out.insert(id, new.value(alpha).delta(old.value(alpha)));
        }
    }
    out
}

fn event(kind: EventKind, round: usize, net: &Network, before: &[&Coalition], after: &[&Coalition]) -> FormationEvent {
    FormationEvent {
        kind,
        round,
        iteration: 0,
        before: before.iter().map(|c| c.members().to_vec()).collect(),
        after: after.iter().map(|c| c.members().to_vec()).collect(),
        payoff_deltas: deltas(net, before, after),
    }
}

struct Engine<'a> {
    net: &'a Network,
    cfg: &'a FormationConfig,
    round: usize,
    rng: Option<ChaCha8Rng>,
    trace: FormationTrace,
    /// Coalitions still taking part in merge-and-split.
    pool: Vec<Coalition>,
    /// Minimal winning coalitions frozen during this round (CF-PD only).
    formed: Vec<Coalition>,
}

impl<'a> Engine<'a> {
    fn new(net: &'a Network, cfg: &'a FormationConfig, round: usize) -> Self {
        Self {
            net,
            cfg,
            round,
            rng: round_rng(cfg.order, round),
            trace: FormationTrace::default(),
            pool: Vec::new(),
            formed: Vec::new(),
        }
    }

    fn requirement(&self) -> Option<&DetectionRequirement> {
        match self.cfg.mode {
            Mode::Cf => None,
            Mode::CfPd => self.cfg.requirement.as_ref(),
        }
    }

    fn processing_order(&mut self) -> Vec<SuId> {
        let mut keys: Vec<SuId> = self.pool.iter().map(Coalition::min_id).collect();
        keys.sort_unstable();
        if let Some(rng) = self.rng.as_mut() {
            keys.shuffle(rng);
        }
        keys
    }

    fn find(&self, key: SuId) -> Option<usize> {
        self.pool.iter().position(|c| c.min_id() == key)
    }

    /// CF-PD: adjusts a coalition; a winning result is frozen and its shed
    /// members are settled in turn. Returns whatever stays in the pool.
    fn settle(&mut self, c: Coalition) -> Vec<Coalition> {
        let Some(req) = self.requirement().copied() else {
            return vec![c];
        };
        let alpha = self.net.alpha();
        if !is_winning(&c, &req, alpha) {
            return vec![c];
        }
        let adj = adjust(&c, self.net, &req);
        if !adj.excluded.is_empty() {
            let after: Vec<&Coalition> = std::iter::once(&adj.coalition).chain(&adj.excluded).collect();
            self.trace.push(event(EventKind::Adjust, self.round, self.net, &[&c], &after));
        }
        self.formed.push(adj.coalition);
        adj.excluded.into_iter().flat_map(|e| self.settle(e)).collect()
    }

    fn merge_pass(&mut self) -> bool {
        let mut any = false;
        loop {
            let mut changed = false;
            for key in self.processing_order() {
                let Some(mut idx) = self.find(key) else {
                    continue;
                };
                loop {
                    let nbrs = neighbor_indices(&self.pool[idx], &self.pool, self.cfg, self.net, self.rng.as_mut());
                    let accepted = nbrs.into_iter().find_map(|j| {
                        try_merge(&self.pool[idx], &self.pool[j], self.net, self.cfg.epsilon)
                            .expect("pool coalitions are disjoint")
                            .map(|m| (j, m))
                    });
                    let Some((j, merged)) = accepted else {
                        break;
                    };
                    let b = self.pool.remove(idx.max(j));
                    let a = self.pool.remove(idx.min(j));
                    self.trace.push(event(EventKind::Merge, self.round, self.net, &[&a, &b], &[&merged]));
                    changed = true;
                    let frozen = self.requirement().is_some_and(|r| is_winning(&merged, r, self.net.alpha()));
                    let rest = self.settle(merged);
                    self.pool.extend(rest);
                    if frozen {
                        break;
                    }
                    idx = self.pool.len() - 1;
                }
            }
            if !changed {
                return any;
            }
            any = true;
        }
    }

    fn split_pass(&mut self) -> bool {
        let mut any = false;
        loop {
            let mut changed = false;
            for key in self.processing_order() {
                let Some(idx) = self.find(key) else {
                    continue;
                };
                let Some(parts) = find_split(&self.pool[idx], self.net, self.cfg.epsilon) else {
                    continue;
                };
                let old = self.pool.remove(idx);
                let after: Vec<&Coalition> = parts.iter().collect();
                self.trace.push(event(EventKind::Split, self.round, self.net, &[&old], &after));
                for p in parts {
                    let rest = self.settle(p);
                    self.pool.extend(rest);
                }
                changed = true;
            }
            if !changed {
                return any;
            }
            any = true;
        }
    }

    fn converge(&mut self) -> Result<()> {
        let n = self.net.len();
        let cap = bell_number(n).map_or(usize::MAX, |b| usize::try_from(b).unwrap_or(usize::MAX));
        let mut alternations = 0usize;
        loop {
            let merged = self.merge_pass();
            let split = self.split_pass();
            if !merged && !split {
                return Ok(());
            }
            alternations += 1;
            if alternations >= cap {
                return Err(structural(format!("merge-and-split did not converge within {cap} alternations")));
            }
        }
    }
}

fn check_partition(partition: &Partition, net: &Network) -> Result<()> {
    if partition.universe().len() != net.len() || partition.universe().iter().any(|id| id.0 >= net.len()) {
        return Err(structural("partition does not cover the network's users"));
    }
    Ok(())
}

/// One CF round: merge and split passes alternate until neither changes anything.
pub fn cf_round(partition: &Partition, config: &FormationConfig, net: &Network) -> Result<(Partition, FormationTrace)> {
    let cf = FormationConfig {
        mode: Mode::Cf,
        ..*config
    };
    let out = run_round(partition, &cf, net, 0)?;
    Ok((out.partition, out.trace))
}

/// One CF-PD round.
pub fn cfpd_round(partition: &Partition, config: &FormationConfig, net: &Network) -> Result<RoundOutcome> {
    let pd = FormationConfig {
        mode: Mode::CfPd,
        ..*config
    };
    run_round(partition, &pd, net, 0)
}

/// Runs the round selected by `config.mode`; `round` labels trace events and
/// selects the random stream under seeded ordering.
pub fn run_round(partition: &Partition, config: &FormationConfig, net: &Network, round: usize) -> Result<RoundOutcome> {
    config.validate()?;
    check_partition(partition, net)?;
    let mut engine = Engine::new(net, config, round);
    let mut initial = Vec::new();
    match engine.requirement().copied() {
        None => engine.pool = partition.coalitions().to_vec(),
        Some(req) => {
            for c in partition.coalitions() {
                if !is_winning(c, &req, net.alpha()) {
                    engine.pool.push(c.clone());
                    continue;
                }
                let rest = engine.settle(c.clone());
                initial.append(&mut engine.formed);
                engine.pool.extend(rest);
            }
        }
    }
    engine.converge()?;

    let Engine { pool, formed, trace, .. } = engine;
    let mut classes = Vec::new();
    let mut coalitions = Vec::new();
    if config.mode == Mode::CfPd {
        for (set, class) in [(initial, Class::InitialWinning), (formed, Class::FormedWinning), (pool, Class::Losing)] {
            classes.extend(std::iter::repeat_n(class, set.len()));
            coalitions.extend(set);
        }
    } else {
        coalitions = pool;
    }
    let mut order: Vec<usize> = (0..coalitions.len()).collect();
    order.sort_by_key(|&i| coalitions[i].min_id());
    let classes = if classes.is_empty() {
        classes
    } else {
        order.iter().map(|&i| classes[i]).collect()
    };
    let mut slots: Vec<Option<Coalition>> = coalitions.into_iter().map(Some).collect();
    let coalitions = order.iter().map(|&i| slots[i].take().expect("each index once")).collect();
    Ok(RoundOutcome {
        partition: Partition::new(coalitions, partition.universe().to_vec())?,
        trace,
        classes,
    })
}
