//! Exhaustive centralized baselines over all set partitions of small networks.

use serde::{Deserialize, Serialize};

use crate::detection::SuId;
use crate::error::{Error, Result};
use crate::game::{is_winning, DetectionRequirement, Partition};
use crate::network::Network;

/// Largest universe [`PartitionIterator`] will enumerate (Bell(12) = 4,213,597).
pub const MAX_ENUMERATION: usize = 12;

/// Largest network for [`centralized_max_winning`].
pub const MAX_WINNING_SEARCH: usize = 10;

/// Bell(n) by the binomial recurrence; `None` once it no longer fits in `u128`.
pub fn bell_number(n: usize) -> Option<u128> {
    let mut bell: Vec<u128> = vec![1];
    let mut row: Vec<u128> = vec![1];
    for i in 0..n {
        let mut next = 0u128;
        for (k, c) in row.iter().enumerate() {
            next = next.checked_add(c.checked_mul(bell[k])?)?;
        }
        bell.push(next);
        let mut new_row = vec![1u128; i + 2];
        for k in 1..=i {
            new_row[k] = row[k - 1].checked_add(row[k])?;
        }
        row = new_row;
    }
    bell.last().copied()
}

/// Streams the set partitions of `{0, …, n−1}` as restricted-growth strings in
/// lexicographic order. Each item lists the blocks, ordered by smallest element.
#[derive(Debug, Clone)]
pub struct PartitionIterator {
    labels: Vec<usize>,
    /// `prefix_max[i]` = max(labels[..=i]).
    prefix_max: Vec<usize>,
    done: bool,
}

impl PartitionIterator {
    pub fn new(n: usize) -> Result<Self> {
        if n > MAX_ENUMERATION {
            return Err(Error::TooLarge {
                what: "partition universe",
                actual: n,
                limit: MAX_ENUMERATION,
            });
        }
        Ok(Self {
            labels: vec![0; n],
            prefix_max: vec![0; n],
            done: false,
        })
    }

    /// Current restricted-growth string.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    fn advance(&mut self) {
        let n = self.labels.len();
        for i in (1..n).rev() {
            if self.labels[i] <= self.prefix_max[i - 1] {
                self.labels[i] += 1;
                self.prefix_max[i] = self.prefix_max[i - 1].max(self.labels[i]);
                for j in i + 1..n {
                    self.labels[j] = 0;
                    self.prefix_max[j] = self.prefix_max[i];
                }
                return;
            }
        }
        self.done = true;
    }

    /// Next restricted-growth string as block bitmasks over the universe.
    pub fn next_masks(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let k = self.prefix_max.last().map_or(0, |m| m + 1);
        let mut masks = vec![0u32; k];
        for (i, &l) in self.labels.iter().enumerate() {
            masks[l] |= 1 << i;
        }
        if self.labels.is_empty() {
            self.done = true;
        } else {
            self.advance();
        }
        Some(masks)
    }
}

impl Iterator for PartitionIterator {
    type Item = Vec<Vec<usize>>;

    fn next(&mut self) -> Option<Self::Item> {
        let masks = self.next_masks()?;
        Some(
            masks
                .into_iter()
                .map(|m| (0..32).filter(|i| m & (1 << i) != 0).collect())
                .collect(),
        )
    }
}

pub fn enumerate_partitions(n: usize) -> Result<PartitionIterator> {
    PartitionIterator::new(n)
}

fn mask_members(mask: u32) -> Vec<SuId> {
    (0..32).filter(|i| mask & (1 << i) != 0).map(|i| SuId(i as usize)).collect()
}

fn groups_of(masks: &[u32]) -> Vec<Vec<SuId>> {
    masks.iter().map(|&m| mask_members(m)).collect()
}

struct SubsetTable {
    q_miss: Vec<f64>,
    q_false_alarm: Vec<f64>,
}

impl SubsetTable {
    fn build(net: &Network) -> Self {
        let n = net.len();
        let size = 1usize << n;
        let mut q_miss = vec![0.0; size];
        let mut q_false_alarm = vec![0.0; size];
        for mask in 1..size {
            let c = net.coalition_unchecked(mask_members(mask as u32));
            q_miss[mask] = c.q_miss();
            q_false_alarm[mask] = c.q_false_alarm();
        }
        Self { q_miss, q_false_alarm }
    }
}

fn check_size(net: &Network, limit: usize) -> Result<()> {
    if net.len() > limit {
        return Err(Error::TooLarge {
            what: "network",
            actual: net.len(),
            limit,
        });
    }
    if net.is_empty() {
        return Err(crate::error::domain("network has no users"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMissOutcome {
    pub partition: Partition,
    pub avg_miss: f64,
    /// False when no partition keeps every coalition strictly below α; the
    /// all-singleton partition is returned in that case.
    pub feasible: bool,
}

/// The partition minimizing the user-weighted average miss probability subject
/// to Q_f < α in every coalition. Ties go to fewer coalitions, then to the
/// first partition in enumeration order.
pub fn centralized_min_miss(net: &Network) -> Result<MinMissOutcome> {
    check_size(net, MAX_ENUMERATION)?;
    let n = net.len();
    let alpha = net.alpha();
    let table = SubsetTable::build(net);
    let mut best: Option<(f64, usize, Vec<u32>)> = None;
    let mut it = PartitionIterator::new(n)?;
    while let Some(masks) = it.next_masks() {
        if masks.iter().any(|&m| !(table.q_false_alarm[m as usize] < alpha)) {
            continue;
        }
        let total: f64 = masks
            .iter()
            .map(|&m| m.count_ones() as f64 * table.q_miss[m as usize])
            .sum();
        let avg = total / n as f64;
        let better = match &best {
            None => true,
            Some((b, k, _)) => avg < *b || (avg == *b && masks.len() < *k),
        };
        if better {
            best = Some((avg, masks.len(), masks));
        }
    }
    match best {
        Some((avg_miss, _, masks)) => Ok(MinMissOutcome {
            partition: Partition::from_groups(net, &groups_of(&masks))?,
            avg_miss,
            feasible: true,
        }),
        None => {
            let partition = Partition::singletons(net);
            Ok(MinMissOutcome {
                avg_miss: partition.avg_miss(),
                partition,
                feasible: false,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxWinningOutcome {
    pub partition: Partition,
    /// Share of users in winning coalitions.
    pub winning_fraction: f64,
    /// False when P_f ≥ α, so no coalition can ever win.
    pub feasible: bool,
}

/// Among partitions whose winning coalitions are all minimal winning, one that
/// puts the most users in winning coalitions. Ties go to the lower
/// user-weighted false alarm, then to enumeration order.
pub fn centralized_max_winning(net: &Network, req: &DetectionRequirement) -> Result<MaxWinningOutcome> {
    check_size(net, MAX_WINNING_SEARCH)?;
    let n = net.len();
    let alpha = net.alpha();
    let size = 1usize << n;
    let table = SubsetTable::build(net);
    let mut winning = vec![false; size];
    for (mask, w) in winning.iter_mut().enumerate().skip(1) {
        let c = net.coalition_unchecked(mask_members(mask as u32));
        *w = is_winning(&c, req, alpha);
    }
    // Whether some non-empty proper subset wins; subsets have smaller masks.
    let mut sub_wins = vec![false; size];
    for mask in 1..size {
        let mut bits = mask;
        while bits != 0 {
            let bit = bits & bits.wrapping_neg();
            let sub = mask ^ bit;
            if sub != 0 && (winning[sub] || sub_wins[sub]) {
                sub_wins[mask] = true;
                break;
            }
            bits &= bits - 1;
        }
    }

    let mut best: Option<(u32, f64, Vec<u32>)> = None;
    let mut it = PartitionIterator::new(n)?;
    while let Some(masks) = it.next_masks() {
        if masks.iter().any(|&m| winning[m as usize] && sub_wins[m as usize]) {
            continue;
        }
        let covered: u32 = masks.iter().filter(|&&m| winning[m as usize]).map(|m| m.count_ones()).sum();
        let fa: f64 = masks
            .iter()
            .map(|&m| m.count_ones() as f64 * table.q_false_alarm[m as usize])
            .sum();
        let better = match &best {
            None => true,
            Some((c, f, _)) => covered > *c || (covered == *c && fa < *f),
        };
        if better {
            best = Some((covered, fa, masks));
        }
    }
    let (covered, _, masks) = best.expect("the all-singleton partition always qualifies");
    Ok(MaxWinningOutcome {
        partition: Partition::from_groups(net, &groups_of(&masks))?,
        winning_fraction: covered as f64 / n as f64,
        feasible: net.pf() < alpha,
    })
}
