//! Canonical first-improving split search.

use crate::detection::SuId;
use crate::game::{Coalition, Value, MAX_EXHAUSTIVE_COALITION};
use crate::network::Network;

/// Returns the first partition of `c` (more than one block; ordered by block
/// count, then restricted-growth string) that no member dislikes and at least
/// one member strictly prefers. Coalitions larger than
/// [`MAX_EXHAUSTIVE_COALITION`] are never split.
pub fn find_split(c: &Coalition, net: &Network, eps: f64) -> Option<Vec<Coalition>> {
    let s = c.len();
    if !(2..=MAX_EXHAUSTIVE_COALITION).contains(&s) {
        return None;
    }
    let alpha = net.alpha();
    let current = c.value(alpha);
    let members = c.members();
    let full = (1usize << s) - 1;

    // ok[m]: the sub-coalition on mask m leaves none of its members worse off.
    let mut ok = vec![false; full + 1];
    let mut gain = vec![false; full + 1];
    for mask in 1..full {
        let v = sub_value(net, members, mask);
        ok[mask] = v >= current;
        gain[mask] = v.exceeds(current, eps);
    }
    // ext[m]: some acceptable block contains m, so a partial block can still be completed.
    let mut ext = ok.clone();
    for mask in (1..full).rev() {
        if ext[mask] {
            continue;
        }
        let mut rest = full & !mask;
        while rest != 0 {
            let bit = rest & rest.wrapping_neg();
            if ext[mask | bit] {
                ext[mask] = true;
                break;
            }
            rest &= rest - 1;
        }
    }

    let mut search = Search {
        s,
        ok: &ok,
        gain: &gain,
        ext: &ext,
        blocks: Vec::with_capacity(s),
    };
    for k in 2..=s {
        if search.assign(0, k) {
            let blocks = search.blocks.iter().map(|&mask| members_of(members, mask)).collect::<Vec<_>>();
            return Some(blocks.into_iter().map(|m| net.coalition_unchecked(m)).collect());
        }
    }
    None
}

fn members_of(members: &[SuId], mask: usize) -> Vec<SuId> {
    (0..members.len()).filter(|i| mask & (1 << i) != 0).map(|i| members[i]).collect()
}

fn sub_value(net: &Network, members: &[SuId], mask: usize) -> Value {
    net.coalition_unchecked(members_of(members, mask)).value(net.alpha())
}

struct Search<'a> {
    s: usize,
    ok: &'a [bool],
    gain: &'a [bool],
    ext: &'a [bool],
    blocks: Vec<usize>,
}

impl Search<'_> {
    /// Depth-first over restricted-growth strings with exactly `k` blocks.
    fn assign(&mut self, i: usize, k: usize) -> bool {
        if i == self.s {
            return self.blocks.len() == k
                && self.blocks.iter().all(|&b| self.ok[b])
                && self.blocks.iter().any(|&b| self.gain[b]);
        }
        if self.blocks.len() + (self.s - i) < k {
            return false;
        }
        let bit = 1usize << i;
        for b in 0..self.blocks.len() {
            self.blocks[b] |= bit;
            if self.ext[self.blocks[b]] && self.assign(i + 1, k) {
                return true;
            }
            self.blocks[b] &= !bit;
        }
        if self.blocks.len() < k && self.ext[bit] {
            self.blocks.push(bit);
            if self.assign(i + 1, k) {
                return true;
            }
            self.blocks.pop();
        }
        false
    }
}
