//! The evaluation context every coalition is scored against: user positions,
//! channel constants, detector settings and the cached per-user and per-link
//! probabilities derived from them.

use serde::{Deserialize, Serialize};

use crate::detection::{
    avg_snr, coalition_false_alarm, coalition_miss, prob_false_alarm_noncoop, prob_miss_noncoop,
    prob_reporting_error, ChannelModel, DetectionParams, Point, SecondaryUser, SuId,
};
use crate::error::{domain, structural, Result};
use crate::game::Coalition;

/// How a head is chosen among members tied at the lowest miss probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "seed")]
pub enum HeadTieBreak {
    #[default]
    LowestId,
    /// Pseudo-random but reproducible: a hash of the seed and the member set.
    SeededRandom(u64),
}

#[derive(Debug, Clone)]
pub struct Network {
    users: Vec<SecondaryUser>,
    pu_position: Point,
    channel: ChannelModel,
    params: DetectionParams,
    pf: f64,
    miss: Vec<f64>,
    /// Row-major `n × n`: entry `[from * n + to]` is the error of `from`'s bit at `to`.
    report_error: Vec<f64>,
    tie_break: HeadTieBreak,
}

fn snr_or_infinite(power: f64, distance: f64, channel: &ChannelModel) -> Result<f64> {
    if distance == 0.0 {
        Ok(f64::INFINITY)
    } else {
        avg_snr(power, distance, channel)
    }
}

impl Network {
    /// Builds the context. User `i` must carry id `SuId(i)`.
    pub fn new(
        users: Vec<SecondaryUser>,
        pu_position: Point,
        channel: ChannelModel,
        params: DetectionParams,
    ) -> Result<Self> {
        for (i, u) in users.iter().enumerate() {
            if u.id != SuId(i) {
                return Err(structural(format!("user at index {i} has id {}", u.id)));
            }
            if !(u.report_tx_power > 0.0) {
                return Err(domain(format!("user {i} has non-positive report power")));
            }
        }
        let n = users.len();
        let pf = prob_false_alarm_noncoop(&params);
        let miss = users
            .iter()
            .map(|u| {
                let snr = snr_or_infinite(channel.pu_tx_power, u.position.distance(&pu_position), &channel)?;
                prob_miss_noncoop(snr, &params)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut report_error = vec![0.0; n * n];
        for from in &users {
            for to in &users {
                if from.id == to.id {
                    continue;
                }
                let d = from.position.distance(&to.position);
                let snr = snr_or_infinite(from.report_tx_power, d, &channel)?;
                report_error[from.id.0 * n + to.id.0] = prob_reporting_error(snr)?;
            }
        }
        Ok(Self {
            users,
            pu_position,
            channel,
            params,
            pf,
            miss,
            report_error,
            tie_break: HeadTieBreak::LowestId,
        })
    }

    /// Convenience constructor with a common reporting power.
    pub fn from_positions(
        positions: &[Point],
        report_tx_power: f64,
        pu_position: Point,
        channel: ChannelModel,
        params: DetectionParams,
    ) -> Result<Self> {
        let users = positions
            .iter()
            .enumerate()
            .map(|(i, &position)| SecondaryUser {
                id: SuId(i),
                position,
                report_tx_power,
            })
            .collect();
        Self::new(users, pu_position, channel, params)
    }

    pub fn with_tie_break(mut self, tie_break: HeadTieBreak) -> Self {
        self.tie_break = tie_break;
        self
    }

    /// Same users and channel, different detector settings.
    pub fn with_params(&self, params: DetectionParams) -> Result<Self> {
        Ok(Self::new(self.users.clone(), self.pu_position, self.channel, params)?.with_tie_break(self.tie_break))
    }

    /// Same everything, users relocated.
    pub fn with_positions(&self, positions: &[Point]) -> Result<Self> {
        if positions.len() != self.users.len() {
            return Err(structural("position count does not match user count"));
        }
        let users = self
            .users
            .iter()
            .zip(positions)
            .map(|(u, &position)| SecondaryUser { position, ..*u })
            .collect();
        Ok(Self::new(users, self.pu_position, self.channel, self.params)?.with_tie_break(self.tie_break))
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn users(&self) -> &[SecondaryUser] {
        &self.users
    }

    pub fn ids(&self) -> impl Iterator<Item = SuId> + '_ {
        self.users.iter().map(|u| u.id)
    }

    pub fn position(&self, id: SuId) -> Point {
        self.users[id.0].position
    }

    pub fn pu_position(&self) -> Point {
        self.pu_position
    }

    pub fn channel(&self) -> &ChannelModel {
        &self.channel
    }

    pub fn params(&self) -> &DetectionParams {
        &self.params
    }

    pub fn alpha(&self) -> f64 {
        self.params.alpha
    }

    /// Non-cooperative false alarm, identical for every user.
    pub fn pf(&self) -> f64 {
        self.pf
    }

    /// Non-cooperative miss probability of one user.
    pub fn pm(&self, id: SuId) -> f64 {
        self.miss[id.0]
    }

    /// Error probability of `from`'s sensing bit as received by `to`.
    pub fn report_error(&self, from: SuId, to: SuId) -> f64 {
        self.report_error[from.0 * self.users.len() + to.0]
    }

    pub fn distance(&self, a: SuId, b: SuId) -> f64 {
        self.position(a).distance(&self.position(b))
    }

    fn head_of(&self, members: &[SuId]) -> SuId {
        let best = members
            .iter()
            .map(|&id| self.pm(id))
            .fold(f64::INFINITY, f64::min);
        let tied = members.iter().copied().filter(|&id| self.pm(id) == best);
        match self.tie_break {
            HeadTieBreak::LowestId => tied.min().expect("non-empty coalition"),
            HeadTieBreak::SeededRandom(seed) => {
                let mut tied: Vec<SuId> = tied.collect();
                tied.sort();
                if tied.len() == 1 {
                    return tied[0];
                }
                let mut h = seed;
                for id in members {
                    h = splitmix64(h ^ id.0 as u64);
                }
                tied[(h % tied.len() as u64) as usize]
            }
        }
    }

    /// Scores a member set: picks the head and computes the OR-rule miss and
    /// false-alarm probabilities. Member order does not matter.
    pub fn coalition(&self, members: &[SuId]) -> Result<Coalition> {
        if members.is_empty() {
            return Err(domain("a coalition needs at least one member"));
        }
        let mut sorted = members.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(structural("duplicate member in coalition"));
        }
        if let Some(bad) = sorted.iter().find(|id| id.0 >= self.users.len()) {
            return Err(structural(format!("unknown user {bad}")));
        }
        Ok(self.coalition_unchecked(sorted))
    }

    /// As [`Network::coalition`] for an already sorted, duplicate-free, in-range member list.
    pub(crate) fn coalition_unchecked(&self, members: Vec<SuId>) -> Coalition {
        let head = self.head_of(&members);
        let (q_miss, q_false_alarm) = self.fused_probabilities(&members, head);
        Coalition::from_parts(members, head, q_miss, q_false_alarm)
    }

    pub(crate) fn fused_probabilities(&self, members: &[SuId], head: SuId) -> (f64, f64) {
        let others: Vec<SuId> = members.iter().copied().filter(|&id| id != head).collect();
        let pms: Vec<f64> = others.iter().map(|&id| self.pm(id)).collect();
        let pes: Vec<f64> = others.iter().map(|&id| self.report_error(id, head)).collect();
        let qm = coalition_miss(self.pm(head), &pms, &pes).expect("cached probabilities are valid");
        let qf = coalition_false_alarm(self.pf, &pes).expect("cached probabilities are valid");
        (qm, qf)
    }

    pub fn singleton(&self, id: SuId) -> Coalition {
        self.coalition_unchecked(vec![id])
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_network() -> Network {
        let params = DetectionParams::for_false_alarm(5, 0.01, 0.1).unwrap();
        let pts = [Point::new(1400.0, 0.0), Point::new(1600.0, 0.0), Point::new(2000.0, 0.0)];
        Network::from_positions(&pts, 0.01, Point::new(0.0, 0.0), ChannelModel::default(), params).unwrap()
    }

    #[test]
    fn head_is_closest_to_pu() {
        let net = line_network();
        let c = net.coalition(&[SuId(2), SuId(0), SuId(1)]).unwrap();
        assert_eq!(c.head(), SuId(0));
        assert_eq!(c.members(), &[SuId(0), SuId(1), SuId(2)]);
    }

    #[test]
    fn singleton_matches_noncooperative_values() {
        let net = line_network();
        for id in net.ids() {
            let c = net.singleton(id);
            assert_eq!(c.q_miss(), net.pm(id));
            assert!((c.q_false_alarm() - net.pf()).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_member_lists() {
        let net = line_network();
        assert!(net.coalition(&[]).is_err());
        assert!(net.coalition(&[SuId(0), SuId(0)]).is_err());
        assert!(net.coalition(&[SuId(7)]).is_err());
    }

    #[test]
    fn seeded_tie_break_is_reproducible_and_picks_a_tied_member() {
        let params = DetectionParams::for_false_alarm(5, 0.01, 0.1).unwrap();
        // Four users on a circle around the PU share the same miss probability.
        let pts = [
            Point::new(1000.0, 0.0),
            Point::new(0.0, 1000.0),
            Point::new(-1000.0, 0.0),
            Point::new(0.0, -1000.0),
        ];
        let net = Network::from_positions(&pts, 0.01, Point::default(), ChannelModel::default(), params)
            .unwrap()
            .with_tie_break(HeadTieBreak::SeededRandom(7));
        let members: Vec<SuId> = net.ids().collect();
        let tied: Vec<SuId> = members.iter().copied().filter(|&id| net.pm(id) == net.pm(SuId(0))).collect();
        let a = net.coalition(&members).unwrap().head();
        let b = net.coalition(&members).unwrap().head();
        assert_eq!(a, b);
        assert!(tied.contains(&a));
    }
}
