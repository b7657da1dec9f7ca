use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{Point, SuId};
use crate::error::{domain, Result};
use crate::formation::{run_round, FormationConfig, FormationTrace};
use crate::game::Partition;
use crate::network::Network;

/// Constant-speed random-direction motion inside the square `[0, side]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mobility {
    pub speed_mps: f64,
    pub area_side_m: f64,
}

impl Mobility {
    pub fn new(speed_mps: f64, area_side_m: f64) -> Result<Self> {
        if !(speed_mps >= 0.0 && speed_mps.is_finite()) {
            return Err(domain(format!("speed must be finite and non-negative, got {speed_mps}")));
        }
        if !(area_side_m > 0.0 && area_side_m.is_finite()) {
            return Err(domain(format!("area side must be positive, got {area_side_m}")));
        }
        Ok(Self { speed_mps, area_side_m })
    }

    pub fn from_kmh(speed_kmh: f64, area_side_m: f64) -> Result<Self> {
        Self::new(speed_kmh / 3.6, area_side_m)
    }

    /// Moves every point `speed · dt` in a fresh uniform direction, reflecting off the edges.
    pub fn step<R: Rng + ?Sized>(&self, positions: &[Point], dt: f64, rng: &mut R) -> Vec<Point> {
        let dist = self.speed_mps * dt;
        positions
            .iter()
            .map(|p| {
                let phi = rng.random_range(0.0..std::f64::consts::TAU);
                Point::new(
                    reflect(p.x + dist * phi.cos(), self.area_side_m),
                    reflect(p.y + dist * phi.sin(), self.area_side_m),
                )
            })
            .collect()
    }
}

fn reflect(mut v: f64, side: f64) -> f64 {
    let period = 2.0 * side;
    v = v.rem_euclid(period);
    if v > side {
        period - v
    } else {
        v
    }
}

/// State after one re-formation round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time_s: f64,
    pub positions: Vec<Point>,
    pub groups: Vec<Vec<SuId>>,
    pub merges: usize,
    pub splits: usize,
    pub adjusts: usize,
}

impl Snapshot {
    pub fn coalition_count(&self) -> usize {
        self.groups.len()
    }

    pub fn avg_size(&self) -> f64 {
        let n: usize = self.groups.iter().map(Vec::len).sum();
        n as f64 / self.groups.len().max(1) as f64
    }
}

/// Runs a formation round at t = 0 from singletons, then every `theta` seconds
/// moves the users and re-runs formation from the previous partition until
/// `duration` is reached. Returns one snapshot per round and the full trace.
pub fn periodic_reformation<R: Rng + ?Sized>(
    net: &Network,
    theta: f64,
    duration: f64,
    mobility: &Mobility,
    config: &FormationConfig,
    rng: &mut R,
) -> Result<(Vec<Snapshot>, FormationTrace)> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(domain(format!("re-formation period must be positive, got {theta}")));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(domain(format!("duration must be non-negative, got {duration}")));
    }
    let rounds = (duration / theta).floor() as usize;
    let mut net = net.clone();
    let mut partition = Partition::singletons(&net);
    let mut trace = FormationTrace::default();
    let mut snapshots = Vec::with_capacity(rounds + 1);
    for round in 0..=rounds {
        if round > 0 {
            let positions: Vec<Point> = net.users().iter().map(|u| u.position).collect();
            net = net.with_positions(&mobility.step(&positions, theta, rng))?;
            partition = partition.rescored(&net)?;
        }
        let outcome = run_round(&partition, config, &net, round)?;
        snapshots.push(Snapshot {
            time_s: round as f64 * theta,
            positions: net.users().iter().map(|u| u.position).collect(),
            groups: outcome.partition.canonical(),
            merges: outcome.trace.merges(),
            splits: outcome.trace.splits(),
            adjusts: outcome.trace.adjusts(),
        });
        trace.extend(outcome.trace);
        partition = outcome.partition;
    }
    Ok((snapshots, trace))
}
