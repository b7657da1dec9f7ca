use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{periodic_reformation, Mobility, Mode, Snapshot};
use crate::scenario::experiment::{generate_network, run_in_pool, Algorithm, Estimate};
use crate::scenario::ScenarioConfig;

/// Offset separating the movement streams from the placement streams.
const MOBILITY_STREAM_SALT: u64 = 0x6D6F_6269_6C69_7479;

/// Per-trial movement stream; identical for every algorithm and speed so
/// comparisons are paired.
pub fn mobility_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ MOBILITY_STREAM_SALT);
    rng.set_stream(trial as u64);
    rng
}

/// Operations per minute after the initial formation round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperationRates {
    pub merges_per_min: f64,
    pub splits_per_min: f64,
    pub adjusts_per_min: f64,
}

impl OperationRates {
    pub fn from_snapshots(snapshots: &[Snapshot], theta: f64) -> Self {
        let later = snapshots.get(1..).unwrap_or(&[]);
        let minutes = later.len() as f64 * theta / 60.0;
        let rate = |f: fn(&Snapshot) -> usize| {
            if minutes > 0.0 {
                later.iter().map(f).sum::<usize>() as f64 / minutes
            } else {
                0.0
            }
        };
        Self {
            merges_per_min: rate(|s| s.merges),
            splits_per_min: rate(|s| s.splits),
            adjusts_per_min: rate(|s| s.adjusts),
        }
    }

    pub fn merge_split_per_min(&self) -> f64 {
        self.merges_per_min + self.splits_per_min
    }

    pub fn total_per_min(&self) -> f64 {
        self.merges_per_min + self.splits_per_min + self.adjusts_per_min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityRun {
    pub speed_kmh: f64,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub snapshots: Vec<Snapshot>,
    pub rates: OperationRates,
}

/// Aggregates per speed and algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilitySummary {
    pub speed_kmh: f64,
    pub algorithm: Algorithm,
    pub merges_per_min: Estimate,
    pub splits_per_min: Estimate,
    pub adjusts_per_min: Estimate,
    pub merge_split_per_min: Estimate,
    pub total_per_min: Estimate,
    /// Mean coalition count at each round.
    pub coalition_count: Vec<f64>,
    /// Mean coalition size at each round.
    pub avg_size: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobilityReport {
    pub theta_s: f64,
    pub runs: Vec<MobilityRun>,
    pub summary: Vec<MobilitySummary>,
}

impl MobilityReport {
    pub fn get(&self, speed_kmh: f64, algorithm: Algorithm) -> Option<&MobilitySummary> {
        self.summary
            .iter()
            .find(|s| s.speed_kmh == speed_kmh && s.algorithm == algorithm)
    }

    /// Per-minute operation rates, one row per speed × algorithm.
    pub fn write_rates_csv(&self, out: impl Write) -> Result<()> {
        let io = |e: csv::Error| Error::Domain(format!("csv output failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "speed_kmh",
            "algorithm",
            "trials",
            "merges_per_min_mean",
            "merges_per_min_ci95",
            "splits_per_min_mean",
            "splits_per_min_ci95",
            "adjusts_per_min_mean",
            "adjusts_per_min_ci95",
            "total_per_min_mean",
            "total_per_min_ci95",
        ])
        .map_err(io)?;
        for s in &self.summary {
            let mut rec = vec![format!("{}", s.speed_kmh), s.algorithm.name().to_string(), s.total_per_min.n.to_string()];
            for e in [s.merges_per_min, s.splits_per_min, s.adjusts_per_min, s.total_per_min] {
                rec.push(format!("{:.9e}", e.mean));
                rec.push(format!("{:.9e}", e.ci95));
            }
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Domain(format!("csv output failed: {e}")))?;
        Ok(())
    }

    /// Mean coalition count and size per round, one row per speed × algorithm × round.
    pub fn write_series_csv(&self, out: impl Write) -> Result<()> {
        let io = |e: csv::Error| Error::Domain(format!("csv output failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["speed_kmh", "algorithm", "time_s", "coalitions_mean", "avg_size_mean"])
            .map_err(io)?;
        for s in &self.summary {
            for (k, (c, a)) in s.coalition_count.iter().zip(&s.avg_size).enumerate() {
                w.write_record([
                    format!("{}", s.speed_kmh),
                    s.algorithm.name().to_string(),
                    format!("{}", k as f64 * self.theta_s),
                    format!("{c:.9e}"),
                    format!("{a:.9e}"),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Domain(format!("csv output failed: {e}")))?;
        Ok(())
    }
}

/// Periodic re-formation for every speed, trial and algorithm (CF, plus CF-PD
/// when a requirement is set).
pub fn run_mobility_experiment(config: &ScenarioConfig, threads: Option<usize>) -> Result<MobilityReport> {
    config.validate()?;
    let params = config.single_detection()?;
    let mut algorithms = vec![(Algorithm::Cf, Mode::Cf)];
    if config.requirement.is_some() {
        algorithms.push((Algorithm::CfPd, Mode::CfPd));
    }
    let jobs: Vec<(f64, Algorithm, Mode, usize)> = config
        .mobility_speeds_kmh
        .iter()
        .flat_map(|&v| algorithms.iter().flat_map(move |&(a, m)| (0..config.trials).map(move |t| (v, a, m, t))))
        .collect();
    let runs: Vec<MobilityRun> = run_in_pool(threads, || {
        jobs.par_iter()
            .map(|&(speed, algorithm, mode, trial)| -> Result<MobilityRun> {
                let net = generate_network(config, trial, params)?;
                let mobility = Mobility::from_kmh(speed, config.area_m)?;
                let mut rng = mobility_rng(config.seed, trial);
                let formation = config.formation_config(mode);
                let (snapshots, _) =
                    periodic_reformation(&net, config.theta_s, config.duration_s, &mobility, &formation, &mut rng)?;
                Ok(MobilityRun {
                    speed_kmh: speed,
                    algorithm,
                    trial,
                    rates: OperationRates::from_snapshots(&snapshots, config.theta_s),
                    snapshots,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;

    let mut summary = Vec::new();
    for &speed in &config.mobility_speeds_kmh {
        for &(algorithm, _) in &algorithms {
            let of: Vec<&MobilityRun> = runs
                .iter()
                .filter(|r| r.speed_kmh == speed && r.algorithm == algorithm)
                .collect();
            let est = |f: &dyn Fn(&OperationRates) -> f64| {
                Estimate::from_samples(&of.iter().map(|r| f(&r.rates)).collect::<Vec<_>>())
            };
            let rounds = of.first().map_or(0, |r| r.snapshots.len());
            let mean_at = |k: usize, f: fn(&Snapshot) -> f64| of.iter().map(|r| f(&r.snapshots[k])).sum::<f64>() / of.len() as f64;
            summary.push(MobilitySummary {
                speed_kmh: speed,
                algorithm,
                merges_per_min: est(&|r| r.merges_per_min),
                splits_per_min: est(&|r| r.splits_per_min),
                adjusts_per_min: est(&|r| r.adjusts_per_min),
                merge_split_per_min: est(&|r| r.merge_split_per_min()),
                total_per_min: est(&|r| r.total_per_min()),
                coalition_count: (0..rounds).map(|k| mean_at(k, |s| s.coalition_count() as f64)).collect(),
                avg_size: (0..rounds).map(|k| mean_at(k, Snapshot::avg_size)).collect(),
            });
        }
    }
    Ok(MobilityReport {
        theta_s: config.theta_s,
        runs,
        summary,
    })
}
