use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{DetectionParams, Point};
use crate::error::{Error, Result};
use crate::formation::{run_round, FormationTrace, Mode};
use crate::game::{is_winning, Coalition, DetectionRequirement, Partition};
use crate::network::Network;
use crate::oracle::{centralized_max_winning, centralized_min_miss, MAX_WINNING_SEARCH};
use crate::scenario::ScenarioConfig;

/// Placement stream for trial `trial`: depends on the seed and the index only.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Positions i.i.d. uniform over the square, drawn from the trial's stream.
pub fn generate_positions(config: &ScenarioConfig, trial: usize) -> Vec<Point> {
    let mut rng = trial_rng(config.seed, trial);
    (0..config.n_sus)
        .map(|_| {
            let x = rng.random_range(0.0..=config.area_m);
            let y = rng.random_range(0.0..=config.area_m);
            Point::new(x, y)
        })
        .collect()
}

pub fn generate_network(config: &ScenarioConfig, trial: usize, params: DetectionParams) -> Result<Network> {
    Network::from_positions(
        &generate_positions(config, trial),
        config.su_tx_power_w(),
        config.pu_position(),
        config.channel_model()?,
        params,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    NonCooperative,
    Cf,
    CfPd,
    /// Minimum average miss over all partitions.
    OracleMinMiss,
    /// Most users in minimal winning coalitions over all partitions.
    OracleMaxWinning,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::NonCooperative,
        Algorithm::Cf,
        Algorithm::CfPd,
        Algorithm::OracleMinMiss,
        Algorithm::OracleMaxWinning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::NonCooperative => "non-cooperative",
            Algorithm::Cf => "cf",
            Algorithm::CfPd => "cf-pd",
            Algorithm::OracleMinMiss => "oracle-min-miss",
            Algorithm::OracleMaxWinning => "oracle-max-winning",
        }
    }
}

/// Metrics of one algorithm on one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub avg_miss_per_su: f64,
    pub avg_false_alarm_per_su: f64,
    /// `None` without a detection requirement.
    pub winning_fraction: Option<f64>,
    pub avg_coalition_size: f64,
    pub max_coalition_size: usize,
    pub merge_count: usize,
    pub split_count: usize,
    pub adjust_count: usize,
}

impl TrialMetrics {
    pub fn measure(partition: &Partition, trace: Option<&FormationTrace>, req: Option<&DetectionRequirement>, alpha: f64) -> Self {
        let coalitions = partition.coalitions();
        let n: usize = coalitions.iter().map(Coalition::len).sum();
        let winning_fraction = req.map(|r| {
            let w: usize = coalitions.iter().filter(|c| is_winning(c, r, alpha)).map(Coalition::len).sum();
            w as f64 / n.max(1) as f64
        });
        Self {
            avg_miss_per_su: partition.avg_miss(),
            avg_false_alarm_per_su: partition.avg_false_alarm(),
            winning_fraction,
            avg_coalition_size: n as f64 / coalitions.len().max(1) as f64,
            max_coalition_size: coalitions.iter().map(Coalition::len).max().unwrap_or(0),
            merge_count: trace.map_or(0, FormationTrace::merges),
            split_count: trace.map_or(0, FormationTrace::splits),
            adjust_count: trace.map_or(0, FormationTrace::adjusts),
        }
    }

    /// Checks the range invariants: probabilities in [0, 1], 1 ≤ avg ≤ max ≤ n.
    pub fn check(&self, n_sus: usize) -> bool {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        prob(self.avg_miss_per_su)
            && prob(self.avg_false_alarm_per_su)
            && self.winning_fraction.is_none_or(prob)
            && self.avg_coalition_size >= 1.0
            && self.avg_coalition_size <= self.max_coalition_size as f64 + 1e-12
            && self.max_coalition_size <= n_sus
    }
}

/// Outcome of one algorithm on one (trial, grid point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub grid_index: usize,
    pub pf: f64,
    pub lambda: f64,
    pub algorithm: Algorithm,
    pub outcome: std::result::Result<TrialMetrics, String>,
    /// Final groups, kept for callers that inspect partitions.
    #[serde(skip)]
    pub partition: Option<Partition>,
}

/// Runs every applicable algorithm on one network.
pub fn evaluate_network(
    net: &Network,
    config: &ScenarioConfig,
    trial: usize,
    grid_index: usize,
) -> Vec<TrialRecord> {
    let req = config.requirement.and_then(|r| DetectionRequirement::new(r.chi).ok());
    let alpha = net.alpha();
    let record = |algorithm: Algorithm, res: Result<(Partition, Option<FormationTrace>)>| {
        let (outcome, partition) = match res {
            Ok((p, t)) => (Ok(TrialMetrics::measure(&p, t.as_ref(), req.as_ref(), alpha)), Some(p)),
            Err(e) => (Err(e.to_string()), None),
        };
        TrialRecord {
            trial,
            grid_index,
            pf: net.pf(),
            lambda: net.params().lambda,
            algorithm,
            outcome,
            partition,
        }
    };
    let singletons = Partition::singletons(net);
    let mut out = vec![record(Algorithm::NonCooperative, Ok((singletons.clone(), None)))];
    let run = |mode: Mode| {
        run_round(&singletons, &config.formation_config(mode), net, 0).map(|o| (o.partition, Some(o.trace)))
    };
    out.push(record(Algorithm::Cf, run(Mode::Cf)));
    if req.is_some() {
        out.push(record(Algorithm::CfPd, run(Mode::CfPd)));
    }
    if net.len() <= config.oracle.max_n {
        out.push(record(
            Algorithm::OracleMinMiss,
            centralized_min_miss(net).map(|o| (o.partition, None)),
        ));
        if let Some(r) = &req {
            if net.len() <= MAX_WINNING_SEARCH {
                out.push(record(
                    Algorithm::OracleMaxWinning,
                    centralized_max_winning(net, r).map(|o| (o.partition, None)),
                ));
            }
        }
    }
    out
}

pub(crate) fn run_in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Domain(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Mean and 95% normal-approximation half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, ci95: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let ci95 = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, ci95, n }
    }

    pub fn lo(&self) -> f64 {
        self.mean - self.ci95
    }

    pub fn hi(&self) -> f64 {
        self.mean + self.ci95
    }
}

/// Aggregate of one algorithm at one grid point (`grid_index = None` pools the grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub grid_index: Option<usize>,
    pub pf: Option<f64>,
    pub lambda: Option<f64>,
    pub failures: usize,
    pub avg_miss_per_su: Estimate,
    pub avg_false_alarm_per_su: Estimate,
    pub winning_fraction: Option<Estimate>,
    pub avg_coalition_size: Estimate,
    pub max_coalition_size: Estimate,
    pub merge_count: Estimate,
    pub split_count: Estimate,
    pub adjust_count: Estimate,
}

fn summarize(algorithm: Algorithm, grid: Option<(usize, f64, f64)>, records: &[&TrialRecord]) -> SummaryRow {
    let ok: Vec<&TrialMetrics> = records.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let est = |f: &dyn Fn(&TrialMetrics) -> f64| Estimate::from_samples(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    let winning: Vec<f64> = ok.iter().filter_map(|m| m.winning_fraction).collect();
    SummaryRow {
        algorithm,
        grid_index: grid.map(|g| g.0),
        pf: grid.map(|g| g.1),
        lambda: grid.map(|g| g.2),
        failures: records.len() - ok.len(),
        avg_miss_per_su: est(&|m| m.avg_miss_per_su),
        avg_false_alarm_per_su: est(&|m| m.avg_false_alarm_per_su),
        winning_fraction: (!winning.is_empty()).then(|| Estimate::from_samples(&winning)),
        avg_coalition_size: est(&|m| m.avg_coalition_size),
        max_coalition_size: est(&|m| m.max_coalition_size as f64),
        merge_count: est(&|m| m.merge_count as f64),
        split_count: est(&|m| m.split_count as f64),
        adjust_count: est(&|m| m.adjust_count as f64),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Sorted by (trial, grid index, algorithm).
    pub records: Vec<TrialRecord>,
    /// Per algorithm: one row per grid point, then the pooled row.
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn row(&self, algorithm: Algorithm, grid_index: Option<usize>) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .find(|r| r.algorithm == algorithm && r.grid_index == grid_index)
    }

    /// One row per algorithm × grid point; `mean`/`ci95` column pairs per metric.
    pub fn write_summary_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Domain(format!("csv output failed: {e}"));
        let metrics = [
            "avg_miss_per_su",
            "avg_false_alarm_per_su",
            "winning_fraction",
            "avg_coalition_size",
            "max_coalition_size",
            "merge_count",
            "split_count",
            "adjust_count",
        ];
        let mut header = vec!["algorithm".to_string(), "pf".into(), "lambda".into(), "trials".into(), "failures".into()];
        for m in metrics {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_ci95"));
        }
        w.write_record(&header).map_err(io)?;
        let opt = |v: Option<f64>| v.map_or_else(|| "all".to_string(), |x| format!("{x:.6e}"));
        for r in &self.summary {
            let mut rec = vec![
                r.algorithm.name().to_string(),
                opt(r.pf),
                opt(r.lambda),
                r.avg_miss_per_su.n.to_string(),
                r.failures.to_string(),
            ];
            let ests = [
                Some(r.avg_miss_per_su),
                Some(r.avg_false_alarm_per_su),
                r.winning_fraction,
                Some(r.avg_coalition_size),
                Some(r.max_coalition_size),
                Some(r.merge_count),
                Some(r.split_count),
                Some(r.adjust_count),
            ];
            for e in ests {
                match e {
                    Some(e) => {
                        rec.push(format!("{:.9e}", e.mean));
                        rec.push(format!("{:.9e}", e.ci95));
                    }
                    None => {
                        rec.push(String::new());
                        rec.push(String::new());
                    }
                }
            }
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Domain(format!("csv output failed: {e}")))?;
        Ok(())
    }
}

/// Every trial × grid point, in parallel; results are reduced in trial order so
/// the report does not depend on the thread count.
pub fn run_experiment(config: &ScenarioConfig, threads: Option<usize>) -> Result<ExperimentReport> {
    config.validate()?;
    let grid = config.detection_grid()?;
    let channel = config.channel_model()?;
    let records: Vec<TrialRecord> = run_in_pool(threads, || {
        (0..config.trials)
            .into_par_iter()
            .flat_map_iter(|trial| {
                let positions = generate_positions(config, trial);
                grid.iter()
                    .enumerate()
                    .flat_map(|(g, params)| {
                        match Network::from_positions(&positions, config.su_tx_power_w(), config.pu_position(), channel, *params) {
                            Ok(net) => evaluate_network(&net, config, trial, g),
                            Err(e) => vec![TrialRecord {
                                trial,
                                grid_index: g,
                                pf: f64::NAN,
                                lambda: params.lambda,
                                algorithm: Algorithm::NonCooperative,
                                outcome: Err(e.to_string()),
                                partition: None,
                            }],
                        }
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    })?;
    let summary = aggregate(&records, grid.len());
    Ok(ExperimentReport { records, summary })
}

fn aggregate(records: &[TrialRecord], grid_len: usize) -> Vec<SummaryRow> {
    let mut summary = Vec::new();
    for alg in Algorithm::ALL {
        let of_alg: Vec<&TrialRecord> = records.iter().filter(|r| r.algorithm == alg).collect();
        if of_alg.is_empty() {
            continue;
        }
        for g in 0..grid_len {
            let at: Vec<&TrialRecord> = of_alg.iter().copied().filter(|r| r.grid_index == g).collect();
            if let Some(first) = at.first() {
                summary.push(summarize(alg, Some((g, first.pf, first.lambda)), &at));
            }
        }
        summary.push(summarize(alg, None, &of_alg));
    }
    summary
}

/// Per-instance comparison of the distributed algorithms with the oracles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub trial: usize,
    pub pf: f64,
    pub oracle_avg_miss: f64,
    pub cf_avg_miss: f64,
    pub oracle_avg_false_alarm: f64,
    pub cf_avg_false_alarm: f64,
    pub oracle_winning_fraction: Option<f64>,
    pub cfpd_winning_fraction: Option<f64>,
}

impl OracleComparison {
    pub fn miss_gap(&self) -> f64 {
        self.cf_avg_miss - self.oracle_avg_miss
    }

    pub fn winning_gap(&self) -> Option<f64> {
        Some(self.oracle_winning_fraction? - self.cfpd_winning_fraction?)
    }
}

/// Extracts the oracle comparisons from a report whose networks were small
/// enough for the oracles to run.
pub fn oracle_comparisons(report: &ExperimentReport) -> Vec<OracleComparison> {
    let find = |t: usize, g: usize, a: Algorithm| {
        report
            .records
            .iter()
            .find(|r| r.trial == t && r.grid_index == g && r.algorithm == a)
            .and_then(|r| r.outcome.as_ref().ok())
    };
    report
        .records
        .iter()
        .filter(|r| r.algorithm == Algorithm::OracleMinMiss)
        .filter_map(|r| {
            let oracle = r.outcome.as_ref().ok()?;
            let cf = find(r.trial, r.grid_index, Algorithm::Cf)?;
            Some(OracleComparison {
                trial: r.trial,
                pf: r.pf,
                oracle_avg_miss: oracle.avg_miss_per_su,
                cf_avg_miss: cf.avg_miss_per_su,
                oracle_avg_false_alarm: oracle.avg_false_alarm_per_su,
                cf_avg_false_alarm: cf.avg_false_alarm_per_su,
                oracle_winning_fraction: find(r.trial, r.grid_index, Algorithm::OracleMaxWinning)
                    .and_then(|m| m.winning_fraction),
                cfpd_winning_fraction: find(r.trial, r.grid_index, Algorithm::CfPd).and_then(|m| m.winning_fraction),
            })
        })
        .collect()
}

pub fn write_oracle_csv(rows: &[OracleComparison], out: impl Write) -> Result<()> {
    let io = |e: csv::Error| Error::Domain(format!("csv output failed: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "instance",
        "pf",
        "oracle_avg_miss",
        "cf_avg_miss",
        "miss_gap",
        "oracle_avg_false_alarm",
        "cf_avg_false_alarm",
        "oracle_winning_fraction",
        "cfpd_winning_fraction",
        "winning_gap",
    ])
    .map_err(io)?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9e}"));
    for r in rows {
        w.write_record([
            r.trial.to_string(),
            format!("{:.6e}", r.pf),
            format!("{:.9e}", r.oracle_avg_miss),
            format!("{:.9e}", r.cf_avg_miss),
            format!("{:.9e}", r.miss_gap()),
            format!("{:.9e}", r.oracle_avg_false_alarm),
            format!("{:.9e}", r.cf_avg_false_alarm),
            opt(r.oracle_winning_fraction),
            opt(r.cfpd_winning_fraction),
            opt(r.winning_gap()),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::Domain(format!("csv output failed: {e}")))?;
    Ok(())
}
