use std::path::Path;

use coalition_sense::formation::{run_round, Class, FormationTrace, Mode};
use coalition_sense::scenario::{
    generate_network, oracle_comparisons, run_experiment, run_mobility_experiment, write_oracle_csv, ScenarioConfig,
    TrialMetrics,
};
use coalition_sense::theory::{
    distance_for_miss, is_dc_stable, is_dhp_stable, merge_distance_threshold, merge_error_threshold_approx,
    merge_error_threshold_exact, merge_region_angle, theorem1_grid, DcVerdict, Distance, MergeScope,
    MAX_STABILITY_CHECK,
};
use coalition_sense::{DetectionParams, Partition, Point, SuId};
use serde::Serialize;

use crate::output::emit;
use crate::CliError;

const EXACT_TOL: f64 = 1e-12;

fn csv_err(e: csv::Error) -> CliError {
    CliError::Runtime(format!("csv output failed: {e}"))
}

fn json_err(e: serde_json::Error) -> CliError {
    CliError::Runtime(format!("json output failed: {e}"))
}

#[derive(Serialize)]
struct UserView {
    id: SuId,
    position_m: Point,
    pm: f64,
}

#[derive(Serialize)]
struct CoalitionView {
    members: Vec<SuId>,
    head: SuId,
    q_miss: f64,
    q_false_alarm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    class: Option<Class>,
}

#[derive(Serialize)]
struct Outcome {
    metrics: TrialMetrics,
    coalitions: Vec<CoalitionView>,
}

#[derive(Serialize)]
struct Snapshot<'a> {
    trial: usize,
    pf: f64,
    lambda: f64,
    pu_position_m: Point,
    users: Vec<UserView>,
    cf: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    cf_pd: Option<Outcome>,
    config: &'a ScenarioConfig,
}

fn outcome(partition: &Partition, trace: &FormationTrace, classes: &[Class], config: &ScenarioConfig, alpha: f64) -> Result<Outcome, CliError> {
    let req = config.requirement()?;
    let coalitions = partition
        .coalitions()
        .iter()
        .enumerate()
        .map(|(k, c)| CoalitionView {
            members: c.members().to_vec(),
            head: c.head(),
            q_miss: c.q_miss(),
            q_false_alarm: c.q_false_alarm(),
            class: classes.get(k).copied(),
        })
        .collect();
    Ok(Outcome {
        metrics: TrialMetrics::measure(partition, Some(trace), req.as_ref(), alpha),
        coalitions,
    })
}

pub fn run(config: &ScenarioConfig, trial: usize, out: Option<&Path>, trace_path: Option<&Path>) -> Result<(), CliError> {
    let params = config.single_detection()?;
    let net = generate_network(config, trial, params)?;
    let start = Partition::singletons(&net);
    let cf = run_round(&start, &config.formation_config(Mode::Cf), &net, 0)?;
    let cf_pd = match config.requirement {
        Some(_) => Some(run_round(&start, &config.formation_config(Mode::CfPd), &net, 0)?),
        None => None,
    };
    let snapshot = Snapshot {
        trial,
        pf: net.pf(),
        lambda: net.params().lambda,
        pu_position_m: net.pu_position(),
        users: net
            .ids()
            .map(|id| UserView {
                id,
                position_m: net.position(id),
                pm: net.pm(id),
            })
            .collect(),
        cf: outcome(&cf.partition, &cf.trace, &[], config, net.alpha())?,
        cf_pd: cf_pd
            .as_ref()
            .map(|o| outcome(&o.partition, &o.trace, &o.classes, config, net.alpha()))
            .transpose()?,
        config,
    };
    if let Some(path) = trace_path {
        emit(Some(path), |w| cf.trace.write_json_lines(w).map_err(|e| CliError::io(path, e)))?;
    }
    emit(out, |w| {
        serde_json::to_writer_pretty(&mut *w, &snapshot).map_err(json_err)?;
        writeln!(w).map_err(|e| CliError::io("output", e))
    })
}

pub fn sweep(config: &ScenarioConfig, threads: Option<usize>, out: Option<&Path>, json: Option<&Path>) -> Result<(), CliError> {
    let report = run_experiment(config, threads)?;
    if let Some(path) = json {
        emit(Some(path), |w| {
            serde_json::to_writer_pretty(&mut *w, &report.summary).map_err(json_err)?;
            writeln!(w).map_err(|e| CliError::io(path, e))
        })?;
    }
    emit(out, |w| Ok(report.write_summary_csv(w)?))
}

pub fn mobility(config: &ScenarioConfig, threads: Option<usize>, out: Option<&Path>, series: Option<&Path>) -> Result<(), CliError> {
    let report = run_mobility_experiment(config, threads)?;
    if let Some(path) = series {
        emit(Some(path), |w| Ok(report.write_series_csv(w)?))?;
    }
    emit(out, |w| Ok(report.write_rates_csv(w)?))
}

pub fn oracle_compare(config: &ScenarioConfig, threads: Option<usize>, out: Option<&Path>) -> Result<(), CliError> {
    if config.n_sus > config.oracle.max_n {
        return Err(CliError::config(
            "n_sus",
            format!("oracle comparison needs n_sus <= oracle.max_n = {}, got {}", config.oracle.max_n, config.n_sus),
        ));
    }
    let report = run_experiment(config, threads)?;
    let rows = oracle_comparisons(&report);
    emit(out, |w| Ok(write_oracle_csv(&rows, w)?))
}

#[derive(Serialize)]
struct Theorem1Row {
    pm_i: f64,
    pm_j: f64,
    pf: f64,
    alpha: f64,
    p_e_approx: f64,
    p_e_exact: f64,
    /// Empty when the threshold admits any distance.
    d_approx_m: Option<f64>,
    /// Empty when either miss probability has no finite distance from the PU.
    angle_deg: Option<f64>,
}

/// Threshold table over the standard grid, or over the configured `pf` alone.
pub fn theorem1_table(config: &ScenarioConfig, out: Option<&Path>) -> Result<(), CliError> {
    let d = &config.detection;
    let channel = config.channel_model()?;
    let grid = theorem1_grid();
    let points: Vec<(f64, f64, f64)> = match d.pf {
        None => grid.into_iter().filter(|p| p.2 < d.alpha).collect(),
        Some(pf) => {
            let first = grid[0].2;
            grid.into_iter().filter(|p| p.2 == first).map(|(i, j, _)| (i, j, pf)).collect()
        }
    };
    if points.is_empty() {
        return Err(CliError::config("detection.alpha", "no table false-alarm level lies below alpha"));
    }
    let mut rows = Vec::new();
    let mut current: Option<(f64, DetectionParams)> = None;
    for (pm_i, pm_j, pf) in points {
        let params = match current {
            Some((at, p)) if at == pf => p,
            _ => current.insert((pf, DetectionParams::for_false_alarm(d.m, pf, d.alpha)?)).1,
        };
        let approx = merge_error_threshold_approx(pm_i, pm_j, pf, d.alpha)?;
        let exact = merge_error_threshold_exact(pm_i, pm_j, pf, d.alpha, EXACT_TOL)?;
        let reach = merge_distance_threshold(approx, config.su_tx_power_w(), &channel)?;
        let angle = match (distance_for_miss(pm_i, &params, &channel), distance_for_miss(pm_j, &params, &channel)) {
            (Ok(d1), Ok(r2)) => Some(match reach {
                Distance::Finite(dt) if dt > 0.0 => merge_region_angle(d1, r2, dt),
                Distance::Finite(_) => 0.0,
                Distance::Unbounded => 360.0,
            }),
            _ => None,
        };
        rows.push(Theorem1Row {
            pm_i,
            pm_j,
            pf,
            alpha: d.alpha,
            p_e_approx: approx,
            p_e_exact: exact,
            d_approx_m: reach.meters(),
            angle_deg: angle,
        });
    }
    emit(out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &rows {
            csv.serialize(r).map_err(csv_err)?;
        }
        csv.flush().map_err(|e| CliError::io("output", e))
    })
}

#[derive(Serialize)]
struct StabilityRow {
    trial: usize,
    pf: f64,
    coalitions: usize,
    max_coalition_size: usize,
    dhp_pairwise: bool,
    dhp_all_subsets: bool,
    /// `stable`, `unstable` or `not-applicable`.
    dc: &'static str,
}

/// Certifies the CF output of every trial and grid point.
pub fn stability_check(config: &ScenarioConfig, out: Option<&Path>) -> Result<(), CliError> {
    if config.n_sus > MAX_STABILITY_CHECK {
        return Err(CliError::config(
            "n_sus",
            format!("stability checks need n_sus <= {MAX_STABILITY_CHECK}, got {}", config.n_sus),
        ));
    }
    let eps = config.formation.epsilon;
    let cf = config.formation_config(Mode::Cf);
    let mut rows = Vec::new();
    for params in config.detection_grid()? {
        for trial in 0..config.trials {
            let net = generate_network(config, trial, params)?;
            let p = run_round(&Partition::singletons(&net), &cf, &net, 0)?.partition;
            let dc = match is_dc_stable(&p, &net, eps)? {
                DcVerdict::Stable => "stable",
                DcVerdict::Unstable(_) => "unstable",
                DcVerdict::NotApplicable => "not-applicable",
            };
            rows.push(StabilityRow {
                trial,
                pf: net.pf(),
                coalitions: p.len(),
                max_coalition_size: p.coalitions().iter().map(|c| c.len()).max().unwrap_or(0),
                dhp_pairwise: is_dhp_stable(&p, &net, MergeScope::Pairwise, eps)?,
                dhp_all_subsets: is_dhp_stable(&p, &net, MergeScope::AllSubsets, eps)?,
                dc,
            });
        }
    }
    emit(out, |w| {
        let mut csv = csv::Writer::from_writer(w);
        for r in &rows {
            csv.serialize(r).map_err(csv_err)?;
        }
        csv.flush().map_err(|e| CliError::io("output", e))
    })
}
