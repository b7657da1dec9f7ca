use serde::{Deserialize, Serialize};

use crate::detection::{dbm_to_watts, threshold_for_false_alarm, ChannelModel, DetectionParams, Point};
use crate::error::{config, Error, Result};
use crate::formation::{FormationConfig, Mode, OrderPolicy};
use crate::game::{DetectionRequirement, DEFAULT_EPSILON};

/// Experiment description. Field names carry their units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_sus: usize,
    /// Side of the square deployment area.
    pub area_m: f64,
    /// Defaults to the center of the area.
    pub pu_position_m: Option<[f64; 2]>,
    pub channel: ChannelConfig,
    /// Reporting power of every user.
    pub su_tx_power_mw: f64,
    pub detection: DetectionConfig,
    /// Enables CF-PD and the winning-fraction metric.
    pub requirement: Option<RequirementConfig>,
    /// Re-formation period.
    pub theta_s: f64,
    /// Speeds swept by the mobility experiment.
    pub mobility_speeds_kmh: Vec<f64>,
    pub duration_s: f64,
    pub trials: usize,
    pub seed: u64,
    pub formation: FormationSettings,
    pub oracle: OracleSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub kappa: f64,
    pub mu: f64,
    pub noise_power_dbm: f64,
    pub pu_tx_power_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionConfig {
    /// Time-bandwidth product.
    pub m: u32,
    pub alpha: f64,
    /// A single false-alarm target; takes precedence over the sweep.
    pub pf: Option<f64>,
    /// A single energy threshold; takes precedence over the sweep.
    pub lambda: Option<f64>,
    pub pf_sweep: PfSweep,
}

/// Geometrically spaced false-alarm targets from `lo` to `hi` inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PfSweep {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementConfig {
    pub chi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationSettings {
    pub discovery_radius_m: Option<f64>,
    pub order: OrderPolicy,
    pub epsilon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSettings {
    /// Centralized baselines run only when `n_sus` is at most this.
    pub max_n: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_sus: 50,
            area_m: 3000.0,
            pu_position_m: None,
            channel: ChannelConfig::default(),
            su_tx_power_mw: 10.0,
            detection: DetectionConfig::default(),
            requirement: Some(RequirementConfig { chi: 0.95 }),
            theta_s: 5.0,
            mobility_speeds_kmh: vec![0.0, 30.0, 60.0, 120.0],
            duration_s: 300.0,
            trials: 200,
            seed: 1,
            formation: FormationSettings::default(),
            oracle: OracleSettings::default(),
        }
    }
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            mu: 3.0,
            noise_power_dbm: -90.0,
            pu_tx_power_mw: 100.0,
        }
    }
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            m: 5,
            alpha: 0.1,
            pf: None,
            lambda: None,
            pf_sweep: PfSweep::default(),
        }
    }
}

impl Default for PfSweep {
    fn default() -> Self {
        Self {
            lo: 1e-3,
            hi: 0.09,
            points: 10,
        }
    }
}

impl Default for FormationSettings {
    fn default() -> Self {
        Self {
            discovery_radius_m: None,
            order: OrderPolicy::IdOrder,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { max_n: 7 }
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(config(field, format!("must be positive and finite, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config("<json>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sus == 0 {
            return Err(config("n_sus", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(config("trials", "must be at least 1"));
        }
        positive("area_m", self.area_m)?;
        positive("su_tx_power_mw", self.su_tx_power_mw)?;
        positive("theta_s", self.theta_s)?;
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(config("duration_s", format!("must be non-negative, got {}", self.duration_s)));
        }
        if let Some([x, y]) = self.pu_position_m {
            if !(x.is_finite() && y.is_finite()) {
                return Err(config("pu_position_m", "coordinates must be finite"));
            }
        }
        if let Some(&v) = self.mobility_speeds_kmh.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(config("mobility_speeds_kmh", format!("speeds must be non-negative, got {v}")));
        }
        self.channel_model()?;
        self.requirement()?;
        self.formation_config(Mode::Cf).validate()?;
        self.detection_grid()?;
        Ok(())
    }

    pub fn pu_position(&self) -> Point {
        match self.pu_position_m {
            Some([x, y]) => Point::new(x, y),
            None => Point::new(self.area_m / 2.0, self.area_m / 2.0),
        }
    }

    pub fn su_tx_power_w(&self) -> f64 {
        self.su_tx_power_mw * 1e-3
    }

    pub fn channel_model(&self) -> Result<ChannelModel> {
        let c = &self.channel;
        ChannelModel::new(c.kappa, c.mu, dbm_to_watts(c.noise_power_dbm), c.pu_tx_power_mw * 1e-3).map_err(|e| relabel("channel", e))
    }

    pub fn requirement(&self) -> Result<Option<DetectionRequirement>> {
        self.requirement
            .map(|r| DetectionRequirement::new(r.chi).map_err(|e| relabel("requirement.chi", e)))
            .transpose()
    }

    pub fn formation_config(&self, mode: Mode) -> FormationConfig {
        FormationConfig {
            discovery_radius: self.formation.discovery_radius_m,
            order: self.formation.order,
            epsilon: self.formation.epsilon,
            mode,
            requirement: self.requirement.and_then(|r| DetectionRequirement::new(r.chi).ok()),
        }
    }

    /// Detector settings to evaluate: the single configured point, or the sweep.
    pub fn detection_grid(&self) -> Result<Vec<DetectionParams>> {
        let d = &self.detection;
        let wrap = |field: &str, r: Result<DetectionParams>| r.map_err(|e| relabel(field, e));
        match (d.pf, d.lambda) {
            (Some(_), Some(_)) => Err(config("detection", "set at most one of `pf` and `lambda`")),
            (Some(pf), None) => {
                if !(pf > 0.0 && pf < 1.0) {
                    return Err(config("detection.pf", format!("must lie in (0, 1), got {pf}")));
                }
                Ok(vec![wrap("detection", DetectionParams::for_false_alarm(d.m, pf, d.alpha))?])
            }
            (None, Some(lambda)) => Ok(vec![wrap("detection", DetectionParams::new(d.m, lambda, d.alpha))?]),
            (None, None) => sweep_pf(d),
        }
    }

    /// The single detector setting required by experiments that do not sweep.
    pub fn single_detection(&self) -> Result<DetectionParams> {
        if self.detection.pf.is_none() && self.detection.lambda.is_none() {
            return Err(config("detection", "this experiment needs `pf` or `lambda`, not a sweep"));
        }
        Ok(self.detection_grid()?.remove(0))
    }
}

fn relabel(field: &str, e: Error) -> Error {
    match e {
        Error::Config { .. } => e,
        other => config(field, other.to_string()),
    }
}

/// Geometric false-alarm grid, each point inverted to an energy threshold.
pub fn sweep_pf(d: &DetectionConfig) -> Result<Vec<DetectionParams>> {
    let s = &d.pf_sweep;
    if !(s.lo > 0.0 && s.lo <= s.hi && s.hi < d.alpha) {
        return Err(config(
            "detection.pf_sweep",
            format!("need 0 < lo <= hi < alpha, got lo = {}, hi = {}, alpha = {}", s.lo, s.hi, d.alpha),
        ));
    }
    if s.points == 0 {
        return Err(config("detection.pf_sweep.points", "must be at least 1"));
    }
    (0..s.points)
        .map(|k| {
            let pf = if s.points == 1 {
                s.lo
            } else {
                s.lo * (s.hi / s.lo).powf(k as f64 / (s.points - 1) as f64)
            };
            let lambda = threshold_for_false_alarm(d.m, pf).map_err(|e| relabel("detection.pf_sweep", e))?;
            DetectionParams::new(d.m, lambda, d.alpha).map_err(|e| relabel("detection", e))
        })
        .collect()
}
