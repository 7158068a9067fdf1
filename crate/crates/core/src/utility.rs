//! Utility functions mapping measured quality to an estimated opinion score
//! (eMOS, 1 to 5).
//!
//! Every requirement scores its KPI piecewise linearly: 5 at or below `good`,
//! 1 at or above `bad`, linear in between. The eMOS is the weighted mean of
//! the scores, clamped to [1, 5].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kpi::{Phase, RobotKpis};
use crate::quality::ProductQuality;

pub const EMOS_MIN: f64 = 1.0;
pub const EMOS_MAX: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("utility spec is for phase {spec} but KPIs were measured in {kpis}")]
    PhaseMismatch { spec: Phase, kpis: Phase },
    #[error("unknown KPI name {0:?}")]
    UnknownKpi(String),
    #[error("requirement {0:?}: good must be below bad")]
    InvertedThresholds(String),
    #[error("requirement {0:?}: weight must be non-negative and finite")]
    InvalidWeight(String),
    #[error("sanding utility needs at least one positive weight")]
    NoWeights,
    #[error("target eMOS {0} outside [1, 5]")]
    InvalidTarget(f64),
    #[error("{name} = {value} outside [1, 5]")]
    ScoreOutOfRange { name: &'static str, value: f64 },
}

/// Estimated mean opinion score in [1, 5].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Emos(f64);

impl Emos {
    pub fn new(value: f64) -> Option<Self> {
        (EMOS_MIN..=EMOS_MAX).contains(&value).then_some(Self(value))
    }

    /// Clamps into range; NaN maps to the worst score.
    pub fn clamped(value: f64) -> Self {
        if value.is_nan() {
            Self(EMOS_MIN)
        } else {
            Self(value.clamp(EMOS_MIN, EMOS_MAX))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    LowerIsBetter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpiRequirement {
    pub kpi_name: String,
    pub weight: f64,
    pub good: f64,
    pub bad: f64,
    #[serde(default)]
    pub direction: Direction,
}

impl KpiRequirement {
    pub fn new(kpi_name: &str, weight: f64, good: f64, bad: f64) -> Self {
        Self {
            kpi_name: kpi_name.to_owned(),
            weight,
            good,
            bad,
            direction: Direction::LowerIsBetter,
        }
    }

    /// Piecewise-linear score of one measured value.
    pub fn score(&self, x: f64) -> f64 {
        if x <= self.good {
            EMOS_MAX
        } else if x >= self.bad {
            EMOS_MIN
        } else {
            EMOS_MAX - 4.0 * (x - self.good) / (self.bad - self.good)
        }
    }

    fn validate(&self) -> Result<(), UtilityError> {
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(UtilityError::InvalidWeight(self.kpi_name.clone()));
        }
        if self.good.partial_cmp(&self.bad) != Some(std::cmp::Ordering::Less) {
            return Err(UtilityError::InvertedThresholds(self.kpi_name.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySpec {
    pub phase: Phase,
    pub requirements: Vec<KpiRequirement>,
    pub target_emos: f64,
}

impl UtilitySpec {
    pub fn validate(&self) -> Result<(), UtilityError> {
        if !(EMOS_MIN..=EMOS_MAX).contains(&self.target_emos) {
            return Err(UtilityError::InvalidTarget(self.target_emos));
        }
        for r in &self.requirements {
            r.validate()?;
        }
        if self.phase == Phase::Sanding && self.total_weight() <= 0.0 {
            return Err(UtilityError::NoWeights);
        }
        Ok(())
    }

    fn total_weight(&self) -> f64 {
        self.requirements.iter().map(|r| r.weight).sum()
    }

    /// Sanding requirements with anchors at the operating limits for good
    /// work: trajectory error 3 mm, peak tool speed 150 mm/s. Bad anchors sit
    /// at three times the good ones.
    pub fn default_sanding() -> Self {
        Self {
            phase: Phase::Sanding,
            requirements: vec![
                KpiRequirement::new("traj_err_max", 3.0, 3.0, 9.0),
                KpiRequirement::new("vel_max", 3.0, 150.0, 450.0),
                KpiRequirement::new("vel_mean", 2.0, 100.0, 300.0),
                KpiRequirement::new("z_dev_max", 1.0, 3.0, 9.0),
                KpiRequirement::new("orient_err_rms", 0.0, 0.05, 0.15),
            ],
            target_emos: 4.0,
        }
    }

    /// Stop-and-scan: the arm is at rest while scanning, so nothing is
    /// constrained.
    pub fn default_scanning() -> Self {
        Self {
            phase: Phase::Scanning,
            requirements: Vec::new(),
            target_emos: 4.0,
        }
    }

    /// Customer utility over the normalized EMD plus the exogenous scores.
    /// The EMD anchors sit just above the zero-delay baselines of the
    /// default setup (0.002 to 0.009) and at ten times that.
    pub fn default_customer() -> Self {
        Self {
            phase: Phase::Sanding,
            requirements: vec![
                KpiRequirement::new("emd", 3.0, 0.01, 0.1),
                KpiRequirement::new("material_score", 1.0, 0.0, 1.0),
                KpiRequirement::new("tool_score", 0.0, 0.0, 1.0),
            ],
            target_emos: 4.0,
        }
    }
}

fn weighted(parts: impl Iterator<Item = (f64, f64)>, phase: Phase) -> Result<Emos, UtilityError> {
    let (num, den) = parts.fold((0.0, 0.0), |(n, d), (w, s)| (n + w * s, d + w));
    if den <= 0.0 {
        return match phase {
            Phase::Scanning => Ok(Emos(EMOS_MAX)),
            Phase::Sanding => Err(UtilityError::NoWeights),
        };
    }
    Ok(Emos::clamped(num / den))
}

/// Robot operator's eMOS from measured robot KPIs.
pub fn emos_robot(kpis: &RobotKpis, spec: &UtilitySpec) -> Result<Emos, UtilityError> {
    spec.validate()?;
    if spec.phase != kpis.phase {
        return Err(UtilityError::PhaseMismatch {
            spec: spec.phase,
            kpis: kpis.phase,
        });
    }
    let mut parts = Vec::with_capacity(spec.requirements.len());
    for r in &spec.requirements {
        let x = kpis
            .get(&r.kpi_name)
            .ok_or_else(|| UtilityError::UnknownKpi(r.kpi_name.clone()))?;
        parts.push((r.weight, r.score(x)));
    }
    weighted(parts.into_iter(), spec.phase)
}

/// Quality contributions that do not depend on the network: raw material and
/// tooling, each already scored in [1, 5].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExogenousFactors {
    pub material_score: f64,
    pub tool_score: f64,
}

impl Default for ExogenousFactors {
    fn default() -> Self {
        Self {
            material_score: EMOS_MAX,
            tool_score: EMOS_MAX,
        }
    }
}

impl ExogenousFactors {
    pub fn validate(&self) -> Result<(), UtilityError> {
        for (name, value) in [
            ("material_score", self.material_score),
            ("tool_score", self.tool_score),
        ] {
            if !(EMOS_MIN..=EMOS_MAX).contains(&value) {
                return Err(UtilityError::ScoreOutOfRange { name, value });
            }
        }
        Ok(())
    }
}

/// Customer's eMOS. Requirement `emd` is scored by its thresholds; the
/// exogenous `material_score` and `tool_score` enter as-is with their weight.
pub fn emos_cust(
    q: &ProductQuality,
    exogenous: &ExogenousFactors,
    spec: &UtilitySpec,
) -> Result<Emos, UtilityError> {
    spec.validate()?;
    exogenous.validate()?;
    let mut parts = Vec::with_capacity(spec.requirements.len());
    for r in &spec.requirements {
        let score = match r.kpi_name.as_str() {
            "emd" => r.score(q.emd),
            "material_score" => exogenous.material_score,
            "tool_score" => exogenous.tool_score,
            other => return Err(UtilityError::UnknownKpi(other.to_owned())),
        };
        parts.push((r.weight, score));
    }
    weighted(parts.into_iter(), spec.phase)
}
