use serde::{Deserialize, Serialize};

use super::{NrmError, QosRequirements};
use crate::experiment::SweepRow;
use crate::kpi::RobotKpis;
use crate::utility::{emos_robot, UtilitySpec};

/// Robot KPIs measured at a series of link delays, for one tool and
/// controller setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    rows: Vec<(f64, RobotKpis)>,
}

impl CalibrationTable {
    /// Needs at least two rows with strictly increasing delays.
    pub fn new(rows: Vec<(f64, RobotKpis)>) -> Result<Self, NrmError> {
        if rows.len() < 2 {
            return Err(NrmError::Table(
                "calibration table needs at least two rows".into(),
            ));
        }
        if rows
            .iter()
            .any(|(d, k)| !(d.is_finite() && *d >= 0.0) || !k.is_consistent())
        {
            return Err(NrmError::Table(
                "calibration rows must be finite and non-negative".into(),
            ));
        }
        if rows.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(NrmError::Table(
                "calibration delays must strictly increase".into(),
            ));
        }
        Ok(Self { rows })
    }

    /// Rows of one tool radius from a sweep results table; runs sharing a
    /// delay (different seeds) are averaged field-wise.
    pub fn from_sweep(rows: &[SweepRow], tool_radius: f64) -> Result<Self, NrmError> {
        let mut sel: Vec<&SweepRow> = rows.iter().filter(|r| r.tool_radius == tool_radius).collect();
        if sel.is_empty() {
            return Err(NrmError::Table(format!(
                "no sweep rows for tool radius {tool_radius}"
            )));
        }
        sel.sort_by(|a, b| a.delay_ms.total_cmp(&b.delay_ms));
        let mut out: Vec<(f64, RobotKpis)> = Vec::new();
        let mut i = 0;
        while i < sel.len() {
            let d = sel[i].delay_ms;
            let group: Vec<RobotKpis> = sel[i..]
                .iter()
                .take_while(|r| r.delay_ms == d)
                .map(|r| r.kpis())
                .collect();
            i += group.len();
            let mut mean = group[0];
            for (k, g) in group.iter().enumerate().skip(1) {
                mean = RobotKpis::lerp(&mean, g, 1.0 / (k + 1) as f64);
            }
            out.push((d, mean));
        }
        Self::new(out)
    }

    pub fn rows(&self) -> &[(f64, RobotKpis)] {
        &self.rows
    }

    pub fn delays(&self) -> impl Iterator<Item = f64> + '_ {
        self.rows.iter().map(|(d, _)| *d)
    }

    /// KPIs at `delay_ms`, linear between rows and held constant outside
    /// the table.
    pub fn predict(&self, delay_ms: f64) -> RobotKpis {
        let first = &self.rows[0];
        let last = &self.rows[self.rows.len() - 1];
        if delay_ms <= first.0 {
            return first.1;
        }
        if delay_ms >= last.0 {
            return last.1;
        }
        let hi = self.rows.partition_point(|(d, _)| *d < delay_ms);
        let (d0, k0) = &self.rows[hi - 1];
        let (d1, k1) = &self.rows[hi];
        RobotKpis::lerp(k0, k1, (delay_ms - d0) / (d1 - d0))
    }

    /// Predicted eMOS at `delay_ms` under `spec`.
    pub fn predict_emos(&self, spec: &UtilitySpec, delay_ms: f64) -> Result<f64, NrmError> {
        let k = RobotKpis {
            phase: spec.phase,
            ..self.predict(delay_ms)
        };
        Ok(emos_robot(&k, spec)?.value())
    }
}

/// Network requirements that keep the predicted eMOS at or above the
/// target. The latency budget is the last delay of the leading run of table
/// rows that meet the target, so no larger delay in the budget's range is
/// known to fail. Jitter is budgeted at zero; loss and bandwidth come from
/// `defaults`.
pub fn translate_g_nw(
    spec: &UtilitySpec,
    table: &CalibrationTable,
    defaults: &QosRequirements,
) -> Result<QosRequirements, NrmError> {
    spec.validate()?;
    let mut budget = None;
    for d in table.delays() {
        if table.predict_emos(spec, d)? >= spec.target_emos {
            budget = Some(d);
        } else {
            break;
        }
    }
    let latency_ms = budget.ok_or_else(|| {
        NrmError::Infeasible(format!(
            "no tabulated delay reaches eMOS {}; relax the target or change the process",
            spec.target_emos
        ))
    })?;
    Ok(QosRequirements {
        latency_ms,
        jitter_ms: 0.0,
        loss: defaults.loss,
        bandwidth_kbps: defaults.bandwidth_kbps,
    })
}
