use std::collections::BTreeMap;

use gait_core::nominal::gait_froude_number;
use gait_core::sim::GaitKind;
use gait_core::{classify_mode, GaitSpec, Mode, NominalGait, StanceSide, Vec3};
use serde::Serialize;

use crate::config::ConfigDocument;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NominalEntry {
    pub gait: GaitKind,
    pub v_des: Vec3,
    pub mode: Mode,
    pub omega0: f64,
    pub froude: f64,
    pub nominal: NominalGait,
    /// Distance of each nominal quantity from its bound, per stance side;
    /// negative means the bound is violated.
    pub margins: BTreeMap<String, f64>,
    pub viable: bool,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NominalReport {
    pub entries: Vec<NominalEntry>,
}

impl NominalReport {
    pub fn warnings(&self) -> impl Iterator<Item = &String> {
        self.entries.iter().flat_map(|e| e.warnings.iter())
    }
}

pub fn nominal_entry(kind: GaitKind, spec: &GaitSpec) -> Result<NominalEntry> {
    spec.validate().map_err(|e| CliError::Config(format!("{} gait: {e}", kind.as_str())))?;
    let gait = NominalGait::new(spec)?;
    let report = classify_mode(spec);
    let mut margins = BTreeMap::new();
    let mut warnings = Vec::new();
    for side in [StanceSide::Right, StanceSide::Left] {
        for (name, margin) in gait.bound_margins(spec, side) {
            if margin < 0.0 {
                let what = if name.starts_with("du") {
                    "commanded velocity needs a step beyond"
                } else {
                    "nominal DCM offset exceeds"
                };
                warnings.push(format!(
                    "{} gait, {} stance: {what} {name} by {:.6} m",
                    kind.as_str(),
                    side.as_str(),
                    -margin
                ));
            }
            margins.insert(format!("{}.{name}", side.as_str()), margin);
        }
    }
    Ok(NominalEntry {
        gait: kind,
        v_des: spec.v_des,
        mode: report.mode,
        omega0: report.omega0,
        froude: gait_froude_number(spec, &gait)?,
        nominal: gait,
        viable: warnings.is_empty(),
        margins,
        warnings,
    })
}

/// One entry per distinct (gait, velocity) pair in the schedule.
pub fn cmd_nominal(doc: &ConfigDocument) -> Result<NominalReport> {
    let mut entries: Vec<NominalEntry> = Vec::new();
    for e in &doc.scenario.schedule {
        if entries.iter().any(|n| n.gait == e.gait && n.v_des == e.v_des) {
            continue;
        }
        let spec = doc.scenario.gaits.get(e.gait).with_velocity(e.v_des);
        entries.push(nominal_entry(e.gait, &spec)?);
    }
    Ok(NominalReport { entries })
}
