//! Scan orchestration: sweeping one circuit knob across points.
//!
//! A scan axis names the element being swept. For each scan value the base circuit
//! is rewritten (delay or retardance on the target mode) and the rewritten circuit
//! feeds one simulated point. The projection-pattern axis is different in kind: the
//! circuit is left alone and the sixteen polarization patterns of four modes are
//! read off a single simulation, so its scan values are pattern indices.

use serde::Deserialize;

use crate::fock::{Mode, Polarization};
use crate::montecarlo::coincidence::TagStream;
use crate::montecarlo::experiment::{simulate_timetags, ExperimentPlan, McError};
use crate::optics::Element;

/// The knob a scan sweeps.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScanAxis {
    /// Variable delay line position, ps. Rewrites the `DelayLine` on `target_mode`.
    VdlDelay { target_mode: Mode },
    /// Retarder phase, rad. Rewrites the `Retarder` on `target_mode`.
    LcvrPhase { target_mode: Mode },
    /// Fourfold polarization projections of the listed modes; values are the
    /// pattern indices 0..16, most significant mode first, H = 0.
    ProjectionPattern { modes: [Mode; 4] },
}

impl ScanAxis {
    /// Human-readable name of the swept quantity, used in output column headers.
    pub fn quantity(&self) -> &'static str {
        match self {
            ScanAxis::VdlDelay { .. } => "delay_ps",
            ScanAxis::LcvrPhase { .. } => "phase_rad",
            ScanAxis::ProjectionPattern { .. } => "pattern",
        }
    }
}

/// Pattern label for one projection index, e.g. 5 -> "HVHV" (H = 0, MSB first).
pub fn projection_pattern_label(index: usize) -> String {
    assert!(index < 16, "pattern index out of range");
    (0..4)
        .map(|bit| {
            if index & (1 << (3 - bit)) == 0 {
                'H'
            } else {
                'V'
            }
        })
        .collect()
}

/// Polarizations of one projection index in mode order.
pub fn projection_pattern_pols(index: usize) -> [Polarization; 4] {
    assert!(index < 16, "pattern index out of range");
    let pol = |bit: usize| {
        if index & (1 << (3 - bit)) == 0 {
            Polarization::H
        } else {
            Polarization::V
        }
    };
    [pol(0), pol(1), pol(2), pol(3)]
}

/// Rewrites the base circuit for one scan value.
pub fn apply_axis(
    circuit: &[Element],
    axis: &ScanAxis,
    value: f64,
) -> Result<Vec<Element>, McError> {
    let mut out = circuit.to_vec();
    let target = match axis {
        ScanAxis::ProjectionPattern { .. } => return Ok(out),
        ScanAxis::VdlDelay { target_mode } | ScanAxis::LcvrPhase { target_mode } => target_mode,
    };
    let mut rewritten = false;
    for element in &mut out {
        match (axis, element) {
            (ScanAxis::VdlDelay { .. }, Element::DelayLine { mode, delay_ps })
                if mode == target =>
            {
                *delay_ps = value;
                rewritten = true;
            }
            (ScanAxis::LcvrPhase { .. }, Element::Retarder { mode, phase_rad })
                if mode == target =>
            {
                *phase_rad = value;
                rewritten = true;
            }
            _ => {}
        }
    }
    if !rewritten {
        return Err(McError::BadPlan {
            detail: format!(
                "scan axis targets mode `{target}` but the circuit has no matching element"
            ),
        });
    }
    Ok(out)
}

/// Simulates one scan point: rewrites the circuit for `value` and runs the tag
/// pipeline under the point's own random streams.
pub fn point_tag_streams(
    plan: &ExperimentPlan,
    axis: Option<&ScanAxis>,
    value: f64,
    seed: u64,
    point: u32,
    duration_s: f64,
) -> Result<Vec<TagStream>, McError> {
    let circuit = match axis {
        Some(axis) => apply_axis(&plan.circuit, axis, value)?,
        None => plan.circuit.clone(),
    };
    simulate_timetags(plan, &circuit, seed, point, duration_s)
}
