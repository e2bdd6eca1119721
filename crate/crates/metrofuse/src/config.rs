//! The published run-configuration schema and its resolution into executable plans.
//!
//! Configs are TOML. Loading happens in stages so command-line overrides compose
//! cleanly: read the text (a config file or a `manifest.json` from an earlier run),
//! parse to a value tree, apply `key.path=value` overrides, deserialize into
//! [`Config`], then [`Config::resolve`] cross-checks references and produces the
//! simulation or throughput plan. Every resolution error names the config path it
//! came from.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fock::{Mode, Polarization};
use crate::montecarlo::experiment::{DetectorSpec, ExperimentPlan, Preparation};
use crate::montecarlo::scan::{projection_pattern_label, projection_pattern_pols, ScanAxis};
use crate::netmodel::{HeraldChoice, RoutePlan, Topology};
use crate::optics::Element;
use crate::protocol::splitter_tree_success;
use crate::source::SpdcSpec;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {detail}")]
    Parse { detail: String },
    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },
}

fn invalid(path: impl Into<String>, detail: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { path: path.into(), detail: detail.into() }
}

/// `(loss_db, delay_ps)` per watched mode.
type ModeBudgets = (BTreeMap<Mode, f64>, BTreeMap<Mode, f64>);

/// `(axis, points, generated patterns)` of a resolved scan section.
type ResolvedScan = (Option<ScanAxis>, Vec<f64>, Option<Vec<NamedPattern>>);

/// What a run computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    /// Analytic pattern probabilities per scan point; no sampling.
    Predict,
    /// Monte Carlo time tags and coincidence counting per scan point.
    #[default]
    Simulate,
    /// Closed-form rate budget over the network.
    Throughput,
    /// Monte Carlo cross-correlation histogram between two detectors.
    G2,
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RunMode::Predict => "predict",
            RunMode::Simulate => "simulate",
            RunMode::Throughput => "throughput",
            RunMode::G2 => "g2",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

/// Top-level config, mirroring the TOML document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads for the detection phase; 0 lets the runtime decide. Outputs
    /// are identical for every setting.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub source: SpdcSpec,
    pub preparation: PreparationSection,
    #[serde(default)]
    pub circuit: Vec<CircuitEntry>,
    pub lcvr_calibration: Option<LcvrCalibration>,
    pub topology: Option<Topology>,
    /// Alternative to an inline [topology]; resolved relative to the config file.
    pub topology_file: Option<PathBuf>,
    #[serde(default)]
    pub routes: RoutePlan,
    #[serde(default)]
    pub losses: LossSection,
    #[serde(default)]
    pub detectors: Vec<DetectorSection>,
    #[serde(default)]
    pub coincidence: CoincidenceSection,
    pub scan: Option<ScanSection>,
    pub throughput: Option<ThroughputSection>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepKind {
    Singlet,
    HvPair,
    DualSinglet,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparationSection {
    pub kind: PrepKind,
    /// Circuit input modes: 2 for singlet, 1 for hv_pair, 4 for dual_singlet in
    /// the order (interfering, herald, interfering, herald).
    pub modes: Vec<Mode>,
    /// Probability that a pair duo is routed onto the fusion inputs. Defaults to
    /// the splitter-tree odds of 1/32 for dual_singlet and 1 otherwise.
    pub routing_success: Option<f64>,
}

/// One optical element, in application order.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CircuitEntry {
    BeamSplitter {
        in_a: Mode,
        in_b: Mode,
        out_a: Mode,
        out_b: Mode,
        #[serde(default = "default_reflectivity")]
        reflectivity: f64,
    },
    Pbs {
        input: Mode,
        out_h: Mode,
        out_v: Mode,
        #[serde(default)]
        slow_axis_deg: f64,
    },
    /// Variable retarder. Give `retardance_rad` directly, or `control` plus a
    /// top-level [lcvr_calibration] table to interpolate it.
    Lcvr {
        mode: Mode,
        retardance_rad: Option<f64>,
        control: Option<f64>,
    },
    Rotation {
        mode: Mode,
        angle_deg: f64,
    },
    DelayLine {
        mode: Mode,
        #[serde(default)]
        delay_ps: f64,
    },
}

fn default_reflectivity() -> f64 {
    0.5
}

/// Piecewise-linear control-to-retardance curve, as a vendor calibration sheet.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcvrCalibration {
    pub control: Vec<f64>,
    pub retardance_rad: Vec<f64>,
}

impl LcvrCalibration {
    fn validate(&self) -> Result<(), ConfigError> {
        let path = "lcvr_calibration";
        if self.control.len() != self.retardance_rad.len() {
            return Err(invalid(path, "control and retardance_rad must have equal length"));
        }
        if self.control.len() < 2 {
            return Err(invalid(path, "calibration needs at least two points"));
        }
        if self.control.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid(path, "control values must be strictly increasing"));
        }
        Ok(())
    }

    /// Linear interpolation; control values outside the table are an error.
    pub fn retardance_for(&self, control: f64) -> Result<f64, ConfigError> {
        self.validate()?;
        let (first, last) = (self.control[0], *self.control.last().unwrap());
        if control < first || control > last {
            return Err(invalid(
                "lcvr_calibration",
                format!("control {control} is outside the calibrated range [{first}, {last}]"),
            ));
        }
        let idx = self.control.partition_point(|&c| c <= control).min(self.control.len() - 1);
        let (lo, hi) = (idx - 1, idx);
        let t = (control - self.control[lo]) / (self.control[hi] - self.control[lo]);
        Ok(self.retardance_rad[lo] + t * (self.retardance_rad[hi] - self.retardance_rad[lo]))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    /// Source-side coupling loss, split equally across the watched modes, dB.
    pub insertion_loss_db: f64,
    /// Extra fixed loss per mode (switches, couplers), dB.
    pub per_mode_db: BTreeMap<Mode, f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub id: String,
    pub mode: Mode,
    /// Omit to accept both polarizations on the mode.
    pub pol: Option<Polarization>,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    #[serde(default)]
    pub dark_rate_hz: f64,
    #[serde(default)]
    pub jitter_fwhm_ps: f64,
    #[serde(default)]
    pub dead_time_ps: i64,
}

fn default_efficiency() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CoincidenceSection {
    pub window_ps: i64,
    /// Shift applied to the last pattern channel for the accidental estimate.
    pub accidental_offset_ps: i64,
    pub histogram_bin_ps: i64,
    /// Half-range of the g2 histogram; mandatory for g2 runs.
    pub histogram_range_ps: Option<i64>,
    /// Software gating: added to each listed detector's tag times before
    /// coincidence matching (negative values pull delayed channels back).
    pub channel_offsets_ps: BTreeMap<String, i64>,
    pub patterns: Vec<PatternSection>,
}

impl Default for CoincidenceSection {
    fn default() -> Self {
        CoincidenceSection {
            window_ps: 1000,
            accidental_offset_ps: 1_000_000_000,
            histogram_bin_ps: 100,
            histogram_range_ps: None,
            channel_offsets_ps: BTreeMap::new(),
            patterns: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSection {
    pub name: String,
    /// Detector ids; a coincidence requires one tag on every channel in-window.
    pub channels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    VdlDelay,
    LcvrPhase,
    ProjectionPattern,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub axis: Option<AxisKind>,
    /// Swept mode for vdl_delay and lcvr_phase axes.
    pub target_mode: Option<Mode>,
    /// Projected modes for the projection_pattern axis, in readout order.
    pub pattern_modes: Option<[Mode; 4]>,
    pub points: Option<Vec<f64>>,
    pub linspace: Option<LinspaceSection>,
    /// Simulated acquisition time per scan point, seconds.
    pub duration_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinspaceSection {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputSection {
    #[serde(default = "default_fusion_probability")]
    pub fusion_probability: f64,
    #[serde(default = "default_herald")]
    pub herald: HeraldChoice,
    /// Multiplied into the distributed rate; empty means ideal detectors.
    #[serde(default)]
    pub detector_efficiencies: Vec<f64>,
    /// Defaults to the 2nd and 4th preparation modes (the herald arms).
    pub herald_modes: Option<[Mode; 2]>,
    /// Defaults to the outputs of the circuit's beam splitter.
    pub output_modes: Option<[Mode; 2]>,
}

fn default_fusion_probability() -> f64 {
    let p = splitter_tree_success();
    *p.numer() as f64 / *p.denom() as f64
}

fn default_herald() -> HeraldChoice {
    HeraldChoice::Bell
}

/// A named coincidence pattern resolved to detector indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedPattern {
    pub name: String,
    pub channels: Vec<usize>,
}

/// Everything a simulation or prediction run needs.
#[derive(Debug, Clone)]
pub struct SimPlan {
    pub plan: ExperimentPlan,
    pub axis: Option<ScanAxis>,
    /// Scan values; a single 0.0 when nothing is swept.
    pub points: Vec<f64>,
    pub duration_s: f64,
    pub patterns: Vec<NamedPattern>,
    pub window_ps: i64,
    pub accidental_offset_ps: i64,
    pub histogram_bin_ps: i64,
    pub histogram_range_ps: Option<i64>,
    /// Per detector index, added to tag times before coincidence matching.
    pub channel_offsets_ps: Vec<i64>,
}

impl SimPlan {
    /// Projection scans read all patterns from one simulated point.
    pub fn is_projection_scan(&self) -> bool {
        matches!(self.axis, Some(ScanAxis::ProjectionPattern { .. }))
    }
}

/// Owned inputs of the closed-form rate budget.
#[derive(Debug, Clone)]
pub struct ThroughputPlan {
    pub pair_rate_hz: f64,
    pub fusion_probability: f64,
    pub herald: HeraldChoice,
    pub topology: Topology,
    pub routes: RoutePlan,
    pub herald_modes: (Mode, Mode),
    pub output_modes: (Mode, Mode),
    pub insertion_loss_db: f64,
    pub extra_mode_db: BTreeMap<Mode, f64>,
    pub detector_efficiencies: Vec<f64>,
}

impl ThroughputPlan {
    pub fn inputs(&self) -> crate::netmodel::ThroughputInputs<'_> {
        crate::netmodel::ThroughputInputs {
            pair_rate_hz: self.pair_rate_hz,
            fusion_probability: self.fusion_probability,
            herald: self.herald,
            topology: &self.topology,
            routes: &self.routes,
            herald_modes: self.herald_modes.clone(),
            output_modes: self.output_modes.clone(),
            insertion_loss_db: self.insertion_loss_db,
            extra_mode_db: &self.extra_mode_db,
            detector_efficiencies: &self.detector_efficiencies,
        }
    }
}

/// A fully cross-checked run description.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub mode: RunMode,
    pub seed: u64,
    pub workers: usize,
    pub format: OutputFormat,
    /// Present for predict, simulate, and g2 runs.
    pub sim: Option<SimPlan>,
    /// Present for throughput runs.
    pub throughput: Option<ThroughputPlan>,
}

impl Config {
    /// Cross-checks every reference and builds the executable plan.
    /// `config_dir` anchors relative `topology_file` paths.
    pub fn resolve(&self, config_dir: &Path) -> Result<Resolved, ConfigError> {
        self.source
            .validate()
            .map_err(|e| invalid("source", e.to_string()))?;
        let topology = self.load_topology(config_dir)?;
        topology
            .validate()
            .map_err(|e| invalid("topology", e.to_string()))?;
        self.routes
            .validate(&topology)
            .map_err(|e| invalid("routes", e.to_string()))?;

        let (sim, throughput) = match self.mode {
            RunMode::Throughput => (None, Some(self.resolve_throughput(&topology)?)),
            _ => (Some(self.resolve_sim(&topology)?), None),
        };

        Ok(Resolved {
            mode: self.mode,
            seed: self.seed,
            workers: self.workers,
            format: self.format,
            sim,
            throughput,
        })
    }

    fn load_topology(&self, config_dir: &Path) -> Result<Topology, ConfigError> {
        match (&self.topology, &self.topology_file) {
            (Some(_), Some(_)) => Err(invalid(
                "topology_file",
                "give either an inline [topology] or topology_file, not both",
            )),
            (Some(inline), None) => Ok(inline.clone()),
            (None, Some(file)) => {
                let path = if file.is_absolute() {
                    file.clone()
                } else {
                    config_dir.join(file)
                };
                let text = fs::read_to_string(&path)
                    .map_err(|source| ConfigError::Io { path: path.clone(), source })?;
                toml::from_str(&text).map_err(|e| {
                    invalid("topology_file", format!("{}: {e}", path.display()))
                })
            }
            (None, None) => Ok(Topology { nodes: Vec::new(), links: Vec::new() }),
        }
    }

    fn resolve_preparation(&self) -> Result<(Preparation, f64), ConfigError> {
        let path = "preparation";
        let section = &self.preparation;
        let arity = |n: usize| -> Result<(), ConfigError> {
            if section.modes.len() == n {
                Ok(())
            } else {
                Err(invalid(
                    format!("{path}.modes"),
                    format!("this kind takes exactly {n} mode(s), got {}", section.modes.len()),
                ))
            }
        };
        let preparation = match section.kind {
            PrepKind::Singlet => {
                arity(2)?;
                Preparation::Singlet {
                    modes: [section.modes[0].clone(), section.modes[1].clone()],
                }
            }
            PrepKind::HvPair => {
                arity(1)?;
                Preparation::HvPair { mode: section.modes[0].clone() }
            }
            PrepKind::DualSinglet => {
                arity(4)?;
                Preparation::DualSinglet {
                    modes: [
                        section.modes[0].clone(),
                        section.modes[1].clone(),
                        section.modes[2].clone(),
                        section.modes[3].clone(),
                    ],
                }
            }
        };
        let routing_success = section.routing_success.unwrap_or_else(|| {
            if section.kind == PrepKind::DualSinglet {
                default_fusion_probability()
            } else {
                1.0
            }
        });
        if !(0.0..=1.0).contains(&routing_success) {
            return Err(invalid(
                format!("{path}.routing_success"),
                format!("must lie in [0, 1], got {routing_success}"),
            ));
        }
        Ok((preparation, routing_success))
    }

    fn resolve_circuit(&self) -> Result<Vec<Element>, ConfigError> {
        let mut out = Vec::with_capacity(self.circuit.len());
        for (i, entry) in self.circuit.iter().enumerate() {
            let path = format!("circuit.{i}");
            let element = match entry {
                CircuitEntry::BeamSplitter { in_a, in_b, out_a, out_b, reflectivity } => {
                    Element::BeamSplitter {
                        in_a: in_a.clone(),
                        in_b: in_b.clone(),
                        out_a: out_a.clone(),
                        out_b: out_b.clone(),
                        reflectivity: *reflectivity,
                    }
                }
                CircuitEntry::Pbs { input, out_h, out_v, slow_axis_deg } => {
                    Element::PolarizingSplitter {
                        input: input.clone(),
                        out_h: out_h.clone(),
                        out_v: out_v.clone(),
                        slow_axis_deg: *slow_axis_deg,
                    }
                }
                CircuitEntry::Lcvr { mode, retardance_rad, control } => {
                    let phase_rad = match (retardance_rad, control) {
                        (Some(_), Some(_)) => {
                            return Err(invalid(
                                path,
                                "give retardance_rad or control, not both",
                            ))
                        }
                        (Some(rad), None) => *rad,
                        (None, Some(control)) => match &self.lcvr_calibration {
                            Some(table) => table.retardance_for(*control)?,
                            None => {
                                return Err(invalid(
                                    path,
                                    "control values need a top-level [lcvr_calibration] table",
                                ))
                            }
                        },
                        (None, None) => {
                            return Err(invalid(path, "give retardance_rad or control"))
                        }
                    };
                    Element::Retarder { mode: mode.clone(), phase_rad }
                }
                CircuitEntry::Rotation { mode, angle_deg } => {
                    Element::Rotation { mode: mode.clone(), angle_deg: *angle_deg }
                }
                CircuitEntry::DelayLine { mode, delay_ps } => {
                    Element::DelayLine { mode: mode.clone(), delay_ps: *delay_ps }
                }
            };
            out.push(element);
        }
        Ok(out)
    }

    fn resolve_detectors(&self) -> Result<Vec<DetectorSpec>, ConfigError> {
        if self.detectors.is_empty() {
            return Err(invalid("detectors", "at least one detector is required"));
        }
        Ok(self
            .detectors
            .iter()
            .map(|d| DetectorSpec {
                id: d.id.clone(),
                mode: d.mode.clone(),
                pol: d.pol,
                efficiency: d.efficiency,
                dark_rate_hz: d.dark_rate_hz,
                jitter_fwhm_ps: d.jitter_fwhm_ps,
                dead_time_ps: d.dead_time_ps,
            })
            .collect())
    }

    /// Per-mode loss and delay for every mode a detector watches: route path loss
    /// plus per-mode extras plus an equal share of the insertion loss.
    /// Returns `(loss_db, delay_ps)` keyed by mode.
    fn mode_budgets(
        &self,
        topology: &Topology,
        detectors: &[DetectorSpec],
    ) -> Result<ModeBudgets, ConfigError> {
        let mut watched: Vec<Mode> = Vec::new();
        for det in detectors {
            if !watched.contains(&det.mode) {
                watched.push(det.mode.clone());
            }
        }
        let share = self.losses.insertion_loss_db / watched.len() as f64;
        let mut loss = BTreeMap::new();
        let mut delay = BTreeMap::new();
        for mode in &watched {
            let metrics = self
                .routes
                .metrics(topology, mode)
                .map_err(|e| invalid(format!("routes.{mode}"), e.to_string()))?;
            let extra = self.losses.per_mode_db.get(mode).copied().unwrap_or(0.0);
            loss.insert(mode.clone(), metrics.loss_db + extra + share);
            delay.insert(mode.clone(), metrics.delay_us * 1e6);
        }
        Ok((loss, delay))
    }

    fn resolve_axis_and_points(
        &self,
        detectors: &[DetectorSpec],
    ) -> Result<ResolvedScan, ConfigError> {
        let Some(scan) = &self.scan else {
            return Ok((None, vec![0.0], None));
        };
        let explicit_points = match (&scan.points, &scan.linspace) {
            (Some(_), Some(_)) => {
                return Err(invalid("scan", "give points or linspace, not both"))
            }
            (Some(points), None) => {
                if points.is_empty() {
                    return Err(invalid("scan.points", "needs at least one value"));
                }
                Some(points.clone())
            }
            (None, Some(ls)) => {
                if ls.count < 2 {
                    return Err(invalid("scan.linspace.count", "needs at least two points"));
                }
                let step = (ls.stop - ls.start) / (ls.count - 1) as f64;
                Some((0..ls.count).map(|i| ls.start + step * i as f64).collect())
            }
            (None, None) => None,
        };

        let require_target = |axis_name: &str| -> Result<Mode, ConfigError> {
            scan.target_mode.clone().ok_or_else(|| {
                invalid("scan.target_mode", format!("the {axis_name} axis needs a target mode"))
            })
        };

        match scan.axis {
            None => {
                if explicit_points.is_some() {
                    return Err(invalid("scan.points", "scan points need an axis"));
                }
                Ok((None, vec![0.0], None))
            }
            Some(AxisKind::VdlDelay) => {
                let axis = ScanAxis::VdlDelay { target_mode: require_target("vdl_delay")? };
                let points = explicit_points
                    .ok_or_else(|| invalid("scan", "a swept axis needs points or linspace"))?;
                Ok((Some(axis), points, None))
            }
            Some(AxisKind::LcvrPhase) => {
                let axis = ScanAxis::LcvrPhase { target_mode: require_target("lcvr_phase")? };
                let points = explicit_points
                    .ok_or_else(|| invalid("scan", "a swept axis needs points or linspace"))?;
                Ok((Some(axis), points, None))
            }
            Some(AxisKind::ProjectionPattern) => {
                let modes = scan.pattern_modes.clone().ok_or_else(|| {
                    invalid("scan.pattern_modes", "the projection_pattern axis needs four modes")
                })?;
                if explicit_points.is_some() {
                    return Err(invalid(
                        "scan.points",
                        "projection_pattern scans iterate the sixteen patterns, not points",
                    ));
                }
                if !self.coincidence.patterns.is_empty() {
                    return Err(invalid(
                        "coincidence.patterns",
                        "projection_pattern scans define their own sixteen patterns",
                    ));
                }
                let mut patterns = Vec::with_capacity(16);
                for index in 0..16 {
                    let pols = projection_pattern_pols(index);
                    let mut channels = Vec::with_capacity(4);
                    for (mode, pol) in modes.iter().zip(pols) {
                        let found = detectors
                            .iter()
                            .position(|d| d.mode == *mode && d.pol == Some(pol));
                        match found {
                            Some(idx) => channels.push(idx),
                            None => {
                                return Err(invalid(
                                    "scan.pattern_modes",
                                    format!(
                                        "no detector watches mode `{mode}` at polarization \
                                         {pol}; projection scans need one per (mode, \
                                         polarization)"
                                    ),
                                ))
                            }
                        }
                    }
                    patterns.push(NamedPattern {
                        name: projection_pattern_label(index),
                        channels,
                    });
                }
                let axis = ScanAxis::ProjectionPattern { modes };
                Ok((Some(axis), vec![0.0], Some(patterns)))
            }
        }
    }

    fn resolve_patterns(&self, detectors: &[DetectorSpec]) -> Result<Vec<NamedPattern>, ConfigError> {
        let mut out = Vec::with_capacity(self.coincidence.patterns.len());
        for (i, pattern) in self.coincidence.patterns.iter().enumerate() {
            let path = format!("coincidence.patterns.{i}");
            if pattern.name.is_empty() {
                return Err(invalid(format!("{path}.name"), "pattern name must be non-empty"));
            }
            if out.iter().any(|p: &NamedPattern| p.name == pattern.name) {
                return Err(invalid(format!("{path}.name"), "pattern name repeats"));
            }
            if pattern.channels.len() < 2 {
                return Err(invalid(
                    format!("{path}.channels"),
                    "a coincidence needs at least two channels",
                ));
            }
            let mut channels = Vec::with_capacity(pattern.channels.len());
            for id in &pattern.channels {
                match detectors.iter().position(|d| &d.id == id) {
                    Some(idx) if !channels.contains(&idx) => channels.push(idx),
                    Some(_) => {
                        return Err(invalid(
                            format!("{path}.channels"),
                            format!("detector `{id}` repeats"),
                        ))
                    }
                    None => {
                        return Err(invalid(
                            format!("{path}.channels"),
                            format!("unknown detector `{id}`"),
                        ))
                    }
                }
            }
            out.push(NamedPattern { name: pattern.name.clone(), channels });
        }
        Ok(out)
    }

    fn resolve_sim(&self, topology: &Topology) -> Result<SimPlan, ConfigError> {
        let (preparation, routing_success) = self.resolve_preparation()?;
        let circuit = self.resolve_circuit()?;
        let detectors = self.resolve_detectors()?;
        let (mode_loss_db, mode_delay_ps) = self.mode_budgets(topology, &detectors)?;
        let (axis, points, generated_patterns) = self.resolve_axis_and_points(&detectors)?;

        let patterns = match generated_patterns {
            Some(patterns) => patterns,
            None => self.resolve_patterns(&detectors)?,
        };

        let coincidence = &self.coincidence;
        if coincidence.window_ps <= 0 {
            return Err(invalid("coincidence.window_ps", "must be positive"));
        }
        if coincidence.histogram_bin_ps <= 0 {
            return Err(invalid("coincidence.histogram_bin_ps", "must be positive"));
        }
        let mut channel_offsets_ps = vec![0i64; detectors.len()];
        for (id, offset) in &coincidence.channel_offsets_ps {
            match detectors.iter().position(|d| &d.id == id) {
                Some(idx) => channel_offsets_ps[idx] = *offset,
                None => {
                    return Err(invalid(
                        format!("coincidence.channel_offsets_ps.{id}"),
                        "unknown detector",
                    ))
                }
            }
        }

        let duration_s = self.scan.as_ref().and_then(|s| s.duration_s);
        if matches!(self.mode, RunMode::Simulate | RunMode::G2)
            && duration_s.is_none_or(|d| !(d > 0.0))
        {
            return Err(invalid(
                "scan.duration_s",
                "sampled runs need a positive acquisition time",
            ));
        }
        if self.mode == RunMode::Simulate && patterns.is_empty() {
            return Err(invalid(
                "coincidence.patterns",
                "simulate runs need at least one pattern (or a projection_pattern scan)",
            ));
        }
        if self.mode == RunMode::Predict && patterns.is_empty() {
            return Err(invalid(
                "coincidence.patterns",
                "predict runs need at least one pattern (or a projection_pattern scan)",
            ));
        }
        if self.mode == RunMode::G2 {
            if detectors.len() != 2 {
                return Err(invalid(
                    "detectors",
                    format!("g2 runs need exactly two detectors, got {}", detectors.len()),
                ));
            }
            let range = coincidence.histogram_range_ps.ok_or_else(|| {
                invalid("coincidence.histogram_range_ps", "g2 runs must set the histogram range")
            })?;
            if range <= 0 || range % coincidence.histogram_bin_ps != 0 {
                return Err(invalid(
                    "coincidence.histogram_range_ps",
                    "must be a positive multiple of histogram_bin_ps",
                ));
            }
        }

        let plan = ExperimentPlan {
            source: self.source.clone(),
            preparation,
            routing_success,
            circuit,
            detectors,
            mode_loss_db,
            mode_delay_ps,
        };
        plan.validate().map_err(|e| invalid("plan", e.to_string()))?;

        Ok(SimPlan {
            plan,
            axis,
            points,
            duration_s: duration_s.unwrap_or(0.0),
            patterns,
            window_ps: coincidence.window_ps,
            accidental_offset_ps: coincidence.accidental_offset_ps,
            histogram_bin_ps: coincidence.histogram_bin_ps,
            histogram_range_ps: coincidence.histogram_range_ps,
            channel_offsets_ps,
        })
    }

    fn resolve_throughput(&self, topology: &Topology) -> Result<ThroughputPlan, ConfigError> {
        let section = self.throughput.clone().unwrap_or(ThroughputSection {
            fusion_probability: default_fusion_probability(),
            herald: default_herald(),
            detector_efficiencies: Vec::new(),
            herald_modes: None,
            output_modes: None,
        });
        let herald_modes = match section.herald_modes {
            Some([a, b]) => (a, b),
            None => {
                let modes = &self.preparation.modes;
                if self.preparation.kind != PrepKind::DualSinglet || modes.len() != 4 {
                    return Err(invalid(
                        "throughput.herald_modes",
                        "required unless the preparation is dual_singlet with four modes",
                    ));
                }
                (modes[1].clone(), modes[3].clone())
            }
        };
        let output_modes = match section.output_modes {
            Some([a, b]) => (a, b),
            None => {
                let found = self.circuit.iter().find_map(|entry| match entry {
                    CircuitEntry::BeamSplitter { out_a, out_b, .. } => {
                        Some((out_a.clone(), out_b.clone()))
                    }
                    _ => None,
                });
                found.ok_or_else(|| {
                    invalid(
                        "throughput.output_modes",
                        "required when the circuit has no beam splitter to infer them from",
                    )
                })?
            }
        };
        for eff in &section.detector_efficiencies {
            if !(0.0..=1.0).contains(eff) {
                return Err(invalid(
                    "throughput.detector_efficiencies",
                    format!("efficiencies must lie in [0, 1], got {eff}"),
                ));
            }
        }
        Ok(ThroughputPlan {
            pair_rate_hz: self.source.pair_rate_hz,
            fusion_probability: section.fusion_probability,
            herald: section.herald,
            topology: topology.clone(),
            routes: self.routes.clone(),
            herald_modes,
            output_modes,
            insertion_loss_db: self.losses.insertion_loss_db,
            extra_mode_db: self.losses.per_mode_db.clone(),
            detector_efficiencies: section.detector_efficiencies,
        })
    }
}

/// Record of one run, written next to its outputs and accepted back by --config.
/// Worker count is deliberately absent: it never affects results, so runs that
/// differ only in parallelism produce identical manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub mode: RunMode,
    pub seed: u64,
    pub format: OutputFormat,
    pub config_sha256: String,
    /// The fully resolved config text, overrides included.
    pub config_toml: String,
}

impl Manifest {
    pub fn new(resolved: &Resolved, config_toml: String) -> Manifest {
        Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            mode: resolved.mode,
            seed: resolved.seed,
            format: resolved.format,
            config_sha256: sha256_hex(&config_toml),
            config_toml,
        }
    }
}

pub fn sha256_hex(text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Reads config text from `path`. A manifest.json from an earlier run is accepted
/// transparently by extracting its embedded config.
pub fn load_config_text(path: &Path) -> Result<String, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
    if let Ok(manifest) = serde_json::from_str::<Manifest>(&text) {
        return Ok(manifest.config_toml);
    }
    Ok(text)
}

pub fn parse_value(text: &str) -> Result<toml::Value, ConfigError> {
    text.parse::<toml::Value>()
        .map_err(|e| ConfigError::Parse { detail: e.to_string() })
}

pub fn config_from_value(value: toml::Value) -> Result<Config, ConfigError> {
    value
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse { detail: e.to_string() })
}

/// Serializes the value tree back to TOML text (the manifest's canonical form).
pub fn value_to_toml(value: &toml::Value) -> Result<String, ConfigError> {
    toml::to_string(value).map_err(|e| ConfigError::Parse { detail: e.to_string() })
}

/// Applies one `key.path=value` override. Dotted segments walk tables; numeric
/// segments index arrays. Values parse as bool, then integer, then float, then
/// fall back to a string.
pub fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<(), ConfigError> {
    let Some((path, raw)) = assignment.split_once('=') else {
        return Err(ConfigError::Parse {
            detail: format!("override `{assignment}` must look like key.path=value"),
        });
    };
    let segments: Vec<&str> = path.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(ConfigError::Parse {
            detail: format!("override path `{path}` has an empty segment"),
        });
    }
    let mut cursor = root;
    for (i, segment) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if let Ok(index) = segment.parse::<usize>() {
            let array = cursor.as_array_mut().ok_or_else(|| ConfigError::Parse {
                detail: format!("`{}` is not an array", segments[..i].join(".")),
            })?;
            if index >= array.len() {
                return Err(ConfigError::Parse {
                    detail: format!(
                        "index {index} is out of bounds for `{}` (len {})",
                        segments[..i].join("."),
                        array.len()
                    ),
                });
            }
            if last {
                array[index] = parse_scalar(raw);
                return Ok(());
            }
            cursor = &mut array[index];
        } else {
            let table = cursor.as_table_mut().ok_or_else(|| ConfigError::Parse {
                detail: format!("`{}` is not a table", segments[..i].join(".")),
            })?;
            if last {
                table.insert((*segment).to_string(), parse_scalar(raw));
                return Ok(());
            }
            cursor = table
                .entry((*segment).to_string())
                .or_insert_with(|| toml::Value::Table(Default::default()));
        }
    }
    unreachable!("loop returns on the last segment");
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    toml::Value::String(raw.to_string())
}
