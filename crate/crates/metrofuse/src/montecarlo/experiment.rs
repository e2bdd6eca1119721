//! Event-by-event simulation of an experiment run.
//!
//! Sampling is split into two phases. The emission phase is sequential: it draws the
//! source record and every per-event preparation choice (pair class, background
//! polarizations, routing, indistinguishability) from one stream, producing a list of
//! timed preparation variants. The detection phase is embarrassingly parallel: each
//! event owns a derived random stream and samples one outcome of the exact final
//! state for its variant, then per-photon survival, timing jitter, and rounding.
//! Final states are cached per variant, so the quantum propagation runs once per
//! distinct variant rather than once per event.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use thiserror::Error;

use crate::fock::{FockError, Mode, Polarization, PureState, SlotKey};
use crate::montecarlo::coincidence::TagStream;
use crate::montecarlo::rng::{substream, StreamKind};
use crate::optics::{run_circuit, Element, OpticsError, Propagation, WavepacketModel};
use crate::protocol::{hv_pair, singlet_pair};
use crate::source::{EmissionClass, SourceError, SpdcSpec};

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error("invalid experiment plan: {detail}")]
    BadPlan { detail: String },
}

/// How each source emission maps onto circuit input modes.
#[derive(Debug, Clone, PartialEq)]
pub enum Preparation {
    /// Every pair is a polarization singlet across two modes.
    Singlet { modes: [Mode; 2] },
    /// Every pair is one H and one V photon in a single mode.
    HvPair { mode: Mode },
    /// Consecutive pair emissions are grouped in twos; each duo is routed onto the
    /// four modes (interfering, herald, interfering, herald) with the plan's routing
    /// probability, forming two singlets side by side.
    DualSinglet { modes: [Mode; 4] },
}

impl Preparation {
    pub fn modes(&self) -> Vec<Mode> {
        match self {
            Preparation::Singlet { modes } => modes.to_vec(),
            Preparation::HvPair { mode } => vec![mode.clone()],
            Preparation::DualSinglet { modes } => modes.to_vec(),
        }
    }
}

/// Origin of one pair within an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PairKind {
    Entangled,
    /// Unpolarized accidental pair with the sampled polarizations.
    Background(Polarization, Polarization),
}

/// Concrete preparation of one emitted event; the cache key for final states.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PrepVariant {
    Pair { kind: PairKind, indistinguishable: bool },
    Duo { first: PairKind, second: PairKind, indistinguishable: bool },
    Single { mode: Mode, pol: Polarization },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmittedEvent {
    pub time_ps: f64,
    pub variant: PrepVariant,
}

/// One detector channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSpec {
    pub id: String,
    pub mode: Mode,
    /// `None` watches the mode regardless of polarization.
    pub pol: Option<Polarization>,
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub jitter_fwhm_ps: f64,
    pub dead_time_ps: i64,
}

impl DetectorSpec {
    fn accepts(&self, mode: &Mode, pol: Polarization) -> bool {
        &self.mode == mode && self.pol.is_none_or(|p| p == pol)
    }
}

/// Full description of a run at one scan point, independent of seed and duration.
#[derive(Debug, Clone)]
pub struct ExperimentPlan {
    pub source: SpdcSpec,
    pub preparation: Preparation,
    /// Probability that a pair duo lands on the fusion inputs (dual-singlet only).
    pub routing_success: f64,
    pub circuit: Vec<Element>,
    pub detectors: Vec<DetectorSpec>,
    /// Total optical loss per mode (path, excess, and insertion share), dB.
    pub mode_loss_db: BTreeMap<Mode, f64>,
    /// Arrival delay per mode, ps.
    pub mode_delay_ps: BTreeMap<Mode, f64>,
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), McError> {
        let bad = |detail: String| Err(McError::BadPlan { detail });
        self.source.validate()?;
        if !(0.0..=1.0).contains(&self.routing_success) {
            return bad(format!(
                "routing_success must lie in [0, 1], got {}",
                self.routing_success
            ));
        }
        let modes = self.preparation.modes();
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return bad(format!("preparation mode `{m}` repeats"));
            }
        }
        if self.detectors.is_empty() {
            return bad("at least one detector is required".into());
        }
        for (i, det) in self.detectors.iter().enumerate() {
            if det.id.is_empty() {
                return bad(format!("detector {i} has an empty id"));
            }
            if self.detectors[..i].iter().any(|d| d.id == det.id) {
                return bad(format!("detector id `{}` repeats", det.id));
            }
            if !(0.0..=1.0).contains(&det.efficiency) {
                return bad(format!(
                    "detector `{}` efficiency must lie in [0, 1], got {}",
                    det.id, det.efficiency
                ));
            }
            if !(det.dark_rate_hz >= 0.0) {
                return bad(format!("detector `{}` dark rate must be nonnegative", det.id));
            }
            if !(det.jitter_fwhm_ps >= 0.0) {
                return bad(format!("detector `{}` jitter must be nonnegative", det.id));
            }
            if det.dead_time_ps < 0 {
                return bad(format!("detector `{}` dead time must be nonnegative", det.id));
            }
            for other in &self.detectors[..i] {
                let overlap = other.mode == det.mode
                    && match (other.pol, det.pol) {
                        (Some(a), Some(b)) => a == b,
                        _ => true,
                    };
                if overlap {
                    return bad(format!(
                        "detectors `{}` and `{}` both watch mode `{}`; photon routing \
                         would be ambiguous",
                        other.id, det.id, det.mode
                    ));
                }
            }
        }
        for (mode, db) in &self.mode_loss_db {
            if !(*db >= 0.0) {
                return bad(format!("mode `{mode}` loss must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Wavepacket model for the event's indistinguishability branch.
    pub fn wavepacket_for(&self, indistinguishable: bool) -> WavepacketModel {
        let sigma = self.source.coherence_sigma_t_ps();
        if indistinguishable {
            WavepacketModel::ideal(sigma).expect("positive width")
        } else {
            WavepacketModel::distinguishable(sigma).expect("positive width")
        }
    }

    /// Normalized input state for one variant.
    pub fn variant_state(&self, variant: &PrepVariant) -> Result<PureState, McError> {
        let pair_state = |kind: &PairKind, m1: &Mode, m2: &Mode| match kind {
            PairKind::Entangled => singlet_pair(m1.clone(), m2.clone()),
            PairKind::Background(p1, p2) => PureState::vacuum()
                .create(&SlotKey::new(m1.clone(), *p1, 0))
                .create(&SlotKey::new(m2.clone(), *p2, 0)),
        };
        let state = match (&self.preparation, variant) {
            (Preparation::Singlet { modes }, PrepVariant::Pair { kind, .. }) => {
                pair_state(kind, &modes[0], &modes[1])
            }
            (Preparation::HvPair { mode }, PrepVariant::Pair { kind, .. }) => match kind {
                PairKind::Entangled => hv_pair(mode.clone()),
                PairKind::Background(p1, p2) => PureState::vacuum()
                    .create(&SlotKey::new(mode.clone(), *p1, 0))
                    .create(&SlotKey::new(mode.clone(), *p2, 0)),
            },
            (Preparation::DualSinglet { modes }, PrepVariant::Duo { first, second, .. }) => {
                let a = pair_state(first, &modes[0], &modes[1]);
                let b = pair_state(second, &modes[2], &modes[3]);
                a.tensor(&b)?
            }
            (_, PrepVariant::Single { mode, pol }) => {
                PureState::vacuum().create(&SlotKey::new(mode.clone(), *pol, 0))
            }
            (prep, variant) => {
                return Err(McError::BadPlan {
                    detail: format!("variant {variant:?} does not fit preparation {prep:?}"),
                })
            }
        };
        Ok(state.normalize())
    }
}

/// Sequential phase: the timed preparation variants of one scan point.
///
/// Draw order per source event is fixed: background polarizations (two per pair),
/// then for dual-singlet duos the routing flag, then the indistinguishability flag.
pub fn emission_phase(
    plan: &ExperimentPlan,
    seed: u64,
    point: u32,
    duration_s: f64,
) -> Vec<EmittedEvent> {
    let mut rng = substream(seed, point, StreamKind::Emission, 0);
    let record = plan.source.sample_emission(&mut rng, duration_s);
    let visibility = plan.source.hom_visibility;
    let prep_modes = plan.preparation.modes();
    let duo_mode = matches!(plan.preparation, Preparation::DualSinglet { .. });

    let mut events = Vec::with_capacity(record.len());
    let mut pending: Option<(f64, PairKind)> = None;

    for emission in record {
        match emission.class {
            EmissionClass::EntangledPair | EmissionClass::BackgroundPair => {
                let kind = if emission.class == EmissionClass::EntangledPair {
                    PairKind::Entangled
                } else {
                    let p1 = sample_pol(&mut rng);
                    let p2 = sample_pol(&mut rng);
                    PairKind::Background(p1, p2)
                };
                if duo_mode {
                    match pending.take() {
                        None => pending = Some((emission.time_ps, kind)),
                        Some((t0, first)) => {
                            let routed = rng.gen_bool(plan.routing_success);
                            let indistinguishable = rng.gen_bool(visibility);
                            if routed {
                                events.push(EmittedEvent {
                                    time_ps: t0,
                                    variant: PrepVariant::Duo {
                                        first,
                                        second: kind,
                                        indistinguishable,
                                    },
                                });
                            }
                        }
                    }
                } else {
                    let indistinguishable = rng.gen_bool(visibility);
                    events.push(EmittedEvent {
                        time_ps: emission.time_ps,
                        variant: PrepVariant::Pair { kind, indistinguishable },
                    });
                }
            }
            EmissionClass::Single => {
                let mode = prep_modes[rng.gen_range(0..prep_modes.len())].clone();
                let pol = sample_pol(&mut rng);
                events.push(EmittedEvent {
                    time_ps: emission.time_ps,
                    variant: PrepVariant::Single { mode, pol },
                });
            }
        }
    }
    events
}

fn sample_pol(rng: &mut impl Rng) -> Polarization {
    if rng.gen_bool(0.5) {
        Polarization::H
    } else {
        Polarization::V
    }
}

/// Analytic weights of the preparation variants the emission phase draws for pair
/// (or routed duo) events, conditioned on such an event occurring. Zero-weight
/// variants are omitted; the rest sum to 1. Singles are excluded because a lone
/// photon never completes a multichannel pattern.
pub fn variant_mixture(source: &SpdcSpec, preparation: &Preparation) -> Vec<(PrepVariant, f64)> {
    let f = source.entangled_fraction;
    let v = source.hom_visibility;
    let mut kinds: Vec<(PairKind, f64)> = vec![(PairKind::Entangled, f)];
    for p1 in Polarization::BOTH {
        for p2 in Polarization::BOTH {
            kinds.push((PairKind::Background(p1, p2), (1.0 - f) / 4.0));
        }
    }
    let splits = [(true, v), (false, 1.0 - v)];

    let mut mixture = Vec::new();
    match preparation {
        Preparation::DualSinglet { .. } => {
            for (first, w1) in &kinds {
                for (second, w2) in &kinds {
                    for (indistinguishable, wv) in splits {
                        let weight = w1 * w2 * wv;
                        if weight > 0.0 {
                            mixture.push((
                                PrepVariant::Duo {
                                    first: *first,
                                    second: *second,
                                    indistinguishable,
                                },
                                weight,
                            ));
                        }
                    }
                }
            }
        }
        Preparation::Singlet { .. } | Preparation::HvPair { .. } => {
            for (kind, w) in &kinds {
                for (indistinguishable, wv) in splits {
                    let weight = w * wv;
                    if weight > 0.0 {
                        mixture.push((PrepVariant::Pair { kind: *kind, indistinguishable }, weight));
                    }
                }
            }
        }
    }
    mixture
}

/// The variant an ideal source would emit every time: all pairs entangled and
/// mutually indistinguishable.
pub fn ideal_variant(preparation: &Preparation) -> PrepVariant {
    match preparation {
        Preparation::DualSinglet { .. } => PrepVariant::Duo {
            first: PairKind::Entangled,
            second: PairKind::Entangled,
            indistinguishable: true,
        },
        Preparation::Singlet { .. } | Preparation::HvPair { .. } => {
            PrepVariant::Pair { kind: PairKind::Entangled, indistinguishable: true }
        }
    }
}

/// Distribution over detector-hit signatures for one variant's final state.
/// A signature lists (detector index, photon count); photons no detector watches
/// are dropped, and temporal bins are merged (detectors time-integrate).
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    rows: Vec<OutcomeRow>,
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeRow {
    pub hits: Vec<(usize, u32)>,
    pub probability: f64,
}

impl OutcomeTable {
    pub fn build(state: &PureState, detectors: &[DetectorSpec]) -> OutcomeTable {
        let mut merged: BTreeMap<Vec<(usize, u32)>, f64> = BTreeMap::new();
        for (ket, amplitude) in state.terms() {
            let mut hits: BTreeMap<usize, u32> = BTreeMap::new();
            for (slot, count) in ket.slots() {
                if let Some(idx) = detectors.iter().position(|d| d.accepts(&slot.mode, slot.pol))
                {
                    *hits.entry(idx).or_insert(0) += count;
                }
            }
            let signature: Vec<(usize, u32)> = hits.into_iter().collect();
            *merged.entry(signature).or_insert(0.0) += amplitude.norm_sqr();
        }
        let rows: Vec<OutcomeRow> = merged
            .into_iter()
            .map(|(hits, probability)| OutcomeRow { hits, probability })
            .collect();
        let mut cumulative = Vec::with_capacity(rows.len());
        let mut acc = 0.0;
        for row in &rows {
            acc += row.probability;
            cumulative.push(acc);
        }
        OutcomeTable { rows, cumulative }
    }

    pub fn rows(&self) -> &[OutcomeRow] {
        &self.rows
    }

    /// Categorical draw by a uniform `u` in [0, 1). Rounding deficits fall into the
    /// last row.
    pub fn sample(&self, u: f64) -> &OutcomeRow {
        let idx = self.cumulative.partition_point(|&c| c <= u);
        &self.rows[idx.min(self.rows.len() - 1)]
    }

    /// Probability that every detector in `channels` receives at least one photon.
    pub fn channel_coincidence_probability(&self, channels: &[usize]) -> f64 {
        self.rows
            .iter()
            .filter(|row| {
                channels.iter().all(|ch| {
                    row.hits
                        .iter()
                        .any(|(idx, count)| idx == ch && *count >= 1)
                })
            })
            .map(|row| row.probability)
            .sum()
    }
}

/// Builds the outcome table of one variant under a (possibly scan-rewritten) circuit.
pub fn outcome_table(
    plan: &ExperimentPlan,
    circuit: &[Element],
    variant: &PrepVariant,
) -> Result<OutcomeTable, McError> {
    let input = plan.variant_state(variant)?;
    let indistinguishable = match variant {
        PrepVariant::Pair { indistinguishable, .. }
        | PrepVariant::Duo { indistinguishable, .. } => *indistinguishable,
        PrepVariant::Single { .. } => true,
    };
    let wavepacket = plan.wavepacket_for(indistinguishable);
    // Every preparation mode is a physical rail and stays addressable by the
    // circuit even when this variant leaves it in vacuum (singles do).
    let rails: BTreeMap<Mode, f64> =
        plan.preparation.modes().into_iter().map(|mode| (mode, 0.0)).collect();
    let propagated = run_circuit(Propagation::with_centers(input, rails), circuit, &wavepacket)?;
    Ok(OutcomeTable::build(&propagated.state, &plan.detectors))
}

/// Caches outcome tables for every distinct variant in `events`.
pub fn outcome_tables(
    plan: &ExperimentPlan,
    circuit: &[Element],
    events: &[EmittedEvent],
) -> Result<BTreeMap<PrepVariant, OutcomeTable>, McError> {
    let mut tables = BTreeMap::new();
    for event in events {
        if !tables.contains_key(&event.variant) {
            let table = outcome_table(plan, circuit, &event.variant)?;
            tables.insert(event.variant.clone(), table);
        }
    }
    Ok(tables)
}

struct DetectorRuntime {
    survival: f64,
    delay_ps: f64,
    jitter_sigma_ps: f64,
}

fn detector_runtimes(plan: &ExperimentPlan) -> Vec<DetectorRuntime> {
    plan.detectors
        .iter()
        .map(|det| {
            let loss_db = plan.mode_loss_db.get(&det.mode).copied().unwrap_or(0.0);
            DetectorRuntime {
                survival: crate::netmodel::db_to_transmission(loss_db) * det.efficiency,
                delay_ps: plan.mode_delay_ps.get(&det.mode).copied().unwrap_or(0.0),
                jitter_sigma_ps: det.jitter_fwhm_ps / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt()),
            }
        })
        .collect()
}

/// Parallel phase: samples detections for every event and assembles per-detector
/// tag streams (dark counts added, dead-time filtered). Identical output for any
/// rayon thread count.
pub fn simulate_timetags(
    plan: &ExperimentPlan,
    circuit: &[Element],
    seed: u64,
    point: u32,
    duration_s: f64,
) -> Result<Vec<TagStream>, McError> {
    plan.validate()?;
    let events = emission_phase(plan, seed, point, duration_s);
    let tables = outcome_tables(plan, circuit, &events)?;
    let runtimes = detector_runtimes(plan);

    let per_event: Vec<Vec<(usize, i64)>> = events
        .par_iter()
        .enumerate()
        .map(|(index, event)| {
            let mut rng = substream(seed, point, StreamKind::Detection, index as u64);
            let table = &tables[&event.variant];
            let row = table.sample(rng.gen::<f64>());
            let mut tags = Vec::new();
            for &(det_idx, count) in &row.hits {
                let rt = &runtimes[det_idx];
                for _ in 0..count {
                    if !rng.gen_bool(rt.survival) {
                        continue;
                    }
                    let jitter = if rt.jitter_sigma_ps > 0.0 {
                        Normal::new(0.0, rt.jitter_sigma_ps)
                            .expect("validated sigma")
                            .sample(&mut rng)
                    } else {
                        0.0
                    };
                    let t = event.time_ps + rt.delay_ps + jitter;
                    tags.push((det_idx, t.round() as i64));
                }
            }
            tags
        })
        .collect();

    let mut per_detector: Vec<Vec<i64>> = vec![Vec::new(); plan.detectors.len()];
    for tags in per_event {
        for (det_idx, t) in tags {
            per_detector[det_idx].push(t);
        }
    }

    for (det_idx, det) in plan.detectors.iter().enumerate() {
        if det.dark_rate_hz > 0.0 {
            let mut rng = substream(seed, point, StreamKind::DarkCounts, det_idx as u64);
            let exp = Exp::new(det.dark_rate_hz * 1e-12).expect("positive rate");
            let horizon = duration_s * 1e12;
            let mut t = 0.0f64;
            loop {
                t += exp.sample(&mut rng);
                if t >= horizon {
                    break;
                }
                per_detector[det_idx].push(t.round() as i64);
            }
        }
    }

    Ok(plan
        .detectors
        .iter()
        .zip(per_detector)
        .map(|(det, mut times)| {
            times.sort_unstable();
            apply_dead_time(&mut times, det.dead_time_ps);
            TagStream { detector_id: det.id.clone(), times_ps: times }
        })
        .collect())
}

fn apply_dead_time(times: &mut Vec<i64>, dead_time_ps: i64) {
    if dead_time_ps <= 0 {
        return;
    }
    let mut last: Option<i64> = None;
    times.retain(|&t| {
        if last.is_none_or(|l| t - l >= dead_time_ps) {
            last = Some(t);
            true
        } else {
            false
        }
    });
}
