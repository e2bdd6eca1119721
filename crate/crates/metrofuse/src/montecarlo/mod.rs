//! Stochastic half of the library: timed event sampling, detection, and analysis.
//!
//! The analytic modules answer "what state and what probabilities"; this module
//! answers "what would the time taggers record". Runs are deterministic given a
//! seed: every random decision draws from a substream addressed by (seed, scan
//! point, stream kind, event index), so results are independent of thread count
//! and individual events can be replayed in isolation.

pub mod coincidence;
pub mod experiment;
pub mod rng;
pub mod scan;

pub use coincidence::{
    accidental_estimate, find_coincidences, g2_histogram, relative_delay_estimate, Histogram,
    TagStream, TimeTag,
};
pub use experiment::{
    emission_phase, ideal_variant, outcome_table, outcome_tables, simulate_timetags,
    variant_mixture, DetectorSpec, EmittedEvent, ExperimentPlan, McError, OutcomeRow,
    OutcomeTable, PairKind, Preparation, PrepVariant,
};
pub use rng::{substream, StreamKind};
pub use scan::{
    apply_axis, point_tag_streams, projection_pattern_label, projection_pattern_pols, ScanAxis,
};
