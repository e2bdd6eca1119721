//! Sparse multi-mode Fock states and the linear-optics primitives that act on them.
//!
//! A slot is one bosonic degree of freedom: (spatial mode, polarization, temporal bin).
//! States are sparse maps from occupation-number kets to complex amplitudes. Internally
//! a ket's stored coefficient is taken relative to the bare creation-operator monomial,
//! so the physical amplitude of |{n_s}> is `coeff * sqrt(prod_s n_s!)`. That choice keeps
//! `create` a pure counter increment (photon exchange is exact, not just up to rounding)
//! and keeps the two-slot coupler kernel free of square roots until readout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest per-state photon number the engine is sized for. Factorial tables and the
/// coupler expansion assume totals at or below this; the protocols here use at most 4.
pub const MAX_PHOTONS: u32 = 16;

/// Magnitude below which a physical amplitude is dropped during canonicalization.
pub const DEFAULT_PRUNE_EPSILON: f64 = 1e-15;

/// Tolerance on `u† u = I` when applying a 2x2 coupler.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum FockError {
    #[error("coupler matrix is not unitary (max deviation {deviation:.3e})")]
    NonUnitary { deviation: f64 },
    #[error("tensor factors share spatial mode `{0}`")]
    OverlappingModes(Mode),
    #[error("projection constrains ({mode}, {pol}) more than once")]
    ConflictingConstraint { mode: Mode, pol: Polarization },
    #[error("basis ket occupation for {0} exceeds the supported photon number")]
    PhotonLimit(SlotKey),
    #[error("unparseable state text at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Photon polarization in the laboratory H/V basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub const BOTH: [Polarization; 2] = [Polarization::H, Polarization::V];

    pub fn other(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => write!(f, "H"),
            Polarization::V => write!(f, "V"),
        }
    }
}

/// Symbolic spatial-mode label ("a", "b", "loc", ...). Ordering is lexicographic and
/// fixes the canonical slot order inside kets.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mode(String);

impl Mode {
    pub fn new(label: impl Into<String>) -> Self {
        Mode(label.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for Mode {
    fn from(s: &str) -> Self {
        Mode::new(s)
    }
}

/// One bosonic slot: spatial mode, polarization, temporal bin.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotKey {
    pub mode: Mode,
    pub pol: Polarization,
    pub tbin: u8,
}

impl SlotKey {
    pub fn new(mode: impl Into<Mode>, pol: Polarization, tbin: u8) -> Self {
        SlotKey { mode: mode.into(), pol, tbin }
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.mode, self.pol, self.tbin)
    }
}

/// Occupation-number basis ket, stored as a sorted list of (slot, count) with all
/// counts strictly positive. Two kets compare equal iff they describe the same
/// occupations, so the representation is canonical by construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct BasisKet {
    slots: Vec<(SlotKey, u32)>,
}

impl BasisKet {
    pub fn empty() -> Self {
        BasisKet { slots: Vec::new() }
    }

    /// Builds a ket from (slot, count) pairs; duplicate slots accumulate.
    pub fn from_occupations(occ: impl IntoIterator<Item = (SlotKey, u32)>) -> Self {
        let mut ket = BasisKet::empty();
        for (slot, count) in occ {
            if count > 0 {
                ket.add(&slot, count);
            }
        }
        ket
    }

    pub fn occupation(&self, slot: &SlotKey) -> u32 {
        match self.slots.binary_search_by(|(s, _)| s.cmp(slot)) {
            Ok(i) => self.slots[i].1,
            Err(_) => 0,
        }
    }

    pub fn total_photons(&self) -> u32 {
        self.slots.iter().map(|(_, n)| n).sum()
    }

    pub fn slots(&self) -> impl Iterator<Item = &(SlotKey, u32)> {
        self.slots.iter()
    }

    pub fn is_vacuum(&self) -> bool {
        self.slots.is_empty()
    }

    /// Total occupation of a spatial mode, all polarizations and bins.
    pub fn mode_photons(&self, mode: &Mode) -> u32 {
        self.slots
            .iter()
            .filter(|(s, _)| &s.mode == mode)
            .map(|(_, n)| n)
            .sum()
    }

    /// Total occupation of (mode, pol) summed over temporal bins.
    pub fn mode_pol_photons(&self, mode: &Mode, pol: Polarization) -> u32 {
        self.slots
            .iter()
            .filter(|(s, _)| &s.mode == mode && s.pol == pol)
            .map(|(_, n)| n)
            .sum()
    }

    pub fn modes(&self) -> BTreeSet<Mode> {
        self.slots.iter().map(|(s, _)| s.mode.clone()).collect()
    }

    fn add(&mut self, slot: &SlotKey, count: u32) {
        match self.slots.binary_search_by(|(s, _)| s.cmp(slot)) {
            Ok(i) => self.slots[i].1 += count,
            Err(i) => self.slots.insert(i, (slot.clone(), count)),
        }
    }

    fn without_slots(&self, a: &SlotKey, b: &SlotKey) -> BasisKet {
        let slots = self
            .slots
            .iter()
            .filter(|(s, _)| s != a && s != b)
            .cloned()
            .collect();
        BasisKet { slots }
    }

    /// `sqrt(prod_s n_s!)`, the conversion between a monomial coefficient and the
    /// physical ket amplitude.
    fn norm_factor(&self) -> f64 {
        self.slots
            .iter()
            .map(|(_, n)| FACTORIAL[*n as usize].sqrt())
            .product()
    }

    /// `prod_s n_s!` as an exact integer-valued float.
    fn factorial_product(&self) -> f64 {
        self.slots
            .iter()
            .map(|(_, n)| FACTORIAL[*n as usize])
            .product()
    }
}

impl fmt::Display for BasisKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.slots.is_empty() {
            return Ok(());
        }
        let mut first = true;
        for (slot, count) in &self.slots {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{slot}^{count}")?;
            first = false;
        }
        Ok(())
    }
}

const FACTORIAL: [f64; 17] = {
    let mut t = [1.0; 17];
    let mut i = 1;
    while i < 17 {
        t[i] = t[i - 1] * i as f64;
        i += 1;
    }
    t
};

/// 2x2 complex coupler matrix; row i holds the output coefficients of input i,
/// i.e. `in_i† -> u[i][0] out_0† + u[i][1] out_1†`.
pub type Mat2 = [[Complex64; 2]; 2];

/// Which pairs of slots a 2x2 coupler acts on.
///
/// Each variant names two slot families that pair up channel by channel; the same
/// matrix is applied independently to every channel:
/// - `SpatialModes`: channels are (pol, tbin); a beam splitter between two modes.
/// - `Polarizations`: channels are tbins; a waveplate/retarder inside one mode.
/// - `TemporalBins`: channels are polarizations; wavepacket decomposition in one mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CouplerKind {
    SpatialModes { in_a: Mode, in_b: Mode, out_a: Mode, out_b: Mode },
    Polarizations { mode: Mode },
    TemporalBins { mode: Mode, bin_a: u8, bin_b: u8 },
}

/// One projection constraint: required photon count at (mode, pol), either in a
/// specific temporal bin or summed over all bins (`tbin: None`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotPattern {
    pub mode: Mode,
    pub pol: Polarization,
    pub tbin: Option<u8>,
}

/// A projective measurement outcome: a conjunction of occupation constraints.
/// Constraints never target the same (mode, pol) twice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectionSpec {
    constraints: Vec<(SlotPattern, u32)>,
}

impl ProjectionSpec {
    pub fn new(
        constraints: impl IntoIterator<Item = (SlotPattern, u32)>,
    ) -> Result<Self, FockError> {
        let constraints: Vec<_> = constraints.into_iter().collect();
        let mut seen = BTreeSet::new();
        for (pattern, _) in &constraints {
            if !seen.insert((pattern.mode.clone(), pattern.pol)) {
                return Err(FockError::ConflictingConstraint {
                    mode: pattern.mode.clone(),
                    pol: pattern.pol,
                });
            }
        }
        Ok(ProjectionSpec { constraints })
    }

    /// Constrains a mode to exactly one photon of polarization `pol` (and zero of the
    /// other), any temporal bin. The usual polarizing-splitter + detector outcome.
    pub fn single_photon(mode: impl Into<Mode>, pol: Polarization) -> Self {
        let mode = mode.into();
        ProjectionSpec {
            constraints: vec![
                (SlotPattern { mode: mode.clone(), pol, tbin: None }, 1),
                (SlotPattern { mode, pol: pol.other(), tbin: None }, 0),
            ],
        }
    }

    /// Conjunction of several specs. Errors if any (mode, pol) is constrained twice.
    pub fn all(specs: impl IntoIterator<Item = ProjectionSpec>) -> Result<Self, FockError> {
        ProjectionSpec::new(specs.into_iter().flat_map(|s| s.constraints))
    }

    pub fn matches(&self, ket: &BasisKet) -> bool {
        self.constraints.iter().all(|(pattern, required)| {
            let count = match pattern.tbin {
                Some(t) => ket.occupation(&SlotKey {
                    mode: pattern.mode.clone(),
                    pol: pattern.pol,
                    tbin: t,
                }),
                None => ket.mode_pol_photons(&pattern.mode, pattern.pol),
            };
            count == *required
        })
    }

    pub fn constraints(&self) -> impl Iterator<Item = (&SlotPattern, u32)> {
        self.constraints.iter().map(|(p, n)| (p, *n))
    }
}

/// Sparse pure state over occupation-number kets.
///
/// The map value is the creation-operator monomial coefficient; use [`PureState::amplitude`]
/// or [`PureState::terms`] for physical amplitudes. All operations return new states.
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    coeffs: BTreeMap<BasisKet, Complex64>,
    prune_epsilon: f64,
}

impl PureState {
    /// The vacuum |0...0> with amplitude 1.
    pub fn vacuum() -> Self {
        let mut coeffs = BTreeMap::new();
        coeffs.insert(BasisKet::empty(), Complex64::new(1.0, 0.0));
        PureState { coeffs, prune_epsilon: DEFAULT_PRUNE_EPSILON }
    }

    pub fn zero() -> Self {
        PureState { coeffs: BTreeMap::new(), prune_epsilon: DEFAULT_PRUNE_EPSILON }
    }

    pub fn with_prune_epsilon(mut self, epsilon: f64) -> Self {
        self.prune_epsilon = epsilon;
        self
    }

    pub fn prune_epsilon(&self) -> f64 {
        self.prune_epsilon
    }

    /// Builds a state from physical (ket, amplitude) terms.
    pub fn from_terms(
        terms: impl IntoIterator<Item = (BasisKet, Complex64)>,
    ) -> Result<Self, FockError> {
        let mut coeffs: BTreeMap<BasisKet, Complex64> = BTreeMap::new();
        for (ket, amp) in terms {
            for (slot, n) in ket.slots() {
                if *n > MAX_PHOTONS {
                    return Err(FockError::PhotonLimit(slot.clone()));
                }
            }
            let factor = ket.norm_factor();
            *coeffs.entry(ket).or_insert(Complex64::new(0.0, 0.0)) += amp / factor;
        }
        let mut state = PureState { coeffs, prune_epsilon: DEFAULT_PRUNE_EPSILON };
        state.prune();
        Ok(state)
    }

    /// Physical amplitude of `ket` (zero if absent).
    pub fn amplitude(&self, ket: &BasisKet) -> Complex64 {
        match self.coeffs.get(ket) {
            Some(c) => c * ket.norm_factor(),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Iterates (ket, physical amplitude) in canonical ket order.
    pub fn terms(&self) -> impl Iterator<Item = (&BasisKet, Complex64)> {
        self.coeffs.iter().map(|(k, c)| (k, c * k.norm_factor()))
    }

    pub fn term_count(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Applies the creation operator for `slot`: a†|n> = sqrt(n+1)|n+1>.
    /// In monomial form this is a pure counter increment, so any ordering of
    /// `create` calls yields bit-identical states.
    pub fn create(&self, slot: &SlotKey) -> PureState {
        let mut coeffs = BTreeMap::new();
        for (ket, c) in &self.coeffs {
            let mut new_ket = ket.clone();
            new_ket.add(slot, 1);
            coeffs.insert(new_ket, *c);
        }
        PureState { coeffs, prune_epsilon: self.prune_epsilon }
    }

    /// Linear combination `sum_i weight_i * state_i`, canonicalized and pruned.
    pub fn superpose<'a>(parts: impl IntoIterator<Item = (Complex64, &'a PureState)>) -> PureState {
        let mut coeffs: BTreeMap<BasisKet, Complex64> = BTreeMap::new();
        let mut epsilon = DEFAULT_PRUNE_EPSILON;
        for (weight, state) in parts {
            epsilon = epsilon.min(state.prune_epsilon);
            for (ket, c) in &state.coeffs {
                *coeffs.entry(ket.clone()).or_insert(Complex64::new(0.0, 0.0)) += weight * c;
            }
        }
        let mut state = PureState { coeffs, prune_epsilon: epsilon };
        state.prune();
        state
    }

    /// Tensor product of states on disjoint spatial-mode sets.
    pub fn tensor(&self, other: &PureState) -> Result<PureState, FockError> {
        let own_modes: BTreeSet<Mode> =
            self.coeffs.keys().flat_map(|k| k.modes()).collect();
        for ket in other.coeffs.keys() {
            for mode in ket.modes() {
                if own_modes.contains(&mode) {
                    return Err(FockError::OverlappingModes(mode));
                }
            }
        }
        let mut coeffs = BTreeMap::new();
        for (ka, ca) in &self.coeffs {
            for (kb, cb) in &other.coeffs {
                let mut ket = ka.clone();
                for (slot, n) in kb.slots() {
                    ket.add(slot, *n);
                }
                coeffs.insert(ket, ca * cb);
            }
        }
        let mut state = PureState {
            coeffs,
            prune_epsilon: self.prune_epsilon.min(other.prune_epsilon),
        };
        state.prune();
        Ok(state)
    }

    /// <self|other>, conjugate-linear in `self`.
    pub fn inner_product(&self, other: &PureState) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (ket, ca) in &self.coeffs {
            if let Some(cb) = other.coeffs.get(ket) {
                acc += ca.conj() * cb * ket.factorial_product();
            }
        }
        acc
    }

    pub fn norm_sqr(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|(ket, c)| c.norm_sqr() * ket.factorial_product())
            .sum()
    }

    pub fn normalize(&self) -> PureState {
        let norm = self.norm_sqr().sqrt();
        if norm == 0.0 {
            return self.clone();
        }
        let coeffs = self
            .coeffs
            .iter()
            .map(|(k, c)| (k.clone(), c / norm))
            .collect();
        PureState { coeffs, prune_epsilon: self.prune_epsilon }
    }

    /// Total photon number if every ket agrees, `None` for a mixed-number state.
    /// The operations in this crate never mix photon number.
    pub fn total_photons(&self) -> Option<u32> {
        let mut iter = self.coeffs.keys();
        let first = iter.next()?.total_photons();
        iter.all(|k| k.total_photons() == first).then_some(first)
    }

    pub fn modes(&self) -> BTreeSet<Mode> {
        self.coeffs.keys().flat_map(|k| k.modes()).collect()
    }

    /// Applies a 2x2 coupler to every channel of the given slot-family pair.
    /// Errors if `u` is not unitary to within [`UNITARITY_TOLERANCE`].
    pub fn apply_coupler(&self, kind: &CouplerKind, u: &Mat2) -> Result<PureState, FockError> {
        check_unitary(u)?;
        let mut state = self.clone();
        for (in_a, in_b, out_a, out_b) in self.coupler_channels(kind) {
            state = state.apply_pair(&in_a, &in_b, &out_a, &out_b, u);
        }
        state.prune();
        Ok(state)
    }

    /// Probability of `spec` and the renormalized collapsed state. A zero-probability
    /// outcome returns `(0.0, zero state)`.
    pub fn project(&self, spec: &ProjectionSpec) -> (f64, PureState) {
        let mut coeffs = BTreeMap::new();
        let mut prob = 0.0;
        for (ket, c) in &self.coeffs {
            if spec.matches(ket) {
                prob += c.norm_sqr() * ket.factorial_product();
                coeffs.insert(ket.clone(), *c);
            }
        }
        if prob <= 0.0 {
            return (0.0, PureState::zero().with_prune_epsilon(self.prune_epsilon));
        }
        let scale = prob.sqrt();
        for c in coeffs.values_mut() {
            *c /= scale;
        }
        (prob, PureState { coeffs, prune_epsilon: self.prune_epsilon })
    }

    /// Keeps only terms satisfying `pred`, without renormalizing.
    pub fn filter_terms(&self, pred: impl Fn(&BasisKet) -> bool) -> PureState {
        let coeffs = self
            .coeffs
            .iter()
            .filter(|(k, _)| pred(k))
            .map(|(k, c)| (k.clone(), *c))
            .collect();
        PureState { coeffs, prune_epsilon: self.prune_epsilon }
    }

    /// Relabels every slot through `f`. The map must be injective on each ket's
    /// occupied slots (pure relabeling); merging slots is not a linear-optics
    /// operation and would corrupt amplitudes.
    pub fn map_slots(&self, f: impl Fn(&SlotKey) -> SlotKey) -> PureState {
        let mut coeffs = BTreeMap::new();
        for (ket, c) in &self.coeffs {
            let mut new_ket = BasisKet::empty();
            for (slot, n) in ket.slots() {
                new_ket.add(&f(slot), *n);
            }
            coeffs.insert(new_ket, *c);
        }
        PureState { coeffs, prune_epsilon: self.prune_epsilon }
    }

    /// Drops the given spatial modes from every ket. Only meaningful after a
    /// projection has fixed those modes to a single occupation pattern.
    pub fn drop_modes(&self, modes: &[Mode]) -> PureState {
        let mut coeffs = BTreeMap::new();
        for (ket, c) in &self.coeffs {
            let slots = ket
                .slots()
                .filter(|(s, _)| !modes.contains(&s.mode))
                .cloned()
                .collect();
            let ket = BasisKet { slots };
            *coeffs.entry(ket).or_insert(Complex64::new(0.0, 0.0)) += c;
        }
        PureState { coeffs, prune_epsilon: self.prune_epsilon }
    }

    fn prune(&mut self) {
        let eps = self.prune_epsilon;
        self.coeffs
            .retain(|ket, c| c.norm() * ket.norm_factor() > eps);
    }

    /// Enumerates the channels a coupler acts on, from the slots occupied in this state.
    fn coupler_channels(&self, kind: &CouplerKind) -> Vec<(SlotKey, SlotKey, SlotKey, SlotKey)> {
        match kind {
            CouplerKind::SpatialModes { in_a, in_b, out_a, out_b } => {
                let mut channels = BTreeSet::new();
                for ket in self.coeffs.keys() {
                    for (slot, _) in ket.slots() {
                        if &slot.mode == in_a || &slot.mode == in_b {
                            channels.insert((slot.pol, slot.tbin));
                        }
                    }
                }
                channels
                    .into_iter()
                    .map(|(pol, tbin)| {
                        (
                            SlotKey { mode: in_a.clone(), pol, tbin },
                            SlotKey { mode: in_b.clone(), pol, tbin },
                            SlotKey { mode: out_a.clone(), pol, tbin },
                            SlotKey { mode: out_b.clone(), pol, tbin },
                        )
                    })
                    .collect()
            }
            CouplerKind::Polarizations { mode } => {
                let mut tbins = BTreeSet::new();
                for ket in self.coeffs.keys() {
                    for (slot, _) in ket.slots() {
                        if &slot.mode == mode {
                            tbins.insert(slot.tbin);
                        }
                    }
                }
                tbins
                    .into_iter()
                    .map(|tbin| {
                        let h = SlotKey { mode: mode.clone(), pol: Polarization::H, tbin };
                        let v = SlotKey { mode: mode.clone(), pol: Polarization::V, tbin };
                        (h.clone(), v.clone(), h, v)
                    })
                    .collect()
            }
            CouplerKind::TemporalBins { mode, bin_a, bin_b } => Polarization::BOTH
                .iter()
                .map(|&pol| {
                    let a = SlotKey { mode: mode.clone(), pol, tbin: *bin_a };
                    let b = SlotKey { mode: mode.clone(), pol, tbin: *bin_b };
                    (a.clone(), b.clone(), a, b)
                })
                .collect(),
        }
    }

    /// Two-slot kernel: expands `(u00 A† + u01 B†)^m (u10 A† + u11 B†)^n` term by term.
    /// Output slots may coincide with inputs or with already-occupied slots; operator
    /// exponents simply add, which is exactly the bosonic product rule in monomial form.
    fn apply_pair(
        &self,
        in_a: &SlotKey,
        in_b: &SlotKey,
        out_a: &SlotKey,
        out_b: &SlotKey,
        u: &Mat2,
    ) -> PureState {
        let mut coeffs: BTreeMap<BasisKet, Complex64> = BTreeMap::new();
        for (ket, &coeff) in &self.coeffs {
            let m = ket.occupation(in_a);
            let n = ket.occupation(in_b);
            if m == 0 && n == 0 {
                *coeffs.entry(ket.clone()).or_insert(Complex64::new(0.0, 0.0)) += coeff;
                continue;
            }
            let base = ket.without_slots(in_a, in_b);
            for j in 0..=m {
                let wa = binomial(m, j) * cpow(u[0][0], j) * cpow(u[0][1], m - j);
                for k in 0..=n {
                    let wb = binomial(n, k) * cpow(u[1][0], k) * cpow(u[1][1], n - k);
                    let weight = coeff * wa * wb;
                    if weight.norm_sqr() == 0.0 {
                        continue;
                    }
                    let mut new_ket = base.clone();
                    let pa = j + k;
                    let pb = (m - j) + (n - k);
                    if pa > 0 {
                        new_ket.add(out_a, pa);
                    }
                    if pb > 0 {
                        new_ket.add(out_b, pb);
                    }
                    *coeffs.entry(new_ket).or_insert(Complex64::new(0.0, 0.0)) += weight;
                }
            }
        }
        PureState { coeffs, prune_epsilon: self.prune_epsilon }
    }

    /// Canonical text form: one term per line, `amp_re amp_im | slot^count ...`,
    /// lines in ket order, physical amplitudes. The vacuum term ends at the bar.
    pub fn to_canonical_text(&self) -> String {
        let mut out = String::new();
        for (ket, amp) in self.terms() {
            out.push_str(&format!("{} {} |", amp.re, amp.im));
            if !ket.is_vacuum() {
                out.push_str(&format!(" {ket}"));
            }
            out.push('\n');
        }
        out
    }

    /// Parses the canonical text form.
    pub fn from_canonical_text(text: &str) -> Result<PureState, FockError> {
        let mut terms = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: &str| FockError::Parse { line: idx + 1, reason: reason.into() };
            let (nums, kets) = line.split_once('|').ok_or_else(|| err("missing `|`"))?;
            let mut nums = nums.split_whitespace();
            let re: f64 = nums
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err("bad real part"))?;
            let im: f64 = nums
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| err("bad imaginary part"))?;
            if nums.next().is_some() {
                return Err(err("extra amplitude fields"));
            }
            let mut occupations = Vec::new();
            for part in kets.split_whitespace() {
                let (slot, count) = part.rsplit_once('^').ok_or_else(|| err("missing `^`"))?;
                let count: u32 = count.parse().map_err(|_| err("bad count"))?;
                let fields: Vec<&str> = slot.split(':').collect();
                if fields.len() != 3 {
                    return Err(err("slot is not mode:pol:tbin"));
                }
                let pol = match fields[1] {
                    "H" => Polarization::H,
                    "V" => Polarization::V,
                    _ => return Err(err("bad polarization")),
                };
                let tbin: u8 = fields[2].parse().map_err(|_| err("bad tbin"))?;
                occupations.push((SlotKey::new(fields[0], pol, tbin), count));
            }
            terms.push((BasisKet::from_occupations(occupations), Complex64::new(re, im)));
        }
        PureState::from_terms(terms)
    }
}

fn check_unitary(u: &Mat2) -> Result<(), FockError> {
    // rows of u† u - I
    let mut deviation: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let acc: Complex64 = u.iter().map(|row| row[i].conj() * row[j]).sum();
            let expected = if i == j { 1.0 } else { 0.0 };
            deviation = deviation.max((acc - expected).norm());
        }
    }
    if deviation > UNITARITY_TOLERANCE {
        return Err(FockError::NonUnitary { deviation });
    }
    Ok(())
}

fn binomial(n: u32, k: u32) -> f64 {
    FACTORIAL[n as usize] / (FACTORIAL[k as usize] * FACTORIAL[(n - k) as usize])
}

fn cpow(c: Complex64, k: u32) -> Complex64 {
    let mut acc = Complex64::new(1.0, 0.0);
    for _ in 0..k {
        acc *= c;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn slot(mode: &str, pol: Polarization) -> SlotKey {
        SlotKey::new(mode, pol, 0)
    }

    fn assert_close(a: Complex64, b: Complex64, tol: f64) {
        assert!((a - b).norm() <= tol, "{a} != {b}");
    }

    const FIFTY_FIFTY: Mat2 = {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        [
            [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
            [Complex64::new(h, 0.0), Complex64::new(-h, 0.0)],
        ]
    };

    #[test]
    fn vacuum_is_normalized() {
        let v = PureState::vacuum();
        assert_eq!(v.norm_sqr(), 1.0);
        assert_eq!(v.total_photons(), Some(0));
    }

    #[test]
    fn double_occupation_amplitude_carries_bosonic_factor() {
        let s = PureState::vacuum()
            .create(&slot("e", Polarization::H))
            .create(&slot("e", Polarization::H));
        let ket = BasisKet::from_occupations([(slot("e", Polarization::H), 2)]);
        assert_close(s.amplitude(&ket), c(2.0_f64.sqrt()), 1e-15);
        assert!((s.norm_sqr() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn create_order_is_immaterial_exactly() {
        let a = slot("a", Polarization::H);
        let b = slot("b", Polarization::V);
        let s1 = PureState::vacuum().create(&a).create(&b).create(&a);
        let s2 = PureState::vacuum().create(&b).create(&a).create(&a);
        assert_eq!(s1, s2);
    }

    #[test]
    fn superposition_cancels_exactly() {
        let a = PureState::vacuum().create(&slot("a", Polarization::H));
        let s = PureState::superpose([(c(1.0), &a), (c(-1.0), &a)]);
        assert!(s.is_zero());
    }

    #[test]
    fn tensor_rejects_shared_modes() {
        let a = PureState::vacuum().create(&slot("a", Polarization::H));
        let err = a.tensor(&a).unwrap_err();
        assert_eq!(err, FockError::OverlappingModes(Mode::new("a")));
    }

    #[test]
    fn tensor_with_vacuum_is_identity() {
        let a = PureState::vacuum().create(&slot("a", Polarization::H));
        let t = a.tensor(&PureState::vacuum()).unwrap();
        assert_eq!(t, a);
    }

    #[test]
    fn hong_ou_mandel_bunching_on_fifty_fifty() {
        let s = PureState::vacuum()
            .create(&slot("a", Polarization::H))
            .create(&slot("c", Polarization::H));
        let kind = CouplerKind::SpatialModes {
            in_a: "a".into(),
            in_b: "c".into(),
            out_a: "e".into(),
            out_b: "f".into(),
        };
        let out = s.apply_coupler(&kind, &FIFTY_FIFTY).unwrap();
        let two_e = BasisKet::from_occupations([(slot("e", Polarization::H), 2)]);
        let two_f = BasisKet::from_occupations([(slot("f", Polarization::H), 2)]);
        let split = BasisKet::from_occupations([
            (slot("e", Polarization::H), 1),
            (slot("f", Polarization::H), 1),
        ]);
        let inv_sqrt2 = c(1.0 / 2.0_f64.sqrt());
        assert_close(out.amplitude(&two_e), inv_sqrt2, 1e-15);
        assert_close(out.amplitude(&two_f), -inv_sqrt2, 1e-15);
        // the coincidence term cancels exactly in the monomial expansion
        assert_eq!(out.amplitude(&split), c(0.0));
    }

    #[test]
    fn cross_polarized_inputs_split_four_ways() {
        let s = PureState::vacuum()
            .create(&slot("a", Polarization::H))
            .create(&slot("c", Polarization::V));
        let kind = CouplerKind::SpatialModes {
            in_a: "a".into(),
            in_b: "c".into(),
            out_a: "e".into(),
            out_b: "f".into(),
        };
        let out = s.apply_coupler(&kind, &FIFTY_FIFTY).unwrap();
        assert_eq!(out.term_count(), 4);
        let eh_fv = BasisKet::from_occupations([
            (slot("e", Polarization::H), 1),
            (slot("f", Polarization::V), 1),
        ]);
        assert_close(out.amplitude(&eh_fv), c(-0.5), 1e-15);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coupler_applied_twice_is_identity() {
        // the 50/50 matrix is an involution; reusing the input labels keeps it in place
        let s = PureState::vacuum()
            .create(&slot("a", Polarization::H))
            .create(&slot("a", Polarization::V))
            .create(&slot("c", Polarization::H));
        let kind = CouplerKind::SpatialModes {
            in_a: "a".into(),
            in_b: "c".into(),
            out_a: "a".into(),
            out_b: "c".into(),
        };
        let once = s.apply_coupler(&kind, &FIFTY_FIFTY).unwrap();
        let twice = once.apply_coupler(&kind, &FIFTY_FIFTY).unwrap();
        for (ket, amp) in s.terms() {
            assert_close(twice.amplitude(ket), amp, 1e-12);
        }
    }

    #[test]
    fn non_unitary_matrix_is_rejected() {
        let bad: Mat2 = [
            [c(1.0), c(1.0)],
            [c(0.0), c(1.0)],
        ];
        let s = PureState::vacuum().create(&slot("a", Polarization::H));
        let kind = CouplerKind::Polarizations { mode: "a".into() };
        assert!(matches!(
            s.apply_coupler(&kind, &bad),
            Err(FockError::NonUnitary { .. })
        ));
    }

    #[test]
    fn projection_on_single_photon_patterns() {
        let s = PureState::from_terms([
            (
                BasisKet::from_occupations([
                    (slot("b", Polarization::H), 1),
                    (slot("d", Polarization::V), 1),
                ]),
                c(0.6),
            ),
            (
                BasisKet::from_occupations([
                    (slot("b", Polarization::V), 1),
                    (slot("d", Polarization::H), 1),
                ]),
                c(-0.8),
            ),
        ])
        .unwrap();
        let spec = ProjectionSpec::all([
            ProjectionSpec::single_photon("b", Polarization::V),
            ProjectionSpec::single_photon("d", Polarization::H),
        ])
        .unwrap();
        let (p, collapsed) = s.project(&spec);
        assert!((p - 0.64).abs() < 1e-12);
        assert!((collapsed.norm_sqr() - 1.0).abs() < 1e-12);
        let vacuum_like = s.project(
            &ProjectionSpec::all([
                ProjectionSpec::single_photon("b", Polarization::H),
                ProjectionSpec::single_photon("d", Polarization::H),
            ])
            .unwrap(),
        );
        assert_eq!(vacuum_like.0, 0.0);
        assert!(vacuum_like.1.is_zero());
    }

    #[test]
    fn projection_rejects_duplicate_constraints() {
        let err = ProjectionSpec::all([
            ProjectionSpec::single_photon("b", Polarization::H),
            ProjectionSpec::single_photon("b", Polarization::V),
        ])
        .unwrap_err();
        assert!(matches!(err, FockError::ConflictingConstraint { .. }));
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_lhs() {
        let a = PureState::from_terms([(
            BasisKet::from_occupations([(slot("a", Polarization::H), 1)]),
            Complex64::new(0.0, 1.0),
        )])
        .unwrap();
        let b = PureState::from_terms([(
            BasisKet::from_occupations([(slot("a", Polarization::H), 1)]),
            c(1.0),
        )])
        .unwrap();
        assert_close(a.inner_product(&b), Complex64::new(0.0, -1.0), 1e-15);
    }

    #[test]
    fn canonical_text_round_trips() {
        let s = PureState::vacuum()
            .create(&slot("e", Polarization::H))
            .create(&slot("e", Polarization::H))
            .create(&slot("b", Polarization::V))
            .normalize();
        let text = s.to_canonical_text();
        let parsed = PureState::from_canonical_text(&text).unwrap();
        for (ket, amp) in s.terms() {
            assert_close(parsed.amplitude(ket), amp, 1e-12);
        }
    }

    #[test]
    fn drop_modes_removes_projected_slots() {
        let s = PureState::from_terms([(
            BasisKet::from_occupations([
                (slot("b", Polarization::V), 1),
                (slot("e", Polarization::H), 1),
            ]),
            c(1.0),
        )])
        .unwrap();
        let dropped = s.drop_modes(&[Mode::new("b")]);
        let expected = BasisKet::from_occupations([(slot("e", Polarization::H), 1)]);
        assert_close(dropped.amplitude(&expected), c(1.0), 1e-15);
    }
}
