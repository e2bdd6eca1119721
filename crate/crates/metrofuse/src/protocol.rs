//! Entanglement fusion and heralding protocol.
//!
//! Two polarization singlets enter a fusion interferometer: one photon of each pair
//! meets at a 50/50 splitter while its partner is kept as a herald. Measuring the
//! herald polarizations sorts each shot into a two-photon N00N state or a candidate
//! Bell pair on the splitter outputs. This module computes the exact post-fusion
//! state, the herald menu with conditional states, the polarization projection
//! spectrum, routing odds through the input splitter tree, and the fringe laws the
//! distributed states obey.

use num_complex::Complex64;
use num_rational::Ratio;
use thiserror::Error;

use crate::fock::{Mode, Polarization, ProjectionSpec, PureState, SlotKey};
use crate::optics::{run_circuit, Element, OpticsError, Propagation, WavepacketModel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("herald pattern carries no probability on this state")]
    ZeroProbabilityHerald,
}

/// Mode roles in the fusion layout. Photons in `interfering` meet at the splitter
/// (the second one through the variable delay), `heralds` are their partners, and
/// `outputs` are the splitter's exit modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionLayout {
    pub interfering: (Mode, Mode),
    pub heralds: (Mode, Mode),
    pub outputs: (Mode, Mode),
}

impl Default for FusionLayout {
    fn default() -> Self {
        FusionLayout {
            interfering: ("a".into(), "c".into()),
            heralds: ("b".into(), "d".into()),
            outputs: ("e".into(), "f".into()),
        }
    }
}

/// Polarization singlet `(|H V> - |V H>) / sqrt(2)` across two modes.
pub fn singlet_pair(m1: impl Into<Mode>, m2: impl Into<Mode>) -> PureState {
    let (m1, m2) = (m1.into(), m2.into());
    let hv = PureState::vacuum()
        .create(&SlotKey::new(m1.clone(), Polarization::H, 0))
        .create(&SlotKey::new(m2.clone(), Polarization::V, 0));
    let vh = PureState::vacuum()
        .create(&SlotKey::new(m1, Polarization::V, 0))
        .create(&SlotKey::new(m2, Polarization::H, 0));
    let w = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    PureState::superpose([(w, &hv), (-w, &vh)])
}

/// One H and one V photon in a single mode.
pub fn hv_pair(mode: impl Into<Mode>) -> PureState {
    let mode = mode.into();
    PureState::vacuum()
        .create(&SlotKey::new(mode.clone(), Polarization::H, 0))
        .create(&SlotKey::new(mode, Polarization::V, 0))
}

/// Two-photon N00N state `(|2_pol>_m1 - |2_pol>_m2) / sqrt(2)`.
pub fn noon_state(pol: Polarization, m1: impl Into<Mode>, m2: impl Into<Mode>) -> PureState {
    let two = |m: Mode| {
        let slot = SlotKey::new(m, pol, 0);
        // double application of the creation operator leaves norm sqrt(2)
        PureState::vacuum().create(&slot).create(&slot)
    };
    let w = Complex64::new(0.5, 0.0);
    let a = two(m1.into());
    let b = two(m2.into());
    PureState::superpose([(w, &a), (-w, &b)])
}

/// `|<a|b>|^2` for normalized states; insensitive to global phase.
pub fn fidelity(a: &PureState, b: &PureState) -> f64 {
    a.inner_product(b).norm_sqr()
}

/// Both input singlets, before fusion.
pub fn dual_pair(layout: &FusionLayout) -> PureState {
    let first = singlet_pair(layout.interfering.0.clone(), layout.heralds.0.clone());
    let second = singlet_pair(layout.interfering.1.clone(), layout.heralds.1.clone());
    first.tensor(&second).expect("disjoint fusion modes")
}

/// Runs the fusion interferometer: delays the second interfering photon by
/// `delay_ps`, then combines both on a 50/50 splitter into the output modes.
pub fn fuse(
    layout: &FusionLayout,
    delay_ps: f64,
    wavepacket: &WavepacketModel,
) -> Result<Propagation, OpticsError> {
    let elements = [
        Element::DelayLine { mode: layout.interfering.1.clone(), delay_ps },
        Element::BeamSplitter {
            in_a: layout.interfering.0.clone(),
            in_b: layout.interfering.1.clone(),
            out_a: layout.outputs.0.clone(),
            out_b: layout.outputs.1.clone(),
            reflectivity: 0.5,
        },
    ];
    run_circuit(Propagation::new(dual_pair(layout)), &elements, wavepacket)
}

/// What a herald pattern prepares on the outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeraldClass {
    /// Two photons of the given polarization, superposed across both outputs.
    Noon(Polarization),
    /// Candidate Bell pair; becomes a singlet when both outputs fire.
    Bell,
}

/// One entry of the herald menu.
#[derive(Debug, Clone)]
pub struct HeraldOutcome {
    /// Measured polarizations on (first herald, second herald).
    pub herald: (Polarization, Polarization),
    pub probability: f64,
    pub class: HeraldClass,
    /// Normalized output-mode state conditioned on this herald.
    pub conditional: PureState,
}

/// All four herald patterns with probabilities, classes, and conditional states.
/// `fused` must hold exactly one photon in each herald mode per term, which is what
/// [`fuse`] produces.
pub fn herald_menu(fused: &PureState, layout: &FusionLayout) -> Vec<HeraldOutcome> {
    let mut menu = Vec::with_capacity(4);
    for pb in Polarization::BOTH {
        for pd in Polarization::BOTH {
            let spec = ProjectionSpec::all([
                ProjectionSpec::single_photon(layout.heralds.0.clone(), pb),
                ProjectionSpec::single_photon(layout.heralds.1.clone(), pd),
            ])
            .expect("distinct herald modes");
            let (probability, collapsed) = fused.project(&spec);
            let conditional =
                collapsed.drop_modes(&[layout.heralds.0.clone(), layout.heralds.1.clone()]);
            let class = if pb == pd {
                HeraldClass::Noon(pb.other())
            } else {
                HeraldClass::Bell
            };
            menu.push(HeraldOutcome { herald: (pb, pd), probability, class, conditional });
        }
    }
    menu
}

/// Outcome of one specific herald pattern (first herald, second herald).
/// Errors when the pattern carries no probability, which only happens for states
/// other than the ones [`fuse`] produces.
pub fn herald(
    fused: &PureState,
    pattern: (Polarization, Polarization),
    layout: &FusionLayout,
) -> Result<HeraldOutcome, ProtocolError> {
    herald_menu(fused, layout)
        .into_iter()
        .find(|outcome| outcome.herald == pattern && outcome.probability >= 1e-12)
        .ok_or(ProtocolError::ZeroProbabilityHerald)
}

/// Post-selects a Bell-class conditional state on both outputs firing: returns the
/// surviving probability weight and the normalized two-photon state.
pub fn bell_post_select(conditional: &PureState, layout: &FusionLayout) -> (f64, PureState) {
    let (e, f) = (layout.outputs.0.clone(), layout.outputs.1.clone());
    let kept = conditional.filter_terms(|ket| {
        ket.mode_photons(&e) == 1 && ket.mode_photons(&f) == 1
    });
    let weight = kept.norm_sqr();
    if weight == 0.0 {
        (0.0, kept)
    } else {
        (weight, kept.normalize())
    }
}

/// Probability of each four-mode polarization pattern with exactly one photon per
/// mode, in the caller's mode order. Returns all 16 patterns.
pub fn projection_spectrum(
    state: &PureState,
    modes: &[Mode; 4],
) -> Vec<([Polarization; 4], f64)> {
    let mut spectrum = Vec::with_capacity(16);
    for idx in 0..16u32 {
        let pols: [Polarization; 4] = std::array::from_fn(|i| {
            if idx >> (3 - i) & 1 == 0 {
                Polarization::H
            } else {
                Polarization::V
            }
        });
        let spec = ProjectionSpec::all(
            modes
                .iter()
                .zip(pols)
                .map(|(m, p)| ProjectionSpec::single_photon(m.clone(), p)),
        )
        .expect("distinct spectrum modes");
        let (p, _) = state.project(&spec);
        spectrum.push((pols, p));
    }
    spectrum
}

/// Probability that every listed mode holds exactly one photon, any polarization.
pub fn fourfold_coincidence_probability(state: &PureState, modes: &[Mode]) -> f64 {
    state
        .filter_terms(|ket| modes.iter().all(|m| ket.mode_photons(m) == 1))
        .norm_sqr()
}

/// Pol-insensitive four-fold coincidence law for the fused state at amplitude
/// overlap `v` between the interfering photons: `(2 - v^2) / 4`.
pub fn fourfold_law(v: f64) -> f64 {
    (2.0 - v * v) / 4.0
}

/// Four-fold law conditioned on both heralds sharing a polarization (one specific
/// pattern of the two): `(1 - v^2) / 8`. Vanishes at perfect overlap, where the
/// same-polarization herald forces both output photons into one arm.
pub fn same_pol_heralded_law(v: f64) -> f64 {
    (1.0 - v * v) / 8.0
}

/// Probability that every photon of every pair exits its own block of the splitter
/// tree on distinct ports. `pairs` pairs enter; the tree has `2 * pairs` output
/// ports in consecutive blocks of two; each photon picks a port uniformly. With
/// `allow_pair_swap`, any assignment of pairs to blocks counts as success.
pub fn routing_success_probability(pairs: u32, allow_pair_swap: bool) -> Ratio<u64> {
    assert!((1..=3).contains(&pairs), "enumeration sized for 1 to 3 pairs");
    let ports = 2 * pairs as usize;
    let photons = 2 * pairs as usize;
    let total = (ports as u64).pow(photons as u32);
    let mut successes = 0u64;

    // Odometer over port assignments; photons 2k and 2k+1 form pair k.
    let mut assignment = vec![0usize; photons];
    loop {
        let mut blocks: Vec<Option<(usize, usize)>> = vec![None; pairs as usize];
        let mut ok = true;
        for pair in 0..pairs as usize {
            let (p1, p2) = (assignment[2 * pair], assignment[2 * pair + 1]);
            if p1 / 2 != p2 / 2 || p1 == p2 {
                ok = false;
                break;
            }
            let block = p1 / 2;
            if blocks[block].is_some() {
                ok = false;
                break;
            }
            if !allow_pair_swap && block != pair {
                ok = false;
                break;
            }
            blocks[block] = Some((pair, block));
        }
        if ok {
            successes += 1;
        }

        let mut digit = 0;
        loop {
            if digit == photons {
                return Ratio::new(successes, total);
            }
            assignment[digit] += 1;
            if assignment[digit] < ports {
                break;
            }
            assignment[digit] = 0;
            digit += 1;
        }
    }
}

/// Odds that two pairs entering the two-level splitter tree land one pair on each
/// input block of the fusion stage: exactly 1/32, by the 256-outcome enumeration.
pub fn splitter_tree_success() -> Ratio<u64> {
    routing_success_probability(2, true)
}

/// Joint detection probabilities of the four polarization patterns behind a pair of
/// analyzers, for one fringe point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeProbabilities {
    pub hh: f64,
    pub hv: f64,
    pub vh: f64,
    pub vv: f64,
}

impl FringeProbabilities {
    pub fn as_array(&self) -> [(Polarization, Polarization, f64); 4] {
        use Polarization::*;
        [(H, H, self.hh), (H, V, self.hv), (V, H, self.vh), (V, V, self.vv)]
    }
}

/// Singlet fringe behind a variable retarder and 45-degree analyzers:
/// same-polarization coincidences scan as `(1 - cos phase) / 4`, crossed ones as
/// `(1 + cos phase) / 4`.
pub fn bell_fringe(phase_rad: f64) -> FringeProbabilities {
    let c = phase_rad.cos();
    FringeProbabilities {
        hh: 0.25 * (1.0 - c),
        hv: 0.25 * (1.0 + c),
        vh: 0.25 * (1.0 + c),
        vv: 0.25 * (1.0 - c),
    }
}

/// Fringe of a mixture: `entangled_weight` of the singlet fringe plus a flat
/// quarter pedestal. The fringe visibility of every pattern equals the weight.
pub fn mixed_bell_fringe(phase_rad: f64, entangled_weight: f64) -> FringeProbabilities {
    let pure = bell_fringe(phase_rad);
    let pedestal = (1.0 - entangled_weight) * 0.25;
    FringeProbabilities {
        hh: entangled_weight * pure.hh + pedestal,
        hv: entangled_weight * pure.hv + pedestal,
        vh: entangled_weight * pure.vh + pedestal,
        vv: entangled_weight * pure.vv + pedestal,
    }
}

/// Same fringe evaluated through the state machinery: retarder on the first mode,
/// 45-degree rotations on both, then the four joint projections.
pub fn bell_fringe_via_state(
    phase_rad: f64,
    m1: impl Into<Mode>,
    m2: impl Into<Mode>,
) -> Result<FringeProbabilities, OpticsError> {
    let (m1, m2) = (m1.into(), m2.into());
    let elements = [
        Element::Retarder { mode: m1.clone(), phase_rad },
        Element::Rotation { mode: m1.clone(), angle_deg: 45.0 },
        Element::Rotation { mode: m2.clone(), angle_deg: 45.0 },
    ];
    let model = WavepacketModel::ideal(1.0).expect("positive width");
    let out = run_circuit(Propagation::new(singlet_pair(m1.clone(), m2.clone())), &elements, &model)?;
    let joint = |p1, p2| {
        let spec = ProjectionSpec::all([
            ProjectionSpec::single_photon(m1.clone(), p1),
            ProjectionSpec::single_photon(m2.clone(), p2),
        ])
        .expect("distinct modes");
        out.state.project(&spec).0
    };
    use Polarization::*;
    Ok(FringeProbabilities {
        hh: joint(H, H),
        hv: joint(H, V),
        vh: joint(V, H),
        vv: joint(V, V),
    })
}

/// `(max - min) / (max + min)`.
pub fn visibility(max: f64, min: f64) -> f64 {
    (max - min) / (max + min)
}
