//! Table-top optical elements and circuit propagation.
//!
//! A circuit is a list of [`Element`]s applied in order to a [`Propagation`], which
//! carries the quantum state together with each mode's wavepacket center (ps). Delay
//! lines move centers; when a beam splitter combines modes whose centers differ, or
//! whose mutual overlap is reduced, the later wavepacket is first decomposed into a
//! component matching the earlier one (temporal bin 0) and an orthogonal remainder
//! (bin 1). Only bin-0 components interfere, which is what turns path delay into a
//! Hong-Ou-Mandel dip without tracking full temporal amplitudes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{CouplerKind, FockError, Mat2, Mode, Polarization, PureState, SlotKey};

#[derive(Debug, Error)]
pub enum OpticsError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("element references unknown mode `{mode}`")]
    UnknownMode { mode: Mode },
    #[error("element output would collide with occupied mode `{mode}`")]
    ModeCollision { mode: Mode },
    #[error("bad element parameter: {detail}")]
    BadParameter { detail: String },
}

/// Beam-splitter matrix with power reflectivity `rho`:
/// `in_a -> sqrt(rho) out_a + sqrt(1-rho) out_b`,
/// `in_b -> sqrt(1-rho) out_a - sqrt(rho) out_b`.
pub fn beam_splitter_matrix(reflectivity: f64) -> Mat2 {
    let r = reflectivity.sqrt();
    let t = (1.0 - reflectivity).sqrt();
    [
        [Complex64::new(r, 0.0), Complex64::new(t, 0.0)],
        [Complex64::new(t, 0.0), Complex64::new(-r, 0.0)],
    ]
}

/// Polarization rotation by `angle_rad`: `H -> cos H + sin V`, `V -> -sin H + cos V`.
/// 45 degrees sends H to the diagonal basis; 90 degrees swaps H and V (up to sign).
pub fn rotation_matrix(angle_rad: f64) -> Mat2 {
    let (s, c) = angle_rad.sin_cos();
    [
        [Complex64::new(c, 0.0), Complex64::new(s, 0.0)],
        [Complex64::new(-s, 0.0), Complex64::new(c, 0.0)],
    ]
}

/// Variable retarder: phase `phase_rad` on V relative to H.
pub fn retarder_matrix(phase_rad: f64) -> Mat2 {
    [
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::from_polar(1.0, phase_rad)],
    ]
}

/// One optical element. Angles are degrees (lab convention), retardances radians,
/// delays picoseconds.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    /// Non-polarizing splitter between two spatial modes. Output modes may reuse the
    /// input labels or introduce fresh ones.
    BeamSplitter {
        in_a: Mode,
        in_b: Mode,
        out_a: Mode,
        out_b: Mode,
        reflectivity: f64,
    },
    /// Polarizing splitter: H exits to `out_h`, V to `out_v`. A nonzero slow axis
    /// rotates the incoming polarization frame first.
    PolarizingSplitter {
        input: Mode,
        out_h: Mode,
        out_v: Mode,
        slow_axis_deg: f64,
    },
    /// Liquid-crystal variable retarder: programmable phase on V relative to H.
    Retarder { mode: Mode, phase_rad: f64 },
    /// Polarization rotation (half-wave plate at half the angle).
    Rotation { mode: Mode, angle_deg: f64 },
    /// Variable delay line: shifts the mode's wavepacket center.
    DelayLine { mode: Mode, delay_ps: f64 },
}

/// Gaussian wavepacket envelope shared by all photons of a run.
///
/// `sigma_t_ps` parameterizes mutual coherence: two copies of the packet offset by
/// `delta` have amplitude overlap `exp(-delta^2 / (4 sigma_t^2))`, so a Hong-Ou-Mandel
/// coincidence deficit scans as a Gaussian of standard deviation `sigma_t` (FWHM
/// `2 sqrt(2 ln 2) sigma_t`). `overlap_scale` multiplies that amplitude overlap;
/// samplers use it as a 0/1 branch to model a partially indistinguishable ensemble.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WavepacketModel {
    sigma_t_ps: f64,
    overlap_scale: f64,
}

impl WavepacketModel {
    pub fn new(sigma_t_ps: f64, overlap_scale: f64) -> Result<Self, OpticsError> {
        if !(sigma_t_ps > 0.0) {
            return Err(OpticsError::BadParameter {
                detail: format!("sigma_t_ps must be positive, got {sigma_t_ps}"),
            });
        }
        if !(0.0..=1.0).contains(&overlap_scale) {
            return Err(OpticsError::BadParameter {
                detail: format!("overlap_scale must lie in [0, 1], got {overlap_scale}"),
            });
        }
        Ok(WavepacketModel { sigma_t_ps, overlap_scale })
    }

    /// Perfectly indistinguishable packets.
    pub fn ideal(sigma_t_ps: f64) -> Result<Self, OpticsError> {
        WavepacketModel::new(sigma_t_ps, 1.0)
    }

    /// Fully distinguishable packets: no interference at any delay.
    pub fn distinguishable(sigma_t_ps: f64) -> Result<Self, OpticsError> {
        WavepacketModel::new(sigma_t_ps, 0.0)
    }

    pub fn sigma_t_ps(&self) -> f64 {
        self.sigma_t_ps
    }

    pub fn overlap_scale(&self) -> f64 {
        self.overlap_scale
    }

    /// Amplitude overlap of two packets whose centers differ by `delta_ps`.
    pub fn overlap(&self, delta_ps: f64) -> f64 {
        self.overlap_scale * (-delta_ps * delta_ps / (4.0 * self.sigma_t_ps * self.sigma_t_ps)).exp()
    }
}

/// Closed-form Hong-Ou-Mandel coincidence curve: `baseline * (1 - v0^2 *
/// exp(-delay^2 / (2 sigma_t^2)))`. `v0^2` is the dip visibility actually observed,
/// so a source quoted at 68% visibility enters as `v0 = sqrt(0.68)`. The deficit is
/// Gaussian with standard deviation `sigma_t_ps`, matching a scan of
/// [`run_circuit`] with the same wavepacket model.
pub fn hom_dip(delay_ps: f64, sigma_t_ps: f64, v0: f64, baseline: f64) -> f64 {
    let deficit = (-delay_ps * delay_ps / (2.0 * sigma_t_ps * sigma_t_ps)).exp();
    baseline * (1.0 - v0 * v0 * deficit)
}

/// Decomposition of two wavepackets offset by `delay_ps` under `model`: the later
/// packet equals `v` times the earlier one plus an orthogonal remainder of weight
/// `w`, with `v^2 + w^2 = 1` whenever the model's overlap scale is 1.
pub fn resolve_distinguishability(delay_ps: f64, model: &WavepacketModel) -> (f64, f64) {
    let v = model.overlap(delay_ps.abs());
    let w = (1.0 - v * v).max(0.0).sqrt();
    (v, w)
}

/// A state in flight: amplitudes plus each registered mode's wavepacket center (ps).
/// Every occupied mode is registered; elements may only reference registered modes
/// as inputs, and register their outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub state: PureState,
    pub centers: BTreeMap<Mode, f64>,
}

impl Propagation {
    /// Wraps a state with all of its modes centered at 0.
    pub fn new(state: PureState) -> Self {
        let centers = state.modes().into_iter().map(|m| (m, 0.0)).collect();
        Propagation { state, centers }
    }

    /// Wraps a state with explicit centers; modes occupied in the state but missing
    /// from `centers` are registered at 0.
    pub fn with_centers(state: PureState, centers: BTreeMap<Mode, f64>) -> Self {
        let mut centers = centers;
        for mode in state.modes() {
            centers.entry(mode).or_insert(0.0);
        }
        Propagation { state, centers }
    }

    pub fn center(&self, mode: &Mode) -> Option<f64> {
        self.centers.get(mode).copied()
    }

    fn require(&self, mode: &Mode) -> Result<f64, OpticsError> {
        self.center(mode)
            .ok_or_else(|| OpticsError::UnknownMode { mode: mode.clone() })
    }

    /// A fresh output label: either one of the element's own inputs or a mode not
    /// registered yet.
    fn check_output(&self, out: &Mode, inputs: &[&Mode]) -> Result<(), OpticsError> {
        if inputs.contains(&out) || !self.centers.contains_key(out) {
            Ok(())
        } else {
            Err(OpticsError::ModeCollision { mode: out.clone() })
        }
    }
}

/// Applies `elements` in order. See the module docs for the delay model.
pub fn run_circuit(
    mut prop: Propagation,
    elements: &[Element],
    wavepacket: &WavepacketModel,
) -> Result<Propagation, OpticsError> {
    for element in elements {
        prop = apply_element(prop, element, wavepacket)?;
    }
    Ok(prop)
}

fn apply_element(
    mut prop: Propagation,
    element: &Element,
    wavepacket: &WavepacketModel,
) -> Result<Propagation, OpticsError> {
    match element {
        Element::DelayLine { mode, delay_ps } => {
            prop.require(mode)?;
            *prop.centers.get_mut(mode).expect("registered above") += delay_ps;
            Ok(prop)
        }
        Element::Retarder { mode, phase_rad } => {
            prop.require(mode)?;
            let kind = CouplerKind::Polarizations { mode: mode.clone() };
            prop.state = prop.state.apply_coupler(&kind, &retarder_matrix(*phase_rad))?;
            Ok(prop)
        }
        Element::Rotation { mode, angle_deg } => {
            prop.require(mode)?;
            let kind = CouplerKind::Polarizations { mode: mode.clone() };
            prop.state = prop
                .state
                .apply_coupler(&kind, &rotation_matrix(angle_deg.to_radians()))?;
            Ok(prop)
        }
        Element::BeamSplitter { in_a, in_b, out_a, out_b, reflectivity } => {
            if !(0.0..=1.0).contains(reflectivity) {
                return Err(OpticsError::BadParameter {
                    detail: format!("reflectivity must lie in [0, 1], got {reflectivity}"),
                });
            }
            if in_a == in_b || out_a == out_b {
                return Err(OpticsError::BadParameter {
                    detail: "beam splitter ports must be distinct".into(),
                });
            }
            let ca = prop.require(in_a)?;
            let cb = prop.require(in_b)?;
            prop.check_output(out_a, &[in_a, in_b])?;
            prop.check_output(out_b, &[in_a, in_b])?;

            // Decompose the later packet against the earlier one when they are not
            // already perfectly matched.
            let delta = (cb - ca).abs();
            if delta > 0.0 || wavepacket.overlap_scale < 1.0 {
                let late = if cb >= ca { in_b } else { in_a };
                let (v, w) = resolve_distinguishability(delta, wavepacket);
                let u: Mat2 = [
                    [Complex64::new(v, 0.0), Complex64::new(w, 0.0)],
                    [Complex64::new(-w, 0.0), Complex64::new(v, 0.0)],
                ];
                let kind = CouplerKind::TemporalBins { mode: late.clone(), bin_a: 0, bin_b: 1 };
                prop.state = prop.state.apply_coupler(&kind, &u)?;
            }

            let kind = CouplerKind::SpatialModes {
                in_a: in_a.clone(),
                in_b: in_b.clone(),
                out_a: out_a.clone(),
                out_b: out_b.clone(),
            };
            prop.state = prop
                .state
                .apply_coupler(&kind, &beam_splitter_matrix(*reflectivity))?;

            let joint = ca.min(cb);
            prop.centers.remove(in_a);
            prop.centers.remove(in_b);
            prop.centers.insert(out_a.clone(), joint);
            prop.centers.insert(out_b.clone(), joint);
            Ok(prop)
        }
        Element::PolarizingSplitter { input, out_h, out_v, slow_axis_deg } => {
            let center = prop.require(input)?;
            prop.check_output(out_h, &[input])?;
            prop.check_output(out_v, &[input])?;
            if *slow_axis_deg != 0.0 {
                let kind = CouplerKind::Polarizations { mode: input.clone() };
                prop.state = prop
                    .state
                    .apply_coupler(&kind, &rotation_matrix(slow_axis_deg.to_radians()))?;
            }
            prop.state = prop.state.map_slots(|slot| {
                if &slot.mode != input {
                    return slot.clone();
                }
                let mode = match slot.pol {
                    Polarization::H => out_h.clone(),
                    Polarization::V => out_v.clone(),
                };
                SlotKey { mode, pol: slot.pol, tbin: slot.tbin }
            });
            prop.centers.remove(input);
            prop.centers.insert(out_h.clone(), center);
            prop.centers.insert(out_v.clone(), center);
            Ok(prop)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::BasisKet;
    use proptest::prelude::*;

    fn photon(mode: &str, pol: Polarization) -> PureState {
        PureState::vacuum().create(&SlotKey::new(mode, pol, 0))
    }

    fn two_photon_input() -> PureState {
        photon("x", Polarization::H)
            .tensor(&photon("y", Polarization::H))
            .unwrap()
    }

    fn coincidence_probability(state: &PureState) -> f64 {
        state
            .filter_terms(|ket| {
                ket.mode_photons(&"e".into()) == 1 && ket.mode_photons(&"f".into()) == 1
            })
            .norm_sqr()
    }

    fn splitter() -> Element {
        Element::BeamSplitter {
            in_a: "x".into(),
            in_b: "y".into(),
            out_a: "e".into(),
            out_b: "f".into(),
            reflectivity: 0.5,
        }
    }

    #[test]
    fn zero_delay_identical_photons_never_coincide() {
        let model = WavepacketModel::ideal(0.5).unwrap();
        let out = run_circuit(Propagation::new(two_photon_input()), &[splitter()], &model).unwrap();
        assert_eq!(coincidence_probability(&out.state), 0.0);
    }

    #[test]
    fn large_delay_recovers_classical_coincidences() {
        let model = WavepacketModel::ideal(0.5).unwrap();
        let elements = [
            Element::DelayLine { mode: "y".into(), delay_ps: 100.0 },
            splitter(),
        ];
        let out = run_circuit(Propagation::new(two_photon_input()), &elements, &model).unwrap();
        assert!((coincidence_probability(&out.state) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn distinguishable_packets_never_interfere() {
        let model = WavepacketModel::distinguishable(0.5).unwrap();
        let out = run_circuit(Propagation::new(two_photon_input()), &[splitter()], &model).unwrap();
        assert!((coincidence_probability(&out.state) - 0.5).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn scanned_dip_matches_closed_form(delay in -8.0f64..8.0, sigma in 0.3f64..3.0) {
            let model = WavepacketModel::ideal(sigma).unwrap();
            let elements = [
                Element::DelayLine { mode: "y".into(), delay_ps: delay },
                splitter(),
            ];
            let out = run_circuit(Propagation::new(two_photon_input()), &elements, &model).unwrap();
            let expected = hom_dip(delay, sigma, 1.0, 0.5);
            prop_assert!((coincidence_probability(&out.state) - expected).abs() < 1e-12);
        }

        #[test]
        fn circuits_preserve_norm(
            delay in -5.0f64..5.0,
            angle in 0.0f64..180.0,
            phase in 0.0f64..std::f64::consts::TAU,
            reflectivity in 0.0f64..1.0,
        ) {
            let model = WavepacketModel::ideal(0.6).unwrap();
            let elements = [
                Element::Rotation { mode: "x".into(), angle_deg: angle },
                Element::Retarder { mode: "y".into(), phase_rad: phase },
                Element::DelayLine { mode: "y".into(), delay_ps: delay },
                Element::BeamSplitter {
                    in_a: "x".into(),
                    in_b: "y".into(),
                    out_a: "e".into(),
                    out_b: "f".into(),
                    reflectivity,
                },
            ];
            let input = two_photon_input()
                .tensor(&photon("z", Polarization::V)).unwrap();
            let out = run_circuit(Propagation::new(input), &elements, &model).unwrap();
            prop_assert!((out.state.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn polarizing_splitter_routes_h_and_v() {
        let input = PureState::vacuum()
            .create(&SlotKey::new("s", Polarization::H, 0))
            .create(&SlotKey::new("s", Polarization::V, 0));
        let elements = [Element::PolarizingSplitter {
            input: "s".into(),
            out_h: "x".into(),
            out_v: "y".into(),
            slow_axis_deg: 0.0,
        }];
        let model = WavepacketModel::ideal(0.5).unwrap();
        let out = run_circuit(Propagation::new(input), &elements, &model).unwrap();
        let expected = BasisKet::from_occupations([
            (SlotKey::new("x", Polarization::H, 0), 1),
            (SlotKey::new("y", Polarization::V, 0), 1),
        ]);
        assert!((out.state.amplitude(&expected).re - 1.0).abs() < 1e-12);
        assert_eq!(out.center(&"x".into()), Some(0.0));
        assert_eq!(out.center(&"y".into()), Some(0.0));
        assert_eq!(out.center(&"s".into()), None);
    }

    #[test]
    fn rotation_by_ninety_flips_v_onto_h_with_sign() {
        let input = photon("s", Polarization::V);
        let elements = [Element::Rotation { mode: "s".into(), angle_deg: 90.0 }];
        let model = WavepacketModel::ideal(0.5).unwrap();
        let out = run_circuit(Propagation::new(input), &elements, &model).unwrap();
        let h = BasisKet::from_occupations([(SlotKey::new("s", Polarization::H, 0), 1)]);
        assert!((out.state.amplitude(&h).re + 1.0).abs() < 1e-12);
    }

    #[test]
    fn retarder_phases_only_v() {
        let input = PureState::superpose([
            (Complex64::new(0.6, 0.0), &photon("s", Polarization::H)),
            (Complex64::new(0.8, 0.0), &photon("s", Polarization::V)),
        ]);
        let elements = [Element::Retarder {
            mode: "s".into(),
            phase_rad: std::f64::consts::FRAC_PI_2,
        }];
        let model = WavepacketModel::ideal(0.5).unwrap();
        let out = run_circuit(Propagation::new(input), &elements, &model).unwrap();
        let h = BasisKet::from_occupations([(SlotKey::new("s", Polarization::H, 0), 1)]);
        let v = BasisKet::from_occupations([(SlotKey::new("s", Polarization::V, 0), 1)]);
        assert!((out.state.amplitude(&h) - Complex64::new(0.6, 0.0)).norm() < 1e-12);
        assert!((out.state.amplitude(&v) - Complex64::new(0.0, 0.8)).norm() < 1e-12);
    }

    #[test]
    fn unknown_input_mode_is_rejected() {
        let model = WavepacketModel::ideal(0.5).unwrap();
        let err = run_circuit(
            Propagation::new(photon("x", Polarization::H)),
            &[Element::DelayLine { mode: "nope".into(), delay_ps: 1.0 }],
            &model,
        )
        .unwrap_err();
        assert!(matches!(err, OpticsError::UnknownMode { .. }));
    }

    #[test]
    fn output_collision_with_occupied_mode_is_rejected() {
        let input = two_photon_input()
            .tensor(&photon("z", Polarization::H))
            .unwrap();
        let model = WavepacketModel::ideal(0.5).unwrap();
        let err = run_circuit(
            Propagation::new(input),
            &[Element::BeamSplitter {
                in_a: "x".into(),
                in_b: "y".into(),
                out_a: "z".into(),
                out_b: "f".into(),
                reflectivity: 0.5,
            }],
            &model,
        )
        .unwrap_err();
        assert!(matches!(err, OpticsError::ModeCollision { .. }));
    }

    #[test]
    fn delay_accumulates_across_elements() {
        let model = WavepacketModel::ideal(0.5).unwrap();
        let elements = [
            Element::DelayLine { mode: "x".into(), delay_ps: 1.5 },
            Element::DelayLine { mode: "x".into(), delay_ps: -0.5 },
        ];
        let out = run_circuit(
            Propagation::new(photon("x", Polarization::H)),
            &elements,
            &model,
        )
        .unwrap();
        assert_eq!(out.center(&"x".into()), Some(1.0));
    }
}
