//! Photon-pair source model.
//!
//! The source emits polarization-entangled pairs embedded in a background of
//! unpolarized pairs and uncorrelated singles. Detected-pair rates, the entangled
//! fraction, and the optical bandwidth are the measurable inputs; coherence time
//! and wavepacket width follow from the transform limit.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT_M_PER_S: f64 = 299_792_458.0;

/// Time-bandwidth product of a transform-limited Gaussian packet,
/// FWHM(time) * FWHM(frequency) = 2 ln 2 / pi.
pub const GAUSSIAN_TIME_BANDWIDTH_PRODUCT: f64 = 2.0 * std::f64::consts::LN_2 / std::f64::consts::PI;

#[derive(Debug, Error, PartialEq)]
pub enum SourceError {
    #[error("source parameter out of range: {detail}")]
    OutOfRange { detail: String },
}

/// Emission parameters of the pair source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpdcSpec {
    /// Center wavelength, nm.
    pub wavelength_nm: f64,
    /// Optical bandwidth (FWHM), nm.
    pub bandwidth_nm: f64,
    /// Detected entangled-pair rate, Hz.
    pub pair_rate_hz: f64,
    /// Fraction of emitted pairs that are polarization-entangled; the remainder
    /// are unpolarized accidental pairs.
    pub entangled_fraction: f64,
    /// Uncorrelated background singles rate, Hz.
    pub background_singles_hz: f64,
    /// Two-photon interference visibility of the ensemble: the probability that a
    /// given emission is wavepacket-indistinguishable from its partner.
    pub hom_visibility: f64,
}

impl Default for SpdcSpec {
    fn default() -> Self {
        SpdcSpec {
            wavelength_nm: 1570.0,
            bandwidth_nm: 3.0,
            pair_rate_hz: 6.0e3,
            entangled_fraction: 0.17,
            background_singles_hz: 3.0e4,
            hom_visibility: 0.68,
        }
    }
}

impl SpdcSpec {
    pub fn validate(&self) -> Result<(), SourceError> {
        let err = |detail: String| Err(SourceError::OutOfRange { detail });
        if !(self.wavelength_nm > 0.0) {
            return err(format!("wavelength_nm must be positive, got {}", self.wavelength_nm));
        }
        if !(self.bandwidth_nm > 0.0) {
            return err(format!("bandwidth_nm must be positive, got {}", self.bandwidth_nm));
        }
        if !(self.pair_rate_hz >= 0.0) {
            return err(format!("pair_rate_hz must be nonnegative, got {}", self.pair_rate_hz));
        }
        if !(0.0..=1.0).contains(&self.entangled_fraction) {
            return err(format!(
                "entangled_fraction must lie in [0, 1], got {}",
                self.entangled_fraction
            ));
        }
        if self.pair_rate_hz > 0.0 && self.entangled_fraction == 0.0 {
            return err("entangled_fraction must be positive when pair_rate_hz is".into());
        }
        if !(self.background_singles_hz >= 0.0) {
            return err(format!(
                "background_singles_hz must be nonnegative, got {}",
                self.background_singles_hz
            ));
        }
        if !(0.0..=1.0).contains(&self.hom_visibility) {
            return err(format!(
                "hom_visibility must lie in [0, 1], got {}",
                self.hom_visibility
            ));
        }
        Ok(())
    }

    /// Optical bandwidth in Hz: `c * d_lambda / lambda^2`.
    pub fn spectral_bandwidth_hz(&self) -> f64 {
        let lambda_m = self.wavelength_nm * 1e-9;
        let dlambda_m = self.bandwidth_nm * 1e-9;
        SPEED_OF_LIGHT_M_PER_S * dlambda_m / (lambda_m * lambda_m)
    }

    /// Transform-limited coherence time (FWHM), ps.
    pub fn coherence_fwhm_ps(&self) -> f64 {
        GAUSSIAN_TIME_BANDWIDTH_PRODUCT / self.spectral_bandwidth_hz() * 1e12
    }

    /// Wavepacket width parameter, ps: the interference-dip deficit measured against
    /// relative delay is Gaussian with this standard deviation, so its FWHM equals
    /// [`SpdcSpec::coherence_fwhm_ps`].
    pub fn coherence_sigma_t_ps(&self) -> f64 {
        self.coherence_fwhm_ps() / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }

    /// Total pair rate (entangled plus unpolarized background pairs), Hz.
    pub fn total_pair_rate_hz(&self) -> f64 {
        if self.pair_rate_hz == 0.0 {
            0.0
        } else {
            self.pair_rate_hz / self.entangled_fraction
        }
    }

    /// Unpolarized background-pair rate, Hz.
    pub fn background_pair_rate_hz(&self) -> f64 {
        self.total_pair_rate_hz() - self.pair_rate_hz
    }

    /// Samples the emission record for `duration_s` seconds: pair emissions (each
    /// classed entangled or background) merged with uncorrelated singles, sorted by
    /// time. Times are continuous picoseconds from the start of the run.
    pub fn sample_emission(&self, rng: &mut impl Rng, duration_s: f64) -> Vec<SourceEvent> {
        let mut events = Vec::new();
        let horizon_ps = duration_s * 1e12;

        let pair_rate = self.total_pair_rate_hz();
        if pair_rate > 0.0 {
            let exp = Exp::new(pair_rate * 1e-12).expect("positive rate");
            let mut t = 0.0;
            loop {
                t += exp.sample(rng);
                if t >= horizon_ps {
                    break;
                }
                let class = if rng.gen_bool(self.entangled_fraction) {
                    EmissionClass::EntangledPair
                } else {
                    EmissionClass::BackgroundPair
                };
                events.push(SourceEvent { time_ps: t, class });
            }
        }

        if self.background_singles_hz > 0.0 {
            let exp = Exp::new(self.background_singles_hz * 1e-12).expect("positive rate");
            let mut t = 0.0;
            loop {
                t += exp.sample(rng);
                if t >= horizon_ps {
                    break;
                }
                events.push(SourceEvent { time_ps: t, class: EmissionClass::Single });
            }
        }

        events.sort_by(|a, b| a.time_ps.total_cmp(&b.time_ps));
        events
    }
}

/// What the source emitted at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmissionClass {
    /// A polarization-entangled pair.
    EntangledPair,
    /// An unpolarized accidental pair (independently random polarizations).
    BackgroundPair,
    /// A single uncorrelated background photon.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceEvent {
    pub time_ps: f64,
    pub class: EmissionClass,
}
