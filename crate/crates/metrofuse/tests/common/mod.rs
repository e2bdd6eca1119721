//! Shared helpers for the integration tests: an independent symbolic oracle for
//! the fused four-photon state, a Gaussian-dip least-squares fitter, and loaders
//! for the bundled configs.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use metrofuse::config::{Config, Resolved};
use metrofuse::fock::{BasisKet, Polarization, SlotKey};
use num_complex::Complex64;

/// Creation-operator monomial: sorted slot list, repeats encode powers.
pub type Monomial = Vec<SlotKey>;

/// Polynomial in creation operators with complex coefficients. All operators
/// commute, so a sorted monomial is a canonical key.
#[derive(Debug, Clone, Default)]
pub struct OperatorPoly {
    terms: BTreeMap<Monomial, Complex64>,
}

impl OperatorPoly {
    pub fn zero() -> Self {
        OperatorPoly::default()
    }

    /// Single creation operator with unit coefficient.
    pub fn op(mode: &str, pol: Polarization) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![SlotKey::new(mode, pol, 0)], Complex64::new(1.0, 0.0));
        OperatorPoly { terms }
    }

    pub fn scale(mut self, factor: Complex64) -> Self {
        for coeff in self.terms.values_mut() {
            *coeff *= factor;
        }
        self
    }

    pub fn add(mut self, other: &OperatorPoly) -> Self {
        for (mono, coeff) in &other.terms {
            *self.terms.entry(mono.clone()).or_insert(Complex64::new(0.0, 0.0)) += coeff;
        }
        self
    }

    pub fn sub(self, other: &OperatorPoly) -> Self {
        self.add(&other.clone().scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &OperatorPoly) -> Self {
        let mut out: BTreeMap<Monomial, Complex64> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let mut mono = ma.clone();
                mono.extend(mb.iter().cloned());
                mono.sort();
                *out.entry(mono).or_insert(Complex64::new(0.0, 0.0)) += ca * cb;
            }
        }
        OperatorPoly { terms: out }
    }

    /// Replaces every operator on `mode` by the image polynomial for its
    /// polarization, leaving other operators untouched.
    pub fn substitute(&self, mode: &str, image: impl Fn(Polarization) -> OperatorPoly) -> Self {
        let mut out = OperatorPoly::zero();
        for (mono, coeff) in &self.terms {
            let mut product = OperatorPoly {
                terms: BTreeMap::from([(Vec::new(), *coeff)]),
            };
            for slot in mono {
                let factor = if slot.mode.as_str() == mode {
                    image(slot.pol)
                } else {
                    OperatorPoly {
                        terms: BTreeMap::from([(vec![slot.clone()], Complex64::new(1.0, 0.0))]),
                    }
                };
                product = product.mul(&factor);
            }
            out = out.add(&product);
        }
        out
    }

    /// Physical amplitudes keyed by occupation ket, zero entries dropped. The
    /// monomial coefficient picks up sqrt(prod n!) because repeated creation
    /// operators build |n> with norm sqrt(n!).
    pub fn amplitudes(&self) -> BTreeMap<BasisKet, Complex64> {
        let mut out = BTreeMap::new();
        for (mono, coeff) in &self.terms {
            if coeff.norm_sqr() > 1e-24 {
                let mut occ: BTreeMap<SlotKey, u32> = BTreeMap::new();
                for slot in mono {
                    *occ.entry(slot.clone()).or_insert(0) += 1;
                }
                let norm: f64 = occ
                    .values()
                    .map(|&n| (1..=n).map(f64::from).product::<f64>())
                    .product::<f64>()
                    .sqrt();
                out.insert(BasisKet::from_occupations(occ), coeff * norm);
            }
        }
        out
    }
}

/// Singlet-pair creation polynomial `(m1_H m2_V - m1_V m2_H) / sqrt(2)`.
pub fn singlet_poly(m1: &str, m2: &str) -> OperatorPoly {
    use Polarization::{H, V};
    let hv = OperatorPoly::op(m1, H).mul(&OperatorPoly::op(m2, V));
    let vh = OperatorPoly::op(m1, V).mul(&OperatorPoly::op(m2, H));
    hv.sub(&vh).scale(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0))
}

/// Fused-state oracle built by symbolic expansion: two singlets on (a,b) and
/// (c,d), then the balanced-splitter substitution a -> (e + f)/sqrt(2),
/// c -> (e - f)/sqrt(2) applied per polarization. Returns physical amplitudes
/// keyed by occupation ket, directly comparable with `PureState::amplitude`.
pub fn fused_oracle_amplitudes() -> BTreeMap<BasisKet, Complex64> {
    let inv_sqrt2 = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let dual = singlet_poly("a", "b").mul(&singlet_poly("c", "d"));
    let through_a = dual.substitute("a", |pol| {
        OperatorPoly::op("e", pol).add(&OperatorPoly::op("f", pol)).scale(inv_sqrt2)
    });
    let through_both = through_a.substitute("c", |pol| {
        OperatorPoly::op("e", pol).sub(&OperatorPoly::op("f", pol)).scale(inv_sqrt2)
    });
    through_both.amplitudes()
}

/// Directory holding the bundled run configs.
pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

/// Loads and resolves a bundled config by file name.
pub fn bundled(name: &str) -> Resolved {
    let path = configs_dir().join(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|err| panic!("read {}: {err}", path.display()));
    let config: Config = toml::from_str(&text)
        .unwrap_or_else(|err| panic!("parse {}: {err}", path.display()));
    config
        .resolve(&configs_dir())
        .unwrap_or_else(|err| panic!("resolve {}: {err}", path.display()))
}

/// Least-squares fit of `y = base - depth * exp(-x^2 / (2 sigma^2))` with the
/// linear pair solved exactly per candidate sigma and a golden-section search
/// over sigma. Returns (base, depth, sigma).
pub fn fit_gaussian_dip(points: &[(f64, f64)]) -> (f64, f64, f64) {
    assert!(points.len() >= 3, "need at least three points to fit");

    let sse = |sigma: f64| -> (f64, f64, f64) {
        // Normal equations for [base, depth] against basis [1, -g(x)].
        let n = points.len() as f64;
        let (mut sg, mut sgg, mut sy, mut sgy) = (0.0, 0.0, 0.0, 0.0);
        for &(x, y) in points {
            let g = (-x * x / (2.0 * sigma * sigma)).exp();
            sg += g;
            sgg += g * g;
            sy += y;
            sgy += g * y;
        }
        let det = n * sgg - sg * sg;
        let base = (sy * sgg - sg * sgy) / det;
        let depth = (base * sg - sgy) / sgg;
        let err: f64 = points
            .iter()
            .map(|&(x, y)| {
                let g = (-x * x / (2.0 * sigma * sigma)).exp();
                let r = y - (base - depth * g);
                r * r
            })
            .sum();
        (err, base, depth)
    };

    let span = points.iter().map(|&(x, _)| x.abs()).fold(0.0, f64::max).max(1e-9);
    let (mut lo, mut hi) = (span * 1e-2, span * 2.0);
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    for _ in 0..80 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if sse(m1).0 < sse(m2).0 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let (_, base, depth) = sse(sigma);
    (base, depth, sigma)
}

/// Full width at half maximum of a Gaussian with the given sigma.
pub fn gaussian_fwhm(sigma: f64) -> f64 {
    2.0 * (2.0 * std::f64::consts::LN_2).sqrt() * sigma
}
