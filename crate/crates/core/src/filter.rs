//! Closed-form algebra of the Fock-state filter.
//!
//! An `n`-photon input meets a single ancilla photon at a beamsplitter of
//! reflectivity `R`; the filter fires when exactly one photon leaves through the
//! ancilla port. The heralding amplitude is `A(n) = R^{(n−1)/2}(R − n(1−R))`,
//! which vanishes at `R = n/(n+1)`. At `R = 1/2` single photons are blocked while
//! pairs pass with amplitude `−1/(2√2)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::check_unit_interval;

/// Heralding amplitude `A(n)`. For `n = 0` this is the bare ancilla reflection `√R`.
pub fn amplitude(n: u32, r: f64) -> Result<f64> {
    check_unit_interval("reflectivity", r)?;
    if n == 0 {
        return Ok(r.sqrt());
    }
    let n_f = n as f64;
    Ok(r.powf((n_f - 1.0) / 2.0) * ((n_f + 1.0) * r - n_f))
}

/// Interference-free heralding probability `Q(n) = R^{n+1} + n R^{n−1} (1−R)²`,
/// i.e. the ancilla distinguishable from the `n` input photons.
pub fn prob_distinguishable(n: u32, r: f64) -> Result<f64> {
    check_unit_interval("reflectivity", r)?;
    if n == 0 {
        return Err(Error::OutOfRange {
            name: "photon number",
            value: 0.0,
            lo: 1.0,
            hi: f64::INFINITY,
        });
    }
    let n_f = n as f64;
    let below = if n == 1 { 1.0 } else { r.powi(n as i32 - 1) };
    Ok(r.powi(n as i32 + 1) + n_f * below * (1.0 - r).powi(2))
}

/// Contrast between the distinguishable and indistinguishable heralding rates,
/// `(Q(n) − |A(n)|²) / Q(n)`.
pub fn ideal_visibility(n: u32, r: f64) -> Result<f64> {
    let q = prob_distinguishable(n, r)?;
    if q <= 0.0 {
        return Err(Error::ZeroReference);
    }
    let p = amplitude(n, r)?.powi(2);
    Ok((q - p) / q)
}

/// Amplitude that `|n_H, n_V⟩` plus a horizontal ancilla survives heralding on
/// one horizontal photon (and no vertical one) at the ancilla port.
///
/// Vertical photons cannot interfere with the ancilla, so each must reflect:
/// `A(n_H) · R^{n_V/2}`. Pure-V input gives `R^{(n_V+1)/2}`.
pub fn conditional_coefficient(n_h: u32, n_v: u32, r: f64) -> Result<f64> {
    Ok(amplitude(n_h, r)? * r.powf(n_v as f64 / 2.0))
}

/// Normalized mode-c output of the filter for the rotated two-photon input
/// `cos²θ|2,0⟩ + √2 cosθ sinθ|1,1⟩ + sin²θ|0,2⟩` (kets as `|n_H, n_V⟩`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilteredState {
    pub c20: f64,
    pub c11: f64,
    pub c02: f64,
    /// Unnormalized squared norm: probability that the filter heralds.
    pub success_probability: f64,
}

impl FilteredState {
    /// Coefficients in `[|2,0⟩, |1,1⟩, |0,2⟩]` order.
    pub fn coefficients(&self) -> [f64; 3] {
        [self.c20, self.c11, self.c02]
    }
}

pub fn filtered_state(theta: f64, r: f64) -> Result<FilteredState> {
    let (c, s) = (theta.cos(), theta.sin());
    let raw = [
        c * c * conditional_coefficient(2, 0, r)?,
        2f64.sqrt() * c * s * conditional_coefficient(1, 1, r)?,
        s * s * conditional_coefficient(0, 2, r)?,
    ];
    let p: f64 = raw.iter().map(|x| x * x).sum();
    let norm = p.sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroHeraldProbability);
    }
    Ok(FilteredState {
        c20: raw[0] / norm,
        c11: raw[1] / norm,
        c02: raw[2] / norm,
        success_probability: p,
    })
}

/// `filtered_state` at the 50:50 splitter used by the experiment.
pub fn filtered_state_balanced(theta: f64) -> FilteredState {
    filtered_state(theta, 0.5).expect("R = 1/2 heralds every rotated pair")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub reflectivity: f64,
    pub theta: f64,
    pub v1: f64,
    pub v2: f64,
}

impl FilterParams {
    pub fn new(reflectivity: f64, theta: f64, v1: f64, v2: f64) -> Result<Self> {
        check_unit_interval("reflectivity", reflectivity)?;
        check_unit_interval("V1", v1)?;
        check_unit_interval("V2", v2)?;
        Ok(Self {
            reflectivity,
            theta,
            v1,
            v2,
        })
    }
}

/// Transmission probability left over after imperfect interference, `(1 − V_n) Q(n)`.
pub fn residual_transmission(n: u32, r: f64, visibility: f64) -> Result<f64> {
    check_unit_interval("visibility", visibility)?;
    Ok((1.0 - visibility) * prob_distinguishable(n, r)?)
}

/// How much more readily pairs pass than single photons: `P′(2) / P′(1)`.
pub fn blocking_ratio(params: &FilterParams) -> Result<f64> {
    let single = residual_transmission(1, params.reflectivity, params.v1)?;
    if single == 0.0 {
        return Err(Error::UnboundedRatio);
    }
    Ok(residual_transmission(2, params.reflectivity, params.v2)? / single)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4};

    const EQ5: f64 = 0.353_553_390_593_273_8; // 1/(2√2)

    /// Each photon independently reflects (stays) or transmits (swaps port).
    /// Sums the classical weights of paths that leave exactly one photon at
    /// the ancilla port.
    fn enumerate_paths(n: u32, r: f64) -> f64 {
        let photons = n + 1; // last one is the ancilla
        let mut total = 0.0;
        for mask in 0u32..(1 << photons) {
            let mut weight = 1.0;
            let mut at_ancilla_port = 0;
            for k in 0..photons {
                let transmitted = mask & (1 << k) != 0;
                weight *= if transmitted { 1.0 - r } else { r };
                let is_ancilla = k == n;
                if transmitted != is_ancilla {
                    at_ancilla_port += 1;
                }
            }
            if at_ancilla_port == 1 {
                total += weight;
            }
        }
        total
    }

    #[test]
    fn amplitude_examples() {
        assert_eq!(amplitude(1, 0.5).unwrap(), 0.0);
        assert!((amplitude(2, 0.5).unwrap() + EQ5).abs() < 1e-15);
        assert!(amplitude(2, 2.0 / 3.0).unwrap().abs() < 1e-15);
        assert_eq!(amplitude(0, 0.25).unwrap(), 0.5);
        assert!(amplitude(1, -0.1).is_err());
        assert!(amplitude(1, 1.1).is_err());
    }

    #[test]
    fn distinguishable_matches_path_enumeration() {
        assert!((enumerate_paths(1, 0.5) - 0.5).abs() < 1e-15);
        assert!((enumerate_paths(2, 0.5) - 0.375).abs() < 1e-15);
        for n in 1..=4 {
            for i in 0..=20 {
                let r = i as f64 / 20.0;
                let q = prob_distinguishable(n, r).unwrap();
                assert!((q - enumerate_paths(n, r)).abs() < 1e-14, "n={n} r={r}");
            }
        }
        assert_eq!(prob_distinguishable(1, 1.0).unwrap(), 1.0);
        assert!(prob_distinguishable(0, 0.5).is_err());
    }

    #[test]
    fn visibility_examples() {
        assert_eq!(ideal_visibility(1, 0.5).unwrap(), 1.0);
        assert!((ideal_visibility(2, 0.5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((ideal_visibility(2, 2.0 / 3.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(ideal_visibility(2, 0.0), Err(Error::ZeroReference)));
    }

    #[test]
    fn conditional_examples() {
        assert!((conditional_coefficient(2, 0, 0.5).unwrap() + EQ5).abs() < 1e-15);
        assert_eq!(conditional_coefficient(1, 1, 0.5).unwrap(), 0.0);
        assert!((conditional_coefficient(0, 2, 0.5).unwrap() - EQ5).abs() < 1e-15);
        // pure V reproduces R^{(n_V+1)/2}
        for nv in 0..4 {
            let r: f64 = 0.37;
            let got = conditional_coefficient(0, nv, r).unwrap();
            assert!((got - r.powf((nv as f64 + 1.0) / 2.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn filtered_state_examples() {
        let noon = filtered_state_balanced(FRAC_PI_4);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((noon.c20 + h).abs() < 1e-15);
        assert!(noon.c11.abs() < 1e-15);
        assert!((noon.c02 - h).abs() < 1e-15);

        let sep = filtered_state_balanced(0.0);
        assert_eq!(sep.coefficients(), [-1.0, 0.0, 0.0]);

        // cos²(π/3) = 1/4, sin²(π/3) = 3/4: (−1, 3)/√10
        let third = filtered_state_balanced(FRAC_PI_3);
        assert!((third.c20 + 0.316_227_766_016_837_9).abs() < 1e-12);
        assert!((third.c02 - 0.948_683_298_050_513_8).abs() < 1e-12);
    }

    #[test]
    fn blocking_ratio_examples() {
        let p = FilterParams::new(0.5, 0.0, 0.996, 0.68).unwrap();
        assert!((blocking_ratio(&p).unwrap() - 60.0).abs() < 1e-9);
        let p = FilterParams::new(0.5, 0.0, 0.0, 0.0).unwrap();
        assert!((blocking_ratio(&p).unwrap() - 0.75).abs() < 1e-15);
        let p = FilterParams::new(0.5, 0.0, 0.996, 2.0 / 3.0).unwrap();
        assert!((blocking_ratio(&p).unwrap() - 62.5).abs() < 1e-9);
        let p = FilterParams::new(0.5, 0.0, 1.0, 0.5).unwrap();
        assert!(matches!(blocking_ratio(&p), Err(Error::UnboundedRatio)));
        assert!(FilterParams::new(0.5, 0.0, 1.2, 0.5).is_err());
    }

    #[test]
    fn zero_locus() {
        for n in 1..=6u32 {
            let r = n as f64 / (n as f64 + 1.0);
            assert!(amplitude(n, r).unwrap().abs() < 1e-12);
        }
    }
}
