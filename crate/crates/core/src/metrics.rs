//! Scalar figures of merit for reconstructed two-qubit states.

use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qubits::{AnalyzerSetting, Basis, DensityMatrix, Ket};
use crate::tomography::TomographyCounts;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntropyConvention {
    /// `(4/3)(1 − tr ρ²)`: 0 for pure states, 1 for `I/4`.
    #[default]
    Normalized,
    /// `1 − tr ρ²`.
    Unnormalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub fidelity: f64,
    pub tangle: f64,
    pub linear_entropy: f64,
    pub purity: f64,
}

impl StateMetrics {
    pub fn of(rho: &DensityMatrix, target: &Ket) -> Self {
        Self {
            fidelity: fidelity(rho, target),
            tangle: tangle(rho),
            linear_entropy: linear_entropy(rho),
            purity: rho.purity(),
        }
    }
}

/// `⟨ψ|ρ|ψ⟩` for a pure target, clamped to `[0, 1]`.
pub fn fidelity(rho: &DensityMatrix, target: &Ket) -> f64 {
    let n = target.norm_squared();
    (rho.expectation(target) / n).clamp(0.0, 1.0)
}

/// Wootters concurrence.
///
/// The `λ_i` are the square roots of the eigenvalues of `ρ ρ̃`, with
/// `ρ̃ = (σ_y⊗σ_y) ρ* (σ_y⊗σ_y)`. They are computed as the singular values of
/// `√ρ √ρ̃`, which avoids square roots of round-off sized eigenvalues.
pub fn concurrence(rho: &DensityMatrix) -> f64 {
    let yy = sigma_yy();
    let sqrt_rho = psd_sqrt(rho.matrix());
    let sqrt_flipped = yy * sqrt_rho.conjugate() * yy;
    let mut lambda: Vec<f64> = (sqrt_rho * sqrt_flipped).singular_values().iter().copied().collect();
    lambda.sort_by(|a, b| b.total_cmp(a));
    (lambda[0] - lambda[1] - lambda[2] - lambda[3]).clamp(0.0, 1.0)
}

/// Squared concurrence.
pub fn tangle(rho: &DensityMatrix) -> f64 {
    concurrence(rho).powi(2).min(1.0)
}

pub fn linear_entropy(rho: &DensityMatrix) -> f64 {
    linear_entropy_with(rho, EntropyConvention::Normalized)
}

pub fn linear_entropy_with(rho: &DensityMatrix, convention: EntropyConvention) -> f64 {
    let mixedness = (1.0 - rho.purity()).max(0.0);
    match convention {
        EntropyConvention::Normalized => (4.0 / 3.0 * mixedness).min(1.0),
        EntropyConvention::Unnormalized => mixedness.min(0.75),
    }
}

/// Raw-count ratio `(n_HH + n_VV) / (n_HV + n_VH)`.
pub fn population_ratio(data: &TomographyCounts) -> Result<f64> {
    use Basis::{H, V};
    let n = |a, b| data.count(AnalyzerSetting::new(a, b)) as f64;
    let den = n(H, V) + n(V, H);
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((n(H, H) + n(V, V)) / den)
}

fn sigma_yy() -> Matrix4<Complex64> {
    // σ_y ⊗ σ_y is real: anti-diagonal (−1, 1, 1, −1)
    let mut m = Matrix4::zeros();
    m[(0, 3)] = Complex64::new(-1.0, 0.0);
    m[(1, 2)] = Complex64::new(1.0, 0.0);
    m[(2, 1)] = Complex64::new(1.0, 0.0);
    m[(3, 0)] = Complex64::new(-1.0, 0.0);
    m
}

/// Eigenvalues below this are round-off and do not enter matrix square roots.
const SQRT_FLOOR: f64 = 1e-13;

fn psd_sqrt(m: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(h);
    let mut out = Matrix4::zeros();
    for k in 0..4 {
        let e = eig.eigenvalues[k];
        let s = if e > SQRT_FLOOR { e.sqrt() } else { 0.0 };
        let v = eig.eigenvectors.column(k);
        out += v * v.adjoint() * Complex64::new(s, 0.0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubits::kets;

    #[test]
    fn fidelity_examples() {
        let psi = kets::phi_minus();
        assert!((fidelity(&DensityMatrix::from_ket(&psi), &psi) - 1.0).abs() < 1e-12);
        assert!((fidelity(&DensityMatrix::maximally_mixed(), &kets::dd()) - 0.25).abs() < 1e-12);
        let phased = psi * Complex64::from_polar(1.0, 0.7);
        let rho = DensityMatrix::from_ket(&kets::dd());
        assert!((fidelity(&rho, &phased) - fidelity(&rho, &psi)).abs() < 1e-12);
    }

    #[test]
    fn tangle_examples() {
        assert!((tangle(&DensityMatrix::from_ket(&kets::phi_minus())) - 1.0).abs() < 1e-12);
        assert!(tangle(&DensityMatrix::from_ket(&kets::dd())) < 1e-12);
        assert!(tangle(&DensityMatrix::maximally_mixed()) < 1e-12);
        // Werner state p|Φ⟩⟨Φ| + (1−p) I/4 has C = (3p − 1)/2
        let p = 0.8;
        let w = DensityMatrix::mixture([
            (p, &DensityMatrix::from_ket(&kets::phi_plus())),
            (1.0 - p, &DensityMatrix::maximally_mixed()),
        ]);
        assert!((concurrence(&w) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn entropy_examples() {
        assert!(linear_entropy(&DensityMatrix::from_ket(&kets::dd())).abs() < 1e-12);
        assert!((linear_entropy(&DensityMatrix::maximally_mixed()) - 1.0).abs() < 1e-12);
        let un = linear_entropy_with(&DensityMatrix::maximally_mixed(), EntropyConvention::Unnormalized);
        assert!((un - 0.75).abs() < 1e-12);
    }

    #[test]
    fn population_ratio_examples() {
        let on = TomographyCounts::filter_on();
        assert_eq!(population_ratio(&on).unwrap(), 121.0 / 20.0);
        let off = TomographyCounts::filter_off();
        assert!((population_ratio(&off).unwrap() - 163.0 / 157.0).abs() < 1e-15);
        let flat = TomographyCounts::canonical("flat", [7; 16]);
        assert_eq!(population_ratio(&flat).unwrap(), 1.0);
        let mut zero = [5u64; 16];
        zero[1] = 0;
        zero[4] = 0;
        assert!(matches!(
            population_ratio(&TomographyCounts::canonical("z", zero)),
            Err(Error::ZeroDenominator)
        ));
    }
}
