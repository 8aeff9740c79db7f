//! Polarization qubits: analyzer bases, two-qubit kets and density matrices.
//!
//! The computational order is `HH, HV, VH, VV` with the first letter belonging
//! to analyzer arm 3 and the second to arm 4.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, SymmetricEigen, Vector2, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Ket = Vector4<Complex64>;

pub const TRACE_TOLERANCE: f64 = 1e-10;
pub const HERMITICITY_TOLERANCE: f64 = 1e-12;
pub const EIGENVALUE_FLOOR: f64 = -1e-10;

/// Which sign of `i` the right-circular analyzer state carries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Handedness {
    /// `|R⟩ = (|H⟩ − i|V⟩)/√2`
    #[default]
    MinusI,
    /// `|R⟩ = (|H⟩ + i|V⟩)/√2`
    PlusI,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    H,
    V,
    D,
    R,
}

impl Basis {
    pub const ALL: [Basis; 4] = [Basis::H, Basis::V, Basis::D, Basis::R];

    pub fn ket(self, handedness: Handedness) -> Vector2<Complex64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let (a, b) = match self {
            Basis::H => (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
            Basis::V => (Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
            Basis::D => (Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
            Basis::R => match handedness {
                Handedness::MinusI => (Complex64::new(s, 0.0), Complex64::new(0.0, -s)),
                Handedness::PlusI => (Complex64::new(s, 0.0), Complex64::new(0.0, s)),
            },
        };
        Vector2::new(a, b)
    }

    fn letter(self) -> char {
        match self {
            Basis::H => 'H',
            Basis::V => 'V',
            Basis::D => 'D',
            Basis::R => 'R',
        }
    }

    fn from_letter(c: char) -> Option<Self> {
        match c {
            'H' => Some(Basis::H),
            'V' => Some(Basis::V),
            'D' => Some(Basis::D),
            'R' => Some(Basis::R),
            _ => None,
        }
    }
}

/// Projection setting of the two polarization analyzers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AnalyzerSetting {
    pub arm3: Basis,
    pub arm4: Basis,
}

impl AnalyzerSetting {
    pub const fn new(arm3: Basis, arm4: Basis) -> Self {
        Self { arm3, arm4 }
    }

    /// The 16 settings of `{H,V,D,R} ⊗ {H,V,D,R}` in row-major order.
    pub fn canonical() -> Vec<AnalyzerSetting> {
        Basis::ALL
            .iter()
            .flat_map(|&a| Basis::ALL.iter().map(move |&b| AnalyzerSetting::new(a, b)))
            .collect()
    }

    /// The orthogonal, complete quadruple `HH, HV, VH, VV`.
    pub fn computational() -> [AnalyzerSetting; 4] {
        use Basis::{H, V};
        [
            AnalyzerSetting::new(H, H),
            AnalyzerSetting::new(H, V),
            AnalyzerSetting::new(V, H),
            AnalyzerSetting::new(V, V),
        ]
    }

    pub fn ket(self, handedness: Handedness) -> Ket {
        let a = self.arm3.ket(handedness);
        let b = self.arm4.ket(handedness);
        Vector4::new(a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1])
    }
}

impl fmt::Display for AnalyzerSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.arm3.letter(), self.arm4.letter())
    }
}

impl FromStr for AnalyzerSetting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut chars = s.chars();
        match (
            chars.next().and_then(Basis::from_letter),
            chars.next().and_then(Basis::from_letter),
            chars.next(),
        ) {
            (Some(a), Some(b), None) => Ok(AnalyzerSetting::new(a, b)),
            _ => Err(Error::InvalidCounts(format!("unknown analyzer setting `{s}`"))),
        }
    }
}

impl Serialize for AnalyzerSetting {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AnalyzerSetting {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Named two-qubit kets used as tomography targets.
pub mod kets {
    use super::Ket;
    use num_complex::Complex64;

    fn real(v: [f64; 4]) -> Ket {
        Ket::new(
            Complex64::new(v[0], 0.0),
            Complex64::new(v[1], 0.0),
            Complex64::new(v[2], 0.0),
            Complex64::new(v[3], 0.0),
        )
    }

    /// `|DD⟩`, the unfiltered input.
    pub fn dd() -> Ket {
        real([0.5; 4])
    }

    /// `(|HH⟩ − |VV⟩)/√2`, the filtered NOON state after splitting.
    pub fn phi_minus() -> Ket {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        real([s, 0.0, 0.0, -s])
    }

    pub fn phi_plus() -> Ket {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        real([s, 0.0, 0.0, s])
    }

    pub fn hh() -> Ket {
        real([1.0, 0.0, 0.0, 0.0])
    }
}

/// Physical two-qubit state: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Matrix4<Complex64>);

impl DensityMatrix {
    /// Validates the invariants; use [`DensityMatrix::unchecked`] for raw estimates.
    pub fn new(matrix: Matrix4<Complex64>) -> Result<Self> {
        let rho = Self(matrix);
        rho.check()?;
        Ok(rho)
    }

    pub fn unchecked(matrix: Matrix4<Complex64>) -> Self {
        Self(matrix)
    }

    pub fn from_ket(psi: &Ket) -> Self {
        let n = psi.norm_squared();
        Self(psi * psi.adjoint() / Complex64::new(n, 0.0))
    }

    pub fn maximally_mixed() -> Self {
        Self(Matrix4::identity() * Complex64::new(0.25, 0.0))
    }

    /// Convex combination `Σ w_i ρ_i / Σ w_i`.
    pub fn mixture<'a>(parts: impl IntoIterator<Item = (f64, &'a DensityMatrix)>) -> Self {
        let mut acc = Matrix4::zeros();
        let mut total = 0.0;
        for (w, rho) in parts {
            acc += rho.0 * Complex64::new(w, 0.0);
            total += w;
        }
        Self(acc / Complex64::new(total, 0.0))
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self.0 - self.0.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues in ascending order of the Hermitian part.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let h = (self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = SymmetricEigen::new(h).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.total_cmp(b));
        [ev[0], ev[1], ev[2], ev[3]]
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_physical(&self) -> bool {
        self.check().is_ok()
    }

    fn check(&self) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > HERMITICITY_TOLERANCE {
            return Err(Error::InvalidDensityMatrix(format!(
                "not Hermitian (defect {herm:.3e})"
            )));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > TRACE_TOLERANCE {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let min = self.min_eigenvalue();
        if min < EIGENVALUE_FLOOR {
            return Err(Error::InvalidDensityMatrix(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Clips negative eigenvalues and renormalizes the trace.
    pub fn project_physical(&self) -> Self {
        let h = (self.0 + self.0.adjoint()) * Complex64::new(0.5, 0.0);
        let eig = SymmetricEigen::new(h);
        let mut out = Matrix4::zeros();
        let mut total = 0.0;
        for k in 0..4 {
            let lambda = eig.eigenvalues[k].max(0.0);
            total += lambda;
            let v = eig.eigenvectors.column(k);
            out += v * v.adjoint() * Complex64::new(lambda, 0.0);
        }
        if total <= 0.0 {
            return Self::maximally_mixed();
        }
        Self(out / Complex64::new(total, 0.0))
    }

    /// `⟨π|ρ|π⟩`.
    pub fn expectation(&self, ket: &Ket) -> f64 {
        (ket.adjoint() * self.0 * ket)[(0, 0)].re
    }

    pub fn purity(&self) -> f64 {
        (self.0 * self.0).trace().re
    }

    /// `½ tr|ρ − σ|`.
    pub fn trace_distance(&self, other: &DensityMatrix) -> f64 {
        let d = self.0 - other.0;
        let h = (d + d.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(h).eigenvalues.iter().map(|x| x.abs()).sum::<f64>() / 2.0
    }

    /// Conjugates by a local unitary `U₃ ⊗ U₄`.
    pub fn local_transform(&self, u3: &nalgebra::Matrix2<Complex64>, u4: &nalgebra::Matrix2<Complex64>) -> Self {
        let u = u3.kronecker(u4);
        let u = Matrix4::from_iterator(u.iter().copied());
        Self(u * self.0 * u.adjoint())
    }

    pub fn to_parts(&self) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
        let mut re = [[0.0; 4]; 4];
        let mut im = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                re[i][j] = self.0[(i, j)].re;
                im[i][j] = self.0[(i, j)].im;
            }
        }
        (re, im)
    }

    pub fn from_parts(re: &[[f64; 4]; 4], im: &[[f64; 4]; 4]) -> Self {
        Self(Matrix4::from_fn(|i, j| Complex64::new(re[i][j], im[i][j])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_row_major() {
        let names: Vec<String> = AnalyzerSetting::canonical().iter().map(|s| s.to_string()).collect();
        assert_eq!(names.join(","), "HH,HV,HD,HR,VH,VV,VD,VR,DH,DV,DD,DR,RH,RV,RD,RR");
    }

    #[test]
    fn setting_parse() {
        let s: AnalyzerSetting = "DR".parse().unwrap();
        assert_eq!(s, AnalyzerSetting::new(Basis::D, Basis::R));
        assert!("DX".parse::<AnalyzerSetting>().is_err());
        assert!("HHH".parse::<AnalyzerSetting>().is_err());
    }

    #[test]
    fn projection_and_trace_distance() {
        let mut m = *DensityMatrix::from_ket(&kets::phi_minus()).matrix();
        m[(0, 0)] += Complex64::new(0.2, 0.0);
        m[(1, 1)] -= Complex64::new(0.2, 0.0);
        let raw = DensityMatrix::unchecked(m);
        assert!(!raw.is_physical());
        let p = raw.project_physical();
        assert!(p.is_physical());
        let a = DensityMatrix::from_ket(&kets::hh());
        let b = DensityMatrix::from_ket(&kets::dd());
        // pure states: √(1 − |⟨a|b⟩|²)
        assert!((a.trace_distance(&b) - (1.0f64 - 0.25).sqrt()).abs() < 1e-12);
    }
}
