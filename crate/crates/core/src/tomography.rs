//! Two-qubit polarization tomography from 16 projective coincidence counts.
//!
//! [`linear_estimate`] inverts the measurement map directly and may return an
//! unphysical matrix. [`mle_reconstruct`] fits a Cholesky-parameterized state
//! `ρ = T†T / tr(T†T)` to the counts by minimizing the Gaussian approximation
//! of the Poisson likelihood, `Σ_s (μ_s − n_s)² / (2μ_s + ε)`, so every result
//! is physical by construction. [`bootstrap_metrics`] resamples the counts to
//! put error bars on the derived metrics.

use std::collections::BTreeSet;

use nalgebra::{Cholesky, Matrix4};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::StateMetrics;
use crate::optim::{bfgs, BfgsOptions};
use crate::qubits::{AnalyzerSetting, Basis, DensityMatrix, Handedness, Ket, EIGENVALUE_FLOOR};

const FILTER_OFF_JSON: &str = include_str!("../data/filter_off.json");
const FILTER_ON_JSON: &str = include_str!("../data/filter_on.json");

/// Integer coincidence counts for the 16 settings of `{H,V,D,R}⊗{H,V,D,R}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TomographyCounts {
    pub label: String,
    settings: Vec<AnalyzerSetting>,
    counts: Vec<u64>,
}

#[derive(Deserialize)]
struct CountsDoc {
    label: String,
    settings: Vec<String>,
    counts: Vec<i64>,
}

impl TomographyCounts {
    pub fn new(label: impl Into<String>, settings: Vec<AnalyzerSetting>, counts: Vec<u64>) -> Result<Self> {
        if settings.len() != 16 || counts.len() != 16 {
            return Err(Error::InvalidCounts(format!(
                "expected 16 settings and 16 counts, got {} and {}",
                settings.len(),
                counts.len()
            )));
        }
        let unique: BTreeSet<_> = settings.iter().collect();
        if unique.len() != 16 {
            return Err(Error::InvalidCounts("duplicate analyzer setting".into()));
        }
        Ok(Self {
            label: label.into(),
            settings,
            counts,
        })
    }

    /// Counts listed in canonical row-major order `HH, HV, HD, HR, VH, …, RR`.
    pub fn canonical(label: impl Into<String>, counts: [u64; 16]) -> Self {
        Self::new(label, AnalyzerSetting::canonical(), counts.to_vec()).expect("canonical settings are complete")
    }

    /// Two-fold counts with the ancilla blocked (30 s per setting).
    pub fn filter_off() -> Self {
        Self::from_json(FILTER_OFF_JSON).expect("bundled fixture")
    }

    /// Four-fold counts with the filter running (8.25 h per setting).
    pub fn filter_on() -> Self {
        Self::from_json(FILTER_ON_JSON).expect("bundled fixture")
    }

    pub fn fixture(name: &str) -> Option<Self> {
        match name {
            "filter_off" => Some(Self::filter_off()),
            "filter_on" => Some(Self::filter_on()),
            _ => None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: CountsDoc = serde_json::from_str(text).map_err(|e| Error::InvalidCounts(e.to_string()))?;
        let settings = doc
            .settings
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<AnalyzerSetting>>>()?;
        let counts = doc
            .counts
            .iter()
            .map(|&c| u64::try_from(c).map_err(|_| Error::InvalidCounts(format!("negative count {c}"))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(doc.label, settings, counts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn settings(&self) -> &[AnalyzerSetting] {
        &self.settings
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn iter(&self) -> impl Iterator<Item = (AnalyzerSetting, u64)> + '_ {
        self.settings.iter().copied().zip(self.counts.iter().copied())
    }

    pub fn count(&self, setting: AnalyzerSetting) -> u64 {
        self.iter().find(|(s, _)| *s == setting).map(|(_, c)| c).unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `n_HH + n_HV + n_VH + n_VV`: counts in one complete orthogonal quadruple.
    pub fn hv_normalization(&self) -> u64 {
        AnalyzerSetting::computational().iter().map(|&s| self.count(s)).sum()
    }

    pub fn with_counts(&self, counts: Vec<u64>) -> Result<Self> {
        Self::new(self.label.clone(), self.settings.clone(), counts)
    }
}

/// Bloch rows `(1, x, y, z)` of the four analyzer states.
fn bloch_matrix(handedness: Handedness) -> Matrix4<f64> {
    let y = match handedness {
        Handedness::MinusI => -1.0,
        Handedness::PlusI => 1.0,
    };
    Matrix4::new(
        1.0, 0.0, 0.0, 1.0, // H
        1.0, 0.0, 0.0, -1.0, // V
        1.0, 1.0, 0.0, 0.0, // D
        1.0, 0.0, y, 0.0, // R
    )
}

fn pauli(k: usize) -> [[Complex64; 2]; 2] {
    let z = Complex64::new(0.0, 0.0);
    let o = Complex64::new(1.0, 0.0);
    let i = Complex64::new(0.0, 1.0);
    match k {
        0 => [[o, z], [z, o]],
        1 => [[z, o], [o, z]],
        2 => [[z, -i], [i, z]],
        _ => [[o, z], [z, -o]],
    }
}

fn basis_index(b: Basis) -> usize {
    match b {
        Basis::H => 0,
        Basis::V => 1,
        Basis::D => 2,
        Basis::R => 3,
    }
}

#[derive(Clone, Debug)]
pub struct LinearEstimate {
    /// Hermitian, unit trace, possibly with negative eigenvalues.
    pub rho: DensityMatrix,
    pub physical: bool,
}

/// Direct inversion of `⟨π_s|ρ|π_s⟩ = n_s / N`, `N = n_HH + n_HV + n_VH + n_VV`.
///
/// Writing `ρ = ¼ Σ r_ij σ_i⊗σ_j`, every probability is `¼ (M r Mᵀ)_ab` with `M`
/// the analyzer Bloch rows, so `r = 4 M⁻¹ P M⁻ᵀ`.
pub fn linear_estimate(data: &TomographyCounts, handedness: Handedness) -> Result<LinearEstimate> {
    let norm = data.hv_normalization();
    if norm == 0 {
        return Err(Error::ZeroNormalization);
    }
    let mut probs = Matrix4::<f64>::zeros();
    for (s, n) in data.iter() {
        probs[(basis_index(s.arm3), basis_index(s.arm4))] = n as f64 / norm as f64;
    }
    let m_inv = bloch_matrix(handedness)
        .try_inverse()
        .ok_or_else(|| Error::InvalidCounts("analyzer states are not informationally complete".into()))?;
    let r = m_inv * probs * m_inv.transpose() * 4.0;

    let mut rho = Matrix4::<Complex64>::zeros();
    for i in 0..4 {
        let a = pauli(i);
        for j in 0..4 {
            let b = pauli(j);
            let w = Complex64::new(r[(i, j)] / 4.0, 0.0);
            for row in 0..4 {
                for col in 0..4 {
                    rho[(row, col)] += w * a[row / 2][col / 2] * b[row % 2][col % 2];
                }
            }
        }
    }
    let rho = DensityMatrix::unchecked(rho);
    let physical = rho.min_eigenvalue() >= EIGENVALUE_FLOOR;
    Ok(LinearEstimate { rho, physical })
}

/// How the overall count scale enters the likelihood.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Intensity {
    /// The scale is fitted along with the state: predicted counts are
    /// `⟨π_s|T†T|π_s⟩` with `T` unnormalized.
    #[default]
    Free,
    /// Predicted counts are `N ⟨π_s|ρ|π_s⟩` with `N` fixed to the H/V quadruple total.
    HvSubset,
}

#[derive(Clone, Copy, Debug)]
pub struct MleOptions {
    pub handedness: Handedness,
    pub intensity: Intensity,
    /// Guards the likelihood denominator for empty predicted bins.
    pub epsilon: f64,
    pub optimizer: BfgsOptions,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            handedness: Handedness::default(),
            intensity: Intensity::default(),
            epsilon: 1e-9,
            optimizer: BfgsOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct MleResult {
    pub rho: DensityMatrix,
    /// Final value of the likelihood objective.
    pub objective: f64,
    /// Fitted (or fixed) count scale `N`.
    pub intensity: f64,
    pub iterations: usize,
    /// Objective after each accepted optimizer step.
    pub history: Vec<f64>,
}

pub fn mle_reconstruct(data: &TomographyCounts) -> Result<DensityMatrix> {
    Ok(mle_reconstruct_with(data, &MleOptions::default())?.rho)
}

pub fn mle_reconstruct_with(data: &TomographyCounts, opts: &MleOptions) -> Result<MleResult> {
    if data.total() == 0 {
        return Err(Error::ZeroNormalization);
    }
    let start = linear_estimate(data, opts.handedness)?.rho.project_physical();
    let scale = match data.hv_normalization() {
        0 => data.total() as f64 / 4.0,
        n => n as f64,
    };
    let problem = Likelihood::new(data, opts, scale);
    let x0 = cholesky_params(
        start.matrix(),
        match opts.intensity {
            Intensity::Free => scale,
            Intensity::HvSubset => 1.0,
        },
    );
    let min = bfgs(|x, g| problem.value_and_gradient(x, g), &x0, &opts.optimizer);
    if !min.converged {
        return Err(Error::MleNotConverged {
            iterations: min.iterations,
            objective: min.value,
        });
    }
    let gram = gram_matrix(&lower_from_params(&min.x));
    let trace = gram.trace().re;
    let intensity = match opts.intensity {
        Intensity::Free => trace,
        Intensity::HvSubset => scale,
    };
    let rho = DensityMatrix::unchecked(gram / Complex64::new(trace, 0.0));
    // exact Hermitian symmetrization removes rounding asymmetry from the product
    let m = rho.matrix();
    let rho = DensityMatrix::unchecked((m + m.adjoint()) * Complex64::new(0.5, 0.0));
    Ok(MleResult {
        rho,
        objective: min.value,
        intensity,
        iterations: min.iterations,
        history: min.history,
    })
}

/// Index pairs of the strictly lower triangle, in parameter order.
const OFF_DIAGONAL: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

fn lower_from_params(t: &[f64]) -> Matrix4<Complex64> {
    let mut m = Matrix4::zeros();
    for k in 0..4 {
        m[(k, k)] = Complex64::new(t[k], 0.0);
    }
    for (p, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        m[(i, j)] = Complex64::new(t[4 + 2 * p], t[5 + 2 * p]);
    }
    m
}

fn gram_matrix(t: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    t.adjoint() * t
}

/// Lower-triangular `T` with `T†T = scale · (ρ + δ I)` (δ keeps it invertible).
fn cholesky_params(rho: &Matrix4<Complex64>, scale: f64) -> Vec<f64> {
    let target = (rho + Matrix4::identity() * Complex64::new(1e-3, 0.0)) * Complex64::new(scale, 0.0);
    // T†T = A with T lower: factor the index-reversed matrix J A J = L L†, T = J L† J
    let reversed = Matrix4::from_fn(|i, j| target[(3 - i, 3 - j)]);
    let l = Cholesky::new(reversed)
        .expect("regularized density matrix is positive definite")
        .unpack();
    let la = l.adjoint();
    let t = Matrix4::from_fn(|i, j| la[(3 - i, 3 - j)]);
    let mut params = vec![0.0; 16];
    for k in 0..4 {
        params[k] = t[(k, k)].re;
    }
    for (p, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        params[4 + 2 * p] = t[(i, j)].re;
        params[5 + 2 * p] = t[(i, j)].im;
    }
    params
}

struct Likelihood {
    projectors: Vec<Ket>,
    counts: Vec<f64>,
    intensity: Intensity,
    scale: f64,
    epsilon: f64,
}

impl Likelihood {
    fn new(data: &TomographyCounts, opts: &MleOptions, scale: f64) -> Self {
        Self {
            projectors: data.settings().iter().map(|s| s.ket(opts.handedness)).collect(),
            counts: data.counts().iter().map(|&c| c as f64).collect(),
            intensity: opts.intensity,
            scale,
            epsilon: opts.epsilon,
        }
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = lower_from_params(x);
        let tau: f64 = t.iter().map(|z| z.norm_sqr()).sum();
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut value = 0.0;
        // accumulates Σ_s (dL/dg_s)·∂g_s/∂T, where g_s = ‖T π_s‖²
        let mut dg = Matrix4::<Complex64>::zeros();
        let mut dtau = 0.0;
        for (pi, &n) in self.projectors.iter().zip(&self.counts) {
            let v = t * pi;
            let g = v.norm_squared();
            let (mu, dmu_dg, dmu_dtau) = match self.intensity {
                Intensity::Free => (g, 1.0, 0.0),
                Intensity::HvSubset => {
                    let mu = self.scale * g / tau;
                    (mu, self.scale / tau, -mu / tau)
                }
            };
            let den = 2.0 * mu + self.epsilon;
            let r = mu - n;
            value += r * r / den;
            let dl_dmu = 2.0 * r / den - 2.0 * r * r / (den * den);
            // ∂g/∂T_ij (complex form): 2 v_i conj(π_j)
            for i in 0..4 {
                for j in 0..=i {
                    dg[(i, j)] += Complex64::new(dl_dmu * dmu_dg * 2.0, 0.0) * v[i] * pi[j].conj();
                }
            }
            dtau += dl_dmu * dmu_dtau;
        }
        for k in 0..4 {
            grad[k] = dg[(k, k)].re + dtau * 2.0 * t[(k, k)].re;
        }
        for (p, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
            grad[4 + 2 * p] = dg[(i, j)].re + dtau * 2.0 * t[(i, j)].re;
            grad[5 + 2 * p] = dg[(i, j)].im + dtau * 2.0 * t[(i, j)].im;
        }
        value
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub fidelity: Spread,
    pub tangle: Spread,
    pub linear_entropy: Spread,
    pub trials: usize,
    pub skipped: usize,
    pub seed: u64,
}

pub const MIN_BOOTSTRAP_TRIALS: usize = 100;

/// Poisson-resamples every count `n_trials` times and reconstructs each
/// replica. Trial `k` draws from its own ChaCha stream `k` under `seed`, and the
/// statistics are accumulated in trial order, so the result does not depend on
/// thread scheduling.
pub fn bootstrap_metrics(
    data: &TomographyCounts,
    target: &Ket,
    n_trials: usize,
    seed: u64,
    opts: &MleOptions,
) -> Result<BootstrapSummary> {
    if n_trials < MIN_BOOTSTRAP_TRIALS {
        return Err(Error::OutOfRange {
            name: "bootstrap trials",
            value: n_trials as f64,
            lo: MIN_BOOTSTRAP_TRIALS as f64,
            hi: f64::INFINITY,
        });
    }
    let results: Vec<Option<StateMetrics>> = (0..n_trials)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let counts = data.counts().iter().map(|&c| poisson(c as f64, &mut rng)).collect();
            let replica = data.with_counts(counts).ok()?;
            let fit = mle_reconstruct_with(&replica, opts).ok()?;
            Some(StateMetrics::of(&fit.rho, target))
        })
        .collect();

    let ok: Vec<StateMetrics> = results.iter().flatten().copied().collect();
    let skipped = n_trials - ok.len();
    if skipped * 20 > n_trials {
        return Err(Error::TooManySkippedTrials {
            skipped,
            trials: n_trials,
        });
    }
    let pick = |f: fn(&StateMetrics) -> f64| Spread::of(&ok.iter().map(f).collect::<Vec<_>>());
    Ok(BootstrapSummary {
        fidelity: pick(|m| m.fidelity),
        tangle: pick(|m| m.tangle),
        linear_entropy: pick(|m| m.linear_entropy),
        trials: n_trials,
        skipped,
        seed,
    })
}

pub(crate) fn poisson<R: rand::Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubits::kets;

    fn exact_counts(rho: &DensityMatrix, scale: f64) -> TomographyCounts {
        let settings = AnalyzerSetting::canonical();
        let counts = settings
            .iter()
            .map(|s| (scale * rho.expectation(&s.ket(Handedness::MinusI))).round() as u64)
            .collect();
        TomographyCounts::new("exact", settings, counts).unwrap()
    }

    #[test]
    fn fixtures_load() {
        let off = TomographyCounts::filter_off();
        assert_eq!(off.counts()[10], 328);
        assert_eq!(off.settings()[10].to_string(), "DD");
        let on = TomographyCounts::filter_on();
        assert_eq!(on.total(), 688);
    }

    #[test]
    fn schema_errors() {
        let short = r#"{"label":"x","settings":["HH"],"counts":[1]}"#;
        assert!(matches!(
            TomographyCounts::from_json(short),
            Err(Error::InvalidCounts(_))
        ));
        let mut doc: serde_json::Value = serde_json::from_str(FILTER_ON_JSON).unwrap();
        doc["settings"][1] = "HH".into();
        assert!(TomographyCounts::from_json(&doc.to_string()).is_err());
        doc["settings"][1] = "HV".into();
        doc["counts"][3] = (-4).into();
        assert!(TomographyCounts::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn linear_round_trip() {
        for psi in [kets::dd(), kets::phi_minus()] {
            let truth = DensityMatrix::from_ket(&psi);
            // quarter-integer probabilities make these counts exact
            let est = linear_estimate(&exact_counts(&truth, 4000.0), Handedness::MinusI).unwrap();
            assert!(est.physical);
            assert!(est.rho.trace_distance(&truth) < 1e-10);
        }
    }

    #[test]
    fn linear_rejects_empty_quadruple() {
        let mut c = [3u64; 16];
        for i in [0, 1, 4, 5] {
            c[i] = 0;
        }
        assert!(matches!(
            linear_estimate(&TomographyCounts::canonical("z", c), Handedness::MinusI),
            Err(Error::ZeroNormalization)
        ));
    }

    #[test]
    fn mle_noiseless_dd() {
        let truth = DensityMatrix::from_ket(&kets::dd());
        let rho = mle_reconstruct(&exact_counts(&truth, 4000.0)).unwrap();
        assert!(rho.is_physical());
        assert!(rho.expectation(&kets::dd()) > 1.0 - 1e-8);
    }

    #[test]
    fn mle_history_is_monotone() {
        let fit = mle_reconstruct_with(&TomographyCounts::filter_on(), &MleOptions::default()).unwrap();
        assert!(fit.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn mle_empty_counts() {
        let z = TomographyCounts::canonical("z", [0; 16]);
        assert!(matches!(mle_reconstruct(&z), Err(Error::ZeroNormalization)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for intensity in [Intensity::Free, Intensity::HvSubset] {
            let opts = MleOptions {
                intensity,
                ..MleOptions::default()
            };
            let data = TomographyCounts::filter_on();
            let problem = Likelihood::new(&data, &opts, data.hv_normalization() as f64);
            let x: Vec<f64> = (0..16).map(|k| 1.0 + 0.37 * (k as f64).sin()).collect();
            let mut g = vec![0.0; 16];
            problem.value_and_gradient(&x, &mut g);
            let mut scratch = vec![0.0; 16];
            for k in 0..16 {
                let h = 1e-6;
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp[k] += h;
                xm[k] -= h;
                let fd = (problem.value_and_gradient(&xp, &mut scratch)
                    - problem.value_and_gradient(&xm, &mut scratch))
                    / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-5 * (1.0 + fd.abs()),
                    "{intensity:?} k={k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn bootstrap_requires_enough_trials() {
        let r = bootstrap_metrics(
            &TomographyCounts::filter_on(),
            &kets::phi_minus(),
            10,
            1,
            &MleOptions::default(),
        );
        assert!(matches!(r, Err(Error::OutOfRange { .. })));
    }
}
