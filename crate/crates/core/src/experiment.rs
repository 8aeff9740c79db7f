//! The heralded filter circuit, end to end.
//!
//! A double-pair event puts `|2_H⟩` in the signal path `a` and `|2_H⟩` in path
//! `b`. Path `b` is split 50:50 towards a trigger detector `t`; one trigger click
//! leaves a single ancilla in `b`, which is cleaned by a horizontal polarizer.
//! The signal pair is rotated by a half-wave plate and meets the ancilla at the
//! filter beamsplitter. Heralding on exactly one horizontal photon at the
//! ancilla port `d` leaves the filtered pair in `c`, which a further 50:50
//! splitter maps onto two polarization qubits for tomography.
//!
//! Partial distinguishability is modelled by giving the ancilla pair a temporal
//! mode `γ|∥⟩ + √(1−γ²)|⊥⟩`. The `⊥` component lives in replica modes (suffix
//! `~`) that see the same optics but never interfere with the signal photons.
//! Detectors do not resolve the temporal label, so herald outcomes in either
//! replica add incoherently.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{check_unit_interval, FockState, LinearNetwork, ModeSet, Polarization};
use crate::qubits::{AnalyzerSetting, DensityMatrix, Handedness, Ket};
use crate::tomography::{poisson, TomographyCounts};

/// Probabilities below this are treated as exact zeros when pruning branches.
const BRANCH_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircuitConfig {
    /// Signal polarization angle from horizontal, radians.
    pub theta: f64,
    /// Filter beamsplitter reflectivity.
    pub r_filter: f64,
    /// Temporal overlap of ancilla and signal photons.
    pub gamma: f64,
    /// Expected counts per unit exposure for a setting of unit probability.
    pub rate_scale: f64,
    /// Flat accidental counts per setting per unit exposure.
    pub background_rate: f64,
    pub handedness: Handedness,
}

impl CircuitConfig {
    pub fn new(theta: f64) -> Self {
        Self {
            theta,
            r_filter: 0.5,
            gamma: 1.0,
            rate_scale: 1.0,
            background_rate: 0.0,
            handedness: Handedness::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("filter reflectivity", self.r_filter)?;
        check_unit_interval("gamma", self.gamma)?;
        if !self.theta.is_finite() {
            return Err(Error::OutOfRange {
                name: "theta",
                value: self.theta,
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            });
        }
        for (name, v) in [
            ("rate scale", self.rate_scale),
            ("background rate", self.background_rate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
        }
        Ok(())
    }
}

/// One herald outcome: a normalized mode-c state and its absolute probability.
#[derive(Clone, Debug)]
pub struct Branch {
    pub probability: f64,
    pub state: FockState,
}

#[derive(Clone, Debug)]
pub struct FilterRun {
    /// Incoherent herald outcomes; states live on modes `c` and `c~`.
    pub branches: Vec<Branch>,
    /// Probability of the single-photon trigger click.
    pub trigger_probability: f64,
    /// Trigger click times filter herald, summed over branches.
    pub herald_probability: f64,
}

impl FilterRun {
    /// The mode-c state over `(cH, cV)` when the output is pure, i.e. a single
    /// branch with no photon in the replica modes.
    pub fn pure_state(&self) -> Option<FockState> {
        let [branch] = self.branches.as_slice() else {
            return None;
        };
        let cond = branch.state.condition(&[("c~H", 0), ("c~V", 0)]).ok()?;
        ((cond.probability - 1.0).abs() < 1e-12).then_some(cond.state)
    }

    /// Maps every branch onto two qubits and mixes them. Returns the state and
    /// the probability that the splitter sends one photon to each arm.
    pub fn two_qubit_state(&self) -> Result<(DensityMatrix, f64)> {
        let mut parts = Vec::with_capacity(self.branches.len());
        let mut split_total = 0.0;
        for b in &self.branches {
            let (q, p) = pairs_to_qubits(&b.state)?;
            split_total += b.probability * p;
            parts.push((b.probability * p, q.density()));
        }
        if split_total <= 0.0 {
            return Err(Error::ZeroHeraldProbability);
        }
        let rho = DensityMatrix::mixture(parts.iter().map(|(w, r)| (*w, r)));
        let weight: f64 = self.branches.iter().map(|b| b.probability).sum();
        Ok((rho, split_total / weight))
    }
}

pub fn build_and_run(config: &CircuitConfig) -> Result<FilterRun> {
    config.validate()?;
    let modes = ModeSet::polarized(&["a", "a~", "b", "b~", "t"])?;
    let source = FockState::from_occupations(&modes, &[("aH", 2), ("bH", 2)])?;

    let trigger = LinearNetwork::beamsplitter(&modes, "b", "t", 0.5)?.apply(&source)?;
    let clicked = trigger.condition(&[("tH", 1), ("tV", 0)])?;
    let trigger_probability = clicked.probability;
    let inner = clicked.state.modes().clone();

    let polarized = clicked.state.polarizer("b", Polarization::H)?;
    let pass = polarized.norm_sqr();
    let state = polarized.normalized();

    let optics = LinearNetwork::beamsplitter(&inner, "b", "b~", config.gamma * config.gamma)?
        .then(&LinearNetwork::half_waveplate(&inner, "a", config.theta)?)?
        .then(&LinearNetwork::beamsplitter(&inner, "a", "b", config.r_filter)?)?
        .then(&LinearNetwork::beamsplitter(&inner, "a~", "b~", config.r_filter)?)?;
    let out = optics.apply(&state)?;

    let patterns: [[(&str, u32); 4]; 2] = [
        [("bH", 1), ("bV", 0), ("b~H", 0), ("b~V", 0)],
        [("bH", 0), ("bV", 0), ("b~H", 1), ("b~V", 0)],
    ];
    let mut branches = Vec::new();
    for pattern in &patterns {
        let cond = out.condition(pattern)?;
        let probability = trigger_probability * pass * cond.probability;
        if probability > BRANCH_FLOOR {
            let state = cond.state.relabel_spatial("a", "c")?.relabel_spatial("a~", "c~")?;
            branches.push(Branch { probability, state });
        }
    }
    let herald_probability: f64 = branches.iter().map(|b| b.probability).sum();
    if branches.is_empty() {
        return Err(Error::ZeroHeraldProbability);
    }
    Ok(FilterRun {
        branches,
        trigger_probability,
        herald_probability,
    })
}

/// Polarization state of the two analyzer arms.
#[derive(Clone, Debug, PartialEq)]
pub enum TwoQubitState {
    Pure(Ket),
    Mixed(DensityMatrix),
}

impl TwoQubitState {
    pub fn density(&self) -> DensityMatrix {
        match self {
            TwoQubitState::Pure(psi) => DensityMatrix::from_ket(psi),
            TwoQubitState::Mixed(rho) => rho.clone(),
        }
    }
}

/// Splits a two-photon state 50:50 into arms 3 and 4 and keeps one photon per
/// arm. Photon polarizations become qubits (`|2_H⟩ → |HH⟩`,
/// `|1_H,1_V⟩ → (|HV⟩+|VH⟩)/√2`); every other label, such as a temporal replica,
/// is traced out. Returns the state and the one-per-arm probability.
pub fn pairs_to_qubits(state: &FockState) -> Result<(TwoQubitState, f64)> {
    if state.photons() != 2 {
        return Err(Error::PhotonNumber {
            expected: 2,
            found: state.photons(),
        });
    }
    let sources: Vec<String> = state.modes().spatial_names().iter().map(|s| s.to_string()).collect();
    let mut labels: Vec<String> = Vec::new();
    for s in &sources {
        for arm in [s.clone(), format!("{s}'")] {
            for pol in ["H", "V"] {
                labels.push(format!("{arm}{pol}"));
            }
        }
    }
    let modes = ModeSet::parse(&labels)?;
    let wide = state.normalized().embed(&modes)?;
    let mut net = LinearNetwork::identity(&modes);
    for s in &sources {
        net = net.then(&LinearNetwork::beamsplitter(&modes, s, &format!("{s}'"), 0.5)?)?;
    }
    let split = net.apply(&wide)?;

    // (source index, arm index, polarization index) for each mode
    let role: Vec<(usize, usize, usize)> = modes
        .iter()
        .map(|m| {
            let arm4 = m.spatial.ends_with('\'');
            let base = m.spatial.trim_end_matches('\'');
            let src = sources.iter().position(|s| s == base).unwrap_or(0);
            (src, arm4 as usize, (m.pol == Polarization::V) as usize)
        })
        .collect();

    let mut components: BTreeMap<(usize, usize), Ket> = BTreeMap::new();
    let mut probability = 0.0;
    for (occ, amp) in split.terms() {
        let mut photon = [None, None];
        let mut valid = true;
        for (k, &n) in occ.iter().enumerate() {
            if n == 0 {
                continue;
            }
            let (src, arm, pol) = role[k];
            if n > 1 || photon[arm].is_some() {
                valid = false;
                break;
            }
            photon[arm] = Some((src, pol));
        }
        let (Some((s3, p3)), Some((s4, p4))) = (photon[0], photon[1]) else {
            continue;
        };
        if !valid {
            continue;
        }
        probability += amp.norm_sqr();
        components.entry((s3, s4)).or_insert_with(Ket::zeros)[2 * p3 + p4] += amp;
    }
    if probability <= 0.0 {
        return Err(Error::ZeroHeraldProbability);
    }
    let nonzero: Vec<&Ket> = components.values().filter(|k| k.norm_squared() > 0.0).collect();
    let q = if let [only] = nonzero.as_slice() {
        TwoQubitState::Pure(*only / Complex64::new(only.norm(), 0.0))
    } else {
        let mut m = nalgebra::Matrix4::zeros();
        for k in &nonzero {
            m += *k * k.adjoint();
        }
        TwoQubitState::Mixed(DensityMatrix::unchecked(m / Complex64::new(probability, 0.0)))
    };
    Ok((q, probability))
}

/// `⟨π_s|ρ|π_s⟩` for the product analyzer state of setting `s`.
pub fn setting_probability(rho: &DensityMatrix, setting: AnalyzerSetting, handedness: Handedness) -> f64 {
    rho.expectation(&setting.ket(handedness)).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountModel {
    pub rate_scale: f64,
    pub background_rate: f64,
    pub exposure: f64,
    pub handedness: Handedness,
}

impl CountModel {
    pub fn from_config(config: &CircuitConfig, exposure: f64) -> Self {
        Self {
            rate_scale: config.rate_scale,
            background_rate: config.background_rate,
            exposure,
            handedness: config.handedness,
        }
    }

    pub fn mean(&self, rho: &DensityMatrix, setting: AnalyzerSetting) -> f64 {
        self.exposure * (self.rate_scale * setting_probability(rho, setting, self.handedness) + self.background_rate)
    }
}

/// Draws one Poisson count per setting with mean
/// `exposure · (rate_scale · p_s + background_rate)`.
pub fn generate_counts<R: Rng + ?Sized>(
    rho: &DensityMatrix,
    settings: &[AnalyzerSetting],
    model: &CountModel,
    label: &str,
    rng: &mut R,
) -> Result<TomographyCounts> {
    if !(model.exposure > 0.0) {
        return Err(Error::OutOfRange {
            name: "exposure",
            value: model.exposure,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let counts = settings.iter().map(|&s| poisson(model.mean(rho, s), rng)).collect();
    TomographyCounts::new(label, settings.to_vec(), counts)
}

/// Pearson χ² of observed counts against the model means, with the number of
/// bins that entered the sum. Empty bins with zero mean are skipped; counts in
/// a bin with zero mean make the statistic infinite.
pub fn chi_square(rho: &DensityMatrix, data: &TomographyCounts, model: &CountModel) -> (f64, usize) {
    data.iter()
        .map(|(s, n)| (model.mean(rho, s), n as f64))
        .filter(|(m, n)| *m > 0.0 || *n > 0.0)
        .fold((0.0, 0), |(chi, k), (m, n)| {
            let term = if m > 0.0 { (n - m).powi(2) / m } else { f64::INFINITY };
            (chi + term, k + 1)
        })
}

/// Rate scale and flat background (unit exposure) that best reproduce `data`
/// for state `rho`, by minimum χ² with the total count held fixed.
pub fn calibrate_count_model(
    rho: &DensityMatrix,
    data: &TomographyCounts,
    handedness: Handedness,
) -> Result<CountModel> {
    let bins = data.counts().len() as f64;
    let total = data.total() as f64;
    let p_sum: f64 = data
        .settings()
        .iter()
        .map(|&s| setting_probability(rho, s, handedness))
        .sum();
    if total == 0.0 || p_sum <= 0.0 {
        return Err(Error::ZeroNormalization);
    }
    let model = |b: f64| CountModel {
        rate_scale: ((total - bins * b) / p_sum).max(0.0),
        background_rate: b,
        exposure: 1.0,
        handedness,
    };
    let cost = |b: f64| chi_square(rho, data, &model(b)).0;
    // golden-section search on the background level
    let (mut lo, mut hi) = (0.0, total / bins);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    while hi - lo > 1e-9 * (1.0 + hi) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = cost(x2);
        }
    }
    let best = [(0.0, cost(0.0)), ((lo + hi) / 2.0, cost((lo + hi) / 2.0))]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(b, _)| b)
        .unwrap_or(0.0);
    Ok(model(best))
}
