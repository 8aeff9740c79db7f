//! Truncation-free few-photon Fock space.
//!
//! A [`FockState`] is a sparse superposition of occupation-number vectors over a
//! labelled [`ModeSet`]. A [`LinearNetwork`] is an `m × m` unitary acting on the
//! creation operators, `a†_k → Σ_j U[j,k] a†_j`. Applying a network expands the
//! product of creation operators exactly, so every amplitude is a finite sum and
//! the module doubles as a brute-force oracle for closed-form results.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Amplitudes with modulus below this are dropped after expansion.
pub const PRUNE_TOLERANCE: f64 = 1e-12;

/// Allowed deviation of `U·U†` from the identity.
pub const UNITARITY_TOLERANCE: f64 = 1e-12;

const C0: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn other(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => f.write_str("H"),
            Polarization::V => f.write_str("V"),
        }
    }
}

/// One optical mode: a spatial path together with a polarization.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Mode {
    pub spatial: String,
    pub pol: Polarization,
}

impl Mode {
    pub fn new(spatial: impl Into<String>, pol: Polarization) -> Self {
        Self {
            spatial: spatial.into(),
            pol,
        }
    }

    /// Parses labels of the form `aH`, `b~V`, `arm3H`.
    pub fn parse(label: &str) -> Result<Self> {
        let (spatial, pol) = match label.char_indices().last() {
            Some((i, 'H')) => (&label[..i], Polarization::H),
            Some((i, 'V')) => (&label[..i], Polarization::V),
            _ => return Err(Error::BadModeLabel(label.to_string())),
        };
        if spatial.is_empty() {
            return Err(Error::BadModeLabel(label.to_string()));
        }
        Ok(Self::new(spatial, pol))
    }

    pub fn label(&self) -> String {
        format!("{}{}", self.spatial, self.pol)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.spatial, self.pol)
    }
}

/// Ordered set of unique modes. The order fixes the layout of occupation vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModeSet {
    modes: Vec<Mode>,
}

impl ModeSet {
    pub fn new(modes: Vec<Mode>) -> Result<Self> {
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(Error::DuplicateMode(m.label()));
            }
        }
        Ok(Self { modes })
    }

    pub fn parse<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let modes = labels
            .iter()
            .map(|l| Mode::parse(l.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(modes)
    }

    /// Every spatial name gets an H and a V mode, in that order.
    pub fn polarized<S: AsRef<str>>(spatial: &[S]) -> Result<Self> {
        let modes = spatial
            .iter()
            .flat_map(|s| {
                [
                    Mode::new(s.as_ref(), Polarization::H),
                    Mode::new(s.as_ref(), Polarization::V),
                ]
            })
            .collect();
        Self::new(modes)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mode> {
        self.modes.iter()
    }

    pub fn get(&self, index: usize) -> Option<&Mode> {
        self.modes.get(index)
    }

    pub fn position(&self, mode: &Mode) -> Option<usize> {
        self.modes.iter().position(|m| m == mode)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        let mode = Mode::parse(label)?;
        self.position(&mode)
            .ok_or_else(|| Error::UnknownMode(label.to_string()))
    }

    /// Indices of the modes sharing a spatial name, keyed by polarization.
    pub fn spatial_indices(&self, spatial: &str) -> BTreeMap<Polarization, usize> {
        self.modes
            .iter()
            .enumerate()
            .filter(|(_, m)| m.spatial == spatial)
            .map(|(i, m)| (m.pol, i))
            .collect()
    }

    /// Distinct spatial names in first-appearance order.
    pub fn spatial_names(&self) -> Vec<&str> {
        let mut names: Vec<&str> = Vec::new();
        for m in &self.modes {
            if !names.contains(&m.spatial.as_str()) {
                names.push(&m.spatial);
            }
        }
        names
    }

    pub fn labels(&self) -> Vec<String> {
        self.modes.iter().map(Mode::label).collect()
    }

    fn without(&self, drop: &[usize]) -> ModeSet {
        ModeSet {
            modes: self
                .modes
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop.contains(i))
                .map(|(_, m)| m.clone())
                .collect(),
        }
    }
}

/// Fixed-photon-number pure state, stored sparsely.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    modes: ModeSet,
    photons: u32,
    terms: BTreeMap<Vec<u32>, Complex64>,
}

/// Result of a projective number measurement on part of a state.
#[derive(Clone, Debug)]
pub struct Conditioned {
    pub state: FockState,
    pub probability: f64,
}

impl FockState {
    pub fn vacuum(modes: &ModeSet) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(vec![0; modes.len()], Complex64::new(1.0, 0.0));
        Self {
            modes: modes.clone(),
            photons: 0,
            terms,
        }
    }

    /// Single number state with amplitude 1. Unlisted modes are empty.
    pub fn from_occupations(modes: &ModeSet, occupations: &[(&str, u32)]) -> Result<Self> {
        let mut occ = vec![0u32; modes.len()];
        for &(label, count) in occupations {
            occ[modes.index_of(label)?] += count;
        }
        let photons = occ.iter().sum();
        let mut terms = BTreeMap::new();
        terms.insert(occ, Complex64::new(1.0, 0.0));
        Ok(Self {
            modes: modes.clone(),
            photons,
            terms,
        })
    }

    /// Builds a superposition. All occupation vectors must carry the same photon number.
    pub fn from_terms<I>(modes: &ModeSet, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, Complex64)>,
    {
        let mut map: BTreeMap<Vec<u32>, Complex64> = BTreeMap::new();
        let mut photons = None;
        for (occ, amp) in terms {
            if occ.len() != modes.len() {
                return Err(Error::DimensionMismatch {
                    expected: modes.len(),
                    found: occ.len(),
                });
            }
            let n: u32 = occ.iter().sum();
            match photons {
                None => photons = Some(n),
                Some(p) if p != n => return Err(Error::PhotonNumber { expected: p, found: n }),
                _ => {}
            }
            *map.entry(occ).or_insert(C0) += amp;
        }
        map.retain(|_, a| a.norm() >= PRUNE_TOLERANCE);
        Ok(Self {
            modes: modes.clone(),
            photons: photons.unwrap_or(0),
            terms: map,
        })
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn photons(&self) -> u32 {
        self.photons
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], Complex64)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn amplitude(&self, occupation: &[u32]) -> Complex64 {
        self.terms.get(occupation).copied().unwrap_or(C0)
    }

    /// Amplitude of the number state described by `(label, count)` pairs.
    pub fn amplitude_of(&self, occupations: &[(&str, u32)]) -> Result<Complex64> {
        let mut occ = vec![0u32; self.modes.len()];
        for &(label, count) in occupations {
            occ[self.modes.index_of(label)?] += count;
        }
        Ok(self.amplitude(&occ))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm_sqr().sqrt();
        let mut out = self.clone();
        if n > 0.0 {
            out.terms.values_mut().for_each(|a| *a /= n);
        }
        out
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        let mut out = self.clone();
        out.terms.values_mut().for_each(|a| *a *= factor);
        out.terms.retain(|_, a| a.norm() >= PRUNE_TOLERANCE);
        out
    }

    /// `⟨self|other⟩`; states over different mode sets are orthogonal.
    pub fn inner(&self, other: &FockState) -> Complex64 {
        if self.modes != other.modes {
            return C0;
        }
        self.terms.iter().map(|(k, a)| a.conj() * other.amplitude(k)).sum()
    }

    /// Global-phase-invariant overlap `|⟨a|b⟩|² / (‖a‖²‖b‖²)`.
    pub fn fidelity(&self, other: &FockState) -> f64 {
        let d = self.norm_sqr() * other.norm_sqr();
        if d == 0.0 {
            return 0.0;
        }
        self.inner(other).norm_sqr() / d
    }

    /// Projects onto exact photon counts in the listed modes, removes those modes
    /// and renormalizes. A zero-probability outcome yields an empty state.
    pub fn condition(&self, pattern: &[(&str, u32)]) -> Result<Conditioned> {
        let mut fixed: Vec<(usize, u32)> = Vec::with_capacity(pattern.len());
        for &(label, count) in pattern {
            let idx = self.modes.index_of(label)?;
            match fixed.iter().find(|(i, _)| *i == idx) {
                Some(&(_, c)) if c != count => {
                    // contradictory pattern: nothing survives
                    fixed.push((idx, count));
                }
                Some(_) => {}
                None => fixed.push((idx, count)),
            }
        }
        let drop: Vec<usize> = fixed.iter().map(|(i, _)| *i).collect();
        let modes = self.modes.without(&drop);
        let removed: u32 = fixed.iter().map(|(_, c)| *c).sum();

        let mut terms = BTreeMap::new();
        let mut probability = 0.0;
        for (occ, amp) in &self.terms {
            if fixed.iter().all(|&(i, c)| occ[i] == c) {
                probability += amp.norm_sqr();
                let reduced: Vec<u32> = occ
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !drop.contains(i))
                    .map(|(_, n)| *n)
                    .collect();
                terms.insert(reduced, *amp);
            }
        }
        let scale = if probability > 0.0 {
            1.0 / probability.sqrt()
        } else {
            0.0
        };
        terms.values_mut().for_each(|a: &mut Complex64| *a *= scale);
        Ok(Conditioned {
            state: FockState {
                modes,
                photons: self.photons.saturating_sub(removed),
                terms,
            },
            probability,
        })
    }

    /// Keeps the terms accepted by `keep` without removing any mode.
    pub fn postselect(&self, keep: impl Fn(&[u32]) -> bool) -> Conditioned {
        let mut terms: BTreeMap<Vec<u32>, Complex64> = self
            .terms
            .iter()
            .filter(|(k, _)| keep(k))
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let probability: f64 = terms.values().map(|a| a.norm_sqr()).sum();
        if probability > 0.0 {
            let s = probability.sqrt();
            terms.values_mut().for_each(|a| *a /= s);
        }
        Conditioned {
            state: FockState {
                modes: self.modes.clone(),
                photons: self.photons,
                terms,
            },
            probability,
        }
    }

    /// Ideal polarizer on one spatial mode: terms with any photon in the blocked
    /// polarization are discarded. The result is sub-normalized.
    pub fn polarizer(&self, spatial: &str, pass: Polarization) -> Result<FockState> {
        let idx = self.modes.spatial_indices(spatial);
        if idx.is_empty() {
            return Err(Error::UnknownMode(spatial.to_string()));
        }
        let blocked = idx.get(&pass.other()).copied();
        let mut out = self.clone();
        if let Some(b) = blocked {
            out.terms.retain(|k, _| k[b] == 0);
        }
        Ok(out)
    }

    /// Re-expresses the state over a larger mode set; new modes start empty.
    pub fn embed(&self, modes: &ModeSet) -> Result<FockState> {
        let map = self
            .modes
            .iter()
            .map(|m| modes.position(m).ok_or_else(|| Error::UnknownMode(m.label())))
            .collect::<Result<Vec<_>>>()?;
        let terms = self
            .terms
            .iter()
            .map(|(occ, a)| {
                let mut wide = vec![0; modes.len()];
                for (k, &n) in occ.iter().enumerate() {
                    wide[map[k]] = n;
                }
                (wide, *a)
            })
            .collect();
        Ok(FockState {
            modes: modes.clone(),
            photons: self.photons,
            terms,
        })
    }

    /// Renames a spatial mode, keeping amplitudes and mode order.
    pub fn relabel_spatial(&self, from: &str, to: &str) -> Result<FockState> {
        let modes = self
            .modes
            .iter()
            .map(|m| {
                if m.spatial == from {
                    Mode::new(to, m.pol)
                } else {
                    m.clone()
                }
            })
            .collect();
        Ok(FockState {
            modes: ModeSet::new(modes)?,
            photons: self.photons,
            terms: self.terms.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = FockStateDoc {
            modes: self.modes.labels(),
            terms: self
                .terms
                .iter()
                .map(|(k, a)| FockTermDoc {
                    occupations: k.iter().map(|&n| n as i64).collect(),
                    re: a.re,
                    im: a.im,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: FockStateDoc = serde_json::from_str(text)?;
        let modes = ModeSet::parse(&doc.modes)?;
        let mut terms = Vec::with_capacity(doc.terms.len());
        for t in doc.terms {
            let mut occ = Vec::with_capacity(t.occupations.len());
            for (i, n) in t.occupations.into_iter().enumerate() {
                if n < 0 {
                    let mode = modes.get(i).map(Mode::label).unwrap_or_default();
                    return Err(Error::NegativeCount { mode, count: n });
                }
                occ.push(n as u32);
            }
            terms.push((occ, Complex64::new(t.re, t.im)));
        }
        Self::from_terms(&modes, terms)
    }
}

impl fmt::Display for FockState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        let labels = self.modes.labels();
        for (i, (occ, a)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            write!(f, "({:.6}{:+.6}i)|", a.re, a.im)?;
            let parts: Vec<String> = occ
                .iter()
                .zip(&labels)
                .filter(|(n, _)| **n > 0)
                .map(|(n, l)| format!("{n}_{l}"))
                .collect();
            write!(f, "{}⟩", parts.join(","))?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct FockTermDoc {
    occupations: Vec<i64>,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct FockStateDoc {
    modes: Vec<String>,
    terms: Vec<FockTermDoc>,
}

/// Passive linear-optical network over a mode set.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearNetwork {
    modes: ModeSet,
    matrix: DMatrix<Complex64>,
}

impl LinearNetwork {
    pub fn identity(modes: &ModeSet) -> Self {
        Self {
            modes: modes.clone(),
            matrix: DMatrix::identity(modes.len(), modes.len()),
        }
    }

    pub fn from_matrix(modes: &ModeSet, matrix: DMatrix<Complex64>) -> Result<Self> {
        if matrix.nrows() != modes.len() || matrix.ncols() != modes.len() {
            return Err(Error::DimensionMismatch {
                expected: modes.len(),
                found: matrix.nrows(),
            });
        }
        let net = Self {
            modes: modes.clone(),
            matrix,
        };
        let defect = net.unitarity_defect();
        if defect >= UNITARITY_TOLERANCE {
            return Err(Error::OutOfRange {
                name: "unitarity defect",
                value: defect,
                lo: 0.0,
                hi: UNITARITY_TOLERANCE,
            });
        }
        Ok(net)
    }

    /// Beamsplitter of reflectivity `r` between two single modes.
    ///
    /// `a†_i → √r a†_i + √(1−r) a†_j` and `a†_j → −√(1−r) a†_i + √r a†_j`:
    /// reflection keeps the label, transmission swaps it, and the sign sits on
    /// the transmission of the second port. With the signal in `i` and the
    /// ancilla in `j`, the amplitude for one photon in `j` and `n` in `i` is
    /// `r^{(n−1)/2}(r − n(1−r))`.
    pub fn mode_beamsplitter(modes: &ModeSet, i: &str, j: &str, r: f64) -> Result<Self> {
        check_unit_interval("reflectivity", r)?;
        let (ii, jj) = (modes.index_of(i)?, modes.index_of(j)?);
        if ii == jj {
            return Err(Error::SameMode(i.to_string()));
        }
        let mut net = Self::identity(modes);
        net.set_beamsplitter_block(ii, jj, r);
        Ok(net)
    }

    /// Polarization-independent beamsplitter between two spatial modes; the same
    /// 2×2 block acts on each polarization both modes carry.
    pub fn beamsplitter(modes: &ModeSet, i: &str, j: &str, r: f64) -> Result<Self> {
        check_unit_interval("reflectivity", r)?;
        if i == j {
            return Err(Error::SameMode(i.to_string()));
        }
        let (pi, pj) = (modes.spatial_indices(i), modes.spatial_indices(j));
        if pi.is_empty() {
            return Err(Error::UnknownMode(i.to_string()));
        }
        if pj.is_empty() {
            return Err(Error::UnknownMode(j.to_string()));
        }
        if pi.keys().ne(pj.keys()) {
            return Err(Error::PolarizationMismatch(i.to_string(), j.to_string()));
        }
        let mut net = Self::identity(modes);
        for (pol, &ii) in &pi {
            net.set_beamsplitter_block(ii, pj[pol], r);
        }
        Ok(net)
    }

    fn set_beamsplitter_block(&mut self, i: usize, j: usize, r: f64) {
        let (rr, tt) = (r.sqrt(), (1.0 - r).sqrt());
        let m = &mut self.matrix;
        m[(i, i)] = Complex64::new(rr, 0.0);
        m[(j, i)] = Complex64::new(tt, 0.0);
        m[(i, j)] = Complex64::new(-tt, 0.0);
        m[(j, j)] = Complex64::new(rr, 0.0);
    }

    /// Half-wave plate that turns one horizontal photon into `cos θ|H⟩ + sin θ|V⟩`.
    ///
    /// On the (H, V) pair: `[[cos θ, sin θ], [sin θ, −cos θ]]`, i.e. a physical
    /// HWP with its fast axis at θ/2.
    pub fn half_waveplate(modes: &ModeSet, spatial: &str, theta: f64) -> Result<Self> {
        let p = modes.spatial_indices(spatial);
        let (h, v) = match (p.get(&Polarization::H), p.get(&Polarization::V)) {
            (Some(&h), Some(&v)) => (h, v),
            _ if p.is_empty() => return Err(Error::UnknownMode(spatial.to_string())),
            _ => return Err(Error::MissingPolarizationPartner(spatial.to_string())),
        };
        let (c, s) = (theta.cos(), theta.sin());
        let mut net = Self::identity(modes);
        let m = &mut net.matrix;
        m[(h, h)] = Complex64::new(c, 0.0);
        m[(v, h)] = Complex64::new(s, 0.0);
        m[(h, v)] = Complex64::new(s, 0.0);
        m[(v, v)] = Complex64::new(-c, 0.0);
        Ok(net)
    }

    /// Phase shift `e^{iφ}` on a single mode.
    pub fn phase(modes: &ModeSet, label: &str, phi: f64) -> Result<Self> {
        let k = modes.index_of(label)?;
        let mut net = Self::identity(modes);
        net.matrix[(k, k)] = Complex64::from_polar(1.0, phi);
        Ok(net)
    }

    pub fn modes(&self) -> &ModeSet {
        &self.modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    /// Network that applies `self` first and then `next`.
    pub fn then(&self, next: &LinearNetwork) -> Result<LinearNetwork> {
        next.compose(self)
    }

    /// Matrix product `self · inner`: `inner` acts first.
    pub fn compose(&self, inner: &LinearNetwork) -> Result<LinearNetwork> {
        if self.modes != inner.modes {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                found: inner.modes.len(),
            });
        }
        Ok(LinearNetwork {
            modes: self.modes.clone(),
            matrix: &self.matrix * &inner.matrix,
        })
    }

    /// `max |(U·U† − I)_{jk}|`.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.matrix.nrows();
        let prod = &self.matrix * self.matrix.adjoint();
        let id: DMatrix<Complex64> = DMatrix::identity(n, n);
        (prod - id).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn apply(&self, state: &FockState) -> Result<FockState> {
        if state.modes != self.modes {
            return Err(Error::DimensionMismatch {
                expected: self.modes.len(),
                found: state.modes.len(),
            });
        }
        let m = self.modes.len();
        // columns as sparse lists of (output mode, coefficient)
        let columns: Vec<Vec<(usize, Complex64)>> = (0..m)
            .map(|k| {
                (0..m)
                    .filter_map(|j| {
                        let u = self.matrix[(j, k)];
                        (u.norm() > 0.0).then_some((j, u))
                    })
                    .collect()
            })
            .collect();

        let mut out: HashMap<Vec<u32>, Complex64> = HashMap::new();
        for (occ, &amp) in &state.terms {
            // |n⟩ = Π_k (a†_k)^{n_k} / √(n_k!) |0⟩, expanded as a polynomial in output operators
            let norm: f64 = occ.iter().map(|&n| sqrt_factorial(n)).product();
            let mut poly: HashMap<Vec<u32>, Complex64> = HashMap::new();
            poly.insert(vec![0; m], amp / norm);
            for (k, &n) in occ.iter().enumerate() {
                for _ in 0..n {
                    let mut next: HashMap<Vec<u32>, Complex64> = HashMap::with_capacity(poly.len() * columns[k].len());
                    for (mono, c) in &poly {
                        for &(j, u) in &columns[k] {
                            let mut key = mono.clone();
                            key[j] += 1;
                            *next.entry(key).or_insert(C0) += c * u;
                        }
                    }
                    poly = next;
                }
            }
            for (mono, c) in poly {
                let f: f64 = mono.iter().map(|&n| sqrt_factorial(n)).product();
                *out.entry(mono).or_insert(C0) += c * f;
            }
        }
        let terms = out.into_iter().filter(|(_, a)| a.norm() >= PRUNE_TOLERANCE).collect();
        Ok(FockState {
            modes: self.modes.clone(),
            photons: state.photons,
            terms,
        })
    }
}

fn sqrt_factorial(n: u32) -> f64 {
    (1..=n).map(|k| k as f64).product::<f64>().sqrt()
}

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::OutOfRange {
            name,
            value,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(())
}
