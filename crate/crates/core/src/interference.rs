//! Delay-scan interference dips.
//!
//! Coincidence rates against delay follow a Gaussian dip on a linear envelope,
//! `(b + s(x−x₀)) · (1 − V exp(−(x−x₀)²/(2w²)))`. The dip comes from the
//! temporal overlap `γ(Δx) = γ₀ exp(−Δx²/(4w²))`: interfering and
//! non-interfering populations mix linearly in `γ²`.

use nalgebra::{SMatrix, SVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{amplitude, ideal_visibility, prob_distinguishable};
use crate::fock::check_unit_interval;
use crate::tomography::poisson;

pub const MIN_SCAN_POINTS: usize = 8;
pub const MAX_FIT_ITERATIONS: usize = 500;
pub const FIT_REL_TOLERANCE: f64 = 1e-10;
/// Slack allowed for the dip minimum to sit below the background level.
pub const BACKGROUND_SLACK: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipModel {
    /// Envelope rate at the dip centre.
    pub baseline: f64,
    /// Envelope slope, rate per mm.
    pub slope: f64,
    /// Dip centre, mm.
    pub center: f64,
    /// Gaussian standard width of the rate dip, mm.
    pub width: f64,
    pub visibility: f64,
    /// Photon number of the interfering input (1: two-fold, 2: four-fold).
    pub order: u32,
}

impl DipModel {
    /// Dip produced by an `n`-photon input whose overlap with the ancilla peaks at `gamma0`.
    pub fn from_overlap(
        order: u32,
        reflectivity: f64,
        gamma0: f64,
        baseline: f64,
        slope: f64,
        center: f64,
        width: f64,
    ) -> Result<Self> {
        check_unit_interval("gamma", gamma0)?;
        let model = Self {
            baseline,
            slope,
            center,
            width,
            visibility: gamma0 * gamma0 * ideal_visibility(order, reflectivity)?,
            order,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) {
            return Err(Error::OutOfRange {
                name: "dip width",
                value: self.width,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        if !(self.baseline > 0.0) {
            return Err(Error::OutOfRange {
                name: "baseline",
                value: self.baseline,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        check_unit_interval("visibility", self.visibility)
    }

    fn params(&self) -> SVector<f64, 5> {
        SVector::from([self.baseline, self.slope, self.center, self.width, self.visibility])
    }

    fn with_params(&self, p: &SVector<f64, 5>) -> Self {
        Self {
            baseline: p[0],
            slope: p[1],
            center: p[2],
            width: p[3],
            visibility: p[4],
            order: self.order,
        }
    }
}

pub fn dip_rate(x: f64, model: &DipModel) -> f64 {
    let u = x - model.center;
    let envelope = model.baseline + model.slope * u;
    envelope * (1.0 - model.visibility * (-u * u / (2.0 * model.width * model.width)).exp())
}

/// Rate value and its gradient with respect to `(b, s, x₀, w, V)`.
fn dip_rate_gradient(x: f64, m: &DipModel) -> (f64, SVector<f64, 5>) {
    let u = x - m.center;
    let w2 = m.width * m.width;
    let g = (-u * u / (2.0 * w2)).exp();
    let envelope = m.baseline + m.slope * u;
    let dip = 1.0 - m.visibility * g;
    let grad = SVector::from([
        dip,
        u * dip,
        -m.slope * dip - envelope * m.visibility * g * u / w2,
        -envelope * m.visibility * g * u * u / (w2 * m.width),
        -envelope * g,
    ]);
    (envelope * dip, grad)
}

/// Temporal overlap at a delay offset, matching a rate dip of width `width`.
pub fn overlap_at(offset: f64, width: f64) -> f64 {
    (-offset * offset / (4.0 * width * width)).exp()
}

/// Heralding probability under partial distinguishability,
/// `Q(n) − γ² (Q(n) − |A(n)|²)`.
pub fn coincidence_curve(n: u32, reflectivity: f64, gamma: f64) -> Result<f64> {
    check_unit_interval("gamma", gamma)?;
    let q = prob_distinguishable(n, reflectivity)?;
    let p = amplitude(n, reflectivity)?.powi(2);
    Ok(q - gamma * gamma * (q - p))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub position_mm: f64,
    pub counts: u64,
    pub integration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanData {
    points: Vec<ScanPoint>,
}

impl ScanData {
    pub fn new(points: Vec<ScanPoint>) -> Result<Self> {
        let increasing = points.windows(2).all(|w| w[1].position_mm > w[0].position_mm);
        let decreasing = points.windows(2).all(|w| w[1].position_mm < w[0].position_mm);
        if !(increasing || decreasing) {
            return Err(Error::NonMonotonicScan);
        }
        if points.iter().any(|p| !(p.integration_s >= 0.0)) {
            return Err(Error::OutOfRange {
                name: "integration time",
                value: points.iter().map(|p| p.integration_s).fold(f64::NAN, f64::min),
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[ScanPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `position_mm,counts,integration_s` with a header row.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for p in &self.points {
            w.serialize(p).map_err(|e| Error::InvalidCounts(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidCounts(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let points = r
            .deserialize()
            .collect::<std::result::Result<Vec<ScanPoint>, _>>()
            .map_err(|e| Error::InvalidCounts(e.to_string()))?;
        Self::new(points)
    }
}

/// Poisson counts around `dip_rate + background` at each position.
pub fn simulate_scan<R: Rng + ?Sized>(
    model: &DipModel,
    positions: &[f64],
    integration_s: f64,
    background_rate: f64,
    rng: &mut R,
) -> Result<ScanData> {
    let points = positions
        .iter()
        .map(|&x| ScanPoint {
            position_mm: x,
            counts: poisson((dip_rate(x, model) + background_rate).max(0.0) * integration_s, rng),
            integration_s,
        })
        .collect();
    ScanData::new(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipErrors {
    pub baseline: f64,
    pub slope: f64,
    pub center: f64,
    pub width: f64,
    pub visibility: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DipFit {
    pub model: DipModel,
    pub errors: DipErrors,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Fitted parameters satisfy the model invariants.
    pub valid: bool,
}

/// Initial guess from the data alone.
fn initial_guess(data: &ScanData, order: u32) -> DipModel {
    let pts = data.points();
    let n = pts.len();
    let rate = |p: &ScanPoint| {
        if p.integration_s > 0.0 {
            p.counts as f64 / p.integration_s
        } else {
            0.0
        }
    };
    let rates: Vec<f64> = pts.iter().map(rate).collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.position_mm).collect();

    let outer: Vec<usize> = (0..n).filter(|&i| i < n / 4 || i >= n - n / 4).collect();
    let mx = outer.iter().map(|&i| xs[i]).sum::<f64>() / outer.len() as f64;
    let my = outer.iter().map(|&i| rates[i]).sum::<f64>() / outer.len() as f64;
    let sxx: f64 = outer.iter().map(|&i| (xs[i] - mx).powi(2)).sum();
    let sxy: f64 = outer.iter().map(|&i| (xs[i] - mx) * (rates[i] - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    // lightly smoothed minimum
    let smooth: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            rates[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let imin = (0..n).min_by(|&a, &b| smooth[a].total_cmp(&smooth[b])).unwrap_or(0);
    let center = xs[imin];
    let baseline = (my + slope * (center - mx)).max(f64::MIN_POSITIVE);
    let depth = (baseline - smooth[imin]).max(0.0);
    let visibility = (depth / baseline).clamp(0.01, 0.99);

    let level = baseline - depth / 2.0;
    let envelope = |i: usize| level + slope * (xs[i] - center);
    let left = (0..imin).rev().find(|&i| smooth[i] > envelope(i)).map(|i| xs[i]);
    let right = (imin + 1..n).find(|&i| smooth[i] > envelope(i)).map(|i| xs[i]);
    let span = (xs[n - 1] - xs[0]).abs();
    let fwhm = match (left, right) {
        (Some(l), Some(r)) => (r - l).abs(),
        (Some(l), None) => 2.0 * (center - l).abs(),
        (None, Some(r)) => 2.0 * (r - center).abs(),
        (None, None) => span / 4.0,
    };
    let width = (fwhm / 2.355).max(span / (4.0 * n as f64));

    DipModel {
        baseline,
        slope,
        center,
        width,
        visibility,
        order,
    }
}

/// Weighted Levenberg–Marquardt fit of [`dip_rate`] to counts. Each residual is
/// weighted by `1/√max(counts, 1)`; standard errors come from `(JᵀWJ)⁻¹`.
pub fn fit_dip(data: &ScanData) -> Result<DipFit> {
    fit_dip_order(data, 1)
}

pub fn fit_dip_order(data: &ScanData, order: u32) -> Result<DipFit> {
    if data.len() < MIN_SCAN_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_SCAN_POINTS,
            found: data.len(),
        });
    }
    if data.points().iter().all(|p| p.counts == 0 || p.integration_s == 0.0) {
        return Err(Error::EmptyScan);
    }
    let start = initial_guess(data, order);
    let pts = data.points();
    let span = (pts[pts.len() - 1].position_mm - pts[0].position_mm).abs();
    let typical = SVector::from([
        start.baseline,
        start.baseline / span.max(f64::MIN_POSITIVE),
        start.width,
        start.width,
        1.0,
    ]);

    let system = |m: &DipModel| {
        let mut jtj = SMatrix::<f64, 5, 5>::zeros();
        let mut jtr = SVector::<f64, 5>::zeros();
        let mut chi2 = 0.0;
        for p in pts {
            let (f, grad) = dip_rate_gradient(p.position_mm, m);
            let sigma = (p.counts.max(1) as f64).sqrt();
            let r = (p.counts as f64 - p.integration_s * f) / sigma;
            let j = grad * (-p.integration_s / sigma);
            chi2 += r * r;
            jtj += j * j.transpose();
            jtr += j * r;
        }
        (chi2, jtj, jtr)
    };

    let mut model = start;
    let (mut chi2, mut jtj, mut jtr) = system(&model);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_FIT_ITERATIONS {
        iterations += 1;
        let mut a = jtj;
        for k in 0..5 {
            a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(step) = a.lu().solve(&(-jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = model.with_params(&(model.params() + step));
        let (c2, j2, r2) = system(&trial);
        if c2.is_finite() && c2 <= chi2 && trial.width > 0.0 {
            let small = (0..5).all(|k| step[k].abs() <= FIT_REL_TOLERANCE * (trial.params()[k].abs() + typical[k]));
            model = trial;
            chi2 = c2;
            jtj = j2;
            jtr = r2;
            lambda = (lambda / 10.0).max(1e-12);
            if small {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill step exists at machine precision
                converged = true;
                break;
            }
        }
    }

    let cov = jtj.try_inverse().unwrap_or_else(|| SMatrix::from_element(f64::NAN));
    let se = |k: usize| cov[(k, k)].max(0.0).sqrt();
    let fit = DipFit {
        model,
        errors: DipErrors {
            baseline: se(0),
            slope: se(1),
            center: se(2),
            width: se(3),
            visibility: se(4),
        },
        chi_square: chi2,
        degrees_of_freedom: pts.len().saturating_sub(5),
        iterations,
        converged,
        valid: model.is_valid(),
    };
    if converged {
        Ok(fit)
    } else {
        Err(Error::FitNotConverged(Box::new(fit)))
    }
}

/// Visibility after removing a flat background from both extremes,
/// `(max − min) / (max − background)`, clamped to `[0, 1]`.
pub fn corrected_visibility(max_rate: f64, min_rate: f64, background: f64) -> Result<f64> {
    if !(background >= 0.0) || !(max_rate > background) {
        return Err(Error::OutOfRange {
            name: "max rate above background",
            value: max_rate - background,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    if min_rate < background * (1.0 - BACKGROUND_SLACK) {
        return Err(Error::OutOfRange {
            name: "min rate",
            value: min_rate,
            lo: background * (1.0 - BACKGROUND_SLACK),
            hi: max_rate,
        });
    }
    Ok(((max_rate - min_rate) / (max_rate - background)).clamp(0.0, 1.0))
}

/// Maximum rate consistent with a raw visibility `raw`, a corrected visibility
/// `corrected` and a background `background`: `V′B / (V′ − V)`.
pub fn consistent_max_rate(raw: f64, corrected: f64, background: f64) -> f64 {
    corrected * background / (corrected - raw)
}
