use std::path::Path;

use fockfilter::experiment::{
    build_and_run, calibrate_count_model, chi_square, generate_counts, CircuitConfig, CountModel, FilterRun,
};
use fockfilter::filter::{amplitude, ideal_visibility, prob_distinguishable};
use fockfilter::interference::{
    corrected_visibility, fit_dip_order, simulate_scan, DipFit, DipModel, ScanData, MIN_SCAN_POINTS,
};
use fockfilter::metrics::{concurrence, fidelity, population_ratio, StateMetrics};
use fockfilter::qubits::{kets, AnalyzerSetting, DensityMatrix};
use fockfilter::tomography::{bootstrap_metrics, mle_reconstruct_with, BootstrapSummary, MleOptions, TomographyCounts};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::output::{read_file, write_csv, write_json, CliError, CliResult, RunManifest};
use crate::{Cli, Command, DipScanArgs, FilterCurvesArgs, Format, MetricsArgs, SimulateArgs, TomographyArgs};

pub fn run(cli: &Cli) -> CliResult<()> {
    let out = cli.output.as_deref();
    match &cli.command {
        Command::FilterCurves(a) => filter_curves(a, cli.seed, out, cli.format.unwrap_or(Format::Csv)),
        Command::DipScan(a) => dip_scan(a, cli.seed, out, cli.format.unwrap_or(Format::Csv)),
        Command::Simulate(a) => json_only(cli.format, "simulate").and_then(|_| simulate(a, cli.seed, out)),
        Command::Tomography(a) => json_only(cli.format, "tomography").and_then(|_| tomography(a, cli.seed, out)),
        Command::Metrics(a) => json_only(cli.format, "metrics").and_then(|_| metrics(a, cli.seed, out)),
    }
}

fn json_only(format: Option<Format>, name: &str) -> CliResult<()> {
    match format {
        Some(Format::Csv) => Err(CliError::Validation(format!("{name} writes JSON only"))),
        _ => Ok(()),
    }
}

#[derive(Serialize)]
struct CurveRow {
    n: u32,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "A")]
    a: f64,
    #[serde(rename = "P")]
    p: f64,
    #[serde(rename = "Q")]
    q: f64,
    /// Undefined where `Q` vanishes.
    visibility: Option<f64>,
}

fn filter_curves(args: &FilterCurvesArgs, seed: u64, out: Option<&Path>, format: Format) -> CliResult<()> {
    if args.points < 2 || args.n.is_empty() {
        return Err(CliError::Validation(
            "need at least two grid points and one photon number".into(),
        ));
    }
    if args.n.contains(&0) {
        return Err(CliError::Validation("photon numbers start at 1".into()));
    }
    let mut rows = Vec::with_capacity(args.n.len() * args.points);
    for &n in &args.n {
        for i in 0..args.points {
            let r = i as f64 / (args.points - 1) as f64;
            let a = amplitude(n, r)?;
            rows.push(CurveRow {
                n,
                r,
                a,
                p: a * a,
                q: prob_distinguishable(n, r)?,
                visibility: ideal_visibility(n, r).ok(),
            });
        }
    }
    let manifest = RunManifest::new(
        "filter-curves",
        seed,
        out,
        json!({ "n": args.n, "points": args.points }),
    );
    match format {
        Format::Csv => write_csv(out, &rows, &json!({ "manifest": manifest })),
        Format::Json => write_json(out, &json!({ "manifest": manifest, "rows": rows })),
    }
}

#[derive(Serialize)]
struct CurveReport {
    order: u32,
    injected: DipModel,
    /// Flat rate added on top of the dip, Hz.
    background: f64,
    fit: Option<DipFit>,
    raw_visibility: Option<f64>,
    corrected_visibility: Option<f64>,
    error: Option<String>,
}

#[derive(Serialize)]
struct ScanRow {
    position_mm: f64,
    two_fold: u64,
    four_fold: u64,
    integration_s: f64,
}

fn report(order: u32, injected: DipModel, background: f64, data: &ScanData) -> (CurveReport, bool) {
    let mut rep = CurveReport {
        order,
        injected,
        background,
        fit: None,
        raw_visibility: None,
        corrected_visibility: None,
        error: None,
    };
    match fit_dip_order(data, order) {
        Ok(fit) => {
            let max = fit.model.baseline;
            let min = max * (1.0 - fit.model.visibility);
            rep.raw_visibility = Some(fit.model.visibility);
            rep.corrected_visibility = corrected_visibility(max, min, background).ok();
            rep.fit = Some(fit);
            (rep, true)
        }
        Err(e) => {
            rep.error = Some(e.to_string());
            (rep, false)
        }
    }
}

fn dip_scan(args: &DipScanArgs, seed: u64, out: Option<&Path>, format: Format) -> CliResult<()> {
    if args.points < MIN_SCAN_POINTS {
        return Err(CliError::Validation(format!(
            "need at least {MIN_SCAN_POINTS} positions"
        )));
    }
    if !(args.span_mm > 0.0) || !(args.integration_s >= 0.0) {
        return Err(CliError::Validation(
            "scan span must be positive and integration non-negative".into(),
        ));
    }
    let center = args.span_mm / 2.0;
    let positions: Vec<f64> = (0..args.points)
        .map(|i| args.span_mm * i as f64 / (args.points - 1) as f64)
        .collect();
    let signal = args.two_fold_rate - args.two_fold_background;
    let two = DipModel::from_overlap(
        1,
        args.r,
        args.gamma,
        signal,
        args.two_fold_slope,
        center,
        args.width_mm,
    )?;
    let four = DipModel::from_overlap(
        2,
        args.r,
        args.gamma,
        args.four_fold_rate,
        args.four_fold_slope,
        center,
        args.width_mm,
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scan2 = simulate_scan(&two, &positions, args.integration_s, args.two_fold_background, &mut rng)?;
    let scan4 = simulate_scan(&four, &positions, args.integration_s, 0.0, &mut rng)?;
    let (rep2, ok2) = report(1, two, args.two_fold_background, &scan2);
    let (rep4, ok4) = report(2, four, 0.0, &scan4);

    let manifest = RunManifest::new(
        "dip-scan",
        seed,
        out,
        json!({
            "points": args.points, "span_mm": args.span_mm, "width_mm": args.width_mm,
            "integration_s": args.integration_s, "r": args.r, "gamma": args.gamma,
            "two_fold_rate": args.two_fold_rate, "two_fold_background": args.two_fold_background,
            "two_fold_slope": args.two_fold_slope, "four_fold_rate": args.four_fold_rate,
            "four_fold_slope": args.four_fold_slope,
        }),
    );
    let fits = json!({ "manifest": manifest, "two_fold": rep2, "four_fold": rep4 });
    match format {
        Format::Csv => {
            let rows: Vec<ScanRow> = scan2
                .points()
                .iter()
                .zip(scan4.points())
                .map(|(p2, p4)| ScanRow {
                    position_mm: p2.position_mm,
                    two_fold: p2.counts,
                    four_fold: p4.counts,
                    integration_s: p2.integration_s,
                })
                .collect();
            write_csv(out, &rows, &fits)?;
        }
        Format::Json => {
            let mut doc = fits;
            doc["two_fold"]["scan"] = serde_json::to_value(scan2.points())?;
            doc["four_fold"]["scan"] = serde_json::to_value(scan4.points())?;
            write_json(out, &doc)?;
        }
    }
    if ok2 && ok4 {
        Ok(())
    } else {
        Err(CliError::Numerical(
            "dip fit failed; see the per-curve error in the output".into(),
        ))
    }
}

fn load_counts(source: &str) -> CliResult<TomographyCounts> {
    match TomographyCounts::fixture(source) {
        Some(c) => Ok(c),
        None => Ok(TomographyCounts::from_json(&read_file(Path::new(source))?)?),
    }
}

#[derive(Serialize, Deserialize)]
struct RhoDoc {
    rho_re: [[f64; 4]; 4],
    rho_im: [[f64; 4]; 4],
}

impl RhoDoc {
    fn of(rho: &DensityMatrix) -> Self {
        let (rho_re, rho_im) = rho.to_parts();
        Self { rho_re, rho_im }
    }
}

fn branches_json(run: &FilterRun) -> CliResult<Value> {
    run.branches
        .iter()
        .map(|b| {
            let state: Value = serde_json::from_str(&b.state.to_json()?)?;
            Ok(json!({ "probability": b.probability, "state": state }))
        })
        .collect::<CliResult<Vec<_>>>()
        .map(Value::Array)
}

fn simulate(args: &SimulateArgs, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let mut config = CircuitConfig::new(args.theta);
    config.gamma = args.gamma;
    config.r_filter = args.r;
    config.rate_scale = args.rate;
    config.background_rate = args.background;
    config.handedness = args.handedness.into();
    config.validate()?;
    if !(args.exposure > 0.0) {
        return Err(CliError::Validation("exposure must be positive".into()));
    }
    let run = build_and_run(&config)?;
    let (rho, split) = run.two_qubit_state()?;

    let (model, calibration) = match &args.calibrate_to {
        Some(source) => {
            let reference = load_counts(source)?;
            let m = calibrate_count_model(&rho, &reference, config.handedness)?;
            let (chi2, bins) = chi_square(&rho, &reference, &m);
            let cal = json!({ "source": source, "chi_square": chi2, "bins": bins });
            (
                CountModel {
                    exposure: args.exposure,
                    ..m
                },
                Some(cal),
            )
        }
        None => (CountModel::from_config(&config, args.exposure), None),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let counts = generate_counts(&rho, &AnalyzerSetting::canonical(), &model, "simulated", &mut rng)?;

    let manifest = RunManifest::new(
        "simulate",
        seed,
        out,
        json!({ "config": config, "exposure": args.exposure, "count_model": model, "calibration": calibration }),
    );
    let state = json!({
        "manifest": manifest,
        "herald_probability": run.herald_probability,
        "trigger_probability": run.trigger_probability,
        "split_probability": split,
        "branches": branches_json(&run)?,
        "rho_re": RhoDoc::of(&rho).rho_re,
        "rho_im": RhoDoc::of(&rho).rho_im,
        "metrics": StateMetrics::of(&rho, &kets::phi_minus()),
    });
    // counts fields first so the file reads back as a counts file
    let mut doc = serde_json::to_value(&counts)?;
    doc["manifest"] = serde_json::to_value(&manifest)?;
    doc["state"] = state.clone();
    if let Some(path) = &args.state {
        write_json(Some(path), &state)?;
    }
    write_json(out, &doc)
}

/// A point estimate with its bootstrap spread, when one was run.
#[derive(Serialize)]
struct Estimate {
    value: f64,
    std: Option<f64>,
}

fn tomography(args: &TomographyArgs, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let (data, input) = match (&args.fixture, &args.counts) {
        (Some(name), _) => (load_counts(name)?, name.clone()),
        (None, Some(path)) => (
            TomographyCounts::from_json(&read_file(path)?)?,
            path.display().to_string(),
        ),
        (None, None) => return Err(CliError::Validation("pass --fixture or --counts".into())),
    };
    let opts = MleOptions {
        handedness: args.handedness.into(),
        intensity: args.intensity.into(),
        ..MleOptions::default()
    };
    let fit = mle_reconstruct_with(&data, &opts)?;
    let rho = &fit.rho;

    // both runs share the seed, so their replicas (and tangle, entropy) coincide
    let (boot_dd, boot_phi): (Option<BootstrapSummary>, Option<BootstrapSummary>) = if args.trials == 0 {
        (None, None)
    } else {
        (
            Some(bootstrap_metrics(&data, &kets::dd(), args.trials, seed, &opts)?),
            Some(bootstrap_metrics(&data, &kets::phi_minus(), args.trials, seed, &opts)?),
        )
    };
    let est = |value: f64, std: Option<f64>| Estimate { value, std };
    let m = StateMetrics::of(rho, &kets::dd());
    let mut manifest = RunManifest::new(
        "tomography",
        seed,
        out,
        json!({ "trials": args.trials, "handedness": opts.handedness, "intensity": opts.intensity }),
    );
    manifest.input = Some(input);
    let doc = json!({
        "manifest": manifest,
        "label": data.label,
        "rho_re": RhoDoc::of(rho).rho_re,
        "rho_im": RhoDoc::of(rho).rho_im,
        "objective": fit.objective,
        "iterations": fit.iterations,
        "metrics": {
            "fidelity_dd": est(m.fidelity, boot_dd.as_ref().map(|b| b.fidelity.std)),
            "fidelity_phi_minus": est(
                fidelity(rho, &kets::phi_minus()),
                boot_phi.as_ref().map(|b| b.fidelity.std),
            ),
            "tangle": est(m.tangle, boot_dd.as_ref().map(|b| b.tangle.std)),
            "linear_entropy": est(m.linear_entropy, boot_dd.as_ref().map(|b| b.linear_entropy.std)),
            "purity": m.purity,
            "population_ratio": population_ratio(&data).ok(),
        },
        "bootstrap": boot_dd.as_ref().map(|b| json!({ "trials": b.trials, "skipped": b.skipped })),
    });
    write_json(out, &doc)
}

fn metrics(args: &MetricsArgs, seed: u64, out: Option<&Path>) -> CliResult<()> {
    let doc: RhoDoc = serde_json::from_str(&read_file(&args.rho)?)
        .map_err(|e| CliError::Validation(format!("{}: {e}", args.rho.display())))?;
    let rho = DensityMatrix::new(*DensityMatrix::from_parts(&doc.rho_re, &doc.rho_im).matrix())?;
    let base = StateMetrics::of(&rho, &kets::dd());
    let mut manifest = RunManifest::new("metrics", seed, out, json!({}));
    manifest.input = Some(args.rho.display().to_string());
    write_json(
        out,
        &json!({
            "manifest": manifest,
            "tangle": base.tangle,
            "concurrence": concurrence(&rho),
            "linear_entropy": base.linear_entropy,
            "purity": base.purity,
            "fidelity": {
                "dd": base.fidelity,
                "phi_minus": fidelity(&rho, &kets::phi_minus()),
                "phi_plus": fidelity(&rho, &kets::phi_plus()),
            },
        }),
    )
}
