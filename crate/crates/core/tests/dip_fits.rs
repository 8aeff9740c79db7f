use fockfilter::interference::{
    coincidence_curve, dip_rate, fit_dip, fit_dip_order, overlap_at, simulate_scan, DipModel, ScanData,
};
use fockfilter::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn positions() -> Vec<f64> {
    (0..64).map(|i| i as f64 / 63.0).collect()
}

#[test]
fn ideal_dips_fit_to_theory() {
    for (order, v_want, rate) in [(1, 1.0, 800.0), (2, 2.0 / 3.0, 50.0)] {
        let truth = DipModel::from_overlap(order, 0.5, 1.0, rate, 0.0, 0.5, 0.08).unwrap();
        assert!((truth.visibility - v_want).abs() < 1e-12);
        let data = simulate_scan(
            &truth,
            &positions(),
            1890.0,
            0.0,
            &mut ChaCha8Rng::seed_from_u64(order as u64),
        )
        .unwrap();
        let fit = fit_dip_order(&data, order).unwrap();
        assert!(
            (fit.model.visibility - v_want).abs() <= 3.0 * fit.errors.visibility + 1e-4,
            "order {order}: {} ± {}",
            fit.model.visibility,
            fit.errors.visibility
        );
    }
}

#[test]
fn dip_depth_follows_overlap_curve() {
    // rate at delay x relative to the far wings equals the coincidence curve
    // at the overlap γ(x), normalized by its distinguishable value
    let w = 0.08;
    for n in 1..=2 {
        let m = DipModel::from_overlap(n, 0.5, 1.0, 1.0, 0.0, 0.0, w).unwrap();
        for x in [0.0, 0.03, 0.08, 0.2] {
            let q0 = coincidence_curve(n, 0.5, 0.0).unwrap();
            let qx = coincidence_curve(n, 0.5, overlap_at(x, w)).unwrap();
            assert!((dip_rate(x, &m) - qx / q0).abs() < 1e-12);
        }
    }
}

#[test]
fn dark_scan_fails_to_fit() {
    let truth = DipModel::from_overlap(1, 0.5, 1.0, 800.0, 0.0, 0.5, 0.08).unwrap();
    let data = simulate_scan(&truth, &positions(), 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(data.points().iter().all(|p| p.counts == 0));
    assert!(matches!(fit_dip(&data), Err(Error::EmptyScan)));
}

#[test]
fn csv_files_round_trip() {
    let truth = DipModel::from_overlap(2, 0.5, 0.9, 5.0, 1.0, 0.4, 0.1).unwrap();
    let data = simulate_scan(&truth, &positions(), 100.0, 0.2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(ScanData::from_csv(&data.to_csv().unwrap()).unwrap(), data);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn noiseless_fits_recover_parameters(
        v in 0.2..0.99f64,
        x0 in 0.3..0.7f64,
        w in 0.04..0.15f64,
        slope in -100.0..100.0f64,
    ) {
        let truth = DipModel { baseline: 500.0, slope, center: x0, width: w, visibility: v, order: 1 };
        let t = 1e8;
        let points = positions()
            .into_iter()
            .map(|x| fockfilter::interference::ScanPoint {
                position_mm: x,
                counts: (dip_rate(x, &truth) * t).round() as u64,
                integration_s: t,
            })
            .collect();
        let fit = fit_dip(&ScanData::new(points).unwrap()).unwrap();
        prop_assert!((fit.model.visibility - v).abs() < 1e-5);
        prop_assert!((fit.model.center - x0).abs() < 1e-5);
        prop_assert!((fit.model.width - w).abs() < 1e-5);
    }

    #[test]
    fn dip_never_exceeds_envelope(x in -1.0..2.0f64, v in 0.0..=1.0f64) {
        let m = DipModel { baseline: 10.0, slope: 0.0, center: 0.5, width: 0.1, visibility: v, order: 1 };
        let r = dip_rate(x, &m);
        prop_assert!(r <= 10.0 + 1e-12 && r >= 10.0 * (1.0 - v) - 1e-12);
    }
}
