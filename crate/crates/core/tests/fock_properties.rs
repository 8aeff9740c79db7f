use fockfilter::filter::{amplitude, conditional_coefficient, prob_distinguishable};
use fockfilter::fock::{FockState, LinearNetwork, ModeSet};
use num_complex::Complex64;
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum Op {
    Splitter(f64),
    Waveplate(bool, f64),
    Phase(usize, f64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0.0..=1.0f64).prop_map(Op::Splitter),
        (any::<bool>(), -3.2..3.2f64).prop_map(|(a, t)| Op::Waveplate(a, t)),
        (0..4usize, -3.2..3.2f64).prop_map(|(k, p)| Op::Phase(k, p)),
    ]
}

fn modes() -> ModeSet {
    ModeSet::polarized(&["a", "b"]).unwrap()
}

fn network(ops: &[Op]) -> LinearNetwork {
    let m = modes();
    let labels = m.labels();
    ops.iter().fold(LinearNetwork::identity(&m), |net, op| {
        let step = match op {
            Op::Splitter(r) => LinearNetwork::beamsplitter(&m, "a", "b", *r),
            Op::Waveplate(on_a, t) => LinearNetwork::half_waveplate(&m, if *on_a { "a" } else { "b" }, *t),
            Op::Phase(k, p) => LinearNetwork::phase(&m, &labels[*k], *p),
        }
        .unwrap();
        net.then(&step).unwrap()
    })
}

/// Two occupation patterns with the same photon number, in superposition.
fn input() -> impl Strategy<Value = FockState> {
    (1u32..=4)
        .prop_flat_map(|n| {
            let occ = proptest::collection::vec(0u32..=n, 3).prop_map(move |v| {
                let mut out = vec![0; 4];
                let mut left = n;
                for (k, x) in v.into_iter().enumerate() {
                    out[k] = x.min(left);
                    left -= out[k];
                }
                out[3] = left;
                out
            });
            (occ.clone(), occ, -3.2..3.2f64)
        })
        .prop_map(|(o1, o2, phi)| {
            let terms = if o1 == o2 {
                vec![(o1, Complex64::new(1.0, 0.0))]
            } else {
                vec![(o1, Complex64::new(0.6, 0.0)), (o2, Complex64::from_polar(0.8, phi))]
            };
            FockState::from_terms(&modes(), terms).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn composed_networks_stay_unitary(ops in proptest::collection::vec(op(), 0..12)) {
        prop_assert!(network(&ops).unitarity_defect() < 1e-12);
    }

    #[test]
    fn propagation_conserves_norm_and_photons(ops in proptest::collection::vec(op(), 0..8), psi in input()) {
        let out = network(&ops).apply(&psi).unwrap();
        prop_assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        prop_assert_eq!(out.photons(), psi.photons());
        for (occ, _) in out.terms() {
            prop_assert_eq!(occ.iter().sum::<u32>(), psi.photons());
        }
    }

    #[test]
    fn composition_matches_sequential_application(
        first in proptest::collection::vec(op(), 0..6),
        second in proptest::collection::vec(op(), 0..6),
        psi in input(),
    ) {
        let n1 = network(&first);
        let n2 = network(&second);
        let stepwise = n2.apply(&n1.apply(&psi).unwrap()).unwrap();
        let joined = n1.then(&n2).unwrap().apply(&psi).unwrap();
        prop_assert!((stepwise.inner(&joined) - Complex64::new(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn json_round_trip(psi in input()) {
        let back = FockState::from_json(&psi.to_json().unwrap()).unwrap();
        prop_assert!((back.inner(&psi) - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn amplitude_matches_fock_oracle_on_grid() {
    let m = ModeSet::parse(&["aH", "bH"]).unwrap();
    for n in 0..=3 {
        for i in 0..20 {
            let r = (i as f64 + 0.5) / 20.0;
            let psi = FockState::from_occupations(&m, &[("aH", n), ("bH", 1)]).unwrap();
            let out = LinearNetwork::mode_beamsplitter(&m, "aH", "bH", r)
                .unwrap()
                .apply(&psi)
                .unwrap();
            let z = out.amplitude_of(&[("aH", n), ("bH", 1)]).unwrap();
            assert!(
                (z - Complex64::new(amplitude(n, r).unwrap(), 0.0)).norm() < 1e-10,
                "n={n} r={r}"
            );
        }
    }
}

#[test]
fn conditional_coefficient_matches_fock_oracle() {
    let m = ModeSet::polarized(&["a", "b"]).unwrap();
    for n_h in 0..=2 {
        for n_v in 0..=2 {
            for r in [0.2, 0.5, 0.75] {
                let psi = FockState::from_occupations(&m, &[("aH", n_h), ("aV", n_v), ("bH", 1)]).unwrap();
                let out = LinearNetwork::beamsplitter(&m, "a", "b", r)
                    .unwrap()
                    .apply(&psi)
                    .unwrap();
                let z = out.amplitude_of(&[("aH", n_h), ("aV", n_v), ("bH", 1)]).unwrap();
                let want = conditional_coefficient(n_h, n_v, r).unwrap();
                assert!((z - Complex64::new(want, 0.0)).norm() < 1e-12, "{n_h} {n_v} {r}");
            }
        }
    }
}

#[test]
fn distinguishable_probability_matches_replica_oracle() {
    // the ancilla travels in a separate temporal mode that never interferes
    let m = ModeSet::parse(&["aH", "bH", "a~H", "b~H"]).unwrap();
    for n in 1..=3 {
        for r in [0.1, 0.5, 0.9] {
            let psi = FockState::from_occupations(&m, &[("aH", n), ("b~H", 1)]).unwrap();
            let net = LinearNetwork::mode_beamsplitter(&m, "aH", "bH", r)
                .unwrap()
                .then(&LinearNetwork::mode_beamsplitter(&m, "a~H", "b~H", r).unwrap())
                .unwrap();
            let out = net.apply(&psi).unwrap();
            let p: f64 = out
                .terms()
                .filter(|(o, _)| o[0] + o[2] == n && o[1] + o[3] == 1)
                .map(|(_, a)| a.norm_sqr())
                .sum();
            assert!((p - prob_distinguishable(n, r).unwrap()).abs() < 1e-12, "n={n} r={r}");
        }
    }
}
