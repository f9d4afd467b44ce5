use icann::datasets::{denormalize, ingest_csv, normalize, write_experiment, Experiment, ExperimentKind, Sample};
use icann::drivers::{incompressible_uniaxial_driver, uniaxial_test_driver};
use icann::energy_net::EnergyParams;
use icann::material::{Branch, Integrator, MaterialModel};
use icann::potential_net::PotentialParams;
use icann::tensor3::{SymTensor3, Tensor3};
use proptest::prelude::*;

fn experiment(rows: &[([f64; 4], [f64; 6])]) -> Experiment {
    let samples = rows
        .iter()
        .enumerate()
        .map(|(k, (f, s))| Sample {
            t: 0.1 * k as f64 + f[3] * 1e-3,
            f: Tensor3::from_rows([[1.0 + f[0], f[1], 0.0], [f[2], 1.0 - 0.5 * f[0], 0.0], [0.0, 0.0, 1.0]]),
            s: SymTensor3::from_voigt(*s),
        })
        .collect();
    Experiment::new(samples, ExperimentKind::Multiaxial, "p")
}

fn rows() -> impl Strategy<Value = Vec<([f64; 4], [f64; 6])>> {
    prop::collection::vec(
        (
            prop::array::uniform4(-0.3f64..0.3).prop_map(|mut a| {
                a[3] = a[3].abs();
                a
            }),
            prop::array::uniform6(-1e3f64..1e3),
        ),
        2..20,
    )
    .prop_filter("some stress", |r| r.iter().any(|(_, s)| s.iter().any(|x| x.abs() > 1e-6)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalize_then_denormalize_is_identity(r in rows()) {
        let e = experiment(&r);
        let n = normalize(&e).unwrap();
        prop_assert!(n.max_abs_stress() <= 1.0);
        let back = denormalize(&n);
        for (a, b) in back.samples.iter().zip(&e.samples) {
            for (x, y) in a.s.to_voigt().iter().zip(b.s.to_voigt()) {
                prop_assert!((x - y).abs() <= 1e-15 * y.abs().max(n.s_max));
            }
        }
    }

    #[test]
    fn csv_round_trip_is_bit_identical(r in rows()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let e = normalize(&experiment(&r)).unwrap();
        write_experiment(&e, &path, None).unwrap();
        let back = ingest_csv(&path).unwrap();
        prop_assert_eq!(back.s_max, e.s_max);
        prop_assert_eq!(back.samples, e.samples);
    }

    #[test]
    fn incompressible_neo_hooke_axial_stress(mu in 0.1f64..10.0, lam in 0.6f64..2.5) {
        let model = MaterialModel::new(vec![Branch {
            energy: EnergyParams::neo_hooke(mu, 1.0),
            potential: PotentialParams::<f64>::zeros(),
        }]);
        let s = incompressible_uniaxial_driver(&model, &[(0.0, 1.0), (1.0, lam)], Integrator::Explicit).unwrap();
        let oracle = mu * (1.0 - lam.powi(-3));
        prop_assert!((s[1] - oracle).abs() <= 1e-10 * oracle.abs().max(1.0), "{} vs {}", s[1], oracle);
    }
}

#[test]
fn uniaxial_driver_clears_lateral_stress() {
    let model = MaterialModel::new(vec![Branch {
        energy: EnergyParams::neo_hooke(1.0, 2.0),
        potential: PotentialParams::<f64>::zeros(),
    }]);
    let path: Vec<(f64, f64)> = (0..=10).map(|k| (k as f64, 1.0 + 0.05 * k as f64)).collect();
    let r = uniaxial_test_driver(&model, &path, Integrator::Explicit).unwrap();
    for (k, s) in r.stress.iter().enumerate() {
        let s11 = s.get(0, 0).abs().max(1.0);
        assert!(s.get(1, 1).abs() <= 1e-9 * s11 && s.get(2, 2).abs() <= 1e-9 * s11, "step {k}: {s:?}");
    }
    assert!(r.stress[10].get(0, 0) > r.stress[5].get(0, 0));
}
