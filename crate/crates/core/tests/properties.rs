use std::f64::consts::TAU;

use optoswitch::dataset::{Dataset, DEFAULT_PRECISION};
use optoswitch::model::{DriveConfig, SystemParams};
use optoswitch::oracle::random_point;
use optoswitch::response::{fluctuation_amplitudes, single_probe_transport, transport_coefficients, Channel};
use optoswitch::sweep::{run_sweep, Axis, Observable, SweepParameter, SweepSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn point(seed: u64) -> (SystemParams, DriveConfig, f64) {
    random_point(&mut ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn response_is_linear_in_the_probes(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let (p, d, delta) = point(seed);
        let Ok(a) = fluctuation_amplitudes(&p, &d, delta) else { return Ok(()) };
        let scaled = DriveConfig { probe_left: scale * d.probe_left, probe_right: scale * d.probe_right, ..d };
        let b = fluctuation_amplitudes(&p, &scaled, delta).unwrap();
        let norm = a.as_array().iter().map(|z| z.norm()).fold(0.0, f64::max);
        for (x, y) in a.as_array().iter().zip(b.as_array()) {
            prop_assert!((x * scale - y).norm() <= 1e-12 * scale * norm.max(1e-300));
        }
    }

    #[test]
    fn superposition_of_single_probes(seed in any::<u64>()) {
        let (p, d, delta) = point(seed);
        let Ok(both) = fluctuation_amplitudes(&p, &d, delta) else { return Ok(()) };
        let left = fluctuation_amplitudes(&p, &DriveConfig { probe_right: 0.0, ..d }, delta).unwrap();
        let right = fluctuation_amplitudes(&p, &DriveConfig { probe_left: 0.0, ..d }, delta).unwrap();
        let norm = both.as_array().iter().map(|z| z.norm()).fold(1e-300, f64::max);
        for ((s, l), r) in both.as_array().iter().zip(left.as_array()).zip(right.as_array()) {
            prop_assert!((s - l - r).norm() <= 1e-12 * norm);
        }
    }

    #[test]
    fn rates_are_scale_free_and_phase_periodic(seed in any::<u64>(), scale in 0.1f64..10.0) {
        let (p, d, delta) = point(seed);
        let Ok(t) = transport_coefficients(&p, &d, delta) else { return Ok(()) };
        let scaled = DriveConfig { probe_left: scale * d.probe_left, probe_right: scale * d.probe_right, ..d };
        let wrapped = DriveConfig { phase: d.phase + TAU, ..d };
        for other in [scaled, wrapped] {
            let u = transport_coefficients(&p, &other, delta).unwrap();
            for c in Channel::ALL {
                match (t.ratio(c), u.ratio(c)) {
                    (Some(x), Some(y)) => prop_assert!((x - y).abs() <= 1e-12 * x.max(1.0)),
                    (None, None) => {}
                    _ => prop_assert!(false, "definedness differs for {}", c.as_str()),
                }
            }
        }
    }

    #[test]
    fn exchange_swaps_left_and_right(seed in any::<u64>()) {
        let (mut p, d, delta) = point(seed);
        p.photon_ratio = 1.0;
        prop_assume!(d.probe_left > 0.0 && d.probe_right > 0.0);
        let mut q = p;
        std::mem::swap(&mut q.kappa1, &mut q.kappa2);
        let swapped = DriveConfig { probe_left: d.probe_right, probe_right: d.probe_left, phase: -d.phase, ..d };
        let Ok(a) = transport_coefficients(&p, &d, delta) else { return Ok(()) };
        let b = transport_coefficients(&q, &swapped, delta).unwrap();
        for (x, y) in [(Channel::Rl, Channel::Rr), (Channel::Tl, Channel::Tr)] {
            let (ax, by) = (a.ratio(x).unwrap(), b.ratio(y).unwrap());
            prop_assert!((ax - by).abs() <= 1e-12 * ax.max(1.0));
        }
    }

    #[test]
    fn single_probe_transmission_ratio(seed in any::<u64>()) {
        let (p, _, delta) = point(seed);
        prop_assume!(p.coupling > 0.0);
        let Ok((l, r)) = single_probe_transport(&p, 1.0, delta) else { return Ok(()) };
        let ratio = l.ratio(Channel::Tl).unwrap() / r.ratio(Channel::Tr).unwrap();
        prop_assert!(optoswitch::rel_diff(ratio, (p.kappa2 / p.kappa1).powi(2)) < 1e-10);
    }
}

fn base_spec(axis: Axis) -> SweepSpec {
    SweepSpec::one_d(
        axis,
        SystemParams::gain_balanced(0.8),
        DriveConfig::symmetric(1.0, 0.7),
        &[Observable::Rl, Observable::Tl, Observable::TauRl, Observable::TauTr],
    )
}

#[test]
fn one_d_sweep_is_a_slice_of_two_d() {
    let g_axis = Axis::new(SweepParameter::Coupling, 0.0, 1.5, 7);
    let d_axis = Axis::new(SweepParameter::Delta, -3.0, 3.0, 31);
    let surface = run_sweep(&base_spec(g_axis).with_axis2(d_axis)).unwrap();
    let g_values = g_axis.values();
    for (k, &g) in g_values.iter().enumerate() {
        let mut spec = base_spec(d_axis);
        spec.params.coupling = g;
        let line = run_sweep(&spec).unwrap();
        for (j, row) in line.rows.iter().enumerate() {
            let full = &surface.rows[k * 31 + j];
            assert_eq!(full[0], g);
            // surface rows carry one extra leading axis column
            for (a, b) in row.iter().zip(&full[1..]) {
                assert!(a.to_bits() == b.to_bits(), "G={g} row {j}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn sweeps_are_deterministic_and_round_trip() {
    let spec = base_spec(Axis::new(SweepParameter::Delta, -5.0, 5.0, 401))
        .with_axis2(Axis::new(SweepParameter::Phase, 0.0, TAU, 5));
    let a = run_sweep(&spec).unwrap();
    let b = run_sweep(&spec).unwrap();
    assert_eq!(a.to_csv_string(17).unwrap(), b.to_csv_string(17).unwrap());
    assert_eq!(a.rows.len(), 401 * 5);

    let back = Dataset::from_csv_str(&a.to_csv_string(DEFAULT_PRECISION).unwrap()).unwrap();
    assert_eq!(back.metadata, a.metadata);
    assert_eq!(back.columns, a.columns);
    for (x, y) in a.rows.iter().flatten().zip(back.rows.iter().flatten()) {
        if x.is_nan() {
            assert!(y.is_nan());
        } else {
            assert!(optoswitch::rel_diff(*y, *x) <= 5e-12, "{x} vs {y}");
        }
    }
    let json = Dataset::from_json_str(&a.to_json_string(DEFAULT_PRECISION).unwrap()).unwrap();
    assert_eq!(json.rows.len(), a.rows.len());
}
