mod common;

use gpiodac::metrics::summary;
use gpiodac::network::solve_code;
use gpiodac::sizing::{
    check_saturation_window, extract_parameters, size_four_resistor, size_two_resistor,
    ExtractedParams, FourResistorRequest,
};
use gpiodac::{transfer_curve, DacConfig, DevicePair, Encoding, Topology};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn standalone(n: u32, vth: f64, ron: f64) -> DacConfig {
    DacConfig::new(
        n,
        3.3,
        DevicePair::calibrated(vth, ron, 3.3).unwrap(),
        Topology::Standalone,
        Encoding::Binary,
    )
    .unwrap()
}

#[test]
fn extraction_recovers_generating_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..20 {
        let (vth, ron) = common::random_device_params(&mut rng);
        let p = extract_parameters(&transfer_curve(&standalone(6, vth, ron)).unwrap()).unwrap();
        assert!((p.vth - vth).abs() / vth < 0.1, "vth {vth} -> {}", p.vth);
        assert!((p.ron - ron).abs() / ron < 0.1, "ron {ron} -> {}", p.ron);
    }
}

#[test]
fn four_bit_curve_extracts_near_calibration() {
    let p = extract_parameters(&transfer_curve(&standalone(4, 1.15, 40.0)).unwrap()).unwrap();
    assert!((p.vth - 1.15).abs() < 0.1, "{p:?}");
    assert!((p.ron - 40.0).abs() < 4.0, "{p:?}");
}

#[test]
fn sizing_closes_the_loop() {
    let base = standalone(4, 1.15, 40.0);
    let before = transfer_curve(&base).unwrap();
    let p = extract_parameters(&before).unwrap();
    let sized = size_two_resistor(&p, base.d_max()).unwrap();
    let after = transfer_curve(&base.with_topology(sized.topology).unwrap()).unwrap();
    let (b, a) = (summary(&before).unwrap(), summary(&after).unwrap());
    assert!(
        a.inl_max_abs <= b.inl_max_abs / 3.0,
        "{} vs {}",
        a.inl_max_abs,
        b.inl_max_abs
    );
    // The stretched output spans roughly vth .. vdd - vth.
    let (lo, hi) = sized.predicted_dynamic_range;
    assert!((after.rows[0].vdac - lo).abs() < 0.25 && (after.rows[15].vdac - hi).abs() < 0.25);
}

#[test]
fn sized_four_resistor_holds_both_groups_in_saturation() {
    let p = ExtractedParams::new(1.15, 40.0, 3.3).unwrap();
    let sized = size_four_resistor(&p, &FourResistorRequest::new(0.2, 1.0)).unwrap();
    let cfg = standalone(4, 1.15, 40.0)
        .with_topology(sized.topology)
        .unwrap();
    let window = check_saturation_window(&cfg).unwrap();
    assert!(window.coverage() >= 0.5, "{:?}", window.codes());

    // The parallel resistor facing the off group drops about one threshold
    // at each end of the code range.
    let Topology::FourResistor { rpp, rpn, .. } = sized.topology else {
        unreachable!()
    };
    let first = solve_code(&cfg, 0).unwrap();
    let last = solve_code(&cfg, 15).unwrap();
    let v_rpp = first.i_rpp * rpp;
    let v_rpn = last.i_rpn * rpn;
    assert!((v_rpp - 1.15).abs() / 1.15 < 0.15, "{v_rpp}");
    assert!((v_rpn - 1.15).abs() / 1.15 < 0.15, "{v_rpn}");
}

#[test]
fn always_saturated_network_is_flat_and_monotone() {
    let cfg = standalone(4, 1.15, 40.0)
        .with_topology(Topology::FourResistor {
            rsp: 10.0,
            rsn: 0.0,
            rpp: 5.0,
            rpn: 5.0,
            parallel_attach: Default::default(),
        })
        .unwrap();
    let r = summary(&transfer_curve(&cfg).unwrap()).unwrap();
    assert!(r.monotonic);
    assert!(r.dnl_max_abs < 0.5 && r.inl_max_abs < 0.5);
}

proptest! {
    #[test]
    fn parallel_resistance_scales_inversely_with_code_range(
        vth in 0.2f64..1.6,
        ron in 5.0f64..200.0,
        n in 1u32..=12,
    ) {
        let p = ExtractedParams::new(vth, ron, 3.3).unwrap();
        let d = (1u32 << n) - 1;
        let rp = |d_max| match size_two_resistor(&p, d_max).unwrap().topology {
            Topology::TwoResistor { rpp, .. } => rpp,
            _ => unreachable!(),
        };
        let ratio = rp(d) * d as f64 / (rp(2 * d + 1) * (2 * d + 1) as f64);
        prop_assert!((ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn midpoint_series_resistance_is_feasible(
        vth in 0.2f64..1.6,
        it in 0.01f64..2.0,
        split in 0.0f64..=1.0,
    ) {
        let p = ExtractedParams::new(vth, 40.0, 3.3).unwrap();
        let s = size_four_resistor(&p, &FourResistorRequest::new(it, split)).unwrap();
        let (lo, hi) = s.rs_bounds.unwrap();
        let rs = s.rs_total.unwrap();
        prop_assert!(lo <= rs && rs <= hi);
        let (ilo, ihi) = s.it_bounds.unwrap();
        prop_assert!(ilo <= it && it <= ihi);
    }
}
