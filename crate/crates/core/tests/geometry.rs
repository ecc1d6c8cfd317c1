mod common;

use common::*;
use num_complex::Complex64;
use pas_crb::response::{aggregate_tx, observation, rx_element, rx_steering, tx_element};
use pas_crb::scene::{rx_center_range_angle, rx_distance, tx_distance, ReceiverMode, Target};
use pas_crb::sensitivity::{colinearity_residual, ObservationState};
use proptest::prelude::*;
use twofloat::TwoFloat;

proptest! {
    #[test]
    fn distances_match_coordinate_oracle(
        r in 0.5f64..60.0,
        theta in -1.5f64..1.5,
        y in -4.9f64..4.9,
        n in 1usize..=64,
        pick in 0usize..64,
    ) {
        let t = Target::new(r, theta).unwrap();
        let q = polar(r, theta);
        let l = layout(&[y], false);
        // a lone PA is re-centered to 0, so off-axis positions come from a symmetric pair
        let pair = layout(&[-y.abs() - 0.01, y.abs() + 0.01], false);
        for (m, &ym) in pair.positions().iter().enumerate() {
            let oracle = dist((0.0, ym), q);
            prop_assert!(rel(tx_distance(&pair, &t, m).unwrap(), oracle) < 1e-12);
        }
        prop_assert!(rel(tx_distance(&l, &t, 0).unwrap(), r) < 1e-12);

        let rx = rx(n, ReceiverMode::Exact);
        let idx = rx.indices();
        let k = idx[pick % idx.len()];
        let z = (30.0, k as f64 * rx.spacing());
        if dist(z, q) > 1e-6 {
            prop_assert!(rel(rx_distance(&rx, &t, k).unwrap(), dist(z, q)) < 1e-12);
        }
    }

    #[test]
    fn mirror_map_preserves_distances(
        r in 1.0f64..40.0,
        theta in -1.4f64..1.4,
        a in 0.0f64..4.0,
        b in 0.01f64..0.25,
        n in 2usize..=40,
    ) {
        let p = params();
        let lay = pas_crb::scene::TransmitterLayout::new(vec![-a - 0.3, -b, 0.7 * a + 0.2], p, true).unwrap();
        let mir = lay.mirrored();
        let t = Target::new(r, theta).unwrap();
        let tm = t.mirrored();
        let m_count = lay.len();
        for m in 0..m_count {
            let d = tx_distance(&lay, &t, m).unwrap();
            let dm = tx_distance(&mir, &tm, m_count - 1 - m).unwrap();
            prop_assert!(rel(dm, d) < 1e-12);
        }
        let rx = rx(n, ReceiverMode::Exact);
        for k in rx.indices() {
            let d = rx_distance(&rx, &t, k).unwrap();
            prop_assert!(rel(rx_distance(&rx, &tm, -k).unwrap(), d) < 1e-12);
        }
        let (l, _) = rx_center_range_angle(&rx, &t).unwrap();
        let (lm, _) = rx_center_range_angle(&rx, &tm).unwrap();
        prop_assert!(rel(lm, l) < 1e-12);
    }

    #[test]
    fn center_distance_equals_zero_index(r in 1.0f64..40.0, theta in -1.4f64..1.4) {
        let rx = rx(5, ReceiverMode::Exact);
        let t = Target::new(r, theta).unwrap();
        let (l, _) = rx_center_range_angle(&rx, &t).unwrap();
        prop_assert_eq!(rx_distance(&rx, &t, 0).unwrap(), l);
    }

    #[test]
    fn modulus_laws(seed in any::<u64>()) {
        let c = scene(seed);
        let p = params();
        for m in 0..c.layout.len() {
            let a = tx_element(&c.layout, &c.target, m).unwrap();
            let rm = tx_distance(&c.layout, &c.target, m).unwrap();
            prop_assert!(rel(a.norm() * rm, p.ref_gain.sqrt()) < 1e-12);
        }
        for n in c.rx.indices() {
            let b = rx_element(&c.rx, &c.target, n, p.wavelength).unwrap();
            let ln = rx_distance(&c.rx, &c.target, n).unwrap();
            prop_assert!(rel(b.norm() * ln, c.rx.ref_gain().sqrt()) < 1e-12);
        }
    }

    #[test]
    fn observation_norm_factorizes(seed in any::<u64>()) {
        let c = scene(seed);
        let o = observation(&c.layout, &c.rx, &c.target).unwrap();
        let gg: f64 = o.g.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!(rel(gg, o.s.norm_sqr() * o.b.norm_sqr()) < 1e-12);
    }

    #[test]
    fn plane_wave_jacobian_is_colinear(seed in any::<u64>()) {
        let c = scene(seed);
        let rx = c.rx.with_mode(ReceiverMode::PlaneWave);
        let st = ObservationState::evaluate(&c.layout, &rx, &c.target).unwrap();
        let b = rx_steering(&rx, &c.target, c.layout.wavelength()).unwrap();
        prop_assert!(colinearity_residual(&st.g, b.as_slice()).unwrap() < 1e-12);
        prop_assert!(colinearity_residual(&st.g, &st.jacobian.g_theta).unwrap() < 1e-12);
        prop_assert!(colinearity_residual(&st.g, &st.jacobian.g_range).unwrap() < 1e-12);
    }
}

fn dd_sum_of_elements(positions: &[f64], phase: bool, t: &Target) -> (TwoFloat, TwoFloat) {
    let l = layout(positions, phase);
    let mut re = TwoFloat::from(0.0);
    let mut im = TwoFloat::from(0.0);
    for m in 0..l.len() {
        let a = tx_element(&l, t, m).unwrap();
        re += a.re;
        im += a.im;
    }
    (re, im)
}

#[test]
fn aggregate_matches_extended_summation() {
    let t = target(15.0, 0.0);
    let positions = [-0.278998023396, 0.0735095852107, 0.0960672883972, 0.109421149788];
    let s = aggregate_tx(&layout(&positions, true), &t);
    let (re, im) = dd_sum_of_elements(&positions, true, &t);
    let oracle = Complex64::new(f64::from(re), f64::from(im));
    assert!((s - oracle).norm() <= 1e-12 * oracle.norm());
}

#[test]
fn tx_distance_examples() {
    let l = layout(&[-1.0, 1.0], false);
    let d = tx_distance(&l, &target(10.0, 30.0), 1).unwrap();
    assert!(rel(d, 91f64.sqrt()) < 1e-12);
    assert!(rel(d, dist((0.0, 1.0), polar(10.0, 30f64.to_radians()))) < 1e-12);
    assert!(rel(tx_distance(&l, &target(10.0, 0.0), 1).unwrap(), 101f64.sqrt()) < 1e-12);
}
