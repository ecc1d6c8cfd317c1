//! Near-field array responses and the noiseless matched-filter observation.
//!
//! The transmit element response is
//! `a_m = √α₀ / r_m · exp(−j(2π r_m/λ + 2π |y_m − y_f| / λ_g))`,
//! where the second phase term (the in-waveguide phase) is dropped for a
//! conventional array. The receive element response is
//! `b_n = √b₀ / l_n · exp(−j 2π l_n / λ)`, and the observation direction is
//! `g = S·b` with `S = Σ_m a_m`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::scene::{
    element_distance, pa_distance, ReceiverLayout, ReceiverMode, Target, TransmitterLayout,
};
use crate::{Error, Result};

/// Per-element complex responses, ascending element index.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(pub Vec<Complex64>);

impl SteeringVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// `g = S·b` together with its factors.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationModel {
    pub g: Vec<Complex64>,
    pub s: Complex64,
    pub b: SteeringVector,
}

/// In-waveguide phase 2π·|y − y_f| / λ_g, or zero for a conventional array.
pub(crate) fn waveguide_phase(layout: &TransmitterLayout, y: f64) -> f64 {
    if layout.waveguide_phase() {
        TAU * (y - layout.feed_y()).abs() / layout.guided_wavelength()
    } else {
        0.0
    }
}

pub(crate) fn pa_response(layout: &TransmitterLayout, y: f64, target: &Target) -> Complex64 {
    let r_m = pa_distance(y, target);
    let phase = TAU * r_m / layout.wavelength() + waveguide_phase(layout, y);
    Complex64::from_polar(layout.ref_gain().sqrt() / r_m, -phase)
}

/// a_m for PA index `m`.
pub fn tx_element(layout: &TransmitterLayout, target: &Target, m: usize) -> Result<Complex64> {
    Ok(pa_response(layout, layout.position(m)?, target))
}

/// a(r, θ), one entry per PA.
pub fn tx_steering(layout: &TransmitterLayout, target: &Target) -> SteeringVector {
    SteeringVector(
        layout
            .positions()
            .iter()
            .map(|&y| pa_response(layout, y, target))
            .collect(),
    )
}

/// S(r, θ) = Σ_m a_m.
pub fn aggregate_tx(layout: &TransmitterLayout, target: &Target) -> Complex64 {
    layout
        .positions()
        .iter()
        .map(|&y| pa_response(layout, y, target))
        .sum()
}

/// Distance that sets the response of receive element `n` under the
/// layout's mode: `l_n` (exact) or the center distance `l` (plane wave).
pub(crate) fn effective_rx_distance(rx: &ReceiverLayout, n: i64, target: &Target) -> Result<f64> {
    let idx = match rx.mode() {
        ReceiverMode::Exact => n,
        ReceiverMode::PlaneWave => 0,
    };
    let d = element_distance(rx, idx, target);
    if d <= 1e-12 * rx.baseline().max(target.range()) {
        return Err(Error::DegenerateGeometry(format!(
            "target coincides with receive element {idx}"
        )));
    }
    Ok(d)
}

fn rx_response_at(rx: &ReceiverLayout, distance: f64, wavelength: f64) -> Complex64 {
    Complex64::from_polar(rx.ref_gain().sqrt() / distance, -TAU * distance / wavelength)
}

/// b_n for the symmetric receive index `n`.
pub fn rx_element(
    rx: &ReceiverLayout,
    target: &Target,
    n: i64,
    wavelength: f64,
) -> Result<Complex64> {
    rx.check_index(n)?;
    let d = effective_rx_distance(rx, n, target)?;
    Ok(rx_response_at(rx, d, wavelength))
}

/// b(r, θ), ascending receive index.
pub fn rx_steering(rx: &ReceiverLayout, target: &Target, wavelength: f64) -> Result<SteeringVector> {
    let entries = rx
        .indices()
        .into_iter()
        .map(|n| effective_rx_distance(rx, n, target).map(|d| rx_response_at(rx, d, wavelength)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteeringVector(entries))
}

/// Noiseless observation `g = S·b` for the given geometry.
pub fn observation(
    layout: &TransmitterLayout,
    rx: &ReceiverLayout,
    target: &Target,
) -> Result<ObservationModel> {
    let s = aggregate_tx(layout, target);
    let b = rx_steering(rx, target, layout.wavelength())?;
    let g = b.0.iter().map(|&bn| s * bn).collect();
    Ok(ObservationModel { g, s, b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{pa_distance, TransmitterParams};
    use std::f64::consts::{FRAC_PI_6, PI};

    fn params() -> TransmitterParams {
        TransmitterParams::from_carrier(27e9, 1.4, 10.0).unwrap()
    }

    fn rx(n: usize, mode: ReceiverMode) -> ReceiverLayout {
        let p = params();
        ReceiverLayout::new(n, p.wavelength / 2.0, 30.0, p.ref_gain, mode).unwrap()
    }

    fn wrap(x: f64) -> f64 {
        x.rem_euclid(TAU)
    }

    #[test]
    fn tx_element_without_waveguide_phase_at_feed() {
        let mut p = params();
        p.feed_y = 0.0;
        let layout = TransmitterLayout::new(vec![0.0], p, true).unwrap();
        let t = Target::new(7.5, 0.0).unwrap();
        let a = tx_element(&layout, &t, 0).unwrap();
        let expected = Complex64::from_polar(p.ref_gain.sqrt() / 7.5, -TAU * 7.5 / p.wavelength);
        assert!((a - expected).norm() < 1e-15 * expected.norm());
    }

    #[test]
    fn tx_element_modulus_identity() {
        let layout = TransmitterLayout::new(vec![-3.0, -0.2, 1.7, 4.1], params(), true).unwrap();
        let t = Target::new(13.0, -0.4).unwrap();
        for (m, &y) in layout.positions().iter().enumerate() {
            let a = tx_element(&layout, &t, m).unwrap();
            let r_m = pa_distance(y, &t);
            assert!((a.norm() * r_m - layout.ref_gain().sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn tx_element_phase_matches_independent_terms() {
        // Two PAs at ±1 → centered positions stay at ±1; inspect the +1 PA.
        let p = TransmitterParams {
            wavelength: 0.011103,
            guided_wavelength: 0.0079307,
            waveguide_length: 10.0,
            feed_y: -5.0,
            ref_gain: 1e-6,
        };
        let layout = TransmitterLayout::new(vec![-1.0, 1.0], p, true).unwrap();
        let t = Target::new(10.0, FRAC_PI_6).unwrap();
        let a = tx_element(&layout, &t, 1).unwrap();
        // Each phase term reduced mod 2π on its own, in double-double.
        let r_m = 91f64.sqrt();
        let term = |num: f64, den: f64| {
            let q = twofloat::TwoFloat::new_div(num, den);
            let frac = q - q.hi().floor();
            (frac.hi() + frac.lo()) * TAU
        };
        let expected = wrap(-(term(r_m, p.wavelength) + term(6.0, p.guided_wavelength)));
        let got = wrap(a.arg());
        let diff = (got - expected).abs().min(TAU - (got - expected).abs());
        assert!(diff < 1e-9, "phase mismatch {diff}");
    }

    #[test]
    fn rx_center_element_equals_plane_wave_value() {
        let t = Target::new(11.0, 0.3).unwrap();
        let exact = rx(5, ReceiverMode::Exact);
        let plane = rx(5, ReceiverMode::PlaneWave);
        let lam = params().wavelength;
        let b0 = rx_element(&exact, &t, 0, lam).unwrap();
        for n in plane.indices() {
            assert_eq!(rx_element(&plane, &t, n, lam).unwrap(), b0);
        }
    }

    #[test]
    fn rx_element_modulus_uses_exact_distance() {
        let t = Target::new(10.0, FRAC_PI_6).unwrap();
        let r = rx(7, ReceiverMode::Exact);
        let lam = params().wavelength;
        let b = rx_element(&r, &t, 3, lam).unwrap();
        let (qx, qy) = (10.0 * FRAC_PI_6.cos(), 10.0 * FRAC_PI_6.sin());
        let l3 = ((30.0 - qx).powi(2) + (3.0 * lam / 2.0 - qy).powi(2)).sqrt();
        assert!((b.norm() - r.ref_gain().sqrt() / l3).abs() < 1e-15 * b.norm());
    }

    #[test]
    fn aggregate_single_element() {
        let mut p = params();
        p.feed_y = 0.0;
        let layout = TransmitterLayout::new(vec![0.0], p, true).unwrap();
        let t = Target::new(9.0, 0.2).unwrap();
        assert_eq!(aggregate_tx(&layout, &t), tx_element(&layout, &t, 0).unwrap());
    }

    #[test]
    fn aggregate_strict_triangle_inequality_when_misaligned() {
        // θ = 0 and a symmetric pair give equal r_m, so the relative phase is
        // the in-waveguide term 2π·d/λ_g; d = 3λ_g/2 puts the PAs π apart.
        let p = params();
        let d = 1.5 * p.guided_wavelength;
        let layout = TransmitterLayout::new(vec![-d / 2.0, d / 2.0], p, true).unwrap();
        let t = Target::new(10.0, 0.0).unwrap();
        let a: Vec<_> = (0..2).map(|m| tx_element(&layout, &t, m).unwrap()).collect();
        let rel = (a[1] / a[0]).arg().abs();
        assert!((rel - PI).abs() < 1e-9);
        let s = aggregate_tx(&layout, &t);
        assert!(s.norm() < 1e-6 * (a[0].norm() + a[1].norm()));
    }

    #[test]
    fn observation_factorization() {
        let layout = TransmitterLayout::new(vec![-2.0, 0.5, 3.0], params(), true).unwrap();
        let t = Target::new(15.0, -0.2).unwrap();
        for n in [1, 4, 9] {
            let obs = observation(&layout, &rx(n, ReceiverMode::Exact), &t).unwrap();
            assert_eq!(obs.g.len(), n);
            let g2: f64 = obs.g.iter().map(|z| z.norm_sqr()).sum();
            let rhs = obs.s.norm_sqr() * obs.b.norm_sqr();
            assert!((g2 - rhs).abs() < 1e-13 * rhs);
            for (g, b) in obs.g.iter().zip(obs.b.as_slice()) {
                assert_eq!(*g, obs.s * b);
            }
        }
        let single = observation(&layout, &rx(1, ReceiverMode::Exact), &t).unwrap();
        assert_eq!(single.g[0], single.s * single.b.0[0]);
    }

    #[test]
    fn plane_wave_observation_is_all_ones_multiple() {
        let layout = TransmitterLayout::new(vec![-2.0, 0.5, 3.0], params(), true).unwrap();
        let t = Target::new(15.0, -0.2).unwrap();
        let obs = observation(&layout, &rx(8, ReceiverMode::PlaneWave), &t).unwrap();
        assert!(obs.g.iter().all(|&z| z == obs.g[0]));
    }

    #[test]
    fn conventional_ula_phases_depend_only_on_distance() {
        let mut p = params();
        p.feed_y = 0.0;
        let lam = p.wavelength;
        let ys: Vec<f64> = (0..4).map(|i| (i as f64 - 1.5) * lam / 2.0).collect();
        let layout = TransmitterLayout::new(ys, p, false).unwrap();
        let t = Target::new(8.0, 0.35).unwrap();
        for (m, &y) in layout.positions().iter().enumerate() {
            let a = tx_element(&layout, &t, m).unwrap();
            let r_m = pa_distance(y, &t);
            let expected = Complex64::from_polar(p.ref_gain.sqrt() / r_m, -TAU * r_m / lam);
            assert!((a - expected).norm() < 1e-15 * expected.norm());
        }
    }

    #[test]
    fn degenerate_target_on_receiver() {
        let layout = TransmitterLayout::new(vec![0.0], params(), true).unwrap();
        let t = Target::new(30.0, 0.0).unwrap();
        // odd N has an element at the array center
        assert!(matches!(
            observation(&layout, &rx(3, ReceiverMode::Exact), &t),
            Err(Error::DegenerateGeometry(_))
        ));
        assert!(matches!(
            observation(&layout, &rx(2, ReceiverMode::PlaneWave), &t),
            Err(Error::DegenerateGeometry(_))
        ));
    }
}
