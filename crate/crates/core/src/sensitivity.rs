//! Analytical derivatives of the observation chain with respect to the
//! target direction θ and range r.
//!
//! Every element response has the form `c / d · exp(−j 2π d / λ + φ₀)` with
//! a geometry-independent phase φ₀, so its derivative is
//! `x · (−1/d − j 2π/λ) · ∂d`. The observation derivatives follow from the
//! product rule on `g = S·b`.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::response::{effective_rx_distance, pa_response};
use crate::scene::{
    element_distance, pa_distance, ReceiverLayout, ReceiverMode, Target, TransmitterLayout,
};
use crate::{Error, Result};

/// A pair of partial derivatives (∂/∂θ, ∂/∂r).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials<T> {
    pub theta: T,
    pub range: T,
}

impl<T> Partials<T> {
    pub fn new(theta: T, range: T) -> Self {
        Partials { theta, range }
    }
}

/// ∂r_m/∂θ = −r y cosθ / r_m, ∂r_m/∂r = (r − y sinθ) / r_m.
pub(crate) fn pa_distance_partials(y: f64, target: &Target) -> (f64, Partials<f64>) {
    let r = target.range();
    let (s, c) = target.angle().sin_cos();
    let r_m = pa_distance(y, target);
    (r_m, Partials::new(-r * y * c / r_m, (r - y * s) / r_m))
}

/// ∂l_n/∂θ = (R r sinθ − n d_R r cosθ) / l_n,
/// ∂l_n/∂r = (r − R cosθ − n d_R sinθ) / l_n.
pub(crate) fn element_distance_partials(
    rx: &ReceiverLayout,
    n: i64,
    target: &Target,
) -> (f64, Partials<f64>) {
    let r = target.range();
    let (s, c) = target.angle().sin_cos();
    let big_r = rx.baseline();
    let nd = n as f64 * rx.spacing();
    let l_n = element_distance(rx, n, target);
    (
        l_n,
        Partials::new(
            (big_r * r * s - nd * r * c) / l_n,
            (r - big_r * c - nd * s) / l_n,
        ),
    )
}

/// Partials of r_m for PA index `m`.
pub fn d_tx_distance(layout: &TransmitterLayout, target: &Target, m: usize) -> Result<Partials<f64>> {
    Ok(pa_distance_partials(layout.position(m)?, target).1)
}

/// Partials of the exact element distance l_n.
pub fn d_rx_distance(rx: &ReceiverLayout, target: &Target, n: i64) -> Result<Partials<f64>> {
    rx.check_index(n)?;
    Ok(element_distance_partials(rx, n, target).1)
}

/// `x · (−1/d − j2π/λ) · ∂d` for both parameters.
fn chain(x: Complex64, d: f64, dd: Partials<f64>, wavelength: f64) -> Partials<Complex64> {
    let factor = x * Complex64::new(-1.0 / d, -TAU / wavelength);
    Partials::new(factor * dd.theta, factor * dd.range)
}

fn pa_partials(layout: &TransmitterLayout, y: f64, target: &Target) -> (Complex64, Partials<Complex64>) {
    let a = pa_response(layout, y, target);
    let (r_m, dr) = pa_distance_partials(y, target);
    // the in-waveguide phase does not depend on (r, θ)
    (a, chain(a, r_m, dr, layout.wavelength()))
}

/// Partials of a_m.
pub fn d_tx_element(
    layout: &TransmitterLayout,
    target: &Target,
    m: usize,
) -> Result<Partials<Complex64>> {
    Ok(pa_partials(layout, layout.position(m)?, target).1)
}

fn rx_partials(
    rx: &ReceiverLayout,
    n: i64,
    target: &Target,
    wavelength: f64,
) -> Result<(Complex64, Partials<Complex64>)> {
    let idx = match rx.mode() {
        ReceiverMode::Exact => n,
        ReceiverMode::PlaneWave => 0,
    };
    let d = effective_rx_distance(rx, n, target)?;
    let (_, dd) = element_distance_partials(rx, idx, target);
    let b = Complex64::from_polar(rx.ref_gain().sqrt() / d, -TAU * d / wavelength);
    Ok((b, chain(b, d, dd, wavelength)))
}

/// Partials of b_n. In plane-wave mode every element uses the center
/// distance `l` and its partials, so the result does not depend on `n`.
pub fn d_rx_element(
    rx: &ReceiverLayout,
    target: &Target,
    n: i64,
    wavelength: f64,
) -> Result<Partials<Complex64>> {
    rx.check_index(n)?;
    Ok(rx_partials(rx, n, target, wavelength)?.1)
}

/// (S_θ, S_r) = Σ_m (∂a_m/∂θ, ∂a_m/∂r).
pub fn d_aggregate_tx(layout: &TransmitterLayout, target: &Target) -> Partials<Complex64> {
    transmit_response(layout, target).ds
}

/// Transmit-side quantities entering the observation: S and its partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitResponse {
    pub s: Complex64,
    pub ds: Partials<Complex64>,
}

pub fn transmit_response(layout: &TransmitterLayout, target: &Target) -> TransmitResponse {
    let zero = Complex64::new(0.0, 0.0);
    let mut out = TransmitResponse {
        s: zero,
        ds: Partials::new(zero, zero),
    };
    for &y in layout.positions() {
        let (a, da) = pa_partials(layout, y, target);
        out.s += a;
        out.ds.theta += da.theta;
        out.ds.range += da.range;
    }
    out
}

/// Receive steering vector with its θ and r derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveResponse {
    pub b: Vec<Complex64>,
    pub b_theta: Vec<Complex64>,
    pub b_range: Vec<Complex64>,
}

pub fn receive_response(
    rx: &ReceiverLayout,
    target: &Target,
    wavelength: f64,
) -> Result<ReceiveResponse> {
    let n = rx.n_elements();
    let mut out = ReceiveResponse {
        b: Vec::with_capacity(n),
        b_theta: Vec::with_capacity(n),
        b_range: Vec::with_capacity(n),
    };
    for idx in rx.indices() {
        let (b, db) = rx_partials(rx, idx, target, wavelength)?;
        out.b.push(b);
        out.b_theta.push(db.theta);
        out.b_range.push(db.range);
    }
    Ok(out)
}

/// g_θ = ∂g/∂θ and g_r = ∂g/∂r.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationJacobian {
    pub g_theta: Vec<Complex64>,
    pub g_range: Vec<Complex64>,
}

/// `g` together with its Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationState {
    pub s: Complex64,
    pub g: Vec<Complex64>,
    pub jacobian: ObservationJacobian,
}

impl ObservationState {
    /// Assembles g = S·b, g_θ = S_θ b + S b_θ, g_r = S_r b + S b_r.
    pub fn assemble(tx: &TransmitResponse, rx: &ReceiveResponse) -> Self {
        let s = tx.s;
        let g = rx.b.iter().map(|&b| s * b).collect();
        let g_theta = rx
            .b
            .iter()
            .zip(&rx.b_theta)
            .map(|(&b, &bt)| tx.ds.theta * b + s * bt)
            .collect();
        let g_range = rx
            .b
            .iter()
            .zip(&rx.b_range)
            .map(|(&b, &br)| tx.ds.range * b + s * br)
            .collect();
        ObservationState {
            s,
            g,
            jacobian: ObservationJacobian { g_theta, g_range },
        }
    }

    pub fn evaluate(layout: &TransmitterLayout, rx: &ReceiverLayout, target: &Target) -> Result<Self> {
        let tx = transmit_response(layout, target);
        let rx = receive_response(rx, target, layout.wavelength())?;
        Ok(Self::assemble(&tx, &rx))
    }
}

pub fn observation_jacobian(
    layout: &TransmitterLayout,
    rx: &ReceiverLayout,
    target: &Target,
) -> Result<ObservationJacobian> {
    ObservationState::evaluate(layout, rx, target).map(|st| st.jacobian)
}

/// Normalized Gram determinant `1 − |u^H v|² / (‖u‖²‖v‖²)`; zero for
/// colinear vectors. Returns an error for a zero vector.
pub fn colinearity_residual(u: &[Complex64], v: &[Complex64]) -> Result<f64> {
    let uu = crate::numerics::norm_sqr(u);
    let vv = crate::numerics::norm_sqr(v);
    if uu.hi() == 0.0 || vv.hi() == 0.0 {
        return Err(Error::DegenerateObservation);
    }
    let uv = crate::numerics::herm_dot(u, v);
    let r = twofloat::TwoFloat::from(1.0) - uv.norm_sqr() / (uu * vv);
    Ok(crate::numerics::to_f64(r))
}
