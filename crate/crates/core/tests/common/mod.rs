#![allow(dead_code)]

use pas_crb::crb::SensingBudget;
use pas_crb::scene::{ReceiverLayout, ReceiverMode, Target, TransmitterLayout, TransmitterParams};
use pas_crb::validation::{random_configuration, Configuration, ConfigurationSpace};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn params() -> TransmitterParams {
    TransmitterParams::from_carrier(27e9, 1.4, 10.0).unwrap()
}

pub fn rx(n: usize, mode: ReceiverMode) -> ReceiverLayout {
    let p = params();
    ReceiverLayout::new(n, p.wavelength / 2.0, 30.0, p.ref_gain, mode).unwrap()
}

pub fn budget() -> SensingBudget {
    SensingBudget::default()
}

pub fn target(r: f64, theta_deg: f64) -> Target {
    Target::new(r, theta_deg.to_radians()).unwrap()
}

pub fn layout(positions: &[f64], phase: bool) -> TransmitterLayout {
    TransmitterLayout::new(positions.to_vec(), params(), phase).unwrap()
}

/// A random scene in the reference ranges (exact receiver).
pub fn scene(seed: u64) -> Configuration {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_configuration(&mut rng, &ConfigurationSpace::standard()).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Euclidean distance between two planar points.
pub fn dist((ax, ay): (f64, f64), (bx, by): (f64, f64)) -> f64 {
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

pub fn polar(r: f64, theta: f64) -> (f64, f64) {
    (r * theta.cos(), r * theta.sin())
}
