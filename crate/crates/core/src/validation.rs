//! Finite-difference verification of the analytical derivatives and
//! cross-checking of the closed-form bounds against the Fisher-matrix route.
//!
//! Derivatives are estimated with Richardson-extrapolated central
//! differences. The step for each quantity family is `1e-2 / k`, where `k`
//! bounds the family's rate of change from the geometry: a distance d to a
//! target at (r, θ) has `|∂d/∂θ| ≤ r` and `|∂d/∂r| ≤ 1`, so a response
//! `exp(−j2πd/λ)/d` varies at most at `r(2π/λ + 1/d_min)` per radian and
//! `2π/λ + 1/d_min` per metre. Errors are measured per real and imaginary
//! component against `max(|analytic|, 1e-2·k·|f|, 1e-12)`. Evaluating a
//! phase of ~10⁴ rad in f64 leaves an absolute noise of about
//! `ε·2πr/λ·|f| / h` in every difference, which this floor keeps near 1e-8
//! while a wrong derivative still shows up at O(1). For S and g, `|f|` is
//! taken from their parts (`Σ|a_m|`, `Σ|a_m|·max|b_n|`). The product-rule
//! check
//! assembles `S'·b + S·b'` from separately differenced factors; its error
//! is measured against `|S'·b| + |S·b'|`, since the two terms may cancel.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crb::{closed_form_from_state, fim_from_state, SensingBudget};
use crate::placement::random_feasible;
use crate::response::{aggregate_tx, observation, rx_element, rx_steering, tx_element, tx_steering};
use crate::scene::{
    rx_distance, tx_distance, ReceiverLayout, ReceiverMode, Target, TransmitterLayout,
    TransmitterParams,
};
use crate::sensitivity::{
    d_aggregate_tx, d_rx_distance, d_rx_element, d_tx_distance, d_tx_element, receive_response,
    transmit_response, ObservationState, Partials,
};
use crate::{Error, Result};

pub const FD_TOLERANCE: f64 = 1e-6;
pub const FIM_TOLERANCE: f64 = 1e-8;
/// Fraction of the family scale below which derivatives count as zero.
pub const FAMILY_FLOOR: f64 = 1e-2;
const ABS_FLOOR: f64 = 1e-12;
const RATE_STEP: f64 = 1e-2;

/// Which parameter a difference is taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Param {
    Theta,
    Range,
}

fn shifted(target: &Target, param: Param, delta: f64) -> Result<Target> {
    match param {
        Param::Theta => target.with_angle(target.angle() + delta),
        Param::Range => target.with_range(target.range() + delta),
    }
}

fn combine(a: &[Complex64], b: &[Complex64], f: impl Fn(Complex64, Complex64) -> Complex64) -> Vec<Complex64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

/// Central difference `(f(x+h) − f(x−h)) / 2h` refined by one Richardson
/// step, applied entrywise.
pub fn central_difference<F>(f: F, target: &Target, param: Param, h: f64) -> Result<Vec<Complex64>>
where
    F: Fn(&Target) -> Result<Vec<Complex64>>,
{
    let d = |h: f64| -> Result<Vec<Complex64>> {
        let plus = f(&shifted(target, param, h)?)?;
        let minus = f(&shifted(target, param, -h)?)?;
        Ok(combine(&plus, &minus, |p, m| (p - m) / (2.0 * h)))
    };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    Ok(combine(&fine, &coarse, |f, c| (4.0 * f - c) / 3.0))
}

/// Second-order one-sided difference from the side `sign` (±1), refined by
/// one Richardson step.
pub fn one_sided_difference<F>(
    f: F,
    target: &Target,
    param: Param,
    h: f64,
    sign: f64,
) -> Result<Vec<Complex64>>
where
    F: Fn(&Target) -> Result<Vec<Complex64>>,
{
    let f0 = f(target)?;
    let d = |h: f64| -> Result<Vec<Complex64>> {
        let f1 = f(&shifted(target, param, sign * h)?)?;
        let f2 = f(&shifted(target, param, 2.0 * sign * h)?)?;
        Ok(f0
            .iter()
            .zip(&f1)
            .zip(&f2)
            .map(|((&a, &b), &c)| (-3.0 * a + 4.0 * b - c) / (2.0 * sign * h))
            .collect())
    };
    let coarse = d(h)?;
    let fine = d(h / 2.0)?;
    // the leading error term is O(h²)
    Ok(combine(&fine, &coarse, |f, c| (4.0 * f - c) / 3.0))
}

/// Bound on how fast a quantity family can vary, used to pick steps and
/// error floors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// Rates per parameter (1/rad, 1/m).
    pub k: Partials<f64>,
    /// Magnitude of the family's values.
    pub magnitude: f64,
}

impl Rates {
    /// Rates of functions of distances no shorter than `d_min` to a target
    /// moving on a circle of radius r: `|∂d/∂θ| ≤ r` and `|∂d/∂r| ≤ 1`.
    /// With `wavelength` the functions also carry the phase `2πd/λ`.
    pub fn geometric(target: &Target, d_min: f64, wavelength: Option<f64>, magnitude: f64) -> Self {
        let per_metre = 1.0 / d_min + wavelength.map_or(0.0, |lam| TAU / lam);
        Rates {
            k: Partials::new(target.range() * per_metre, per_metre),
            magnitude,
        }
    }

    fn rate(&self, param: Param) -> f64 {
        match param {
            Param::Theta => self.k.theta,
            Param::Range => self.k.range,
        }
    }

    /// Difference step `RATE_STEP / k`.
    pub fn step(&self, param: Param) -> f64 {
        RATE_STEP / self.rate(param)
    }

    /// Error floor `FAMILY_FLOOR · k · magnitude`.
    pub fn floor(&self, param: Param) -> f64 {
        FAMILY_FLOOR * self.rate(param) * self.magnitude
    }
}

/// Component-wise relative error of `fd` against `analytic`.
pub fn component_error(analytic: Complex64, fd: Complex64, floor: f64) -> f64 {
    let denom = analytic.norm().max(floor).max(ABS_FLOOR);
    ((analytic.re - fd.re).abs() / denom).max((analytic.im - fd.im).abs() / denom)
}

/// Worst error of one family in each parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FamilyError {
    pub theta: f64,
    pub range: f64,
}

impl FamilyError {
    pub fn max(&self) -> f64 {
        self.theta.max(self.range)
    }

    fn set(&mut self, param: Param, v: f64) {
        match param {
            Param::Theta => self.theta = v,
            Param::Range => self.range = v,
        }
    }
}

fn component(p: &Partials<Complex64>, param: Param) -> Complex64 {
    match param {
        Param::Theta => p.theta,
        Param::Range => p.range,
    }
}

/// Compares analytic partials of a vector-valued quantity against finite
/// differences of `f`.
pub fn check_family<F>(
    f: F,
    analytic: &[Partials<Complex64>],
    target: &Target,
    rates: Rates,
) -> Result<FamilyError>
where
    F: Fn(&Target) -> Result<Vec<Complex64>>,
{
    if f(target)?.len() != analytic.len() {
        return Err(Error::invalid("analytic", "length differs from the checked quantity"));
    }
    let mut out = FamilyError::default();
    for param in [Param::Theta, Param::Range] {
        let fd = central_difference(&f, target, param, rates.step(param))?;
        let floor = rates.floor(param);
        let worst = analytic
            .iter()
            .zip(&fd)
            .map(|(a, &d)| component_error(component(a, param), d, floor))
            .fold(0.0, f64::max);
        out.set(param, worst);
    }
    Ok(out)
}

fn real_partials(p: Partials<f64>) -> Partials<Complex64> {
    Partials::new(Complex64::new(p.theta, 0.0), Complex64::new(p.range, 0.0))
}

/// Deliberate corruption of the analytic derivatives, for exercising the
/// failure path of the verifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Fault {
    /// Multiplies every analytic r-derivative by `1 + ε`.
    ScaleRangeDerivative(f64),
}

fn apply_fault(fault: Option<Fault>, p: Partials<Complex64>) -> Partials<Complex64> {
    match fault {
        Some(Fault::ScaleRangeDerivative(eps)) => Partials::new(p.theta, p.range * (1.0 + eps)),
        None => p,
    }
}

/// Worst errors per derivative family for one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerivativeErrors {
    pub tx_distance: FamilyError,
    pub rx_distance: FamilyError,
    pub tx_element: FamilyError,
    pub rx_element: FamilyError,
    pub aggregate_tx: FamilyError,
    pub observation: FamilyError,
    /// Observation Jacobian against the product rule applied to finite
    /// differences of S and b.
    pub product_rule: FamilyError,
}

impl DerivativeErrors {
    pub fn families(&self) -> [(&'static str, FamilyError); 7] {
        [
            ("tx_distance", self.tx_distance),
            ("rx_distance", self.rx_distance),
            ("tx_element", self.tx_element),
            ("rx_element", self.rx_element),
            ("aggregate_tx", self.aggregate_tx),
            ("observation", self.observation),
            ("product_rule", self.product_rule),
        ]
    }

    /// Largest error and the family it occurred in.
    pub fn worst(&self) -> (&'static str, f64) {
        self.families()
            .into_iter()
            .map(|(name, e)| (name, e.max()))
            .fold(("none", 0.0), |acc, x| if x.1 > acc.1 { x } else { acc })
    }
}

/// Runs every derivative family check for one configuration.
pub fn derivative_errors(
    layout: &TransmitterLayout,
    rx: &ReceiverLayout,
    target: &Target,
    fault: Option<Fault>,
) -> Result<DerivativeErrors> {
    let lam = layout.wavelength();
    let m_all = 0..layout.len();
    let n_all = rx.indices();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);

    let r_m: Vec<f64> = m_all.clone().map(|m| tx_distance(layout, target, m)).collect::<Result<_>>()?;
    let l_n: Vec<f64> = n_all.iter().map(|&n| rx_distance(rx, target, n)).collect::<Result<_>>()?;
    let (tx_min, rx_min) = (min(&r_m), min(&l_n));

    let an: Vec<_> = m_all
        .clone()
        .map(|m| d_tx_distance(layout, target, m).map(|p| apply_fault(fault, real_partials(p))))
        .collect::<Result<_>>()?;
    let tx_distance_err = check_family(
        |t| m_all.clone().map(|m| tx_distance(layout, t, m).map(|d| Complex64::new(d, 0.0))).collect(),
        &an,
        target,
        Rates::geometric(target, tx_min, None, max(&r_m)),
    )?;

    let an: Vec<_> = n_all
        .iter()
        .map(|&n| d_rx_distance(rx, target, n).map(|p| apply_fault(fault, real_partials(p))))
        .collect::<Result<_>>()?;
    let rx_distance_err = check_family(
        |t| n_all.iter().map(|&n| rx_distance(rx, t, n).map(|d| Complex64::new(d, 0.0))).collect(),
        &an,
        target,
        Rates::geometric(target, rx_min, None, max(&l_n)),
    )?;

    let a_values = tx_steering(layout, target).0;
    let a_mag = a_values.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let a_rates = Rates::geometric(target, tx_min, Some(lam), a_mag);
    let an: Vec<_> = m_all
        .clone()
        .map(|m| d_tx_element(layout, target, m).map(|p| apply_fault(fault, p)))
        .collect::<Result<_>>()?;
    let tx_element_err = check_family(
        |t| m_all.clone().map(|m| tx_element(layout, t, m)).collect(),
        &an,
        target,
        a_rates,
    )?;

    let b_values = rx_steering(rx, target, lam)?.0;
    let b_mag = b_values.iter().map(|b| b.norm()).fold(0.0, f64::max);
    let b_rates = Rates::geometric(target, rx_min, Some(lam), b_mag);
    let an: Vec<_> = n_all
        .iter()
        .map(|&n| d_rx_element(rx, target, n, lam).map(|p| apply_fault(fault, p)))
        .collect::<Result<_>>()?;
    let rx_element_err = check_family(
        |t| n_all.iter().map(|&n| rx_element(rx, t, n, lam)).collect(),
        &an,
        target,
        b_rates,
    )?;

    // S and g may be small through cancellation while their parts are not,
    // so their floors use the magnitudes of the parts
    let a_sum: f64 = a_values.iter().map(|a| a.norm()).sum();
    let s_rates = Rates::geometric(target, tx_min, Some(lam), a_sum);
    let an = [apply_fault(fault, d_aggregate_tx(layout, target))];
    let aggregate_err = check_family(|t| Ok(vec![aggregate_tx(layout, t)]), &an, target, s_rates)?;

    let state = ObservationState::evaluate(layout, rx, target)?;
    let jac = &state.jacobian;
    let an: Vec<_> = jac
        .g_theta
        .iter()
        .zip(&jac.g_range)
        .map(|(&t, &r)| apply_fault(fault, Partials::new(t, r)))
        .collect();
    let g_rates = Rates::geometric(target, tx_min.min(rx_min), Some(lam), a_sum * b_mag);
    let g_of = |t: &Target| observation(layout, rx, t).map(|o| o.g);
    let observation_err = check_family(g_of, &an, target, g_rates)?;

    // second level: g' ≈ FD(S)·b + S·FD(b), with each factor differenced
    // on its own step
    let tx = transmit_response(layout, target);
    let rxr = receive_response(rx, target, lam)?;
    let s_of = |t: &Target| Ok(vec![aggregate_tx(layout, t)]);
    let b_of = |t: &Target| rx_steering(rx, t, lam).map(|v| v.0);
    let mut product_rule = FamilyError::default();
    for param in [Param::Theta, Param::Range] {
        let (ds_an, db_an): (Complex64, &[Complex64]) = match param {
            Param::Theta => (tx.ds.theta, &rxr.b_theta),
            Param::Range => (tx.ds.range, &rxr.b_range),
        };
        let ds = central_difference(s_of, target, param, s_rates.step(param))?[0];
        let db = central_difference(b_of, target, param, b_rates.step(param))?;
        let floor = g_rates.floor(param);
        let worst = an
            .iter()
            .zip(rxr.b.iter().zip(&db))
            .zip(db_an)
            .map(|((a, (&b, &dbn)), &db_an)| {
                // the two terms can cancel, so the oracle is only as good
                // as their magnitudes allow
                let terms = (ds_an * b).norm() + (tx.s * db_an).norm();
                component_error(component(a, param), ds * b + tx.s * dbn, floor.max(terms))
            })
            .fold(0.0, f64::max);
        product_rule.set(param, worst);
    }

    Ok(DerivativeErrors {
        tx_distance: tx_distance_err,
        rx_distance: rx_distance_err,
        tx_element: tx_element_err,
        rx_element: rx_element_err,
        aggregate_tx: aggregate_err,
        observation: observation_err,
        product_rule,
    })
}

/// Relative disagreement of the closed-form and Fisher-matrix bounds, or
/// `None` when either route reports divergence.
pub fn fim_disagreement(
    layout: &TransmitterLayout,
    rx: &ReceiverLayout,
    target: &Target,
    budget: &SensingBudget,
) -> Result<Option<f64>> {
    let state = ObservationState::evaluate(layout, rx, target)?;
    let closed = closed_form_from_state(&state, budget)?;
    let fim = fim_from_state(&state, budget)?;
    if closed.divergent || fim.divergent {
        return Ok(None);
    }
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    Ok(Some(rel(closed.crb_theta, fim.crb_theta).max(rel(closed.crb_range, fim.crb_range))))
}

/// One randomly drawn scene.
#[derive(Debug, Clone)]
pub struct Configuration {
    pub layout: TransmitterLayout,
    pub rx: ReceiverLayout,
    pub target: Target,
}

/// Sampling ranges for [`random_configuration`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfigurationSpace {
    pub params: TransmitterParams,
    pub baseline: f64,
    pub rx_spacing: f64,
    pub rx_ref_gain: f64,
    pub max_pas: usize,
    pub max_rx: usize,
    pub angle: (f64, f64),
    pub range: (f64, f64),
    /// Probability of drawing a plane-wave receiver.
    pub plane_wave_fraction: f64,
}

impl ConfigurationSpace {
    /// The default scene: 27 GHz, D_T = 10 m, R = 30 m, up to 8 PAs and 64
    /// receive elements, θ ∈ [−30°, 30°], r ∈ [5, 25] m.
    pub fn standard() -> Self {
        let params = TransmitterParams::from_carrier(27e9, 1.4, 10.0).expect("valid defaults");
        ConfigurationSpace {
            params,
            baseline: 30.0,
            rx_spacing: params.wavelength / 2.0,
            rx_ref_gain: params.ref_gain,
            max_pas: 8,
            max_rx: 64,
            angle: (-30f64.to_radians(), 30f64.to_radians()),
            range: (5.0, 25.0),
            plane_wave_fraction: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.max_pas == 0 || self.max_rx == 0 {
            return Err(Error::invalid("max_pas/max_rx", "must be at least 1"));
        }
        if self.max_pas as f64 * self.params.min_spacing() > self.params.waveguide_length {
            return Err(Error::Infeasible("max_pas does not fit on the waveguide".into()));
        }
        if !(self.angle.0 <= self.angle.1 && self.range.0 <= self.range.1 && self.range.0 > 0.0) {
            return Err(Error::invalid("angle/range", "bounds must be ordered and ranges positive"));
        }
        if !(0.0..=1.0).contains(&self.plane_wave_fraction) {
            return Err(Error::invalid("plane_wave_fraction", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Draws a feasible random scene.
pub fn random_configuration<R: Rng + ?Sized>(rng: &mut R, space: &ConfigurationSpace) -> Result<Configuration> {
    let m = rng.gen_range(1..=space.max_pas);
    let positions = random_feasible(rng, m, &space.params);
    let layout = TransmitterLayout::new(positions, space.params, rng.gen_bool(0.75))?;
    let n = rng.gen_range(1..=space.max_rx);
    let mode = if rng.gen_bool(space.plane_wave_fraction) {
        ReceiverMode::PlaneWave
    } else {
        ReceiverMode::Exact
    };
    let rx = ReceiverLayout::new(n, space.rx_spacing, space.baseline, space.rx_ref_gain, mode)?;
    let target = Target::new(uniform(rng, space.range), uniform(rng, space.angle))?;
    Ok(Configuration { layout, rx, target })
}

/// Parameters of a full verification run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationSpec {
    pub configurations: usize,
    pub seed: u64,
    pub space: ConfigurationSpace,
    pub budget: SensingBudget,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub configurations: usize,
    pub fd_max_error: f64,
    pub fd_worst_family: &'static str,
    pub fim_max_error: f64,
    pub fim_compared: usize,
    pub fim_divergent: usize,
}

impl ValidationReport {
    pub fn fd_ok(&self) -> bool {
        self.fd_max_error <= FD_TOLERANCE
    }

    pub fn fim_ok(&self) -> bool {
        self.fim_max_error <= FIM_TOLERANCE
    }

    pub fn passed(&self) -> bool {
        self.fd_ok() && self.fim_ok()
    }
}

/// Derivative and bound cross-checks over seeded random scenes. The
/// derivative checks use the space as given, the bound comparison always
/// uses the exact receiver model.
pub fn run_validation(spec: &ValidationSpec) -> Result<ValidationReport> {
    if spec.configurations == 0 {
        return Err(Error::invalid("configurations", "must be at least 1"));
    }
    spec.space.validate()?;
    spec.budget.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut report = ValidationReport {
        configurations: spec.configurations,
        fd_max_error: 0.0,
        fd_worst_family: "none",
        fim_max_error: 0.0,
        fim_compared: 0,
        fim_divergent: 0,
    };
    for _ in 0..spec.configurations {
        let c = random_configuration(&mut rng, &spec.space)?;
        let (family, err) = derivative_errors(&c.layout, &c.rx, &c.target, spec.fault)?.worst();
        if !(err <= report.fd_max_error) {
            report.fd_max_error = err;
            report.fd_worst_family = family;
        }
        let exact = c.rx.with_mode(ReceiverMode::Exact);
        match fim_disagreement(&c.layout, &exact, &c.target, &spec.budget)? {
            Some(e) => {
                report.fim_compared += 1;
                report.fim_max_error = report.fim_max_error.max(e);
            }
            None => report.fim_divergent += 1,
        }
    }
    Ok(report)
}
