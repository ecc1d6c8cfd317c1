//! Cramér-Rao bounds for the joint (θ, r) estimate with the complex
//! reflection coefficient treated as a nuisance parameter.
//!
//! The bounds are `σ²/(2L) · [Q⁻¹]`, where `Q` is the Schur complement of
//! the nuisance block of `Re{JᴴJ}` and `J` holds the derivatives of the
//! noiseless echo `w = ρ g` with respect to `(θ, r, κ_r, κ_i)`. The L
//! samples of a coherent interval each contribute the same information,
//! which is where the `1/L` comes from.

use num_complex::Complex64;
use twofloat::TwoFloat;

use crate::numerics::{div, herm_dot, herm_dot_dd, norm_sqr, to_f64, DdComplex};
use crate::scene::{ReceiverLayout, Target, TransmitterLayout};
use crate::sensitivity::ObservationState;
use crate::{Error, Result};

/// Relative threshold on `is − k²` below which the bounds are reported as
/// divergent.
pub const DEGENERACY_DELTA: f64 = 1e-10;
/// Smallest accepted `i/‖g_θ‖²` and `s/‖g_r‖²`. Residuals below this are
/// rounding noise of the double-double evaluation.
pub const RESIDUAL_FLOOR: f64 = 1e-20;
/// Largest accepted condition number of the unit-diagonal-scaled `Q`.
pub const MAX_CONDITION: f64 = 1e12;

/// Link budget of one sensing interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingBudget {
    /// Transmit power P in W.
    pub power: f64,
    /// Target reflection coefficient κ.
    pub kappa: Complex64,
    /// Pulse duration T_p in s.
    pub pulse_time: f64,
    /// Bandwidth B in Hz.
    pub bandwidth: f64,
    /// Noise power spectral density N₀ in W/Hz.
    pub noise_psd: f64,
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

impl Default for SensingBudget {
    /// P = 0 dBm, σ² = −90 dBm over B = 10 MHz, L = 1, κ = 1.
    fn default() -> Self {
        SensingBudget::from_levels(0.0, -90.0, 10e6, 1.0, Complex64::new(1.0, 0.0)).unwrap()
    }
}

impl SensingBudget {
    /// Builds a budget from powers in dBm, the bandwidth and the number of
    /// samples `L` per interval (which fixes `T_p = L / B`).
    pub fn from_levels(
        power_dbm: f64,
        noise_dbm: f64,
        bandwidth: f64,
        samples: f64,
        kappa: Complex64,
    ) -> Result<Self> {
        let b = SensingBudget {
            power: dbm_to_watts(power_dbm),
            kappa,
            pulse_time: samples / bandwidth,
            bandwidth,
            noise_psd: dbm_to_watts(noise_dbm) / bandwidth,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("power", self.power),
            ("pulse_time", self.pulse_time),
            ("bandwidth", self.bandwidth),
            ("noise_psd", self.noise_psd),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be finite and positive, got {v}")));
            }
        }
        if !(self.kappa.re.is_finite() && self.kappa.im.is_finite()) || self.kappa.norm() == 0.0 {
            return Err(Error::invalid("kappa", "must be finite and nonzero"));
        }
        Ok(())
    }

    /// Non-fatal remarks about the budget.
    pub fn warnings(&self) -> Vec<String> {
        let mut w = Vec::new();
        let l = self.time_bandwidth();
        if l < 1.0 {
            w.push(format!("time-bandwidth product L = {l} is below 1"));
        }
        w
    }

    /// L = B·T_p.
    pub fn time_bandwidth(&self) -> f64 {
        self.bandwidth * self.pulse_time
    }

    /// σ² = N₀·B.
    pub fn noise_variance(&self) -> f64 {
        self.noise_psd * self.bandwidth
    }

    /// √(T_p P), the amplitude multiplying κ.
    pub fn amplitude(&self) -> f64 {
        (self.pulse_time * self.power).sqrt()
    }

    /// ρ = √(T_p P)·κ.
    pub fn rho(&self) -> Complex64 {
        self.kappa * self.amplitude()
    }

    /// σ²/(2L).
    fn noise_scale(&self) -> f64 {
        self.noise_variance() / (2.0 * self.time_bandwidth())
    }

    pub fn with_power(mut self, power: f64) -> Self {
        self.power = power;
        self
    }

    pub fn with_kappa(mut self, kappa: Complex64) -> Self {
        self.kappa = kappa;
        self
    }

    /// Keeps B fixed and sets L (through T_p).
    pub fn with_time_bandwidth(mut self, samples: f64) -> Self {
        self.pulse_time = samples / self.bandwidth;
        self
    }
}

/// The projection terms together with the scales used by the degeneracy test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IskTerms {
    pub i: f64,
    pub s: f64,
    pub k: f64,
    /// i·s − k², evaluated before rounding the individual terms.
    pub schur_det: f64,
    pub divergent: bool,
}

/// Degeneracy rule shared by both bound computations.
/// `tt` and `rr` are the unprojected squared norms belonging to `i` and `s`.
fn is_degenerate(det: TwoFloat, i: TwoFloat, s: TwoFloat, tt: TwoFloat, rr: TwoFloat) -> bool {
    i <= tt * RESIDUAL_FLOOR
        || s <= rr * RESIDUAL_FLOOR
        || !(det.hi() > 0.0)
        || det <= i * s * DEGENERACY_DELTA
}

/// `i`, `s`, `k` and `is − k²` for an observation and its Jacobian:
///
/// * `i = ‖g_θ‖² − |g_θᴴg|²/‖g‖²`
/// * `s = ‖g_r‖² − |g_rᴴg|²/‖g‖²`
/// * `k = Re{g_θᴴg_r} − Re{(g_θᴴg)(gᴴg_r)}/‖g‖²`
pub fn isk_terms(g: &[Complex64], g_theta: &[Complex64], g_range: &[Complex64]) -> Result<IskTerms> {
    if g.len() != g_theta.len() || g.len() != g_range.len() {
        return Err(Error::invalid("g", "observation and derivative lengths differ"));
    }
    let gg = norm_sqr(g);
    if !(gg.hi() > 0.0) {
        return Err(Error::DegenerateObservation);
    }
    let tt = norm_sqr(g_theta);
    let rr = norm_sqr(g_range);
    let tg = herm_dot(g_theta, g);
    let rg = herm_dot(g_range, g);
    let tr = herm_dot(g_theta, g_range);

    let i = tt - div(tg.norm_sqr(), gg);
    let s = rr - div(rg.norm_sqr(), gg);
    // (g_θᴴg)(gᴴg_r) = tg · conj(rg)
    let k = tr.re - div(tg.mul(rg.conj()).re, gg);
    let det = i * s - k * k;
    Ok(IskTerms {
        i: to_f64(i),
        s: to_f64(s),
        k: to_f64(k),
        schur_det: to_f64(det),
        divergent: is_degenerate(det, i, s, tt, rr),
    })
}

/// Bounds for one target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrbReport {
    pub i: f64,
    pub s: f64,
    pub k: f64,
    pub schur_det: f64,
    /// CRB on θ in rad².
    pub crb_theta: f64,
    /// CRB on r in m².
    pub crb_range: f64,
    pub divergent: bool,
}

impl CrbReport {
    /// √CRB_θ converted to degrees.
    pub fn sqrt_crb_theta_deg(&self) -> f64 {
        self.crb_theta.sqrt().to_degrees()
    }

    pub fn sqrt_crb_range(&self) -> f64 {
        self.crb_range.sqrt()
    }
}

/// Closed-form bounds from an already assembled observation.
pub fn closed_form_from_state(state: &ObservationState, budget: &SensingBudget) -> Result<CrbReport> {
    let j = &state.jacobian;
    let t = isk_terms(&state.g, &j.g_theta, &j.g_range)?;
    let (crb_theta, crb_range) = if t.divergent {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let scale = budget.noise_scale() / (budget.rho().norm_sqr() * t.schur_det);
        (scale * t.s, scale * t.i)
    };
    Ok(CrbReport {
        i: t.i,
        s: t.s,
        k: t.k,
        schur_det: t.schur_det,
        crb_theta,
        crb_range,
        divergent: t.divergent,
    })
}

/// Closed-form CRB_θ and CRB_r.
pub fn closed_form_crb(
    layout: &TransmitterLayout,
    rx: &ReceiverLayout,
    target: &Target,
    budget: &SensingBudget,
) -> Result<CrbReport> {
    budget.validate()?;
    let state = ObservationState::evaluate(layout, rx, target)?;
    closed_form_from_state(&state, budget)
}

/// Symmetric 2×2 matrix `[[a, b], [b, c]]`.
#[derive(Debug, Clone, Copy)]
struct Sym2 {
    a: TwoFloat,
    b: TwoFloat,
    c: TwoFloat,
}

impl Sym2 {
    fn det(&self) -> TwoFloat {
        self.a * self.c - self.b * self.b
    }

    /// Condition number after scaling to unit diagonal.
    fn scaled_condition(&self) -> f64 {
        if !(self.a.hi() > 0.0 && self.c.hi() > 0.0) {
            return f64::INFINITY;
        }
        let rho = to_f64(self.b).abs() / (to_f64(self.a) * to_f64(self.c)).sqrt();
        if rho >= 1.0 {
            f64::INFINITY
        } else {
            (1.0 + rho) / (1.0 - rho)
        }
    }
}

/// Bounds from the explicit 4×4 Fisher information of `(θ, r, κ_r, κ_i)`,
/// independent of the `i`/`s`/`k` shortcut.
pub fn fim_from_state(state: &ObservationState, budget: &SensingBudget) -> Result<CrbReport> {
    let g = &state.g;
    if !(norm_sqr(g).hi() > 0.0) {
        return Err(Error::DegenerateObservation);
    }
    let rho = DdComplex::from_c64(budget.rho());
    let amp = DdComplex::from_c64(Complex64::new(budget.amplitude(), 0.0));
    let j_amp = DdComplex::from_c64(Complex64::new(0.0, budget.amplitude()));

    let column = |v: &[Complex64], c: DdComplex| -> Vec<DdComplex> {
        v.iter().map(|&x| c.mul(DdComplex::from_c64(x))).collect()
    };
    let cols = [
        column(&state.jacobian.g_theta, rho),
        column(&state.jacobian.g_range, rho),
        column(g, amp),
        column(g, j_amp),
    ];
    let mut pi = [[TwoFloat::from(0.0); 4]; 4];
    for p in 0..4 {
        for q in p..4 {
            let v = herm_dot_dd(&cols[p], &cols[q]).re;
            pi[p][q] = v;
            pi[q][p] = v;
        }
    }

    let report = |q: Option<Sym2>| -> CrbReport {
        let (mut i, mut s, mut k, mut det) = (0.0, 0.0, 0.0, 0.0);
        let mut bounds = None;
        if let Some(q) = q {
            let d = q.det();
            let divergent = is_degenerate(d, q.a, q.c, pi[0][0], pi[1][1])
                || q.scaled_condition() > MAX_CONDITION;
            let rho2 = budget.rho().norm_sqr();
            i = to_f64(q.a) / rho2;
            s = to_f64(q.c) / rho2;
            k = to_f64(q.b) / rho2;
            det = to_f64(d) / (rho2 * rho2);
            if !divergent {
                let ns = TwoFloat::from(budget.noise_scale());
                bounds = Some((to_f64(div(ns * q.c, d)), to_f64(div(ns * q.a, d))));
            }
        }
        let (crb_theta, crb_range) = bounds.unwrap_or((f64::INFINITY, f64::INFINITY));
        CrbReport {
            i,
            s,
            k,
            schur_det: det,
            crb_theta,
            crb_range,
            divergent: bounds.is_none(),
        }
    };

    let nuisance = Sym2 {
        a: pi[2][2],
        b: pi[2][3],
        c: pi[3][3],
    };
    let nd = nuisance.det();
    if !(nd.hi() > 0.0) || nuisance.scaled_condition() > MAX_CONDITION {
        return Ok(report(None));
    }
    // Π₂₂⁻¹ = [[c, −b], [−b, a]] / det
    let inv = [
        [div(nuisance.c, nd), -div(nuisance.b, nd)],
        [-div(nuisance.b, nd), div(nuisance.a, nd)],
    ];
    let correction = |p: usize, q: usize| -> TwoFloat {
        let mut acc = TwoFloat::from(0.0);
        for (u, row) in inv.iter().enumerate() {
            for (v, &w) in row.iter().enumerate() {
                acc += pi[p][2 + u] * w * pi[q][2 + v];
            }
        }
        acc
    };
    let q = Sym2 {
        a: pi[0][0] - correction(0, 0),
        b: pi[0][1] - correction(0, 1),
        c: pi[1][1] - correction(1, 1),
    };
    Ok(report(Some(q)))
}

/// CRB_θ and CRB_r from the numerically assembled Fisher information.
pub fn numerical_fim_crb(
    layout: &TransmitterLayout,
    rx: &ReceiverLayout,
    target: &Target,
    budget: &SensingBudget,
) -> Result<CrbReport> {
    budget.validate()?;
    let state = ObservationState::evaluate(layout, rx, target)?;
    fim_from_state(&state, budget)
}
