//! Pinching-antenna placement: ULA baselines, the ensemble objective and a
//! multi-start projected pattern search.

use std::f64::consts::FRAC_PI_6;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::crb::{closed_form_from_state, SensingBudget};
use crate::scene::{ReceiverLayout, Target, TransmitterLayout, TransmitterParams};
use crate::sensitivity::{receive_response, transmit_response, ObservationState, ReceiveResponse};
use crate::{Error, Result};

/// Value charged for a divergent (or degenerate) ensemble sample.
pub const DIVERGENT_PENALTY: f64 = 1e6;
/// Minimum number of restarts of the pattern search.
pub const MIN_RESTARTS: usize = 32;
/// Smallest pattern-search step, in wavelengths.
const SEARCH_STOP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Mean √CRB_r in m.
    MeanSqrtCrbRange,
    /// Mean √CRB_θ in degrees.
    MeanSqrtCrbAngle,
    /// `w_r·mean √CRB_r + w_θ·mean √CRB_θ` (m and degrees).
    WeightedSum { range: f64, angle: f64 },
}

impl Objective {
    fn weights(&self) -> (f64, f64) {
        match *self {
            Objective::MeanSqrtCrbRange => (1.0, 0.0),
            Objective::MeanSqrtCrbAngle => (0.0, 1.0),
            Objective::WeightedSum { range, angle } => (range, angle),
        }
    }
}

/// `rows × cols` midpoint grid over `angle ∈ [−π/6, π/6]`, `range ∈ [5, 25]`.
pub fn default_ensemble() -> Vec<Target> {
    grid_ensemble((-FRAC_PI_6, FRAC_PI_6), (5.0, 25.0), 16, 16).expect("default grid is valid")
}

/// Midpoint grid with `n_angle × n_range` targets.
pub fn grid_ensemble(
    angle: (f64, f64),
    range: (f64, f64),
    n_angle: usize,
    n_range: usize,
) -> Result<Vec<Target>> {
    if n_angle == 0 || n_range == 0 {
        return Err(Error::invalid("ensemble", "grid needs at least one point per axis"));
    }
    let mid = |(lo, hi): (f64, f64), k: usize, n: usize| lo + (hi - lo) * (k as f64 + 0.5) / n as f64;
    let mut out = Vec::with_capacity(n_angle * n_range);
    for a in 0..n_angle {
        for r in 0..n_range {
            out.push(Target::new(mid(range, r, n_range), mid(angle, a, n_angle))?);
        }
    }
    Ok(out)
}

/// Placement problem for `m` PAs on one waveguide.
#[derive(Debug, Clone)]
pub struct PlacementProblem {
    params: TransmitterParams,
    m: usize,
    objective: Objective,
    budget: SensingBudget,
    rx: ReceiverLayout,
    waveguide_phase: bool,
    restarts: usize,
    ensemble: Vec<Target>,
    // receive responses do not depend on the placement
    prepared: Vec<ReceiveResponse>,
}

impl PlacementProblem {
    pub fn new(
        params: TransmitterParams,
        m: usize,
        objective: Objective,
        ensemble: Vec<Target>,
        budget: SensingBudget,
        rx: ReceiverLayout,
    ) -> Result<Self> {
        params.validate()?;
        budget.validate()?;
        if m == 0 {
            return Err(Error::invalid("m_antennas", "at least one PA is required"));
        }
        if ensemble.is_empty() {
            return Err(Error::invalid("ensemble", "at least one target is required"));
        }
        if let Objective::WeightedSum { range, angle } = objective {
            if !(range >= 0.0 && angle >= 0.0 && range + angle > 0.0) {
                return Err(Error::invalid("objective", "weights must be nonnegative and not both zero"));
            }
        }
        let need = m as f64 * params.min_spacing();
        if need > params.waveguide_length {
            return Err(Error::Infeasible(format!(
                "{m} PAs need M·λ/2 = {need:.6e} m but the waveguide is {:.6e} m long",
                params.waveguide_length
            )));
        }
        let prepared = ensemble
            .iter()
            .map(|t| receive_response(&rx, t, params.wavelength))
            .collect::<Result<_>>()?;
        Ok(PlacementProblem {
            params,
            m,
            objective,
            budget,
            rx,
            waveguide_phase: true,
            restarts: MIN_RESTARTS,
            ensemble,
            prepared,
        })
    }

    /// Number of restarts; values below [`MIN_RESTARTS`] are raised to it.
    pub fn with_restarts(mut self, restarts: usize) -> Self {
        self.restarts = restarts.max(MIN_RESTARTS);
        self
    }

    pub fn with_waveguide_phase(mut self, enabled: bool) -> Self {
        self.waveguide_phase = enabled;
        self
    }

    pub fn params(&self) -> &TransmitterParams {
        &self.params
    }

    pub fn m_antennas(&self) -> usize {
        self.m
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn ensemble(&self) -> &[Target] {
        &self.ensemble
    }

    pub fn budget(&self) -> &SensingBudget {
        &self.budget
    }

    pub fn rx(&self) -> &ReceiverLayout {
        &self.rx
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn waveguide_phase(&self) -> bool {
        self.waveguide_phase
    }

    /// Builds the layout for `positions` with this problem's transmitter.
    pub fn layout(&self, positions: Vec<f64>) -> Result<TransmitterLayout> {
        TransmitterLayout::new(positions, self.params, self.waveguide_phase)
    }
}

/// Mean over the ensemble of the selected √CRB.
pub fn evaluate_objective(layout: &TransmitterLayout, problem: &PlacementProblem) -> f64 {
    let (wr, wt) = problem.objective.weights();
    let mut sum = 0.0;
    for (target, rx) in problem.ensemble.iter().zip(&problem.prepared) {
        let tx = transmit_response(layout, target);
        let state = ObservationState::assemble(&tx, rx);
        sum += match closed_form_from_state(&state, &problem.budget) {
            Ok(rep) if !rep.divergent => {
                let mut v = 0.0;
                if wr != 0.0 {
                    v += wr * rep.sqrt_crb_range();
                }
                if wt != 0.0 {
                    v += wt * rep.sqrt_crb_theta_deg();
                }
                v
            }
            _ => (wr + wt) * DIVERGENT_PENALTY,
        };
    }
    sum / problem.ensemble.len() as f64
}

/// Number of ensemble targets whose bounds diverge for `layout`.
pub fn divergent_samples(layout: &TransmitterLayout, problem: &PlacementProblem) -> usize {
    problem
        .ensemble
        .iter()
        .zip(&problem.prepared)
        .filter(|(target, rx)| {
            let state = ObservationState::assemble(&transmit_response(layout, target), rx);
            !matches!(closed_form_from_state(&state, &problem.budget), Ok(rep) if !rep.divergent)
        })
        .count()
}

/// Centered λ/2-spaced ULA of `m` elements without in-waveguide phase.
pub fn ula_baseline(m: usize, params: TransmitterParams) -> Result<TransmitterLayout> {
    if m == 0 {
        return Err(Error::invalid("m_antennas", "at least one element is required"));
    }
    TransmitterLayout::new(compact_positions(m, params.min_spacing()), params, false)
}

fn compact_positions(m: usize, gap: f64) -> Vec<f64> {
    let c = (m as f64 - 1.0) / 2.0;
    (0..m).map(|i| (i as f64 - c) * gap).collect()
}

fn recenter(y: &mut [f64]) {
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    for v in y.iter_mut() {
        *v -= mean;
    }
}

/// Maps arbitrary coordinates onto the feasible set: sorted, gaps ≥ λ/2,
/// zero mean and inside `[−D_T/2, D_T/2]`.
///
/// After ordering and gap repair the layout is pulled towards the compact
/// centered ULA just far enough to fit the waveguide; the blend keeps every
/// gap at least λ/2 because both end points satisfy it.
pub fn project(raw: &[f64], params: &TransmitterParams) -> Vec<f64> {
    let gap = params.min_spacing();
    let half = params.waveguide_length / 2.0;
    let mut y = raw.to_vec();
    y.sort_by(f64::total_cmp);
    for i in 1..y.len() {
        if y[i] < y[i - 1] + gap {
            y[i] = y[i - 1] + gap;
        }
    }
    recenter(&mut y);
    let u = compact_positions(y.len(), gap);
    let mut c: f64 = 1.0;
    for (&yi, &ui) in y.iter().zip(&u) {
        if yi.abs() > half {
            // |u + c(y − u)| ≤ half with |u| ≤ half
            let bound = if yi > ui { half - ui } else { half + ui };
            c = c.min(bound / (yi - ui).abs());
        }
    }
    if c < 1.0 {
        let c = c.max(0.0);
        for (yi, &ui) in y.iter_mut().zip(&u) {
            *yi = ui + c * (*yi - ui);
        }
        recenter(&mut y);
    }
    y
}

/// Sorted uniform draw over the waveguide followed by [`project`].
pub fn random_feasible<R: Rng + ?Sized>(rng: &mut R, m: usize, params: &TransmitterParams) -> Vec<f64> {
    let half = params.waveguide_length / 2.0;
    let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(-half..=half)).collect();
    project(&raw, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementResult {
    /// Optimized, centered y-coordinates in m.
    pub positions: Vec<f64>,
    pub objective_value: f64,
    /// Objective evaluations summed over all restarts.
    pub iterations: usize,
    pub restarts_used: usize,
    /// Final objective of each restart, in restart order.
    pub restart_values: Vec<f64>,
}

impl PlacementResult {
    /// Best objective after each restart.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.restart_values
            .iter()
            .scan(f64::INFINITY, |best, &v| {
                *best = best.min(v);
                Some(*best)
            })
            .collect()
    }
}

struct RestartOutcome {
    positions: Vec<f64>,
    value: f64,
    evaluations: usize,
}

fn pattern_search(problem: &PlacementProblem, start: Vec<f64>, initial_step: f64, min_step: f64) -> Result<RestartOutcome> {
    let params = &problem.params;
    // positions are canonicalized through the layout constructor so that a
    // reloaded result reproduces them exactly
    let eval = |y: Vec<f64>| -> Result<(Vec<f64>, f64)> {
        let layout = problem.layout(y)?;
        let v = evaluate_objective(&layout, problem);
        Ok((layout.positions().to_vec(), v))
    };
    let (mut best, mut best_value) = eval(project(&start, params))?;
    let mut evaluations = 1;
    let mut step = initial_step;
    while step >= min_step {
        let mut improved = false;
        for i in 0..best.len() {
            for dir in [1.0, -1.0] {
                let mut trial = best.clone();
                trial[i] += dir * step;
                let trial = project(&trial, params);
                if trial == best {
                    continue;
                }
                let (trial, v) = eval(trial)?;
                evaluations += 1;
                if v < best_value {
                    best = trial;
                    best_value = v;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    Ok(RestartOutcome {
        positions: best,
        value: best_value,
        evaluations,
    })
}

/// Multi-start pattern search. Restart `k` draws its start from the ChaCha8
/// stream `k` of `seed` with initial step D_T/10. Restart 0 instead searches
/// locally around the compact λ/2-spaced layout, starting at step λ/2.
/// Ties go to the lowest restart index.
pub fn optimize_placement(problem: &PlacementProblem, seed: u64) -> Result<PlacementResult> {
    let params = problem.params;
    let outcomes: Vec<RestartOutcome> = (0..problem.restarts)
        .into_par_iter()
        .map(|k| {
            let (start, step) = if k == 0 {
                (compact_positions(problem.m, params.min_spacing()), params.min_spacing())
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                (random_feasible(&mut rng, problem.m, &params), params.waveguide_length / 10.0)
            };
            pattern_search(problem, start, step, params.wavelength * SEARCH_STOP)
        })
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (k, o) in outcomes.iter().enumerate() {
        if o.value < outcomes[best].value {
            best = k;
        }
    }
    Ok(PlacementResult {
        positions: outcomes[best].positions.clone(),
        objective_value: outcomes[best].value,
        iterations: outcomes.iter().map(|o| o.evaluations).sum(),
        restarts_used: outcomes.len(),
        restart_values: outcomes.iter().map(|o| o.value).collect(),
    })
}
