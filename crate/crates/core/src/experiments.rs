//! Monte Carlo sweeps over the number of receive antennas, slope fits and
//! the plane-wave degeneracy study.

use std::f64::consts::FRAC_PI_6;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::crb::{closed_form_from_state, CrbReport, SensingBudget};
use crate::placement::{grid_ensemble, optimize_placement, ula_baseline, Objective, PlacementProblem, MIN_RESTARTS};
use crate::scene::{rx_center_range_angle, ReceiverLayout, ReceiverMode, Target, TransmitterLayout, TransmitterParams};
use crate::sensitivity::{receive_response, transmit_response, ObservationState};
use crate::{Error, Result};

/// Default number of receive antennas used while optimizing a placement.
pub const DESIGN_RX_ELEMENTS: usize = 16;
/// Default target grid (angle × range) of the placement objective.
pub const DESIGN_GRID: (usize, usize) = (16, 16);
pub const DEFAULT_SAMPLES: usize = 2048;
/// Samples per interval L of the calibrated budget (T_p = 1 ms at 10 MHz).
pub const CALIBRATED_TIME_BANDWIDTH: f64 = 1e4;
/// |κ| of the calibrated budget.
pub const CALIBRATED_KAPPA_ABS: f64 = 1e8;
pub const DEFAULT_N_VALUES: [usize; 6] = [2, 4, 8, 16, 32, 64];

/// Default budget with L and |κ| replaced by the calibrated values.
pub fn calibrated_budget() -> SensingBudget {
    SensingBudget::default()
        .with_time_bandwidth(CALIBRATED_TIME_BANDWIDTH)
        .with_kappa(num_complex::Complex64::new(CALIBRATED_KAPPA_ABS, 0.0))
}

/// Optimize `m` PAs for `objective` over a midpoint grid of the sweep's
/// target region, with a receiver of `rx_elements` antennas.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementDirective {
    pub params: TransmitterParams,
    pub m: usize,
    pub objective: Objective,
    pub restarts: usize,
    pub rx_elements: usize,
    pub grid: (usize, usize),
    pub waveguide_phase: bool,
}

impl PlacementDirective {
    pub fn new(params: TransmitterParams, m: usize) -> Self {
        PlacementDirective {
            params,
            m,
            objective: Objective::MeanSqrtCrbRange,
            restarts: MIN_RESTARTS,
            rx_elements: DESIGN_RX_ELEMENTS,
            grid: DESIGN_GRID,
            waveguide_phase: true,
        }
    }

    /// The placement problem posed by this directive for a receiver template
    /// and a target region.
    pub fn problem(&self, rx: &ReceiverLayout, targets: &TargetDistribution, budget: SensingBudget) -> Result<PlacementProblem> {
        let ensemble = grid_ensemble(targets.angle, targets.range, self.grid.0, self.grid.1)?;
        Ok(PlacementProblem::new(self.params, self.m, self.objective, ensemble, budget, rx.with_elements(self.rx_elements)?)?
            .with_restarts(self.restarts)
            .with_waveguide_phase(self.waveguide_phase))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransmitterSource {
    Layout(TransmitterLayout),
    Optimize(PlacementDirective),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTransmitter {
    pub label: String,
    pub source: TransmitterSource,
}

/// Uniform target distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetDistribution {
    /// Angle bounds in rad.
    pub angle: (f64, f64),
    /// Range bounds in m.
    pub range: (f64, f64),
}

impl Default for TargetDistribution {
    fn default() -> Self {
        TargetDistribution {
            angle: (-FRAC_PI_6, FRAC_PI_6),
            range: (5.0, 25.0),
        }
    }
}

impl TargetDistribution {
    pub fn validate(&self) -> Result<()> {
        let (a0, a1) = self.angle;
        let (r0, r1) = self.range;
        if !(a0.is_finite() && a1.is_finite() && a0 <= a1 && a0 > -std::f64::consts::FRAC_PI_2 && a1 < std::f64::consts::FRAC_PI_2) {
            return Err(Error::invalid("angle", "bounds must satisfy −π/2 < lo ≤ hi < π/2"));
        }
        if !(r0 > 0.0 && r0 <= r1 && r1.is_finite()) {
            return Err(Error::invalid("range", "bounds must satisfy 0 < lo ≤ hi"));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Target> {
        let angle = rng.gen_range(self.angle.0..=self.angle.1);
        let range = rng.gen_range(self.range.0..=self.range.1);
        Target::new(range, angle)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub n_values: Vec<usize>,
    pub transmitters: Vec<LabeledTransmitter>,
    pub targets: TargetDistribution,
    pub samples: usize,
    pub seed: u64,
    pub budget: SensingBudget,
    /// Receiver template; its element count is replaced by each N.
    pub rx: ReceiverLayout,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::invalid("n_values", "at least one value is required"));
        }
        if self.n_values.contains(&0) {
            return Err(Error::invalid("n_values", "every N must be at least 1"));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_values", "must be strictly ascending"));
        }
        if self.samples == 0 {
            return Err(Error::invalid("samples", "must be at least 1"));
        }
        if self.transmitters.is_empty() {
            return Err(Error::invalid("transmitters", "at least one transmitter is required"));
        }
        for (i, t) in self.transmitters.iter().enumerate() {
            if t.label.is_empty() || t.label.contains([',', '"', '\n', '/', '\\']) {
                return Err(Error::invalid("label", format!("label {:?} must be non-empty without , \" / \\ or newlines", t.label)));
            }
            if self.transmitters[..i].iter().any(|o| o.label == t.label) {
                return Err(Error::invalid("label", format!("duplicate label {:?}", t.label)));
            }
        }
        self.targets.validate()?;
        self.budget.validate()
    }
}

/// PAS and ULA transmitters with M ∈ {4, 8}, labelled `pas_m4`, `pas_m8`,
/// `ula_m4`, `ula_m8`.
pub fn standard_transmitters(params: TransmitterParams) -> Result<Vec<LabeledTransmitter>> {
    let mut out = Vec::new();
    for m in [4, 8] {
        out.push(LabeledTransmitter {
            label: format!("pas_m{m}"),
            source: TransmitterSource::Optimize(PlacementDirective::new(params, m)),
        });
    }
    for m in [4, 8] {
        out.push(LabeledTransmitter {
            label: format!("ula_m{m}"),
            source: TransmitterSource::Layout(ula_baseline(m, params)?),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub label: String,
    pub n: usize,
    /// Mean √CRB_r in m over non-divergent samples.
    pub mean_sqrt_crb_range: f64,
    /// Mean √CRB_θ in degrees over non-divergent samples.
    pub mean_sqrt_crb_theta_deg: f64,
    pub divergent_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn labels(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.label.as_str()) {
                out.push(&r.label);
            }
        }
        out
    }

    pub fn rows_for<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.label == label)
    }

    pub fn row(&self, label: &str, n: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.label == label && r.n == n)
    }
}

/// A sweep cell with the standard errors of its means.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub row: SweepRow,
    pub se_range: f64,
    pub se_theta_deg: f64,
    pub finite_samples: usize,
}

/// Means are reported to 12 significant digits, the precision of the CSV
/// output, so that a written result reads back identically.
pub fn quantize(x: f64) -> f64 {
    if x.is_finite() {
        format!("{x:.11e}").parse().expect("formatted float parses")
    } else {
        x
    }
}

/// Resolves every transmitter to a layout, optimizing placement directives
/// with the sweep's seed.
pub fn resolve_transmitters(spec: &SweepSpec) -> Result<Vec<(String, TransmitterLayout)>> {
    spec.transmitters
        .iter()
        .map(|t| {
            let layout = match &t.source {
                TransmitterSource::Layout(l) => l.clone(),
                TransmitterSource::Optimize(d) => optimized_layout(d, spec)?,
            };
            Ok((t.label.clone(), layout))
        })
        .collect()
}

fn optimized_layout(d: &PlacementDirective, spec: &SweepSpec) -> Result<TransmitterLayout> {
    let problem = d.problem(&spec.rx, &spec.targets, spec.budget)?;
    let result = optimize_placement(&problem, spec.seed)?;
    problem.layout(result.positions)
}

struct Accumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    fn new() -> Self {
        Accumulator { n: 0, mean: 0.0, m2: 0.0 }
    }

    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::INFINITY
        } else {
            self.mean
        }
    }

    fn standard_error(&self) -> f64 {
        match self.n {
            0 => f64::INFINITY,
            1 => 0.0,
            n => (self.m2 / (n - 1) as f64 / n as f64).sqrt(),
        }
    }
}

fn sample_report(layout: &TransmitterLayout, rx: &ReceiverLayout, target: &Target, budget: &SensingBudget) -> Option<CrbReport> {
    let r = receive_response(rx, target, layout.wavelength()).ok()?;
    let state = ObservationState::assemble(&transmit_response(layout, target), &r);
    closed_form_from_state(&state, budget).ok().filter(|rep| !rep.divergent)
}

fn run_cell(
    label: &str,
    layout: &TransmitterLayout,
    n: usize,
    spec: &SweepSpec,
) -> Result<SweepCell> {
    let rx = spec.rx.with_elements(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (mut range, mut theta) = (Accumulator::new(), Accumulator::new());
    for _ in 0..spec.samples {
        let target = spec.targets.sample(&mut rng)?;
        if let Some(rep) = sample_report(layout, &rx, &target, &spec.budget) {
            range.push(rep.sqrt_crb_range());
            theta.push(rep.sqrt_crb_theta_deg());
        }
    }
    let divergent = spec.samples - range.n;
    Ok(SweepCell {
        row: SweepRow {
            label: label.to_string(),
            n,
            mean_sqrt_crb_range: quantize(range.mean()),
            mean_sqrt_crb_theta_deg: quantize(theta.mean()),
            divergent_fraction: quantize(divergent as f64 / spec.samples as f64),
        },
        se_range: range.standard_error(),
        se_theta_deg: theta.standard_error(),
        finite_samples: range.n,
    })
}

/// Sweep cells for already resolved transmitters, ordered by transmitter
/// and then by N. Every cell draws the same targets from a ChaCha8 stream
/// seeded with the sweep seed, so differences between cells are not
/// sampling noise.
pub fn run_cells(spec: &SweepSpec, layouts: &[(String, TransmitterLayout)]) -> Result<Vec<SweepCell>> {
    spec.validate()?;
    let jobs: Vec<(&str, &TransmitterLayout, usize)> = layouts
        .iter()
        .flat_map(|(label, layout)| spec.n_values.iter().map(move |&n| (label.as_str(), layout, n)))
        .collect();
    jobs.into_par_iter()
        .map(|(label, layout, n)| run_cell(label, layout, n, spec))
        .collect()
}

pub fn run_sweep_cells(spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    spec.validate()?;
    let layouts = resolve_transmitters(spec)?;
    run_cells(spec, &layouts)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    Ok(SweepResult {
        rows: run_sweep_cells(spec)?.into_iter().map(|c| c.row).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Range,
    Angle,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "slope needs at least 3 finite points, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all N values are equal".into()));
    }
    Ok(sxy / sxx)
}

/// Slope of the mean √CRB of `label` against N on log-log axes.
pub fn estimate_slope(result: &SweepResult, label: &str, metric: Metric) -> Result<f64> {
    let pts: Vec<(f64, f64)> = result
        .rows_for(label)
        .map(|r| {
            let y = match metric {
                Metric::Range => r.mean_sqrt_crb_range,
                Metric::Angle => r.mean_sqrt_crb_theta_deg,
            };
            (r.n as f64, y)
        })
        .collect();
    log_log_slope(&pts).map_err(|e| match e {
        Error::InsufficientData(msg) => Error::InsufficientData(format!("{label}: {msg}")),
        other => other,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyRow {
    /// Distance from the target to the receiver center in m.
    pub l: f64,
    /// Target range from the PA centroid in m.
    pub range: f64,
    pub mode: ReceiverMode,
    pub report: CrbReport,
}

/// Range along `bearing` at which the target is `l` from the receiver
/// center `(R, 0)`: `r = R cosθ + √(l² − R² sin²θ)`.
pub fn range_for_rx_distance(l: f64, bearing: f64, baseline: f64) -> Result<f64> {
    let disc = l * l - (baseline * bearing.sin()).powi(2);
    if !(l > 0.0) || disc < 0.0 {
        return Err(Error::invalid(
            "l",
            format!("no target on bearing {bearing} rad is {l} m from the receiver"),
        ));
    }
    let r = baseline * bearing.cos() + disc.sqrt();
    if !(r > 0.0) {
        return Err(Error::invalid("l", format!("{l} m is not reachable on bearing {bearing} rad")));
    }
    Ok(r)
}

/// Bounds in both receiver modes for targets on a fixed bearing at the given
/// receiver distances.
pub fn degeneracy_study(
    l_values: &[f64],
    bearing: f64,
    layout: &TransmitterLayout,
    rx: &ReceiverLayout,
    budget: &SensingBudget,
) -> Result<Vec<DegeneracyRow>> {
    budget.validate()?;
    let mut rows = Vec::with_capacity(2 * l_values.len());
    for &l in l_values {
        let range = range_for_rx_distance(l, bearing, rx.baseline())?;
        let target = Target::new(range, bearing)?;
        debug_assert!((rx_center_range_angle(rx, &target)?.0 - l).abs() <= 1e-9 * l);
        for mode in [ReceiverMode::Exact, ReceiverMode::PlaneWave] {
            let state = ObservationState::evaluate(layout, &rx.with_mode(mode), &target)?;
            rows.push(DegeneracyRow {
                l,
                range,
                mode,
                report: closed_form_from_state(&state, budget)?,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> TransmitterParams {
        TransmitterParams::from_carrier(27e9, 1.4, 10.0).unwrap()
    }

    fn rx() -> ReceiverLayout {
        let p = params();
        ReceiverLayout::new(2, p.wavelength / 2.0, 30.0, p.ref_gain, ReceiverMode::Exact).unwrap()
    }

    fn spec(transmitters: Vec<LabeledTransmitter>, samples: usize) -> SweepSpec {
        SweepSpec {
            n_values: vec![2, 4, 8],
            transmitters,
            targets: TargetDistribution::default(),
            samples,
            seed: 5,
            budget: SensingBudget::default(),
            rx: rx(),
        }
    }

    fn ula(m: usize) -> LabeledTransmitter {
        LabeledTransmitter {
            label: format!("ula_m{m}"),
            source: TransmitterSource::Layout(ula_baseline(m, params()).unwrap()),
        }
    }

    #[test]
    fn slope_of_constructed_rows() {
        let rows = |f: &dyn Fn(f64) -> f64| SweepResult {
            rows: DEFAULT_N_VALUES
                .iter()
                .map(|&n| SweepRow {
                    label: "x".into(),
                    n,
                    mean_sqrt_crb_range: f(n as f64),
                    mean_sqrt_crb_theta_deg: 3.0,
                    divergent_fraction: 0.0,
                })
                .collect(),
        };
        let inv = rows(&|n| 7.0 / n);
        assert!((estimate_slope(&inv, "x", Metric::Range).unwrap() + 1.0).abs() < 1e-12);
        assert!(estimate_slope(&inv, "x", Metric::Angle).unwrap().abs() < 1e-12);
        assert!(matches!(estimate_slope(&inv, "y", Metric::Range), Err(Error::InsufficientData(_))));
        let mut short = inv.clone();
        short.rows.truncate(2);
        assert!(matches!(estimate_slope(&short, "x", Metric::Range), Err(Error::InsufficientData(_))));
        short.rows[1].mean_sqrt_crb_range = f64::INFINITY;
        assert!(log_log_slope(&[(1.0, 1.0), (2.0, f64::INFINITY), (4.0, 2.0)]).is_err());
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let s = spec(vec![ula(4), ula(8)], 16);
        let a = run_sweep(&s).unwrap();
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a.labels(), vec!["ula_m4", "ula_m8"]);
        assert_eq!(a, run_sweep(&s).unwrap());
        for r in &a.rows {
            assert!(r.mean_sqrt_crb_range.is_finite() && r.mean_sqrt_crb_range > 0.0);
            assert_eq!(r.divergent_fraction, 0.0);
        }
    }

    #[test]
    fn cells_do_not_depend_on_other_cells() {
        let both = run_sweep(&spec(vec![ula(4), ula(8)], 8)).unwrap();
        let one = run_sweep(&spec(vec![ula(8)], 8)).unwrap();
        for r in &one.rows {
            assert_eq!(Some(r), both.row("ula_m8", r.n));
        }
    }

    #[test]
    fn plane_wave_cells_are_all_divergent() {
        let mut s = spec(vec![ula(4)], 8);
        s.rx = s.rx.with_mode(ReceiverMode::PlaneWave);
        for r in run_sweep(&s).unwrap().rows {
            assert_eq!(r.divergent_fraction, 1.0);
            assert!(r.mean_sqrt_crb_range.is_infinite());
        }
    }

    #[test]
    fn invalid_specs() {
        let mut s = spec(vec![ula(4)], 0);
        assert!(s.validate().is_err());
        s.samples = 1;
        s.n_values = vec![4, 2];
        assert!(s.validate().is_err());
        s.n_values = vec![2];
        s.transmitters.push(ula(4));
        assert!(s.validate().is_err());
    }

    #[test]
    fn rx_distance_inversion() {
        let rx = rx();
        for (l, theta) in [(20.0, 0.3), (200.0, -0.5), (30.0, 0.0)] {
            let r = range_for_rx_distance(l, theta, 30.0).unwrap();
            let t = Target::new(r, theta).unwrap();
            let (got, _) = rx_center_range_angle(&rx, &t).unwrap();
            assert!((got - l).abs() < 1e-10 * l);
        }
        assert!(range_for_rx_distance(5.0, 0.5, 30.0).is_err());
    }

    #[test]
    fn degeneracy_rows() {
        let p = params();
        let layout = ula_baseline(4, p).unwrap().clone();
        let rx = rx().with_elements(16).unwrap();
        let rows = degeneracy_study(&[20.0, 200.0], 0.2, &layout, &rx, &SensingBudget::default()).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            match r.mode {
                ReceiverMode::Exact => assert!(!r.report.divergent && r.report.crb_range.is_finite()),
                ReceiverMode::PlaneWave => assert!(r.report.divergent),
            }
        }
        assert!(rows[2].report.schur_det < rows[0].report.schur_det);
    }
}
