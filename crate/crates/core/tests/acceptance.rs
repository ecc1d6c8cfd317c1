//! One PASS/FAIL line per acceptance criterion. Exits nonzero only when a
//! criterion outside [`KNOWN_FAILURES`] fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use num_complex::Complex64;
use pas_crb::config::RunConfig;
use pas_crb::crb::{closed_form_crb, isk_terms, RESIDUAL_FLOOR};
use pas_crb::experiments::{
    calibrated_budget, degeneracy_study, estimate_slope, resolve_transmitters, run_cells, Metric, SweepResult,
    CALIBRATED_KAPPA_ABS, CALIBRATED_TIME_BANDWIDTH,
};
use pas_crb::placement::{evaluate_objective, optimize_placement, Objective, PlacementProblem};
use pas_crb::scene::{ReceiverMode, TransmitterLayout, TransmitterParams};
use pas_crb::sensitivity::ObservationState;
use pas_crb::validation::{run_validation, ConfigurationSpace, ValidationSpec, FD_TOLERANCE, FIM_TOLERANCE};

/// Criteria that fail with the reference model; see the README.
const KNOWN_FAILURES: [u32; 2] = [3, 4];

struct Line {
    id: u32,
    pass: bool,
}

fn report(lines: &mut Vec<Line>, id: u32, pass: bool, text: String) {
    println!("{} criterion {id}: {text}", if pass { "PASS" } else { "FAIL" });
    lines.push(Line { id, pass });
}

fn secs(d: Duration) -> String {
    format!("{:.2} s", d.as_secs_f64())
}

fn criteria_1_2(lines: &mut Vec<Line>) {
    let space = ConfigurationSpace {
        plane_wave_fraction: 0.25,
        ..ConfigurationSpace::standard()
    };
    let spec = ValidationSpec {
        configurations: 1000,
        seed: 1,
        space,
        budget: budget(),
        fault: None,
    };
    let start = Instant::now();
    let r = run_validation(&spec).unwrap();
    let t = start.elapsed();
    report(
        lines,
        1,
        r.fd_ok() && t < Duration::from_secs(10),
        format!(
            "derivatives vs finite differences over {} configurations: max {:.2e} ({}) <= {FD_TOLERANCE:e}; {} (< 10 s, shared with 2)",
            r.configurations,
            r.fd_max_error,
            r.fd_worst_family,
            secs(t)
        ),
    );
    report(
        lines,
        2,
        r.fim_ok() && r.fim_compared >= 500 && t < Duration::from_secs(10),
        format!(
            "closed form vs Fisher matrix over {} non-divergent configurations (>= 500): max {:.2e} <= {FIM_TOLERANCE:e}; {} (< 10 s)",
            r.fim_compared,
            r.fim_max_error,
            secs(t)
        ),
    );
}

fn audit_layout(l: &TransmitterLayout) -> bool {
    let y = l.positions();
    let p = l.params();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    y.windows(2).all(|w| w[1] - w[0] >= p.wavelength / 2.0 - 1e-12)
        && y.iter().all(|v| v.abs() <= p.waveguide_length / 2.0 + 1e-12)
        && mean.abs() <= 1e-12
}

/// Runs the default sweep; returns the optimized layouts for the audit.
fn criteria_3_4(lines: &mut Vec<Line>) -> Vec<TransmitterLayout> {
    let spec = RunConfig::default().sweep_spec().unwrap();
    let start = Instant::now();
    let layouts = resolve_transmitters(&spec).unwrap();
    let cells = run_cells(&spec, &layouts).unwrap();
    let t = start.elapsed();
    let result = SweepResult {
        rows: cells.into_iter().map(|c| c.row).collect(),
    };

    let mut slopes = Vec::new();
    let mut in_band = true;
    for label in ["pas_m4", "pas_m8", "ula_m4", "ula_m8"] {
        for (metric, name) in [(Metric::Range, "r"), (Metric::Angle, "θ")] {
            let s = estimate_slope(&result, label, metric).unwrap();
            in_band &= (-1.05..=-0.95).contains(&s);
            slopes.push(format!("{label}/{name} {s:.3}"));
        }
    }
    report(
        lines,
        3,
        in_band && t < Duration::from_secs(120),
        format!(
            "log-log slopes in [-1.05, -0.95]: {}; sweep {} at {} samples/cell (< 120 s)",
            slopes.join(", "),
            secs(t),
            spec.samples
        ),
    );

    let mean = |label: &str, n| result.row(label, n).unwrap().mean_sqrt_crb_range;
    let mut violations = Vec::new();
    for &n in &spec.n_values {
        for (pas, ula) in [("pas_m4", "ula_m4"), ("pas_m8", "ula_m8"), ("pas_m4", "ula_m8")] {
            let (a, b) = (mean(pas, n), mean(ula, n));
            if !(a < b) {
                violations.push(format!("N={n} {pas} {a:.4e} vs {ula} {b:.4e}"));
            }
        }
    }
    let ratios: Vec<String> = [2, 64]
        .iter()
        .map(|&n| format!("N={n} pas_m4/ula_m8 {:.3}", mean("pas_m4", n) / mean("ula_m8", n)))
        .collect();
    report(
        lines,
        4,
        violations.is_empty(),
        format!(
            "PAS mean √CRB_r strictly below same-M ULA and pas_m4 below ula_m8 at every N; {}; violations: [{}]",
            ratios.join(", "),
            violations.join("; ")
        ),
    );

    // √CRB scales as 1/(L|κ|), so the calibrated figure follows from the sweep
    let cal = result.row("pas_m8", 32).unwrap().mean_sqrt_crb_theta_deg
        / (CALIBRATED_TIME_BANDWIDTH * CALIBRATED_KAPPA_ABS);
    println!(
        "info: pas_m8 at N=32 with L={CALIBRATED_TIME_BANDWIDTH:e}, |κ|={CALIBRATED_KAPPA_ABS:e}: mean √CRB_θ {cal:.3e}°"
    );

    layouts
        .into_iter()
        .filter(|(label, _)| label.starts_with("pas"))
        .map(|(_, l)| l)
        .collect()
}

fn criterion_5(lines: &mut Vec<Line>) {
    let mut worst: f64 = 0.0;
    let mut pw_ok = true;
    let mut exact_ok = true;
    let mut checked = 0;
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
    for seed in 0..500 {
        let c = scene(seed);
        let rx = c.rx.with_mode(ReceiverMode::PlaneWave);
        let st = ObservationState::evaluate(&c.layout, &rx, &c.target).unwrap();
        let j = &st.jacobian;
        let t = isk_terms(&st.g, &j.g_theta, &j.g_range).unwrap();
        let (tt, rr) = (norm(&j.g_theta), norm(&j.g_range));
        if tt == 0.0 || rr == 0.0 {
            continue;
        }
        worst = worst.max(t.i.abs() / tt).max(t.s.abs() / rr).max(t.k.abs() / (tt * rr).sqrt());
        let r = closed_form_crb(&c.layout, &rx, &c.target, &budget()).unwrap();
        pw_ok &= r.divergent && r.crb_theta.is_infinite() && r.crb_range.is_infinite();
        checked += 1;
    }
    let ls: Vec<f64> = (0..=18).map(|k| 20.0 + 10.0 * k as f64).collect();
    let layouts = [
        layout(&[-0.278998023396, 0.0735095852107, 0.0960672883972, 0.109421149788], true),
        pas_crb::placement::ula_baseline(8, params()).unwrap(),
    ];
    for l in &layouts {
        for bearing in [-0.4, 0.0, 0.25] {
            for row in degeneracy_study(&ls, bearing, l, &rx(32, ReceiverMode::Exact), &budget()).unwrap() {
                match row.mode {
                    ReceiverMode::Exact => {
                        exact_ok &= !row.report.divergent && row.report.crb_range.is_finite() && row.report.crb_theta.is_finite()
                    }
                    ReceiverMode::PlaneWave => pw_ok &= row.report.divergent,
                }
            }
        }
    }
    report(
        lines,
        5,
        pw_ok && exact_ok && worst <= 1e-12,
        format!(
            "plane-wave i, s, k over {checked} scenes: max scaled {worst:.2e} <= 1e-12, all divergent: {pw_ok}; exact mode finite for l in [20, 200] m: {exact_ok}"
        ),
    );
}

fn criterion_6(lines: &mut Vec<Line>, placed: &[TransmitterLayout]) {
    let b = budget();
    let (mut scaling, mut phase, mut mirror, mut monotone) = (true, true, true, true);
    let norm = |v: &[Complex64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>();
    let scenes = 300;
    for seed in 0..scenes {
        let c = scene(seed);
        let a = closed_form_crb(&c.layout, &c.rx, &c.target, &b).unwrap();
        if a.divergent {
            continue;
        }
        // at fixed B, L and T_p both grow by 11
        let f = 7.0 * 11.0 * 11.0;
        let s = closed_form_crb(
            &c.layout,
            &c.rx,
            &c.target,
            &b.with_power(b.power * 7.0).with_time_bandwidth(b.time_bandwidth() * 11.0),
        )
        .unwrap();
        scaling &= rel(s.crb_theta * f, a.crb_theta) < 1e-12 && rel(s.crb_range * f, a.crb_range) < 1e-12;

        let p = closed_form_crb(&c.layout, &c.rx, &c.target, &b.with_kappa(Complex64::from_polar(1.0, 2.1))).unwrap();
        phase &= rel(p.crb_theta, a.crb_theta) < 1e-12 && rel(p.crb_range, a.crb_range) < 1e-12;

        let m = closed_form_crb(&c.layout.mirrored(), &c.rx, &c.target.mirrored(), &b).unwrap();
        let st = ObservationState::evaluate(&c.layout, &c.rx, &c.target).unwrap();
        let (tt, rr) = (norm(&st.jacobian.g_theta), norm(&st.jacobian.g_range));
        let terms = (m.i - a.i).abs() <= 1e-10 * a.i + RESIDUAL_FLOOR * tt
            && (m.s - a.s).abs() <= 1e-10 * a.s + RESIDUAL_FLOOR * rr
            && (m.k + a.k).abs() <= 1e-10 * (a.i * a.s).max(0.0).sqrt() + RESIDUAL_FLOOR * (tt * rr).sqrt();
        let e = rel(m.i, a.i).max(rel(m.s, a.s)).max((m.k + a.k).abs() / (a.i * a.s).sqrt());
        let tol = 1e-10 + 8.0 * e * a.i * a.s / a.schur_det;
        mirror &= terms && !m.divergent && rel(m.crb_theta, a.crb_theta) < tol && rel(m.crb_range, a.crb_range) < tol;

        let big = closed_form_crb(&c.layout, &c.rx.with_elements(c.rx.n_elements() + 2).unwrap(), &c.target, &b).unwrap();
        monotone &= !big.divergent
            && big.crb_theta <= a.crb_theta * (1.0 + 1e-9)
            && big.crb_range <= a.crb_range * (1.0 + 1e-9);
    }
    let audit = placed.iter().all(audit_layout);
    report(
        lines,
        6,
        scaling && phase && mirror && monotone && audit,
        format!(
            "over {scenes} scenes: P·T_p·L scaling {scaling}, κ-phase invariance {phase}, mirror symmetry {mirror}, N → N+2 monotone {monotone}; constraint audit of {} optimized layouts {audit} (full property tests run under cargo test)",
            placed.len()
        ),
    );
}

/// Best objective over layouts whose separations lie on a grid of `step`.
fn grid_best(problem: &PlacementProblem, m: usize, step: f64) -> f64 {
    let p: &TransmitterParams = problem.params();
    let mut best = f64::INFINITY;
    match m {
        1 => {
            let half = p.waveguide_length / 2.0;
            let mut k = 0;
            while -half + k as f64 * step <= half {
                let y = -half + k as f64 * step;
                best = best.min(evaluate_objective(&problem.layout(vec![y]).unwrap(), problem));
                k += 1;
            }
        }
        2 => {
            let mut k = (p.wavelength / 2.0 / step).ceil() as usize;
            while k as f64 * step <= p.waveguide_length {
                let d = k as f64 * step;
                best = best.min(evaluate_objective(&problem.layout(vec![-d / 2.0, d / 2.0]).unwrap(), problem));
                k += 1;
            }
        }
        _ => unreachable!(),
    }
    best
}

fn criterion_7(lines: &mut Vec<Line>) {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    let cases = [
        (1, Objective::MeanSqrtCrbRange, target(15.0, 0.0), 16),
        (2, Objective::MeanSqrtCrbRange, target(15.0, 0.0), 16),
        (2, Objective::MeanSqrtCrbAngle, target(10.0, 20.0), 8),
    ];
    for (m, objective, t, n) in cases {
        let problem = PlacementProblem::new(params(), m, objective, vec![t], calibrated_budget(), rx(n, ReceiverMode::Exact)).unwrap();
        let r = optimize_placement(&problem, 3).unwrap();
        let grid = grid_best(&problem, m, params().wavelength / 4.0);
        let pass = r.objective_value <= grid + 1e-9 && audit_layout(&problem.layout(r.positions).unwrap());
        ok &= pass;
        parts.push(format!("M={m} {objective:?}: optimizer {:.6e} grid {grid:.6e}", r.objective_value));
    }
    let t = start.elapsed();
    report(
        lines,
        7,
        ok && t < Duration::from_secs(60),
        format!("objective <= λ/4-grid best + 1e-9: {}; {} (< 60 s)", parts.join(", "), secs(t)),
    );
}

fn main() {
    let mut lines = Vec::new();
    criteria_1_2(&mut lines);
    let placed = criteria_3_4(&mut lines);
    criterion_5(&mut lines);
    criterion_6(&mut lines, &placed);
    criterion_7(&mut lines);
    let passed = lines.iter().filter(|l| l.pass).count();
    println!("{passed}/{} criteria pass", lines.len());
    let unexpected: Vec<u32> = lines
        .iter()
        .filter(|l| !l.pass && !KNOWN_FAILURES.contains(&l.id))
        .map(|l| l.id)
        .collect();
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
