use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use pas_crb::config::{ReportFormat, RunConfig, RxMode, TxKind};
use pas_crb::crb::{closed_form_crb, CrbReport};
use pas_crb::experiments::{estimate_slope, resolve_transmitters, run_cells, Metric, SweepResult, TransmitterSource};
use pas_crb::output::{format_number, load_placement, placement_text, write_atomic, write_sweep, PlacementMetadata};
use pas_crb::placement::{divergent_samples, optimize_placement};
use pas_crb::scene::{delay_condition_holds, TransmitterLayout};
use pas_crb::validation::{run_validation, Fault, FD_TOLERANCE, FIM_TOLERANCE};
use pas_crb::Error;

const EXIT_TOLERANCE: u8 = 1;
const EXIT_INVALID: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "pas-crb", version, about = "Range/angle Cramér-Rao bounds for pinching-antenna sensing")]
struct Cli {
    /// Worker threads for sweeps, placement restarts and validation.
    #[arg(long, global = true, env = "PAS_CRB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Bounds for a single target.
    Crb(CrbArgs),
    /// Monte Carlo sweep over the number of receive antennas.
    Sweep(SweepArgs),
    /// Optimize PA positions and write a placement file.
    Optimize(OptimizeArgs),
    /// Finite-difference and Fisher-matrix cross-checks.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum RxModeArg {
    Exact,
    PlaneWave,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are used for missing keys.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Carrier frequency in GHz.
    #[arg(long, allow_negative_numbers = true)]
    freq: Option<f64>,
    #[arg(long, value_enum)]
    rx_mode: Option<RxModeArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, short)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CrbArgs {
    #[command(flatten)]
    common: Common,
    /// Target range in m.
    #[arg(long, allow_negative_numbers = true)]
    range: Option<f64>,
    /// Target angle in degrees.
    #[arg(long, allow_negative_numbers = true)]
    angle: Option<f64>,
    /// Receive antennas.
    #[arg(long)]
    rx_elements: Option<usize>,
    /// Use the layout stored in a placement file.
    #[arg(long)]
    placement: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Monte Carlo samples per cell.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args)]
struct OptimizeArgs {
    #[command(flatten)]
    common: Common,
    /// Number of PAs.
    #[arg(long, short)]
    m: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    /// Number of random configurations.
    #[arg(long)]
    configurations: Option<usize>,
    /// Scales every analytic range derivative by 1 + EPS.
    #[arg(long, hide = true, value_name = "EPS")]
    inject_fault: Option<f64>,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => EXIT_IO,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<u8, Failure>;

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(f) = common.freq {
        config.scene.frequency_ghz = f;
    }
    if let Some(m) = common.rx_mode {
        config.scene.rx_mode = match m {
            RxModeArg::Exact => RxMode::Exact,
            RxModeArg::PlaneWave => RxMode::PlaneWave,
        };
    }
    if let Some(s) = common.seed {
        config.seed = s;
    }
    if let Some(o) = &common.output {
        config.output.directory = o.display().to_string();
    }
    Ok(config)
}

/// Re-validates after command-line overrides.
fn checked(config: RunConfig) -> Result<RunConfig, Failure> {
    config.validate("command line")?;
    Ok(config)
}

fn number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(format_number(x))
    }
}

fn print_report(report: &CrbReport, format: ReportFormat) {
    let fields = [
        ("i", report.i),
        ("s", report.s),
        ("k", report.k),
        ("schur_det", report.schur_det),
        ("sqrt_crb_r_m", report.sqrt_crb_range()),
        ("sqrt_crb_theta_deg", report.sqrt_crb_theta_deg()),
    ];
    match format {
        ReportFormat::Text => {
            for (k, v) in fields {
                println!("{k:<20}{}", format_number(v));
            }
            println!("{:<20}{}", "divergent", report.divergent);
        }
        ReportFormat::Json => {
            let mut obj = serde_json::Map::new();
            for (k, v) in fields {
                obj.insert(k.into(), number(v));
            }
            obj.insert("divergent".into(), json!(report.divergent));
            println!("{}", Value::Object(obj));
        }
    }
}

fn resolve_layout(config: &RunConfig) -> Result<TransmitterLayout, Failure> {
    Ok(match config.transmitter_source()? {
        TransmitterSource::Layout(l) => l,
        TransmitterSource::Optimize(_) => {
            let problem = config.placement_problem()?;
            eprintln!("optimizing {} PAs ({} restarts)", problem.m_antennas(), problem.restarts());
            let result = optimize_placement(&problem, config.seed)?;
            problem.layout(result.positions)?
        }
    })
}

fn cmd_crb(args: CrbArgs) -> CmdResult {
    let mut config = load_config(&args.common)?;
    if let Some(r) = args.range {
        config.target.range_m = r;
    }
    if let Some(a) = args.angle {
        config.target.angle_deg = a;
    }
    if let Some(n) = args.rx_elements {
        config.scene.rx_elements = n;
    }
    if let Some(f) = args.format {
        config.output.format = match f {
            FormatArg::Text => ReportFormat::Text,
            FormatArg::Json => ReportFormat::Json,
        };
    }
    let config = checked(config)?;
    let layout = match &args.placement {
        Some(path) => load_placement(path, config.transmitter_params()?)?.1,
        None => resolve_layout(&config)?,
    };
    let rx = config.receiver()?;
    let budget = config.budget()?;
    for w in budget.warnings() {
        eprintln!("warning: {w}");
    }
    if !delay_condition_holds(&layout, &rx, budget.bandwidth) {
        eprintln!("warning: D_T + D_R exceeds c/B; the narrowband model may not hold");
    }
    let report = closed_form_crb(&layout, &rx, &config.target()?, &budget)?;
    print_report(&report, config.output.format);
    Ok(0)
}

fn print_slopes(result: &SweepResult) {
    for label in result.labels() {
        let slope = |m| estimate_slope(result, label, m).map_or_else(|e| e.to_string(), |s| format!("{s:.4}"));
        println!("{label}: slope range {}, angle {}", slope(Metric::Range), slope(Metric::Angle));
    }
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    let mut config = load_config(&args.common)?;
    if let Some(s) = args.samples {
        config.sweep.samples = s;
    }
    let config = checked(config)?;
    let spec = config.sweep_spec()?;
    let start = Instant::now();
    let layouts = resolve_transmitters(&spec)?;
    let cells = run_cells(&spec, &layouts)?;
    let result = SweepResult {
        rows: cells.into_iter().map(|c| c.row).collect(),
    };
    let written = write_sweep(Path::new(&config.output.directory), "sweep", &result)?;
    println!(
        "{} cells, {} samples each, {:.1} s",
        result.rows.len(),
        spec.samples,
        start.elapsed().as_secs_f64()
    );
    print_slopes(&result);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn cmd_optimize(args: OptimizeArgs) -> CmdResult {
    let mut config = load_config(&args.common)?;
    config.transmitter.kind = TxKind::Pas;
    if let Some(m) = args.m {
        config.transmitter.pa_count = m;
    }
    let config = checked(config)?;
    let problem = config.placement_problem()?;
    let result = optimize_placement(&problem, config.seed)?;
    let divergent = divergent_samples(&problem.layout(result.positions.clone())?, &problem);
    if divergent > 0 {
        eprintln!(
            "warning: {divergent} of {} ensemble targets diverge for the optimized layout",
            problem.ensemble().len()
        );
    }
    let meta = PlacementMetadata {
        pa_count: problem.m_antennas(),
        objective: format!("{:?}", config.placement.objective).to_lowercase(),
        objective_value: result.objective_value,
        restarts: result.restarts_used,
        seed: config.seed,
        frequency_ghz: config.scene.frequency_ghz,
        waveguide_length_m: config.scene.waveguide_length_m,
        waveguide_phase: problem.waveguide_phase(),
    };
    let dir = PathBuf::from(&config.output.directory);
    std::fs::create_dir_all(&dir).map_err(|e| Failure {
        code: EXIT_IO,
        message: format!("cannot create {}: {e}", dir.display()),
    })?;
    let path = dir.join(format!("placement_m{}.txt", meta.pa_count));
    write_atomic(&path, placement_text(&meta, &result.positions)?.as_bytes())?;
    // the written file must satisfy the constraints on its own
    load_placement(&path, config.transmitter_params()?)?;
    println!("objective {}", format_number(result.objective_value));
    println!("wrote {}", path.display());
    Ok(0)
}

fn cmd_validate(args: ValidateArgs) -> CmdResult {
    let mut config = load_config(&args.common)?;
    if let Some(n) = args.configurations {
        config.validation.configurations = n;
    }
    let config = checked(config)?;
    let mut spec = config.validation_spec()?;
    spec.fault = args.inject_fault.map(Fault::ScaleRangeDerivative);
    let start = Instant::now();
    let report = run_validation(&spec)?;
    let verdict = |ok| if ok { "PASS" } else { "FAIL" };
    println!(
        "derivatives: max relative error {:.3e} ({}), tolerance {FD_TOLERANCE:e}: {}",
        report.fd_max_error,
        report.fd_worst_family,
        verdict(report.fd_ok())
    );
    println!(
        "closed form vs FIM: max relative error {:.3e} over {} configurations ({} divergent), tolerance {FIM_TOLERANCE:e}: {}",
        report.fim_max_error,
        report.fim_compared,
        report.fim_divergent,
        verdict(report.fim_ok())
    );
    println!("{} configurations in {:.2} s", report.configurations, start.elapsed().as_secs_f64());
    Ok(if report.passed() { 0 } else { EXIT_TOLERANCE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    let outcome = match cli.command {
        Command::Crb(a) => cmd_crb(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Optimize(a) => cmd_optimize(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
