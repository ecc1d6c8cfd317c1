//! TOML run configuration in human units (GHz, dBm, degrees). Every key is
//! optional; missing keys take the defaults of the reference scene. Values
//! are validated and converted to SI by the accessor methods.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::crb::SensingBudget;
use crate::experiments::{
    LabeledTransmitter, PlacementDirective, SweepSpec, TargetDistribution, TransmitterSource, DEFAULT_N_VALUES,
    DEFAULT_SAMPLES,
};
use crate::placement::{ula_baseline, Objective, PlacementProblem};
use crate::scene::{ReceiverLayout, ReceiverMode, Target, TransmitterLayout, TransmitterParams};
use crate::validation::{ConfigurationSpace, ValidationSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub scene: SceneConfig,
    pub transmitter: TransmitterConfig,
    pub target: TargetConfig,
    pub budget: BudgetConfig,
    pub ensemble: EnsembleConfig,
    pub placement: PlacementConfig,
    pub sweep: SweepConfig,
    pub validation: ValidationConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub frequency_ghz: f64,
    pub n_eff: f64,
    pub waveguide_length_m: f64,
    /// Feed point; `None` is the waveguide end `−D_T/2`.
    pub feed_y_m: Option<f64>,
    /// α₀; `None` is (λ/4π)².
    pub tx_ref_gain: Option<f64>,
    pub baseline_m: f64,
    /// d_R; `None` is λ/2.
    pub rx_spacing_m: Option<f64>,
    /// b₀; `None` is (λ/4π)².
    pub rx_ref_gain: Option<f64>,
    pub rx_elements: usize,
    pub rx_mode: RxMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RxMode {
    Exact,
    PlaneWave,
}

impl From<RxMode> for ReceiverMode {
    fn from(m: RxMode) -> Self {
        match m {
            RxMode::Exact => ReceiverMode::Exact,
            RxMode::PlaneWave => ReceiverMode::PlaneWave,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxKind {
    /// Optimized pinching-antenna placement.
    Pas,
    /// Compact λ/2 ULA without in-waveguide phase.
    Ula,
    /// Explicit positions.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransmitterConfig {
    pub kind: TxKind,
    pub pa_count: usize,
    pub positions_m: Vec<f64>,
    /// In-waveguide phase; `None` is on for `pas`/`custom`, off for `ula`.
    pub waveguide_phase: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetConfig {
    pub range_m: f64,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BudgetConfig {
    pub power_dbm: f64,
    pub noise_dbm: f64,
    pub bandwidth_mhz: f64,
    /// L = B·T_p.
    pub time_bandwidth: f64,
    pub kappa_abs: f64,
    pub kappa_phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub range_min_m: f64,
    pub range_max_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    Range,
    Angle,
    Weighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementConfig {
    pub objective: ObjectiveKind,
    pub weight_range: f64,
    pub weight_angle: f64,
    pub restarts: usize,
    pub grid_angle: usize,
    pub grid_range: usize,
    /// Receive antennas assumed while optimizing.
    pub rx_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTransmitter {
    pub label: String,
    pub kind: TxKind,
    #[serde(default)]
    pub pa_count: usize,
    #[serde(default)]
    pub positions_m: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub samples: usize,
    pub transmitters: Vec<SweepTransmitter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub configurations: usize,
    pub max_pas: usize,
    pub max_rx: usize,
    pub plane_wave_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: String,
    pub format: ReportFormat,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            scene: SceneConfig::default(),
            transmitter: TransmitterConfig::default(),
            target: TargetConfig::default(),
            budget: BudgetConfig::default(),
            ensemble: EnsembleConfig::default(),
            placement: PlacementConfig::default(),
            sweep: SweepConfig::default(),
            validation: ValidationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            frequency_ghz: 27.0,
            n_eff: 1.4,
            waveguide_length_m: 10.0,
            feed_y_m: None,
            tx_ref_gain: None,
            baseline_m: 30.0,
            rx_spacing_m: None,
            rx_ref_gain: None,
            rx_elements: 32,
            rx_mode: RxMode::Exact,
        }
    }
}

impl Default for TransmitterConfig {
    fn default() -> Self {
        TransmitterConfig {
            kind: TxKind::Pas,
            pa_count: 8,
            positions_m: Vec::new(),
            waveguide_phase: None,
        }
    }
}

impl Default for TargetConfig {
    fn default() -> Self {
        TargetConfig {
            range_m: 15.0,
            angle_deg: 0.0,
        }
    }
}

impl Default for BudgetConfig {
    fn default() -> Self {
        BudgetConfig {
            power_dbm: 0.0,
            noise_dbm: -90.0,
            bandwidth_mhz: 10.0,
            time_bandwidth: 1.0,
            kappa_abs: 1.0,
            kappa_phase_deg: 0.0,
        }
    }
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            angle_min_deg: -30.0,
            angle_max_deg: 30.0,
            range_min_m: 5.0,
            range_max_m: 25.0,
        }
    }
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig {
            objective: ObjectiveKind::Range,
            weight_range: 1.0,
            weight_angle: 0.0,
            restarts: 32,
            grid_angle: 16,
            grid_range: 16,
            rx_elements: 16,
        }
    }
}

impl Default for SweepConfig {
    fn default() -> Self {
        let tx = |label: &str, kind, pa_count| SweepTransmitter {
            label: label.into(),
            kind,
            pa_count,
            positions_m: Vec::new(),
        };
        SweepConfig {
            n_values: DEFAULT_N_VALUES.to_vec(),
            samples: DEFAULT_SAMPLES,
            transmitters: vec![
                tx("pas_m4", TxKind::Pas, 4),
                tx("pas_m8", TxKind::Pas, 8),
                tx("ula_m4", TxKind::Ula, 4),
                tx("ula_m8", TxKind::Ula, 8),
            ],
        }
    }
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            configurations: 1000,
            max_pas: 8,
            max_rx: 64,
            plane_wave_fraction: 0.25,
        }
    }
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: "results".into(),
            format: ReportFormat::Text,
        }
    }
}

/// Error for `key`, anchored to the line that sets it in `source` when there
/// is one.
fn anchored(origin: &str, source: Option<&str>, key: &str, reason: &str) -> Error {
    match source.and_then(|s| locate_key(s, key)) {
        Some(line) => Error::Config(format!("{origin}:{line}: `{key}`: {reason}")),
        None => Error::Config(format!("{origin}: `{key}`: {reason}")),
    }
}

/// 1-based line of `section.name = …` (or a top-level `name = …`).
pub fn locate_key(source: &str, key: &str) -> Option<usize> {
    let (section, name) = match key.rsplit_once('.') {
        Some((s, n)) => (s, n),
        None => ("", key),
    };
    let mut current = String::new();
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(header) = line.strip_prefix('[') {
            current = header.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == name {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

fn check(ok: bool, key: &str, reason: &str) -> std::result::Result<(), (String, String)> {
    if ok {
        Ok(())
    } else {
        Err((key.to_string(), reason.to_string()))
    }
}

fn positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

impl RunConfig {
    /// Parses and validates a configuration file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses and validates TOML text; `origin` names the source in messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text.as_bytes()[..s.start.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1);
            let msg = e.message().to_string();
            match line {
                Some(line) => Error::Config(format!("{origin}:{line}: {msg}")),
                None => Error::Config(format!("{origin}: {msg}")),
            }
        })?;
        config.validate_from(origin, Some(text))?;
        Ok(config)
    }

    /// Validates values that do not come from a file (defaults or
    /// command-line overrides).
    pub fn validate(&self, origin: &str) -> Result<()> {
        self.validate_from(origin, None)
    }

    fn validate_from(&self, origin: &str, source: Option<&str>) -> Result<()> {
        self.check_values()
            .map_err(|(key, reason)| anchored(origin, source, &key, &reason))?;
        // derived checks (spacing, feasibility) report the constructors' errors
        self.transmitter_params()?;
        self.receiver()?;
        self.budget()?;
        Ok(())
    }

    fn check_values(&self) -> std::result::Result<(), (String, String)> {
        let s = &self.scene;
        check(positive(s.frequency_ghz), "scene.frequency_ghz", "must be positive")?;
        check(positive(s.n_eff), "scene.n_eff", "must be positive")?;
        check(positive(s.waveguide_length_m), "scene.waveguide_length_m", "must be positive")?;
        check(s.feed_y_m.is_none_or(f64::is_finite), "scene.feed_y_m", "must be finite")?;
        check(s.tx_ref_gain.is_none_or(positive), "scene.tx_ref_gain", "must be positive")?;
        check(positive(s.baseline_m), "scene.baseline_m", "must be positive")?;
        check(s.rx_spacing_m.is_none_or(positive), "scene.rx_spacing_m", "must be positive")?;
        check(s.rx_ref_gain.is_none_or(positive), "scene.rx_ref_gain", "must be positive")?;
        check(s.rx_elements >= 1, "scene.rx_elements", "must be at least 1")?;

        let t = &self.transmitter;
        match t.kind {
            TxKind::Custom => check(!t.positions_m.is_empty(), "transmitter.positions_m", "custom layouts need positions")?,
            _ => check(t.pa_count >= 1, "transmitter.pa_count", "must be at least 1")?,
        }
        check(positive(self.target.range_m), "target.range_m", "must be positive")?;
        check(self.target.angle_deg.abs() < 90.0, "target.angle_deg", "must lie in (−90°, 90°)")?;

        let b = &self.budget;
        check(b.power_dbm.is_finite(), "budget.power_dbm", "must be finite")?;
        check(b.noise_dbm.is_finite(), "budget.noise_dbm", "must be finite")?;
        check(positive(b.bandwidth_mhz), "budget.bandwidth_mhz", "must be positive")?;
        check(positive(b.time_bandwidth), "budget.time_bandwidth", "must be positive")?;
        check(positive(b.kappa_abs), "budget.kappa_abs", "must be positive")?;
        check(b.kappa_phase_deg.is_finite(), "budget.kappa_phase_deg", "must be finite")?;

        let e = &self.ensemble;
        check(e.angle_min_deg > -90.0, "ensemble.angle_min_deg", "must exceed −90°")?;
        check(e.angle_max_deg < 90.0, "ensemble.angle_max_deg", "must be below 90°")?;
        check(e.angle_min_deg <= e.angle_max_deg, "ensemble.angle_max_deg", "must not be below angle_min_deg")?;
        check(positive(e.range_min_m), "ensemble.range_min_m", "must be positive")?;
        check(
            e.range_max_m.is_finite() && e.range_min_m <= e.range_max_m,
            "ensemble.range_max_m",
            "must be finite and not below range_min_m",
        )?;

        let p = &self.placement;
        if p.objective == ObjectiveKind::Weighted {
            check(
                p.weight_range >= 0.0 && p.weight_angle >= 0.0 && p.weight_range + p.weight_angle > 0.0,
                "placement.weight_range",
                "weights must be nonnegative and not both zero",
            )?;
        }
        check(p.grid_angle >= 1, "placement.grid_angle", "must be at least 1")?;
        check(p.grid_range >= 1, "placement.grid_range", "must be at least 1")?;
        check(p.rx_elements >= 1, "placement.rx_elements", "must be at least 1")?;

        let w = &self.sweep;
        check(!w.n_values.is_empty(), "sweep.n_values", "must not be empty")?;
        check(!w.n_values.contains(&0), "sweep.n_values", "every N must be at least 1")?;
        check(w.n_values.windows(2).all(|v| v[0] < v[1]), "sweep.n_values", "must be strictly ascending")?;
        check(w.samples >= 1, "sweep.samples", "must be at least 1")?;
        check(!w.transmitters.is_empty(), "sweep.transmitters", "at least one transmitter is required")?;
        for tx in &w.transmitters {
            match tx.kind {
                TxKind::Custom => check(!tx.positions_m.is_empty(), "sweep.transmitters", "custom layouts need positions_m")?,
                _ => check(tx.pa_count >= 1, "sweep.transmitters", "pa_count must be at least 1")?,
            }
        }

        let v = &self.validation;
        check(v.configurations >= 1, "validation.configurations", "must be at least 1")?;
        check(v.max_pas >= 1, "validation.max_pas", "must be at least 1")?;
        check(v.max_rx >= 1, "validation.max_rx", "must be at least 1")?;
        check(
            (0.0..=1.0).contains(&v.plane_wave_fraction),
            "validation.plane_wave_fraction",
            "must lie in [0, 1]",
        )?;
        check(!self.output.directory.is_empty(), "output.directory", "must not be empty")?;
        Ok(())
    }

    pub fn transmitter_params(&self) -> Result<TransmitterParams> {
        let s = &self.scene;
        let mut p = TransmitterParams::from_carrier(s.frequency_ghz * 1e9, s.n_eff, s.waveguide_length_m)?;
        if let Some(y) = s.feed_y_m {
            p.feed_y = y;
        }
        if let Some(g) = s.tx_ref_gain {
            p.ref_gain = g;
        }
        p.validate()?;
        Ok(p)
    }

    /// Receiver with `scene.rx_elements` antennas.
    pub fn receiver(&self) -> Result<ReceiverLayout> {
        let s = &self.scene;
        let lam = self.transmitter_params()?.wavelength;
        ReceiverLayout::new(
            s.rx_elements,
            s.rx_spacing_m.unwrap_or(lam / 2.0),
            s.baseline_m,
            s.rx_ref_gain.unwrap_or_else(|| crate::scene::free_space_ref_gain(lam)),
            s.rx_mode.into(),
        )
    }

    pub fn budget(&self) -> Result<SensingBudget> {
        let b = &self.budget;
        let kappa = Complex64::from_polar(b.kappa_abs, b.kappa_phase_deg.to_radians());
        SensingBudget::from_levels(b.power_dbm, b.noise_dbm, b.bandwidth_mhz * 1e6, b.time_bandwidth, kappa)
    }

    pub fn target(&self) -> Result<Target> {
        Target::new(self.target.range_m, self.target.angle_deg.to_radians())
    }

    pub fn targets(&self) -> TargetDistribution {
        let e = &self.ensemble;
        TargetDistribution {
            angle: (e.angle_min_deg.to_radians(), e.angle_max_deg.to_radians()),
            range: (e.range_min_m, e.range_max_m),
        }
    }

    pub fn objective(&self) -> Objective {
        let p = &self.placement;
        match p.objective {
            ObjectiveKind::Range => Objective::MeanSqrtCrbRange,
            ObjectiveKind::Angle => Objective::MeanSqrtCrbAngle,
            ObjectiveKind::Weighted => Objective::WeightedSum {
                range: p.weight_range,
                angle: p.weight_angle,
            },
        }
    }

    /// How `m` PAs are optimized.
    pub fn directive(&self, m: usize) -> Result<PlacementDirective> {
        let p = &self.placement;
        Ok(PlacementDirective {
            objective: self.objective(),
            restarts: p.restarts,
            rx_elements: p.rx_elements,
            grid: (p.grid_angle, p.grid_range),
            waveguide_phase: self.transmitter.waveguide_phase.unwrap_or(true),
            ..PlacementDirective::new(self.transmitter_params()?, m)
        })
    }

    /// The placement problem of the `[transmitter]` section.
    pub fn placement_problem(&self) -> Result<PlacementProblem> {
        self.directive(self.transmitter.pa_count)?
            .problem(&self.receiver()?, &self.targets(), self.budget()?)
    }

    fn source(&self, kind: TxKind, pa_count: usize, positions: &[f64], phase: Option<bool>) -> Result<TransmitterSource> {
        let params = self.transmitter_params()?;
        Ok(match kind {
            TxKind::Pas => TransmitterSource::Optimize(PlacementDirective {
                waveguide_phase: phase.unwrap_or(true),
                ..self.directive(pa_count)?
            }),
            TxKind::Ula => {
                let ula = ula_baseline(pa_count, params)?;
                match phase {
                    Some(true) => TransmitterSource::Layout(TransmitterLayout::new(ula.positions().to_vec(), params, true)?),
                    _ => TransmitterSource::Layout(ula),
                }
            }
            TxKind::Custom => {
                TransmitterSource::Layout(TransmitterLayout::new(positions.to_vec(), params, phase.unwrap_or(true))?)
            }
        })
    }

    /// The `[transmitter]` section as a layout source.
    pub fn transmitter_source(&self) -> Result<TransmitterSource> {
        let t = &self.transmitter;
        self.source(t.kind, t.pa_count, &t.positions_m, t.waveguide_phase)
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec> {
        let transmitters = self
            .sweep
            .transmitters
            .iter()
            .map(|t| {
                Ok(LabeledTransmitter {
                    label: t.label.clone(),
                    source: self.source(t.kind, t.pa_count, &t.positions_m, None)?,
                })
            })
            .collect::<Result<_>>()?;
        let spec = SweepSpec {
            n_values: self.sweep.n_values.clone(),
            transmitters,
            targets: self.targets(),
            samples: self.sweep.samples,
            seed: self.seed,
            budget: self.budget()?,
            rx: self.receiver()?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validation_spec(&self) -> Result<ValidationSpec> {
        let rx = self.receiver()?;
        let v = &self.validation;
        let space = ConfigurationSpace {
            params: self.transmitter_params()?,
            baseline: rx.baseline(),
            rx_spacing: rx.spacing(),
            rx_ref_gain: rx.ref_gain(),
            max_pas: v.max_pas,
            max_rx: v.max_rx,
            angle: self.targets().angle,
            range: self.targets().range,
            plane_wave_fraction: v.plane_wave_fraction,
        };
        space.validate()?;
        Ok(ValidationSpec {
            configurations: v.configurations,
            seed: self.seed,
            space,
            budget: self.budget()?,
            fault: None,
        })
    }
}
