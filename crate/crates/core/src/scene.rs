//! Planar scene: a waveguide with pinching antennas along the y-axis at
//! `x = 0`, a ULA receiver along the y-axis at `x = R`, and a point target
//! at polar coordinates `(r, θ)` around the PA centroid.
//!
//! All quantities are SI (meters, radians).

use std::f64::consts::{FRAC_PI_2, PI};

use crate::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Slack on the spacing, bound and centering audits, as a fraction of D_T.
/// It covers positions written with 12 significant digits.
pub const GEOMETRY_SLACK: f64 = 1e-9;

/// Waveguide and carrier properties shared by every transmit layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmitterParams {
    /// Free-space wavelength λ.
    pub wavelength: f64,
    /// Guided wavelength λ_g = λ / n_eff.
    pub guided_wavelength: f64,
    /// Waveguide length D_T; PAs live in `[-D_T/2, D_T/2]`.
    pub waveguide_length: f64,
    /// y-coordinate of the feed point.
    pub feed_y: f64,
    /// Power gain α₀ at the 1 m reference distance.
    pub ref_gain: f64,
}

impl TransmitterParams {
    /// Carrier at `freq_hz`, effective index `n_eff`, end-fed waveguide of
    /// length `waveguide_length`, free-space reference gain (λ/4π)².
    pub fn from_carrier(freq_hz: f64, n_eff: f64, waveguide_length: f64) -> Result<Self> {
        if !(freq_hz > 0.0 && freq_hz.is_finite()) {
            return Err(Error::invalid("frequency", "must be positive and finite"));
        }
        if !(n_eff > 0.0 && n_eff.is_finite()) {
            return Err(Error::invalid("n_eff", "must be positive and finite"));
        }
        let wavelength = SPEED_OF_LIGHT / freq_hz;
        let params = TransmitterParams {
            wavelength,
            guided_wavelength: wavelength / n_eff,
            waveguide_length,
            feed_y: -waveguide_length / 2.0,
            ref_gain: free_space_ref_gain(wavelength),
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        positive("wavelength", self.wavelength)?;
        positive("guided_wavelength", self.guided_wavelength)?;
        positive("ref_gain", self.ref_gain)?;
        if !(self.waveguide_length >= 0.0 && self.waveguide_length.is_finite()) {
            return Err(Error::invalid("waveguide_length", "must be non-negative and finite"));
        }
        if !self.feed_y.is_finite() {
            return Err(Error::invalid("feed_y", "must be finite"));
        }
        Ok(())
    }

    /// Minimum allowed distance between adjacent PAs.
    pub fn min_spacing(&self) -> f64 {
        self.wavelength / 2.0
    }
}

/// (λ/4π)², the free-space power gain at 1 m.
pub fn free_space_ref_gain(wavelength: f64) -> f64 {
    (wavelength / (4.0 * PI)).powi(2)
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be positive and finite, got {value}")))
    }
}

/// Pinching-antenna (or conventional ULA) transmit layout.
///
/// Positions are stored sorted and re-centered so that they sum to zero;
/// the PA centroid is the origin of the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitterLayout {
    positions: Vec<f64>,
    params: TransmitterParams,
    waveguide_phase: bool,
}

impl TransmitterLayout {
    /// Builds a layout from raw y-coordinates. The coordinates are sorted
    /// and shifted to zero mean before the spacing and bound checks.
    pub fn new(
        raw_positions: Vec<f64>,
        params: TransmitterParams,
        waveguide_phase: bool,
    ) -> Result<Self> {
        params.validate()?;
        if raw_positions.is_empty() {
            return Err(Error::invalid("pa_positions", "at least one PA is required"));
        }
        if raw_positions.iter().any(|y| !y.is_finite()) {
            return Err(Error::invalid("pa_positions", "coordinates must be finite"));
        }
        let mut positions = raw_positions;
        positions.sort_by(f64::total_cmp);
        let mean = positions.iter().sum::<f64>() / positions.len() as f64;
        // already-centered input is kept bit-for-bit so that reloading a
        // layout reproduces it
        if mean.abs() > GEOMETRY_SLACK * params.waveguide_length {
            for y in &mut positions {
                *y -= mean;
            }
        }

        let gap = params.min_spacing();
        let slack = GEOMETRY_SLACK * params.waveguide_length;
        if let Some(w) = positions.windows(2).find(|w| w[1] - w[0] < gap - slack) {
            return Err(Error::invalid(
                "pa_positions",
                format!(
                    "adjacent PAs {:.6e} m apart, minimum is λ/2 = {gap:.6e} m",
                    w[1] - w[0]
                ),
            ));
        }
        let half = params.waveguide_length / 2.0;
        let limit = half + slack + f64::MIN_POSITIVE;
        if let Some(y) = positions.iter().find(|y| y.abs() > limit) {
            return Err(Error::invalid(
                "pa_positions",
                format!("centered position {y:.6e} m lies outside [-D_T/2, D_T/2] = ±{half:.6e} m"),
            ));
        }
        Ok(TransmitterLayout {
            positions,
            params,
            waveguide_phase,
        })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn params(&self) -> &TransmitterParams {
        &self.params
    }

    pub fn wavelength(&self) -> f64 {
        self.params.wavelength
    }

    pub fn guided_wavelength(&self) -> f64 {
        self.params.guided_wavelength
    }

    pub fn waveguide_length(&self) -> f64 {
        self.params.waveguide_length
    }

    pub fn feed_y(&self) -> f64 {
        self.params.feed_y
    }

    pub fn ref_gain(&self) -> f64 {
        self.params.ref_gain
    }

    /// `true` for a PAS (in-waveguide phase applied), `false` for a
    /// conventional array.
    pub fn waveguide_phase(&self) -> bool {
        self.waveguide_phase
    }

    /// Occupied aperture, `max(y) − min(y)`.
    pub fn aperture(&self) -> f64 {
        self.positions[self.positions.len() - 1] - self.positions[0]
    }

    pub fn position(&self, m: usize) -> Result<f64> {
        self.positions.get(m).copied().ok_or_else(|| Error::Index {
            index: m as i64,
            valid: format!("0..{}", self.positions.len()),
        })
    }

    /// Same layout reflected through the x-axis (positions and feed negated).
    pub fn mirrored(&self) -> Self {
        let mut positions: Vec<f64> = self.positions.iter().map(|y| -y).collect();
        positions.reverse();
        let mut params = self.params;
        params.feed_y = -params.feed_y;
        TransmitterLayout {
            positions,
            params,
            waveguide_phase: self.waveguide_phase,
        }
    }
}

/// Receive-side propagation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReceiverMode {
    /// Per-element exact distances (near-field).
    Exact,
    /// Every element sees the array-center distance `l` (far-field).
    PlaneWave,
}

/// ULA receiver centered at `(R, 0)` with elements along y.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverLayout {
    n_elements: usize,
    spacing: f64,
    baseline: f64,
    ref_gain: f64,
    mode: ReceiverMode,
}

impl ReceiverLayout {
    pub fn new(
        n_elements: usize,
        spacing: f64,
        baseline: f64,
        ref_gain: f64,
        mode: ReceiverMode,
    ) -> Result<Self> {
        if n_elements == 0 {
            return Err(Error::invalid("n_elements", "must be at least 1"));
        }
        positive("spacing", spacing)?;
        positive("baseline", baseline)?;
        positive("ref_gain", ref_gain)?;
        Ok(ReceiverLayout {
            n_elements,
            spacing,
            baseline,
            ref_gain,
            mode,
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn ref_gain(&self) -> f64 {
        self.ref_gain
    }

    pub fn mode(&self) -> ReceiverMode {
        self.mode
    }

    /// D_R = N·d_R.
    pub fn aperture(&self) -> f64 {
        self.n_elements as f64 * self.spacing
    }

    pub fn with_mode(&self, mode: ReceiverMode) -> Self {
        ReceiverLayout { mode, ..self.clone() }
    }

    pub fn with_elements(&self, n_elements: usize) -> Result<Self> {
        ReceiverLayout::new(n_elements, self.spacing, self.baseline, self.ref_gain, self.mode)
    }

    /// Symmetric element indices in ascending order: `{0, ±1, …, ±(N−1)/2}`
    /// for odd N, `{±1, …, ±N/2}` (index 0 omitted) for even N.
    pub fn indices(&self) -> Vec<i64> {
        let n = self.n_elements as i64;
        if n % 2 == 1 {
            let h = (n - 1) / 2;
            (-h..=h).collect()
        } else {
            let h = n / 2;
            (-h..=h).filter(|&i| i != 0).collect()
        }
    }

    pub fn contains_index(&self, n: i64) -> bool {
        let n_el = self.n_elements as i64;
        if n_el % 2 == 1 {
            n.abs() <= (n_el - 1) / 2
        } else {
            n != 0 && n.abs() <= n_el / 2
        }
    }

    pub(crate) fn check_index(&self, n: i64) -> Result<()> {
        if self.contains_index(n) {
            Ok(())
        } else {
            let h = self.indices().last().copied().unwrap_or(0);
            let valid = if self.n_elements % 2 == 1 {
                format!("-{h}..={h}")
            } else {
                format!("±1..=±{h}")
            };
            Err(Error::Index { index: n, valid })
        }
    }
}

/// Point target in the transmitter-centered polar frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    range: f64,
    angle: f64,
}

impl Target {
    pub fn new(range: f64, angle: f64) -> Result<Self> {
        positive("range", range)?;
        if !(angle.abs() < FRAC_PI_2) {
            return Err(Error::invalid("angle", format!("must lie in (-π/2, π/2), got {angle}")));
        }
        Ok(Target { range, angle })
    }

    pub fn range(&self) -> f64 {
        self.range
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    /// Cartesian position q = (r cosθ, r sinθ).
    pub fn position(&self) -> (f64, f64) {
        let (s, c) = self.angle.sin_cos();
        (self.range * c, self.range * s)
    }

    pub fn mirrored(&self) -> Self {
        Target {
            range: self.range,
            angle: -self.angle,
        }
    }

    /// Copy with the range (or angle) shifted; used by finite differences.
    pub fn with_range(&self, range: f64) -> Result<Self> {
        Target::new(range, self.angle)
    }

    pub fn with_angle(&self, angle: f64) -> Result<Self> {
        Target::new(self.range, angle)
    }
}

/// Distance from a PA at `(0, y)` to the target, r_m = √(r² − 2ry sinθ + y²).
///
/// Evaluated as the Euclidean norm of the coordinate difference, which is
/// the same quantity without the cancellation of the expanded form.
pub(crate) fn pa_distance(y: f64, target: &Target) -> f64 {
    let (qx, qy) = target.position();
    qx.hypot(qy - y)
}

/// Distance from receive element `n` at `(R, n·d_R)` to the target.
pub(crate) fn element_distance(rx: &ReceiverLayout, n: i64, target: &Target) -> f64 {
    let (qx, qy) = target.position();
    (rx.baseline - qx).hypot(n as f64 * rx.spacing - qy)
}

/// r_m for PA index `m` (ascending position order).
pub fn tx_distance(layout: &TransmitterLayout, target: &Target, m: usize) -> Result<f64> {
    Ok(pa_distance(layout.position(m)?, target))
}

/// l_n for the symmetric receive index `n`.
pub fn rx_distance(rx: &ReceiverLayout, target: &Target, n: i64) -> Result<f64> {
    rx.check_index(n)?;
    Ok(element_distance(rx, n, target))
}

/// Range `l` and bearing `φ` of the target seen from the receive-array center.
pub fn rx_center_range_angle(rx: &ReceiverLayout, target: &Target) -> Result<(f64, f64)> {
    let l = element_distance(rx, 0, target);
    if l <= 1e-12 * rx.baseline.max(target.range) {
        return Err(Error::DegenerateGeometry(format!(
            "target at range {} coincides with the receive-array center",
            target.range
        )));
    }
    let (_, qy) = target.position();
    let phi = (qy / l).clamp(-1.0, 1.0).asin();
    Ok((l, phi))
}

/// Narrowband condition D_T + D_R ≤ c/B on raw apertures.
pub fn delay_spread_ok(tx_aperture: f64, rx_aperture: f64, bandwidth: f64) -> bool {
    tx_aperture + rx_aperture <= SPEED_OF_LIGHT / bandwidth
}

/// [`delay_spread_ok`] for a concrete transmitter/receiver pair, using the
/// waveguide length as the transmit aperture.
pub fn delay_condition_holds(tx: &TransmitterLayout, rx: &ReceiverLayout, bandwidth: f64) -> bool {
    delay_spread_ok(tx.waveguide_length(), rx.aperture(), bandwidth)
}
