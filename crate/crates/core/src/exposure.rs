//! Histogram-driven auto-exposure for a camera rig.
//!
//! The controller looks only at the darkest and brightest of eight gray
//! bins. It moves one parameter per step, ISO first, then aperture, then
//! shutter, and reports `Saturated` once all three sit at the limit in the
//! requested direction.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExposureError {
    #[error("no pixels to histogram")]
    EmptyInput,
    #[error("image buffer holds {got} bytes, {width}x{height} needs {want}")]
    BadImage { width: usize, height: usize, got: usize, want: usize },
    #[error("invalid exposure state: {0}")]
    InvalidState(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Standard third-stop f-numbers.
pub const THIRD_STOPS: [f64; 31] = [
    1.0, 1.1, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.5, 2.8, 3.2, 3.5, 4.0, 4.5, 5.0, 5.6, 6.3, 7.1, 8.0, 9.0, 10.0, 11.0,
    13.0, 14.0, 16.0, 18.0, 20.0, 22.0, 25.0, 29.0, 32.0,
];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExposureLimits {
    pub iso_min: u32,
    pub iso_max: u32,
    pub f_min: f64,
    pub f_max: f64,
    pub shutter_min: f64,
    pub shutter_max: f64,
}

impl Default for ExposureLimits {
    fn default() -> Self {
        Self {
            iso_min: 100,
            iso_max: 3200,
            f_min: 4.0,
            f_max: 22.0,
            shutter_min: 5.0,
            shutter_max: 40.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExposureState {
    pub iso: u32,
    pub f_stop: f64,
    pub shutter_ms: f64,
    pub limits: ExposureLimits,
}

impl Default for ExposureState {
    fn default() -> Self {
        Self {
            iso: 400,
            f_stop: 14.0,
            shutter_ms: 10.0,
            limits: ExposureLimits::default(),
        }
    }
}

impl ExposureState {
    pub fn validate(&self) -> Result<(), ExposureError> {
        let l = &self.limits;
        let ok = l.iso_min <= self.iso
            && self.iso <= l.iso_max
            && l.f_min <= self.f_stop
            && self.f_stop <= l.f_max
            && l.shutter_min <= self.shutter_ms
            && self.shutter_ms <= l.shutter_max
            && stop_index(self.f_stop).is_some();
        if ok {
            Ok(())
        } else {
            Err(ExposureError::InvalidState(format!("{self:?}")))
        }
    }

    /// Relative sensor exposure, proportional to ISO · shutter / f².
    pub fn brightness(&self) -> f64 {
        self.iso as f64 / 100.0 * self.shutter_ms / 10.0 / (self.f_stop * self.f_stop)
    }
}

fn stop_index(f: f64) -> Option<usize> {
    THIRD_STOPS.iter().position(|s| (s - f).abs() < 1e-9)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    NoChange,
    IsoUp,
    IsoDown,
    ApertureOpen,
    ApertureClose,
    ShutterUp,
    ShutterDown,
    Saturated,
}

impl Action {
    pub fn name(self) -> &'static str {
        match self {
            Action::NoChange => "no_change",
            Action::IsoUp => "iso_up",
            Action::IsoDown => "iso_down",
            Action::ApertureOpen => "aperture_open",
            Action::ApertureClose => "aperture_close",
            Action::ShutterUp => "shutter_up",
            Action::ShutterDown => "shutter_down",
            Action::Saturated => "saturated",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram8 {
    pub counts: [u64; 8],
}

impl Histogram8 {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// 8-bit single-channel raster, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ExposureError> {
        if data.len() != width * height {
            return Err(ExposureError::BadImage {
                width,
                height,
                got: data.len(),
                want: width * height,
            });
        }
        Ok(Self { width, height, data })
    }
}

/// Pooled counts over every pixel; bin `k` holds values `32k ..= 32k + 31`.
pub fn compute_histogram(images: &[GrayImage]) -> Result<Histogram8, ExposureError> {
    let mut h = Histogram8::default();
    for img in images {
        for &v in &img.data {
            h.counts[(v >> 5) as usize] += 1;
        }
    }
    if h.total() == 0 {
        return Err(ExposureError::EmptyInput);
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    /// Dead band on |under − over| as a fraction of all pixels.
    pub tolerance: f64,
    pub iso_step: u32,
    pub shutter_step_ms: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            tolerance: 0.01,
            iso_step: 100,
            shutter_step_ms: 5.0,
        }
    }
}

/// One controller decision. Pure: the same inputs always give the same output.
pub fn exposure_step(hist: &Histogram8, state: &ExposureState, cfg: &ControllerConfig) -> (ExposureState, Action) {
    let total = hist.total();
    if total == 0 {
        return (*state, Action::NoChange);
    }
    let under = hist.counts[0] as f64 / total as f64;
    let over = hist.counts[7] as f64 / total as f64;
    if (under - over).abs() <= cfg.tolerance {
        return (*state, Action::NoChange);
    }
    let mut next = *state;
    let l = &state.limits;
    let stop = stop_index(state.f_stop);
    if under > over {
        if state.iso < l.iso_max {
            next.iso = (state.iso + cfg.iso_step).min(l.iso_max);
            return (next, Action::IsoUp);
        }
        if let Some(i) = stop.filter(|&i| i > 0 && THIRD_STOPS[i - 1] >= l.f_min - 1e-9) {
            next.f_stop = THIRD_STOPS[i - 1];
            return (next, Action::ApertureOpen);
        }
        if state.shutter_ms < l.shutter_max {
            next.shutter_ms = (state.shutter_ms + cfg.shutter_step_ms).min(l.shutter_max);
            return (next, Action::ShutterUp);
        }
    } else {
        if state.iso > l.iso_min {
            next.iso = state.iso.saturating_sub(cfg.iso_step).max(l.iso_min);
            return (next, Action::IsoDown);
        }
        if let Some(i) = stop.filter(|&i| i + 1 < THIRD_STOPS.len() && THIRD_STOPS[i + 1] <= l.f_max + 1e-9) {
            next.f_stop = THIRD_STOPS[i + 1];
            return (next, Action::ApertureClose);
        }
        if state.shutter_ms > l.shutter_min {
            next.shutter_ms = (state.shutter_ms - cfg.shutter_step_ms).max(l.shutter_min);
            return (next, Action::ShutterDown);
        }
    }
    (*state, Action::Saturated)
}

/// Number of single-parameter moves available between the limits.
pub fn step_budget(limits: &ExposureLimits, cfg: &ControllerConfig) -> usize {
    let iso = (limits.iso_max - limits.iso_min).div_ceil(cfg.iso_step) as usize;
    let stops = THIRD_STOPS
        .iter()
        .filter(|&&f| f >= limits.f_min - 1e-9 && f <= limits.f_max + 1e-9)
        .count()
        .saturating_sub(1);
    let shutter = ((limits.shutter_max - limits.shutter_min) / cfg.shutter_step_ms).ceil() as usize;
    iso + stops + shutter
}

/// Scene with a fixed spread of surface reflectances seen by an ideal
/// linear sensor: pixel = clamp(255 · gain · brightness · reflectance).
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCamera {
    pub reflectances: Vec<f64>,
    pub gain: f64,
}

impl SyntheticCamera {
    /// `n` reflectances spaced log-uniformly over `[lo, hi]`.
    pub fn log_uniform(lo: f64, hi: f64, n: usize, gain: f64) -> Self {
        let reflectances = (0..n)
            .map(|k| lo * (hi / lo).powf((k as f64 + 0.5) / n as f64))
            .collect();
        Self { reflectances, gain }
    }

    pub fn capture(&self, state: &ExposureState) -> GrayImage {
        let g = self.gain * state.brightness();
        let data: Vec<u8> = self
            .reflectances
            .iter()
            .map(|r| (255.0 * g * r).round().clamp(0.0, 255.0) as u8)
            .collect();
        GrayImage {
            width: data.len(),
            height: 1,
            data,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub iso: u32,
    pub f_stop: f64,
    pub shutter_ms: f64,
    pub action: String,
}

/// Feeds `histograms` through the controller starting from `initial`.
pub fn replay(histograms: &[Histogram8], initial: &ExposureState, cfg: &ControllerConfig) -> Vec<TraceRow> {
    let mut state = *initial;
    histograms
        .iter()
        .enumerate()
        .map(|(step, h)| {
            let (next, action) = exposure_step(h, &state, cfg);
            state = next;
            TraceRow {
                step,
                iso: state.iso,
                f_stop: state.f_stop,
                shutter_ms: state.shutter_ms,
                action: action.name().into(),
            }
        })
        .collect()
}

/// Reads one histogram per row; the first eight columns are the bin counts.
pub fn read_histogram_csv(path: impl AsRef<Path>) -> Result<Vec<Histogram8>, ExposureError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let mut h = Histogram8::default();
        for (k, c) in h.counts.iter_mut().enumerate() {
            let field = rec.get(k).ok_or_else(|| ExposureError::InvalidState(format!("row has {} columns", rec.len())))?;
            *c = field
                .trim()
                .parse()
                .map_err(|_| ExposureError::InvalidState(format!("bad count {field:?}")))?;
        }
        out.push(h);
    }
    Ok(out)
}

pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[TraceRow]) -> Result<(), ExposureError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in trace {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
