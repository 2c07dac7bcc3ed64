//! Physical parameters, drive policy, simulation grid and their validation.
//!
//! Units: hbar = k_B = 1, masses in units of a reference mass and frequencies in
//! units of a reference frequency, so temperatures are `k_B T / (hbar omega_0)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix4, Vector4};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gaussian_moments::GaussianState;

/// One system oscillator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OscillatorParams {
    pub mass: f64,
    pub frequency: f64,
}

impl Default for OscillatorParams {
    fn default() -> Self {
        Self { mass: 1.0, frequency: 1.0 }
    }
}

/// Drude-cutoff ohmic bath attached to one oscillator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathParams {
    /// Damping rate gamma.
    pub coupling: f64,
    /// Drude cutoff Omega.
    pub cutoff: f64,
    pub temperature: f64,
    /// Explicit Matsubara terms; `None` picks the count adaptively.
    pub matsubara_terms: Option<usize>,
    /// Adds the analytic remainder of the truncated Matsubara series.
    pub tail_correction: bool,
}

impl BathParams {
    pub fn new(coupling: f64, cutoff: f64, temperature: f64) -> Self {
        Self { coupling, cutoff, temperature, matsubara_terms: None, tail_correction: true }
    }
}

type DriveFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Time-dependent inter-oscillator coupling `c(t)`.
#[derive(Clone)]
pub enum Drive {
    /// `c(t) = amplitude * cos(frequency * t)`; frequency zero gives a constant coupling.
    Harmonic { amplitude: f64, frequency: f64 },
    /// Arbitrary coupling. Not serializable.
    Custom { name: String, f: DriveFn },
}

impl Drive {
    pub fn harmonic(amplitude: f64, frequency: f64) -> Self {
        Drive::Harmonic { amplitude, frequency }
    }

    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Drive::Custom { name: name.into(), f: Arc::new(f) }
    }

    pub fn none() -> Self {
        Drive::Harmonic { amplitude: 0.0, frequency: 0.0 }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Drive::Harmonic { amplitude, frequency } => amplitude * (frequency * t).cos(),
            Drive::Custom { f, .. } => f(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Drive::Harmonic { amplitude, frequency } => -amplitude * frequency * (frequency * t).sin(),
            Drive::Custom { f, .. } => {
                let h = 1e-5 * (1.0 + t.abs());
                (f(t + h) - f(t - h)) / (2.0 * h)
            }
        }
    }

    /// Drive period, if the drive is harmonic with nonzero frequency.
    pub fn period(&self) -> Option<f64> {
        match self {
            Drive::Harmonic { frequency, .. } if *frequency > 0.0 => {
                Some(2.0 * std::f64::consts::PI / frequency)
            }
            _ => None,
        }
    }

    /// Largest |c(t)| used to bound the integration rate.
    pub fn amplitude_bound(&self, horizon: f64) -> f64 {
        match self {
            Drive::Harmonic { amplitude, .. } => amplitude.abs(),
            Drive::Custom { f, .. } => (0..=256)
                .map(|i| f(horizon * i as f64 / 256.0).abs())
                .fold(0.0, f64::max),
        }
    }
}

impl fmt::Debug for Drive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Drive::Harmonic { amplitude, frequency } => f
                .debug_struct("Harmonic")
                .field("amplitude", amplitude)
                .field("frequency", frequency)
                .finish(),
            Drive::Custom { name, .. } => f.debug_struct("Custom").field("name", name).finish(),
        }
    }
}

impl PartialEq for Drive {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (
                Drive::Harmonic { amplitude: a1, frequency: f1 },
                Drive::Harmonic { amplitude: a2, frequency: f2 },
            ) => a1 == a2 && f1 == f2,
            (Drive::Custom { f: f1, .. }, Drive::Custom { f: f2, .. }) => Arc::ptr_eq(f1, f2),
            _ => false,
        }
    }
}

/// Accuracy of the double-integral quadrature in the noise matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum QuadratureOrder {
    /// Product trapezoid, error O(h^2).
    Second,
    /// Richardson extrapolation of the trapezoid on h and 2h.
    #[default]
    Fourth,
}

/// Output times and inner resolution of the memory integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulationGrid {
    pub final_times: Vec<f64>,
    /// Minimum number of inner steps on `[0, t]`.
    pub inner_steps: usize,
    /// Upper bound on the inner step; long horizons get more steps.
    pub max_step: f64,
    pub quadrature_order: QuadratureOrder,
}

impl SimulationGrid {
    pub fn new(final_times: Vec<f64>) -> Self {
        Self { final_times, inner_steps: 2000, max_step: 0.02, quadrature_order: QuadratureOrder::Fourth }
    }

    /// `count` equally spaced times from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize) -> Self {
        let times = if count <= 1 {
            vec![stop]
        } else {
            (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect()
        };
        Self::new(times)
    }

    /// Inner step count used for final time `t`; always even.
    pub fn steps_for(&self, t: f64) -> usize {
        let by_step = (t / self.max_step).ceil() as usize;
        let n = self.inner_steps.max(by_step).max(2);
        n + n % 2
    }
}

/// Complete description of one simulation.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub oscillators: [OscillatorParams; 2],
    pub baths: [BathParams; 2],
    pub drive: Drive,
    pub grid: SimulationGrid,
    pub initial: GaussianState,
}

/// One failed validation rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

/// All violations found by [`ModelConfig::validate`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { field: field.into(), message: message.into() });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "ok");
        }
        let parts: Vec<String> =
            self.violations.iter().map(|v| format!("{}: {}", v.field, v.message)).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl ModelConfig {
    /// Identical oscillators with `omega = m = 1`, identical baths, harmonic drive and
    /// vacuum initial state.
    pub fn symmetric(coupling: f64, cutoff: f64, temperature: f64, amplitude: f64, drive_frequency: f64) -> Self {
        let osc = OscillatorParams::default();
        let bath = BathParams::new(coupling, cutoff, temperature);
        Self {
            oscillators: [osc, osc],
            baths: [bath, bath],
            drive: Drive::harmonic(amplitude, drive_frequency),
            grid: SimulationGrid::linspace(0.0, 30.0, 61),
            initial: GaussianState::vacuum(&[osc, osc]),
        }
    }

    pub fn with_times(mut self, final_times: Vec<f64>) -> Self {
        self.grid.final_times = final_times;
        self
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        for (i, o) in self.oscillators.iter().enumerate() {
            let p = format!("osc{}", i + 1);
            if !(o.mass.is_finite() && o.mass > 0.0) {
                r.push(format!("{p}.mass"), "must be finite and > 0");
            }
            if !(o.frequency.is_finite() && o.frequency > 0.0) {
                r.push(format!("{p}.frequency"), "must be finite and > 0");
            }
        }
        for (i, b) in self.baths.iter().enumerate() {
            let p = format!("bath{}", i + 1);
            if !(b.coupling.is_finite() && b.coupling >= 0.0) {
                r.push(format!("{p}.coupling"), "must be finite and >= 0");
            }
            if !(b.cutoff.is_finite() && b.cutoff > 0.0) {
                r.push(format!("{p}.cutoff"), "must be finite and > 0");
            }
            if !(b.temperature.is_finite() && b.temperature >= 0.0) {
                r.push(format!("{p}.temperature"), "must be finite and >= 0");
            }
            if b.matsubara_terms == Some(0) {
                r.push(format!("{p}.matsubara_terms"), "must be >= 1 when given");
            }
        }
        match &self.drive {
            Drive::Harmonic { amplitude, frequency } => {
                if !amplitude.is_finite() {
                    r.push("drive.amplitude", "must be finite");
                }
                if !(frequency.is_finite() && *frequency >= 0.0) {
                    r.push("drive.frequency", "must be finite and >= 0");
                }
            }
            Drive::Custom { f, .. } => {
                if !f(0.0).is_finite() {
                    r.push("drive", "custom drive is not finite at t = 0");
                }
            }
        }
        let g = &self.grid;
        if g.final_times.is_empty() {
            r.push("grid.final_times", "must not be empty");
        }
        if g.final_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            r.push("grid.final_times", "must be finite and >= 0");
        }
        if g.final_times.windows(2).any(|w| w[1] <= w[0]) {
            r.push("grid.final_times", "must be strictly increasing");
        }
        if g.inner_steps < 2 {
            r.push("grid.inner_steps", "must be >= 2");
        }
        if !(g.max_step.is_finite() && g.max_step > 0.0) {
            r.push("grid.max_step", "must be finite and > 0");
        }
        if let Err(e) = self.initial.check_physical(1e-9) {
            r.push("initial", e.to_string());
        }
        r
    }

    pub fn validated(self) -> Result<Self> {
        let report = self.validate();
        if report.is_ok() {
            Ok(self)
        } else {
            Err(Error::InvalidConfig(report))
        }
    }

    /// Set a numeric parameter by its config-file key, e.g. `bath1.temperature`.
    ///
    /// `osc.*` and `bath.*` (no index) set both oscillators or both baths.
    pub fn set_path(&mut self, path: &str, value: f64) -> Result<()> {
        let (head, field) = path
            .split_once('.')
            .ok_or_else(|| Error::InvalidArgument(format!("bad parameter path `{path}`")))?;
        let targets: &[usize] = match head {
            "osc" | "bath" => &[0, 1],
            "osc1" | "bath1" => &[0],
            "osc2" | "bath2" => &[1],
            "drive" => &[],
            _ => return Err(Error::InvalidArgument(format!("bad parameter path `{path}`"))),
        };
        let unknown = || Error::InvalidArgument(format!("unknown parameter `{path}`"));
        if head == "drive" {
            let (a, w) = match &self.drive {
                Drive::Harmonic { amplitude, frequency } => (*amplitude, *frequency),
                Drive::Custom { .. } => {
                    return Err(Error::InvalidArgument("cannot set fields of a custom drive".into()))
                }
            };
            self.drive = match field {
                "amplitude" => Drive::harmonic(value, w),
                "frequency" => Drive::harmonic(a, value),
                _ => return Err(unknown()),
            };
            return Ok(());
        }
        for &i in targets {
            if head.starts_with("osc") {
                let o = &mut self.oscillators[i];
                match field {
                    "mass" => o.mass = value,
                    "frequency" => o.frequency = value,
                    _ => return Err(unknown()),
                }
            } else {
                let b = &mut self.baths[i];
                match field {
                    "coupling" => b.coupling = value,
                    "cutoff" => b.cutoff = value,
                    "temperature" => b.temperature = value,
                    _ => return Err(unknown()),
                }
            }
        }
        Ok(())
    }

    /// Parse the flat TOML config format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_config()
    }

    /// Serialize to the flat TOML config format. Round-trips exactly.
    pub fn to_toml_string(&self) -> Result<String> {
        let (amplitude, frequency) = match &self.drive {
            Drive::Harmonic { amplitude, frequency } => (*amplitude, *frequency),
            Drive::Custom { .. } => {
                return Err(Error::InvalidArgument("a custom drive cannot be serialized".into()))
            }
        };
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        for (i, o) in self.oscillators.iter().enumerate() {
            line(&format!("osc{}.mass", i + 1), fmt_f64(o.mass));
            line(&format!("osc{}.frequency", i + 1), fmt_f64(o.frequency));
        }
        for (i, b) in self.baths.iter().enumerate() {
            let p = format!("bath{}", i + 1);
            line(&format!("{p}.coupling"), fmt_f64(b.coupling));
            line(&format!("{p}.cutoff"), fmt_f64(b.cutoff));
            line(&format!("{p}.temperature"), fmt_f64(b.temperature));
            if let Some(n) = b.matsubara_terms {
                line(&format!("{p}.matsubara_terms"), n.to_string());
            }
            line(&format!("{p}.tail_correction"), b.tail_correction.to_string());
        }
        line("drive.kind", "\"harmonic\"".into());
        line("drive.amplitude", fmt_f64(amplitude));
        line("drive.frequency", fmt_f64(frequency));
        let times: Vec<String> = self.grid.final_times.iter().map(|t| fmt_f64(*t)).collect();
        line("grid.final_times", format!("[{}]", times.join(", ")));
        line("grid.inner_steps", self.grid.inner_steps.to_string());
        line("grid.max_step", fmt_f64(self.grid.max_step));
        let order = match self.grid.quadrature_order {
            QuadratureOrder::Second => 2,
            QuadratureOrder::Fourth => 4,
        };
        line("grid.quadrature_order", order.to_string());
        let m = &self.initial.mean;
        let s = &self.initial.covariance;
        let names = ["q1", "q2", "p1", "p2"];
        for i in 0..4 {
            line(&format!("initial.mean_{}", names[i]), fmt_f64(m[i]));
        }
        for i in 0..4 {
            for j in i..4 {
                line(&format!("initial.cov_{}_{}", names[i], names[j]), fmt_f64(s[(i, j)]));
            }
        }
        Ok(out)
    }

    /// SHA-256 of the serialized config, used to detect completed runs.
    pub fn content_hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml_string()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OscFile {
    mass: Option<f64>,
    frequency: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BathFile {
    coupling: f64,
    cutoff: f64,
    temperature: f64,
    matsubara_terms: Option<usize>,
    tail_correction: Option<bool>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DriveFile {
    kind: Option<String>,
    amplitude: f64,
    frequency: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GridFile {
    final_times: Option<Vec<f64>>,
    time_start: Option<f64>,
    time_stop: Option<f64>,
    time_count: Option<usize>,
    inner_steps: Option<usize>,
    max_step: Option<f64>,
    quadrature_order: Option<u8>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct InitialFile {
    state: Option<String>,
    mean_q1: Option<f64>,
    mean_q2: Option<f64>,
    mean_p1: Option<f64>,
    mean_p2: Option<f64>,
    cov_q1_q1: Option<f64>,
    cov_q1_q2: Option<f64>,
    cov_q1_p1: Option<f64>,
    cov_q1_p2: Option<f64>,
    cov_q2_q2: Option<f64>,
    cov_q2_p1: Option<f64>,
    cov_q2_p2: Option<f64>,
    cov_p1_p1: Option<f64>,
    cov_p1_p2: Option<f64>,
    cov_p2_p2: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    osc1: Option<OscFile>,
    osc2: Option<OscFile>,
    bath1: BathFile,
    bath2: Option<BathFile>,
    drive: DriveFile,
    grid: GridFile,
    initial: Option<InitialFile>,
}

impl ConfigFile {
    fn into_config(self) -> Result<ModelConfig> {
        let osc = |o: Option<OscFile>| {
            let o = o.unwrap_or(OscFile { mass: None, frequency: None });
            OscillatorParams { mass: o.mass.unwrap_or(1.0), frequency: o.frequency.unwrap_or(1.0) }
        };
        let oscillators = [osc(self.osc1), osc(self.osc2)];
        let bath = |b: &BathFile| BathParams {
            coupling: b.coupling,
            cutoff: b.cutoff,
            temperature: b.temperature,
            matsubara_terms: b.matsubara_terms,
            tail_correction: b.tail_correction.unwrap_or(true),
        };
        let b1 = bath(&self.bath1);
        let b2 = self.bath2.as_ref().map(bath).unwrap_or(b1);
        match self.drive.kind.as_deref() {
            None | Some("harmonic") => {}
            Some("constant") => {
                if self.drive.frequency.is_some_and(|w| w != 0.0) {
                    return Err(Error::Parse("a constant drive takes no frequency".into()));
                }
            }
            Some(other) => return Err(Error::Parse(format!("unknown drive.kind `{other}`"))),
        }
        let drive = Drive::harmonic(self.drive.amplitude, self.drive.frequency.unwrap_or(0.0));
        let g = self.grid;
        let final_times = match (g.final_times, g.time_start, g.time_stop, g.time_count) {
            (Some(t), None, None, None) => t,
            (None, start, Some(stop), Some(count)) => {
                SimulationGrid::linspace(start.unwrap_or(0.0), stop, count).final_times
            }
            _ => {
                return Err(Error::Parse(
                    "give either grid.final_times or grid.time_stop with grid.time_count".into(),
                ))
            }
        };
        let mut grid = SimulationGrid::new(final_times);
        if let Some(n) = g.inner_steps {
            grid.inner_steps = n;
        }
        if let Some(h) = g.max_step {
            grid.max_step = h;
        }
        grid.quadrature_order = match g.quadrature_order {
            None | Some(4) => QuadratureOrder::Fourth,
            Some(2) => QuadratureOrder::Second,
            Some(k) => return Err(Error::Parse(format!("grid.quadrature_order must be 2 or 4, got {k}"))),
        };
        let init = self.initial.unwrap_or_default();
        let base = match init.state.as_deref() {
            None | Some("vacuum") => GaussianState::vacuum(&oscillators),
            Some(other) => return Err(Error::Parse(format!("unknown initial.state `{other}`"))),
        };
        let mut mean = base.mean;
        let mut cov = base.covariance;
        let means = [init.mean_q1, init.mean_q2, init.mean_p1, init.mean_p2];
        for (i, m) in means.iter().enumerate() {
            if let Some(v) = m {
                mean[i] = *v;
            }
        }
        let covs = [
            (0, 0, init.cov_q1_q1),
            (0, 1, init.cov_q1_q2),
            (0, 2, init.cov_q1_p1),
            (0, 3, init.cov_q1_p2),
            (1, 1, init.cov_q2_q2),
            (1, 2, init.cov_q2_p1),
            (1, 3, init.cov_q2_p2),
            (2, 2, init.cov_p1_p1),
            (2, 3, init.cov_p1_p2),
            (3, 3, init.cov_p2_p2),
        ];
        for (i, j, v) in covs {
            if let Some(v) = v {
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        Ok(ModelConfig {
            oscillators,
            baths: [b1, b2],
            drive,
            grid,
            initial: GaussianState::new(Vector4::from(mean), Matrix4::from(cov)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn negative_temperature_is_rejected_with_field_name() {
        let mut c = ModelConfig::symmetric(1e-3, 1.0, 5.0, 0.2, 2.0);
        c.baths[1].temperature = -1.0;
        let r = c.validate();
        assert!(!r.is_ok());
        assert!(r.violations.iter().any(|v| v.field == "bath2.temperature"));
        assert!(matches!(c.validated(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn zero_coupling_is_valid() {
        let c = ModelConfig::symmetric(0.0, 1.0, 5.0, 0.2, 2.0);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unphysical_initial_state_is_rejected() {
        let mut c = ModelConfig::symmetric(1e-3, 1.0, 5.0, 0.2, 2.0);
        c.initial.covariance[(0, 0)] = 0.1;
        c.initial.covariance[(2, 2)] = 0.1;
        assert!(c.validate().violations.iter().any(|v| v.field == "initial"));
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let mut c = ModelConfig::symmetric(1e-3, 20.0, 2.5, 0.2, 2.0);
        c.oscillators[1].frequency = 1.07;
        c.baths[0].matsubara_terms = Some(1000);
        c.baths[1].temperature = 1.0 / 3.0;
        c.initial.covariance[(0, 1)] = 0.125;
        c.initial.covariance[(1, 0)] = 0.125;
        c.grid = SimulationGrid::linspace(0.0, 7.3, 11);
        let text = c.to_toml_string().unwrap();
        let back = ModelConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml_string().unwrap(), text);
        assert_eq!(back.content_hash().unwrap(), c.content_hash().unwrap());
    }

    #[test]
    fn parses_hand_written_file() {
        let text = r#"
            bath1.coupling = 1e-3
            bath1.cutoff = 1.0
            bath1.temperature = 5.0
            drive.amplitude = 0.2
            drive.frequency = 2.0
            grid.time_stop = 30.0
            grid.time_count = 61
        "#;
        let c = ModelConfig::from_toml_str(text).unwrap();
        assert_eq!(c.baths[1], c.baths[0]);
        assert_eq!(c.grid.final_times.len(), 61);
        assert_eq!(c.grid.final_times[60], 30.0);
        assert!(c.validate().is_ok());
        assert!(ModelConfig::from_toml_str("bath1.bogus = 1").is_err());
    }

    #[test]
    fn set_path_applies_to_both_baths() {
        let mut c = ModelConfig::symmetric(1e-3, 1.0, 5.0, 0.2, 2.0);
        c.set_path("bath.temperature", 7.0).unwrap();
        assert_eq!(c.baths[0].temperature, 7.0);
        assert_eq!(c.baths[1].temperature, 7.0);
        c.set_path("osc2.mass", 2.0).unwrap();
        assert_eq!(c.oscillators[1].mass, 2.0);
        assert!(c.set_path("bath1.nope", 1.0).is_err());
    }

    #[test]
    fn inner_steps_grow_with_horizon() {
        let g = SimulationGrid::new(vec![1.0]);
        assert_eq!(g.steps_for(10.0), 2000);
        assert_eq!(g.steps_for(100.0), 5000);
        assert_eq!(g.steps_for(100.01) % 2, 0);
    }
}
