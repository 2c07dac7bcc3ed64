//! Symplectic spectra, logarithmic negativity and the scaled-parameter predicate.

use std::path::Path;

use nalgebra::Matrix4;

use crate::error::{Error, Result};
use crate::gaussian_moments::MomentTrace;
use crate::kernels::spectral_density;
use crate::model::{BathParams, ModelConfig, OscillatorParams};

/// Symplectic eigenvalues `(nu_minus, nu_plus)` of a two-mode covariance matrix in
/// `(q1, q2, p1, p2)` ordering.
///
/// With `sigma = L L^T`, the antisymmetric `K = L^T J L` has eigenvalues `+-i nu`, so the
/// symmetric `K^T K` carries each `nu^2` twice. This stays accurate for degenerate spectra.
pub fn symplectic_spectrum(sigma: &Matrix4<f64>) -> Result<(f64, f64)> {
    let asym = (sigma - sigma.transpose()).amax();
    if asym.is_nan() || asym > 1e-12 * sigma.amax() {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    if sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "covariance", s: 0.0 });
    }
    let sym = 0.5 * (sigma + sigma.transpose());
    let l = sym.cholesky().ok_or(Error::NotPositiveDefinite)?.unpack();
    let mut j = Matrix4::zeros();
    j[(0, 2)] = 1.0;
    j[(1, 3)] = 1.0;
    j[(2, 0)] = -1.0;
    j[(3, 1)] = -1.0;
    let k = l.transpose() * j * l;
    let mut ev: Vec<f64> = (k.transpose() * k).symmetric_eigenvalues().iter().map(|x| x.max(0.0).sqrt()).collect();
    ev.sort_by(f64::total_cmp);
    // Each value appears twice; average the pairs.
    Ok((0.5 * (ev[0] + ev[1]), 0.5 * (ev[2] + ev[3])))
}

/// Partial transpose on mode 2: `p2 -> -p2`.
pub fn partial_transpose(sigma: &Matrix4<f64>) -> Matrix4<f64> {
    let mut s = *sigma;
    for i in 0..4 {
        if i != 3 {
            s[(i, 3)] = -s[(i, 3)];
            s[(3, i)] = -s[(3, i)];
        }
    }
    s
}

/// Symplectic eigenvalues of the partially transposed covariance.
pub fn pt_symplectic_spectrum(sigma: &Matrix4<f64>) -> Result<(f64, f64)> {
    symplectic_spectrum(&partial_transpose(sigma))
}

/// `E_N = -sum log2(min(1, 2 nu~))` over the partially transposed symplectic eigenvalues.
pub fn log_negativity(sigma: &Matrix4<f64>) -> Result<f64> {
    let (m, p) = pt_symplectic_spectrum(sigma)?;
    Ok([m, p].iter().map(|nu| 0.0 - (2.0 * nu).min(1.0).log2()).sum())
}

/// Logarithmic negativity along a moment trace with a steady-state estimate.
#[derive(Clone, Debug)]
pub struct EntanglementTrace {
    pub times: Vec<f64>,
    pub log_negativity: Vec<f64>,
    pub min_pt_symplectic: Vec<f64>,
    pub min_symplectic: Vec<f64>,
    pub in_window: Vec<bool>,
    /// Averaging window `[start, end]` used for the steady-state estimate.
    pub window: (f64, f64),
    pub steady_mean: f64,
    pub steady_std: f64,
}

impl EntanglementTrace {
    /// The window is the last full drive period, or the last tenth of the horizon when
    /// the drive is not periodic.
    pub fn from_trace(trace: &MomentTrace, config: &ModelConfig) -> Result<Self> {
        let end = *trace.times.last().ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
        let span = config.drive.period().unwrap_or(0.1 * end);
        Self::with_window(trace, (end - span).max(0.0))
    }

    pub fn with_window(trace: &MomentTrace, start: f64) -> Result<Self> {
        let end = *trace.times.last().ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
        let mut out = Self {
            times: trace.times.clone(),
            log_negativity: Vec::new(),
            min_pt_symplectic: Vec::new(),
            min_symplectic: Vec::new(),
            in_window: Vec::new(),
            window: (start, end),
            steady_mean: 0.0,
            steady_std: 0.0,
        };
        let eps = 1e-9 * end.max(1.0);
        for (t, s) in trace.times.iter().zip(&trace.states) {
            out.log_negativity.push(log_negativity(&s.covariance)?);
            out.min_pt_symplectic.push(pt_symplectic_spectrum(&s.covariance)?.0);
            out.min_symplectic.push(symplectic_spectrum(&s.covariance)?.0);
            out.in_window.push(*t >= start - eps);
        }
        let vals: Vec<f64> = out
            .log_negativity
            .iter()
            .zip(&out.in_window)
            .filter(|(_, w)| **w)
            .map(|(e, _)| *e)
            .collect();
        let n = vals.len() as f64;
        out.steady_mean = vals.iter().sum::<f64>() / n;
        out.steady_std = (vals.iter().map(|v| (v - out.steady_mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(out)
    }

    /// Rows `t, E_N, min PT symplectic eigenvalue, steady-window flag`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,log_negativity,min_pt_symplectic,steady_window\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{:e},{:e},{:e},{}\n",
                self.times[i], self.log_negativity[i], self.min_pt_symplectic[i], self.in_window[i] as u8
            ));
        }
        crate::io::write_atomic(path, out.as_bytes())
    }
}

/// Effective parameters of the non-Markovian rescaling at mode frequency `omega`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledParameters {
    /// `Omega^2 / (Omega^2 + omega^2)`.
    pub factor: f64,
    pub temperature: f64,
    pub coupling: f64,
    /// Parametric growth rate `c1 / (4 m omega)` of the bare drive.
    pub growth_rate: f64,
    pub growth_rate_scaled: f64,
}

impl ScaledParameters {
    pub fn new(bath: &BathParams, osc: &OscillatorParams, amplitude: f64, omega: f64) -> Self {
        let factor = bath.cutoff.powi(2) / (bath.cutoff.powi(2) + omega * omega);
        let mu = amplitude.abs() / (4.0 * osc.mass * omega);
        Self {
            factor,
            temperature: bath.temperature * factor,
            coupling: bath.coupling * factor,
            growth_rate: mu,
            growth_rate_scaled: mu / factor,
        }
    }

    /// Uses bath 1, oscillator 1 and the drive amplitude of `config`.
    pub fn from_config(config: &ModelConfig, omega: f64) -> Self {
        let amplitude = match config.drive {
            crate::model::Drive::Harmonic { amplitude, .. } => amplitude,
            crate::model::Drive::Custom { .. } => config.drive.amplitude_bound(1.0),
        };
        Self::new(&config.baths[0], &config.oscillators[0], amplitude, omega)
    }
}

/// Outcome of `hbar omega^2 mu > k_B T J(omega) / m`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredicateResult {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs / lhs`; infinite when the bath term vanishes.
    pub margin: f64,
    pub satisfied: bool,
    /// `hbar omega / k_B T`; the criterion is derived for values well below one.
    pub beta_omega: f64,
    pub high_temperature: bool,
}

pub fn quantum_limit_predicate(bath: &BathParams, osc: &OscillatorParams, omega: f64, mu: f64) -> PredicateResult {
    let lhs = bath.temperature * spectral_density(omega, bath, osc) / osc.mass;
    let rhs = omega * omega * mu;
    let margin = if lhs == 0.0 { f64::INFINITY } else { rhs / lhs };
    let beta_omega = omega / bath.temperature;
    PredicateResult { lhs, rhs, margin, satisfied: rhs > lhs, beta_omega, high_temperature: beta_omega < 1.0 }
}
