//! Gaussian states and the exact first/second-moment map of the reduced propagator.
//!
//! Phase-space ordering is `(q1, q2, p1, p2)`; covariances are symmetrized,
//! `sigma_ij = <{x_i - mu_i, x_j - mu_j}> / 2`.

use std::path::Path;

use nalgebra::{Matrix2, Matrix4, Vector4};

use crate::entanglement::symplectic_spectrum;
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{ModelConfig, OscillatorParams};
use crate::propagator::PropagatorMatrices;

/// Mean vector and covariance matrix of a two-mode Gaussian state.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianState {
    pub mean: Vector4<f64>,
    pub covariance: Matrix4<f64>,
}

impl GaussianState {
    pub fn new(mean: Vector4<f64>, covariance: Matrix4<f64>) -> Self {
        Self { mean, covariance }
    }

    /// Product of single-mode states with the given `(var_q, var_p)`.
    fn product(osc: &[OscillatorParams; 2], scale_q: [f64; 2], scale_p: [f64; 2]) -> Self {
        let mut s = Matrix4::zeros();
        for a in 0..2 {
            let mw = osc[a].mass * osc[a].frequency;
            s[(a, a)] = scale_q[a] / (2.0 * mw);
            s[(a + 2, a + 2)] = scale_p[a] * mw / 2.0;
        }
        Self::new(Vector4::zeros(), s)
    }

    pub fn vacuum(osc: &[OscillatorParams; 2]) -> Self {
        Self::product(osc, [1.0; 2], [1.0; 2])
    }

    /// Thermal state with mean occupations `nbar`.
    pub fn thermal(osc: &[OscillatorParams; 2], nbar: [f64; 2]) -> Self {
        let f = [2.0 * nbar[0] + 1.0, 2.0 * nbar[1] + 1.0];
        Self::product(osc, f, f)
    }

    /// Thermal state of the bare oscillators at temperature `t`.
    pub fn thermal_at(osc: &[OscillatorParams; 2], t: f64) -> Self {
        let nbar = |o: &OscillatorParams| if t == 0.0 { 0.0 } else { 1.0 / (o.frequency / t).exp_m1() };
        Self::thermal(osc, [nbar(&osc[0]), nbar(&osc[1])])
    }

    /// Single-mode squeezed vacuum in oscillator 1 (position variance reduced by `e^{-2r}`).
    pub fn squeezed(osc: &[OscillatorParams; 2], r: f64) -> Self {
        Self::product(osc, [(-2.0 * r).exp(), 1.0], [(2.0 * r).exp(), 1.0])
    }

    /// Vacuum displaced to the given mean.
    pub fn coherent(osc: &[OscillatorParams; 2], mean: [f64; 4]) -> Self {
        let mut s = Self::vacuum(osc);
        s.mean = Vector4::from(mean);
        s
    }

    /// Two-mode squeezed vacuum with squeezing `r`.
    pub fn two_mode_squeezed(osc: &[OscillatorParams; 2], r: f64) -> Self {
        let (c, sh) = ((2.0 * r).cosh() / 2.0, (2.0 * r).sinh() / 2.0);
        let mut s = Matrix4::from_diagonal(&Vector4::new(c, c, c, c));
        s[(0, 1)] = sh;
        s[(1, 0)] = sh;
        s[(2, 3)] = -sh;
        s[(3, 2)] = -sh;
        let l: Vec<f64> = osc.iter().map(|o| 1.0 / (o.mass * o.frequency).sqrt()).collect();
        let d = Matrix4::from_diagonal(&Vector4::new(l[0], l[1], 1.0 / l[0], 1.0 / l[1]));
        Self::new(Vector4::zeros(), d * s * d)
    }

    /// Symmetric, positive definite and obeying the uncertainty principle with
    /// smallest symplectic eigenvalue at least `(1 - tol) / 2`.
    pub fn check_physical(&self, tol: f64) -> Result<()> {
        if self.mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "mean", s: 0.0 });
        }
        let (nu_min, _) = symplectic_spectrum(&self.covariance)?;
        if nu_min < 0.5 * (1.0 - tol) {
            return Err(Error::Unphysical { nu: nu_min });
        }
        Ok(())
    }
}

/// Linear maps of the characteristic-function argument.
///
/// With `eta = (k1, k2, q1'', q2'')`, `chi_t(eta) = chi_0(L eta) exp(-(G eta)^T B (G eta))`,
/// so `mu_t = L^T mu_0` and `sigma_t = L^T sigma_0 L + 2 G^T B G`.
#[derive(Clone, Debug)]
pub struct MomentMap {
    pub l: Matrix4<f64>,
    pub g: Matrix4<f64>,
    pub b: Matrix4<f64>,
}

impl MomentMap {
    pub fn new(pm: &PropagatorMatrices) -> Result<Self> {
        let a = &pm.a;
        let block = |r: usize, c: usize| {
            Matrix2::new(a[(r, c)], a[(r, c + 1)], a[(r + 1, c)], a[(r + 1, c + 1)]).transpose() * 2.0
        };
        // Coefficient matrices of Q'' and Q' in phi_I, as functions of q'' and q'.
        let x = block(4, 0);
        let w = block(6, 0);
        let y = block(4, 2);
        let z = block(6, 2);
        let w_inv = w.try_inverse().ok_or(Error::SingularPropagator { t: pm.t, det: w.determinant() })?;
        let zw = z * w_inv;
        let mut l = Matrix4::zeros();
        l.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-zw));
        l.fixed_view_mut::<2, 2>(0, 2).copy_from(&(y - zw * x));
        l.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-w_inv));
        l.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-w_inv * x));
        let mut g = Matrix4::zeros();
        g.fixed_view_mut::<2, 2>(0, 2).copy_from(&Matrix2::identity());
        g.fixed_view_mut::<2, 2>(2, 0).copy_from(&(-w_inv));
        g.fixed_view_mut::<2, 2>(2, 2).copy_from(&(-w_inv * x));
        Ok(Self { l, g, b: pm.b })
    }

    pub fn apply(&self, s: &GaussianState) -> GaussianState {
        let mean = self.l.transpose() * s.mean;
        let cov = self.l.transpose() * s.covariance * self.l + 2.0 * self.g.transpose() * self.b * self.g;
        GaussianState::new(mean, 0.5 * (cov + cov.transpose()))
    }
}

/// Propagate `initial` with the matrices of one final time.
pub fn propagate(initial: &GaussianState, pm: &PropagatorMatrices) -> Result<GaussianState> {
    let out = MomentMap::new(pm)?.apply(initial);
    out.check_physical(1e-6).map_err(|e| e.at(pm.t))?;
    Ok(out)
}

/// Moments at every final time of a configuration.
#[derive(Clone, Debug)]
pub struct MomentTrace {
    pub times: Vec<f64>,
    pub states: Vec<GaussianState>,
    /// Boundary-matching condition number per time (1 at `t = 0`).
    pub condition: Vec<f64>,
}

/// State at a single final time; `t = 0` returns the initial state.
pub fn state_at(config: &ModelConfig, t: f64) -> Result<(GaussianState, f64)> {
    if t == 0.0 {
        return Ok((config.initial.clone(), 1.0));
    }
    let pm = PropagatorMatrices::compute(config, t).map_err(|e| e.at(t))?;
    Ok((propagate(&config.initial, &pm)?, pm.condition))
}

pub fn moment_trace(config: &ModelConfig) -> Result<MomentTrace> {
    moment_trace_with(config, Execution::default())
}

/// Final times are independent and are distributed over the pool in parallel mode.
pub fn moment_trace_with(config: &ModelConfig, exec: Execution) -> Result<MomentTrace> {
    let report = config.validate();
    if !report.is_ok() {
        return Err(Error::InvalidConfig(report));
    }
    let results = exec::map(exec, &config.grid.final_times, |&t| state_at(config, t));
    let mut trace = MomentTrace { times: config.grid.final_times.clone(), states: Vec::new(), condition: Vec::new() };
    for r in results {
        let (s, c) = r?;
        trace.states.push(s);
        trace.condition.push(c);
    }
    Ok(trace)
}

impl MomentTrace {
    /// Rows `t, mean(4), sigma upper triangle (10), min symplectic eigenvalue`.
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(t, s)| {
                let mut row = vec![*t];
                row.extend(s.mean.iter());
                for i in 0..4 {
                    for j in i..4 {
                        row.push(s.covariance[(i, j)]);
                    }
                }
                row.push(symplectic_spectrum(&s.covariance).map(|x| x.0).unwrap_or(f64::NAN));
                row
            })
            .collect()
    }

    pub fn header() -> String {
        let names = ["q1", "q2", "p1", "p2"];
        let mut cols = vec!["t".to_string()];
        cols.extend(names.iter().map(|n| format!("mean_{n}")));
        for i in 0..4 {
            for j in i..4 {
                cols.push(format!("cov_{}_{}", names[i], names[j]));
            }
        }
        cols.push("min_symplectic".into());
        cols.join(",")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Self::header();
        out.push('\n');
        for row in self.rows() {
            out.push_str(&crate::io::csv_row(&row));
            out.push('\n');
        }
        crate::io::write_atomic(path, out.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn free_evolution_rotates_phase_space() {
        let mut c = ModelConfig::symmetric(0.0, 1.0, 5.0, 0.0, 2.0);
        c.oscillators[1] = OscillatorParams { mass: 1.5, frequency: 0.8 };
        c.initial = GaussianState::coherent(&c.oscillators, [0.7, -0.2, 0.1, 0.4]);
        let t = 1.3;
        let (s, _) = state_at(&c, t).unwrap();
        for a in 0..2 {
            let o = c.oscillators[a];
            let (q0, p0) = (c.initial.mean[a], c.initial.mean[a + 2]);
            let w = o.frequency;
            let q = q0 * (w * t).cos() + p0 / (o.mass * w) * (w * t).sin();
            let p = -o.mass * w * q0 * (w * t).sin() + p0 * (w * t).cos();
            assert_relative_eq!(s.mean[a], q, epsilon = 1e-9);
            assert_relative_eq!(s.mean[a + 2], p, epsilon = 1e-9);
        }
        let vac = GaussianState::vacuum(&c.oscillators);
        for (x, y) in s.covariance.iter().zip(vac.covariance.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-9);
        }
    }

    #[test]
    fn zero_time_is_identity() {
        let c = ModelConfig::symmetric(1e-3, 1.0, 5.0, 0.0, 2.0).with_times(vec![0.0, 1e-4]);
        let tr = moment_trace_with(&c, Execution::Sequential).unwrap();
        assert_eq!(tr.states[0], c.initial);
        for (x, y) in tr.states[1].covariance.iter().zip(c.initial.covariance.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-6);
        }
    }

    #[test]
    fn sequential_and_parallel_traces_are_identical() {
        let c = ModelConfig::symmetric(1e-3, 1.0, 5.0, 0.2, 2.0).with_times(vec![0.5, 1.0, 1.5]);
        let a = moment_trace_with(&c, Execution::Sequential).unwrap();
        let b = moment_trace_with(&c, Execution::Parallel).unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn named_states_are_physical() {
        let o = [OscillatorParams::default(), OscillatorParams { mass: 2.0, frequency: 0.5 }];
        for s in [
            GaussianState::vacuum(&o),
            GaussianState::thermal(&o, [2.0, 0.5]),
            GaussianState::squeezed(&o, 0.5),
            GaussianState::two_mode_squeezed(&o, 1.0),
        ] {
            s.check_physical(1e-12).unwrap();
        }
    }
}
