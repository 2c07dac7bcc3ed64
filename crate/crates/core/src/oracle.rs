//! Closed-system oracle: each bath replaced by a finite set of harmonic modes and the
//! whole linear system propagated exactly in phase space.
//!
//! The reduced moments at time `t` only need the four system rows of the full
//! transfer matrix `Phi(t, 0)`. They come from adjoint solves `w' = -M(s)^T w`
//! integrated backwards from `w(t) = e_i`, each costing `O(n)` per step.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Matrix4, Vector4};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::gaussian_moments::{GaussianState, MomentTrace};
use crate::kernels::spectral_density;
use crate::model::{BathParams, Drive, ModelConfig, OscillatorParams};

/// Placement of the discrete bath frequencies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DiscretizationRule {
    /// `omega_k = (k - 1/2) d omega` on `(0, omega_max]`, weights `J(omega_k) d omega`.
    /// Kernel sums are then midpoint rules, accurate up to the recurrence time.
    #[default]
    LinearMidpoint,
    /// Nodes at the midpoints of equal-`J`-weight bins; every mode carries the same weight.
    EqualWeight,
}

/// Finite set of bath oscillators with bilinear couplings `c_k q_k q_system`.
#[derive(Clone, Debug)]
pub struct DiscreteBath {
    pub frequencies: Vec<f64>,
    pub couplings: Vec<f64>,
    pub masses: Vec<f64>,
    pub rule: DiscretizationRule,
    pub omega_max: f64,
}

impl DiscreteBath {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }

    /// `pi c_k^2 / (2 m_k omega_k)`, the spectral weight represented by mode `k`.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|k| PI * self.couplings[k].powi(2) / (2.0 * self.masses[k] * self.frequencies[k]))
            .collect()
    }

    /// Counterterm `sum c_k^2 / (m_k omega_k^2)`.
    pub fn counterterm(&self) -> f64 {
        (0..self.len())
            .map(|k| self.couplings[k].powi(2) / (self.masses[k] * self.frequencies[k].powi(2)))
            .sum()
    }

    /// Time after which the discrete bath returns energy coherently, `2 pi / max spacing`.
    pub fn recurrence_time(&self) -> f64 {
        let mut gaps = vec![self.frequencies[0]];
        gaps.extend(self.frequencies.windows(2).map(|w| w[1] - w[0]));
        2.0 * PI / gaps.iter().cloned().fold(0.0, f64::max)
    }
}

/// Fraction of `int J(omega)/omega` below `omega_max`.
pub fn spectral_coverage(bath: &BathParams, omega_max: f64) -> f64 {
    2.0 / PI * (omega_max / bath.cutoff).atan()
}

/// `int_lo^hi J(omega) d omega` for the Drude density.
fn drude_bin_weight(bath: &BathParams, osc: &OscillatorParams, lo: f64, hi: f64) -> f64 {
    let om2 = bath.cutoff * bath.cutoff;
    0.5 * osc.mass * bath.coupling * om2 * ((om2 + hi * hi) / (om2 + lo * lo)).ln()
}

pub fn discretize_bath(
    bath: &BathParams,
    osc: &OscillatorParams,
    n_modes: usize,
    omega_max: f64,
    rule: DiscretizationRule,
) -> Result<DiscreteBath> {
    if n_modes < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 bath modes, got {n_modes}")));
    }
    if omega_max.is_nan() || omega_max < 10.0 * bath.cutoff {
        return Err(Error::InsufficientCoverage { omega_max, coverage: spectral_coverage(bath, omega_max) });
    }
    let masses = vec![1.0; n_modes];
    let (frequencies, weights): (Vec<f64>, Vec<f64>) = match rule {
        DiscretizationRule::LinearMidpoint => {
            let dw = omega_max / n_modes as f64;
            (0..n_modes)
                .map(|k| {
                    let w = (k as f64 + 0.5) * dw;
                    (w, spectral_density(w, bath, osc) * dw)
                })
                .unzip()
        }
        DiscretizationRule::EqualWeight => {
            let c0 = osc.mass * bath.coupling * bath.cutoff.powi(2);
            let total = drude_bin_weight(bath, osc, 0.0, omega_max);
            (0..n_modes)
                .map(|k| {
                    let frac = (k as f64 + 0.5) / n_modes as f64;
                    let w = if c0 == 0.0 {
                        frac * omega_max
                    } else {
                        bath.cutoff * ((2.0 * frac * total / c0).exp() - 1.0).sqrt()
                    };
                    (w, total / n_modes as f64)
                })
                .unzip()
        }
    };
    let couplings = (0..n_modes)
        .map(|k| (2.0 * masses[k] * frequencies[k] * weights[k] / PI).sqrt())
        .collect();
    Ok(DiscreteBath { frequencies, couplings, masses, rule, omega_max })
}

/// Numerical settings of the oracle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleSettings {
    pub n_modes: usize,
    /// Spectral cutoff; `None` uses `max(20, 20 Omega)`.
    pub omega_max: Option<f64>,
    pub rule: DiscretizationRule,
    /// RK4 step bound as a fraction of the fastest period scale, `omega_max dt <= step_factor`.
    pub step_factor: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self { n_modes: 300, omega_max: None, rule: DiscretizationRule::LinearMidpoint, step_factor: 0.05 }
    }
}

/// System oscillators, drive and two discrete baths.
///
/// Phase-space layout: `(q1, q2, p1, p2)`, then for each bath its mode positions
/// followed by its mode momenta.
#[derive(Clone, Debug)]
pub struct FullSystem {
    pub oscillators: [OscillatorParams; 2],
    pub baths: [DiscreteBath; 2],
    pub drive: Drive,
    kappa: [f64; 2],
    offsets: [usize; 2],
}

impl FullSystem {
    pub fn new(config: &ModelConfig, settings: &OracleSettings) -> Result<Self> {
        let mut baths = Vec::with_capacity(2);
        for a in 0..2 {
            let b = &config.baths[a];
            let w_max = settings.omega_max.unwrap_or(20.0 * b.cutoff.max(1.0));
            baths.push(discretize_bath(b, &config.oscillators[a], settings.n_modes, w_max, settings.rule)?);
        }
        let baths: [DiscreteBath; 2] = [baths.remove(0), baths.remove(0)];
        let o = &config.oscillators;
        let kappa = [
            o[0].mass * o[0].frequency.powi(2) + baths[0].counterterm(),
            o[1].mass * o[1].frequency.powi(2) + baths[1].counterterm(),
        ];
        let offsets = [4, 4 + 2 * baths[0].len()];
        Ok(Self { oscillators: *o, baths, drive: config.drive.clone(), kappa, offsets })
    }

    pub fn dim(&self) -> usize {
        4 + 2 * (self.baths[0].len() + self.baths[1].len())
    }

    fn fastest_rate(&self) -> f64 {
        let mut r: f64 = 0.0;
        for a in 0..2 {
            r = r.max(self.baths[a].frequencies.iter().cloned().fold(0.0, f64::max));
            r = r.max((self.kappa[a] / self.oscillators[a].mass).sqrt());
        }
        r
    }

    /// Symmetric matrix `H` with energy `x^T H x / 2`.
    pub fn hamiltonian_matrix(&self, s: f64) -> DMatrix<f64> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        let c = self.drive.eval(s);
        h[(0, 1)] = c;
        h[(1, 0)] = c;
        for a in 0..2 {
            h[(a, a)] = self.kappa[a];
            h[(a + 2, a + 2)] = 1.0 / self.oscillators[a].mass;
            let b = &self.baths[a];
            let off = self.offsets[a];
            for k in 0..b.len() {
                let (iq, ip) = (off + k, off + b.len() + k);
                h[(iq, iq)] = b.masses[k] * b.frequencies[k].powi(2);
                h[(ip, ip)] = 1.0 / b.masses[k];
                h[(iq, a)] = -b.couplings[k];
                h[(a, iq)] = -b.couplings[k];
            }
        }
        h
    }

    /// Generator `M` of `x' = M x`, from `q' = dH/dp`, `p' = -dH/dq`.
    pub fn generator(&self, s: f64) -> DMatrix<f64> {
        let h = self.hamiltonian_matrix(s);
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let (qs, ps) = self.coordinate_pairs();
        for (&q, &p) in qs.iter().zip(&ps) {
            for j in 0..n {
                m[(q, j)] = h[(p, j)];
                m[(p, j)] = -h[(q, j)];
            }
        }
        m
    }

    fn coordinate_pairs(&self) -> (Vec<usize>, Vec<usize>) {
        let mut qs = vec![0, 1];
        let mut ps = vec![2, 3];
        for a in 0..2 {
            let n = self.baths[a].len();
            qs.extend((0..n).map(|k| self.offsets[a] + k));
            ps.extend((0..n).map(|k| self.offsets[a] + n + k));
        }
        (qs, ps)
    }

    /// Initial mean and covariance: the system state times thermal bath modes.
    pub fn initial_state(&self, system: &GaussianState, temperatures: [f64; 2]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.dim();
        let mut mean = DVector::zeros(n);
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..4 {
            mean[i] = system.mean[i];
            for j in 0..4 {
                cov[(i, j)] = system.covariance[(i, j)];
            }
        }
        let diag = self.bath_variances(temperatures);
        for i in 4..n {
            cov[(i, i)] = diag[i];
        }
        (mean, cov)
    }

    fn bath_variances(&self, temperatures: [f64; 2]) -> Vec<f64> {
        let mut d = vec![0.0; self.dim()];
        for a in 0..2 {
            let b = &self.baths[a];
            for k in 0..b.len() {
                let (m, w) = (b.masses[k], b.frequencies[k]);
                let coth = if temperatures[a] == 0.0 { 1.0 } else { 1.0 / (w / (2.0 * temperatures[a])).tanh() };
                d[self.offsets[a] + k] = coth / (2.0 * m * w);
                d[self.offsets[a] + b.len() + k] = m * w * coth / 2.0;
            }
        }
        d
    }

    /// `out = -M(s)^T w` for four adjoint vectors stored as `w[i][col]`.
    fn adjoint_rhs(&self, s: f64, w: &[[f64; 4]], out: &mut [[f64; 4]]) {
        let c = self.drive.eval(s);
        for col in 0..4 {
            for a in 0..2 {
                let b = 1 - a;
                let bath = &self.baths[a];
                let off = self.offsets[a];
                let n = bath.len();
                let mut acc = -self.kappa[a] * w[a + 2][col] - c * w[b + 2][col];
                for k in 0..n {
                    acc += bath.couplings[k] * w[off + n + k][col];
                }
                out[a][col] = -acc;
                out[a + 2][col] = -w[a][col] / self.oscillators[a].mass;
                let wpa = w[a + 2][col];
                for k in 0..n {
                    let (iq, ip) = (off + k, off + n + k);
                    let m = bath.masses[k];
                    out[iq][col] = -(bath.couplings[k] * wpa - m * bath.frequencies[k].powi(2) * w[ip][col]);
                    out[ip][col] = -w[iq][col] / m;
                }
            }
        }
    }

    /// The four system rows of `Phi(t, 0)`, stored column-wise as `rows[i][col]`.
    pub fn system_rows(&self, t: f64, step_factor: f64) -> Vec<[f64; 4]> {
        let n = self.dim();
        let mut w = vec![[0.0; 4]; n];
        for (i, row) in w.iter_mut().enumerate().take(4) {
            row[i] = 1.0;
        }
        if t == 0.0 {
            return w;
        }
        let dt_max = step_factor / self.fastest_rate();
        let steps = (t / dt_max).ceil() as usize;
        let dt = t / steps as f64;
        let mut k1 = vec![[0.0; 4]; n];
        let mut k2 = vec![[0.0; 4]; n];
        let mut k3 = vec![[0.0; 4]; n];
        let mut k4 = vec![[0.0; 4]; n];
        let mut tmp = vec![[0.0; 4]; n];
        let axpy = |tmp: &mut [[f64; 4]], w: &[[f64; 4]], k: &[[f64; 4]], f: f64| {
            for (x, (a, b)) in tmp.iter_mut().zip(w.iter().zip(k)) {
                for c in 0..4 {
                    x[c] = a[c] + f * b[c];
                }
            }
        };
        // Integrate backwards in s: step -dt.
        for j in 0..steps {
            let s = t - j as f64 * dt;
            let h = -dt;
            self.adjoint_rhs(s, &w, &mut k1);
            axpy(&mut tmp, &w, &k1, 0.5 * h);
            self.adjoint_rhs(s + 0.5 * h, &tmp, &mut k2);
            axpy(&mut tmp, &w, &k2, 0.5 * h);
            self.adjoint_rhs(s + 0.5 * h, &tmp, &mut k3);
            axpy(&mut tmp, &w, &k3, h);
            self.adjoint_rhs(s + h, &tmp, &mut k4);
            for i in 0..n {
                for c in 0..4 {
                    w[i][c] += h / 6.0 * (k1[i][c] + 2.0 * k2[i][c] + 2.0 * k3[i][c] + k4[i][c]);
                }
            }
        }
        w
    }

    /// Reduced system state at time `t` from the adjoint rows.
    pub fn reduced_state(&self, t: f64, system: &GaussianState, temperatures: [f64; 2], step_factor: f64) -> GaussianState {
        let w = self.system_rows(t, step_factor);
        let diag = self.bath_variances(temperatures);
        let mut mean = Vector4::zeros();
        let mut cov = Matrix4::zeros();
        for i in 0..4 {
            for a in 0..4 {
                mean[i] += w[a][i] * system.mean[a];
            }
        }
        for i in 0..4 {
            for j in i..4 {
                let mut v = 0.0;
                for a in 0..4 {
                    for b in 0..4 {
                        v += w[a][i] * system.covariance[(a, b)] * w[b][j];
                    }
                }
                for k in 4..w.len() {
                    v += w[k][i] * diag[k] * w[k][j];
                }
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        GaussianState::new(mean, cov)
    }

    /// Full mean and covariance at each time from the dense flow
    /// `sigma' = M sigma + sigma M^T`. Intended for small baths.
    pub fn evolve_dense(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        times: &[f64],
        step_factor: f64,
    ) -> Vec<(DVector<f64>, DMatrix<f64>)> {
        let dt_max = step_factor / self.fastest_rate();
        let mut out = Vec::with_capacity(times.len());
        let mut mu = mean.clone();
        let mut sg = cov.clone();
        let mut now = 0.0;
        let f = |s: f64, mu: &DVector<f64>, sg: &DMatrix<f64>| {
            let m = self.generator(s);
            let dm = &m * mu;
            let ms = &m * sg;
            let ds = &ms + ms.transpose();
            (dm, ds)
        };
        for &t in times {
            let span = t - now;
            if span > 0.0 {
                let steps = (span / dt_max).ceil() as usize;
                let dt = span / steps as f64;
                for j in 0..steps {
                    let s = now + j as f64 * dt;
                    let (a1, b1) = f(s, &mu, &sg);
                    let (a2, b2) = f(s + 0.5 * dt, &(&mu + &a1 * (0.5 * dt)), &(&sg + &b1 * (0.5 * dt)));
                    let (a3, b3) = f(s + 0.5 * dt, &(&mu + &a2 * (0.5 * dt)), &(&sg + &b2 * (0.5 * dt)));
                    let (a4, b4) = f(s + dt, &(&mu + &a3 * dt), &(&sg + &b3 * dt));
                    mu += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
                    sg += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (dt / 6.0);
                }
                now = t;
            }
            out.push((mu.clone(), sg.clone()));
        }
        out
    }
}

/// Reduced moments of the discretized closed system at every final time of `config`.
pub fn evolve_full(config: &ModelConfig, settings: &OracleSettings, exec: Execution) -> Result<MomentTrace> {
    let report = config.validate();
    if !report.is_ok() {
        return Err(Error::InvalidConfig(report));
    }
    let sys = FullSystem::new(config, settings)?;
    let horizon = config.grid.final_times.iter().cloned().fold(0.0, f64::max);
    let recurrence = (0..2)
        .filter(|&a| config.baths[a].coupling > 0.0)
        .map(|a| sys.baths[a].recurrence_time())
        .fold(f64::INFINITY, f64::min);
    if horizon >= recurrence {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} reaches the bath recurrence time {recurrence:.3}; use more modes"
        )));
    }
    let temps = [config.baths[0].temperature, config.baths[1].temperature];
    let states = exec::map(exec, &config.grid.final_times, |&t| {
        sys.reduced_state(t, &config.initial, temps, settings.step_factor)
    });
    for (t, s) in config.grid.final_times.iter().zip(&states) {
        if s.covariance.iter().chain(s.mean.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { what: "oracle state", s: *t });
        }
    }
    let n = states.len();
    Ok(MomentTrace { times: config.grid.final_times.clone(), states, condition: vec![1.0; n] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bins_reproduce_spectral_weight() {
        let b = BathParams::new(1e-3, 1.0, 5.0);
        let o = OscillatorParams::default();
        for rule in [DiscretizationRule::LinearMidpoint, DiscretizationRule::EqualWeight] {
            let d = discretize_bath(&b, &o, 400, 20.0, rule).unwrap();
            let w = d.weights();
            // Sum of weights in a frequency band approximates the integral of J over it.
            let band = |lo: f64, hi: f64| -> f64 {
                d.frequencies.iter().zip(&w).filter(|(f, _)| **f > lo && **f <= hi).map(|(_, x)| x).sum()
            };
            let exact = |lo: f64, hi: f64| 0.5e-3 * ((1.0 + hi * hi) / (1.0 + lo * lo)).ln();
            for (lo, hi) in [(0.0, 2.0), (2.0, 5.0), (5.0, 20.0)] {
                assert_relative_eq!(band(lo, hi), exact(lo, hi), max_relative = 0.02);
            }
        }
    }

    #[test]
    fn rejects_poor_discretizations() {
        let b = BathParams::new(1e-3, 1.0, 5.0);
        let o = OscillatorParams::default();
        assert!(matches!(
            discretize_bath(&b, &o, 5, 20.0, DiscretizationRule::LinearMidpoint),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            discretize_bath(&b, &o, 100, 5.0, DiscretizationRule::LinearMidpoint),
            Err(Error::InsufficientCoverage { .. })
        ));
    }

    #[test]
    fn adjoint_rows_match_dense_flow() {
        let c = ModelConfig::symmetric(5e-2, 1.0, 2.0, 0.2, 2.0);
        let settings = OracleSettings { n_modes: 12, omega_max: Some(10.0), ..Default::default() };
        let sys = FullSystem::new(&c, &settings).unwrap();
        let (mu, sg) = sys.initial_state(&c.initial, [2.0, 2.0]);
        let dense = sys.evolve_dense(&mu, &sg, &[1.5], 0.01);
        let red = sys.reduced_state(1.5, &c.initial, [2.0, 2.0], 0.01);
        for i in 0..4 {
            for j in 0..4 {
                assert_relative_eq!(red.covariance[(i, j)], dense[0].1[(i, j)], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn uncoupled_bath_leaves_system_free() {
        let c = ModelConfig::symmetric(0.0, 1.0, 2.0, 0.0, 2.0).with_times(vec![0.0, 2.0]);
        let settings = OracleSettings { n_modes: 20, omega_max: Some(10.0), ..Default::default() };
        let tr = evolve_full(&c, &settings, Execution::Sequential).unwrap();
        for (x, y) in tr.states[1].covariance.iter().zip(c.initial.covariance.iter()) {
            assert_relative_eq!(x, y, epsilon = 1e-10);
        }
    }
}
