//! Phase matrix A, noise matrix B and normalization N of the reduced propagator
//!
//! `J = N^{-1} exp(i x1^T A x1 - x2^T B x2)`, with
//! `x1 = (Q1'', Q2'', Q1', Q2', q1'', q2'', q1', q2')` and `x2 = (q1'', q2'', q1', q2')`.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Matrix4, SMatrix};

use crate::error::{Error, Result};
use crate::kernels::{noise_kernel, ExponentialDecomposition, KernelMethod, MatsubaraSeries};
use crate::memory_dynamics::{assemble_auxiliary, AuxiliaryFunctions, IvpMethod};
use crate::model::{BathParams, ModelConfig, OscillatorParams, QuadratureOrder};
use crate::special::{integrate, phi};

pub type Matrix8 = SMatrix<f64, 8, 8>;

/// How the double integrals in B are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum NoiseRoute {
    /// Matsubara exponentials at `T > 0`, product weights at `T = 0`.
    #[default]
    Auto,
    /// Exact recursive convolution with the Matsubara exponentials.
    Exponential,
    /// Cell moments of the kernel by adaptive quadrature, `O(N^2)` convolution.
    ProductWeights(KernelMethod),
}

/// A, B and N at one final time, with the boundary-matching condition number.
#[derive(Clone, Debug)]
pub struct PropagatorMatrices {
    pub t: f64,
    pub a: Matrix8,
    pub b: Matrix4<f64>,
    pub normalization: f64,
    pub condition: f64,
}

/// Symmetric matrix of the quadratic form `phi_I = x1^T A x1`.
///
/// Only the blocks coupling the `Q` coordinates to the `q` coordinates are nonzero.
pub fn phase_matrix(aux: &AuxiliaryFunctions, osc: &[OscillatorParams; 2]) -> Matrix8 {
    let (m1, m2) = (osc[0].mass, osc[1].mass);
    let du = &aux.d_big_u;
    let dv = &aux.d_big_v;
    // Coefficients of (Q1'', Q2'', Q1', Q2') in m Qdot(t) and m Qdot(0).
    let rows = [
        (4, [m1 * du[1][1], m1 * du[3][1], m1 * du[0][1], m1 * du[2][1]]),
        (5, [m2 * dv[3][1], m2 * dv[1][1], m2 * dv[2][1], m2 * dv[0][1]]),
        (6, [-m1 * du[1][0], -m1 * du[3][0], -m1 * du[0][0], -m1 * du[2][0]]),
        (7, [-m2 * dv[3][0], -m2 * dv[1][0], -m2 * dv[2][0], -m2 * dv[0][0]]),
    ];
    let mut a = Matrix8::zeros();
    for (r, coeffs) in rows {
        for (c, v) in coeffs.iter().enumerate() {
            a[(r, c)] = 0.5 * v;
            a[(c, r)] = 0.5 * v;
        }
    }
    a
}

/// `N = pi^2 / |det A[{Q1'',Q2''}, {q1',q2'}]|`, which makes the propagator trace preserving.
pub fn normalization(a: &Matrix8, t: f64) -> Result<f64> {
    let det = a[(0, 6)] * a[(1, 7)] - a[(0, 7)] * a[(1, 6)];
    let scale = a.abs().max().powi(2);
    if !det.is_finite() || det.abs() <= 1e-14 * scale {
        return Err(Error::SingularPropagator { t, det });
    }
    Ok(PI * PI / det.abs())
}

/// Largest number of explicit Matsubara exponentials carried through the convolution.
const MAX_EXPLICIT_TERMS: f64 = 2048.0;

/// Inner step count for final time `t`.
///
/// Starts from the grid setting and, for very short times, coarsens the step so that
/// every Matsubara exponential not carried explicitly decays within a small fraction of
/// one step.
pub fn inner_steps(config: &ModelConfig, t: f64) -> usize {
    let mut n = config.grid.steps_for(t);
    for b in &config.baths {
        if b.coupling > 0.0 && b.temperature > 0.0 {
            let h_min = 40.0 / (2.0 * PI * b.temperature * MAX_EXPLICIT_TERMS);
            if t / (n as f64) < h_min {
                n = ((t / h_min).ceil() as usize).max(16);
            }
        }
    }
    n + n % 2
}

/// Bath-sampled functions multiplying `x2` for each oscillator.
fn noise_functions(aux: &AuxiliaryFunctions) -> [[&[f64]; 4]; 2] {
    let u = &aux.small_u;
    let v = &aux.small_v;
    [[&u[1], &u[3], &u[0], &u[2]], [&v[3], &v[1], &v[2], &v[0]]]
}

/// `G_n = int_0^{s_n} K(s_n - u) f(u) du` for piecewise-linear `f`, exact for the
/// exponential representation of `K`.
fn convolve_exponential(f: &[f64], h: f64, d: &ExponentialDecomposition) -> Vec<f64> {
    let n = f.len();
    let mut out: Vec<f64> = f.iter().map(|x| d.local * x).collect();
    out[0] = 0.0;
    for &(c, lam) in &d.exps {
        let x = lam * h;
        let e = (-x).exp();
        let w0 = c * h * phi(2, x);
        let w1 = c * h * (phi(1, x) - phi(2, x));
        let mut g = 0.0;
        for k in 1..n {
            g = e * g + w0 * f[k - 1] + w1 * f[k];
            out[k] += g;
        }
    }
    for &(c, lam) in &d.poly {
        let x = lam * h;
        let e = (-x).exp();
        let (p1, p2, p3) = (phi(1, x), phi(2, x), phi(3, x));
        let mut g = 0.0;
        let mut p = 0.0;
        for k in 1..n {
            p = e * (h * g + p) + h * h * (f[k - 1] * p3 + f[k] * (p2 - p3));
            g = e * g + h * (f[k - 1] * p2 + f[k] * (p1 - p2));
            out[k] += c * p;
        }
    }
    out
}

/// Cell moments `a_j = h int_0^1 K((j+y)h) y dy`, `b_j = h int_0^1 K((j+y)h) (1-y) dy`.
fn product_weights(
    n: usize,
    h: f64,
    bath: &BathParams,
    osc: &OscillatorParams,
    method: KernelMethod,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut a = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    let scale = osc.mass * bath.coupling * bath.cutoff.powi(2) * h;
    for j in 0..n {
        let k = |y: f64| noise_kernel((j as f64 + y) * h, bath, osc, method).unwrap_or(f64::NAN);
        let qa = integrate(|y| k(y) * y, 0.0, 1.0, 1e-15 * scale, 1e-11, 400);
        let qb = integrate(|y| k(y) * (1.0 - y), 0.0, 1.0, 1e-15 * scale, 1e-11, 400);
        if !(qa.value.is_finite() && qb.value.is_finite()) {
            return Err(Error::NonFinite { what: "noise kernel cell moment", s: j as f64 * h });
        }
        a.push(h * qa.value);
        b.push(h * qb.value);
    }
    Ok((a, b))
}

fn convolve_weights(f: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for (m, o) in out.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for k in 0..m {
            acc += a[m - k - 1] * f[k] + b[m - k - 1] * f[k + 1];
        }
        *o = acc;
    }
    out
}

fn trapezoid(v: &[f64], h: f64) -> f64 {
    let n = v.len();
    h * (v.iter().sum::<f64>() - 0.5 * (v[0] + v[n - 1]))
}

/// One bath's contribution to B on a grid with spacing `h`.
/// Convolution of sampled data with one noise kernel.
type Convolution<'a> = dyn Fn(&[f64], f64) -> Result<Vec<f64>> + 'a;

fn bath_block(fs: &[Vec<f64>; 4], h: f64, conv: &Convolution<'_>) -> Result<Matrix4<f64>> {
    let mut gs = Vec::with_capacity(4);
    for f in fs {
        gs.push(conv(f, h)?);
    }
    let mut b = Matrix4::zeros();
    for i in 0..4 {
        for j in i..4 {
            let prod_ij: Vec<f64> = fs[i].iter().zip(&gs[j]).map(|(x, y)| x * y).collect();
            let prod_ji: Vec<f64> = fs[j].iter().zip(&gs[i]).map(|(x, y)| x * y).collect();
            let v = 0.5 * (trapezoid(&prod_ij, h) + trapezoid(&prod_ji, h));
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }
    Ok(b)
}

/// Noise matrix `B_ij = 1/2 sum_alpha int int_[0,t]^2 K_alpha(s-u) f_i(s) f_j(u)`.
pub fn noise_matrix(aux: &AuxiliaryFunctions, config: &ModelConfig, route: NoiseRoute) -> Result<Matrix4<f64>> {
    let h = aux.h;
    let fams = noise_functions(aux);
    let mut total = Matrix4::zeros();
    for alpha in 0..2 {
        let bath = &config.baths[alpha];
        let osc = &config.oscillators[alpha];
        if bath.coupling == 0.0 {
            continue;
        }
        let route = match route {
            NoiseRoute::Auto if bath.temperature > 0.0 => NoiseRoute::Exponential,
            NoiseRoute::Auto => NoiseRoute::ProductWeights(KernelMethod::Quadrature),
            r => r,
        };
        let conv: Box<Convolution<'_>> = match route {
            NoiseRoute::Exponential => {
                let series = MatsubaraSeries::new(bath, osc)?;
                let terms = bath.matsubara_terms;
                let tail = bath.tail_correction;
                Box::new(move |f: &[f64], h: f64| {
                    Ok(convolve_exponential(f, h, &series.decomposition(h, terms, tail)))
                })
            }
            NoiseRoute::ProductWeights(method) => Box::new(move |f: &[f64], h: f64| {
                let (a, b) = product_weights(f.len() - 1, h, bath, osc, method)?;
                Ok(convolve_weights(f, &a, &b))
            }),
            NoiseRoute::Auto => unreachable!(),
        };
        let fine: [Vec<f64>; 4] = std::array::from_fn(|i| fams[alpha][i].to_vec());
        let mut block = bath_block(&fine, h, conv.as_ref())?;
        if config.grid.quadrature_order == QuadratureOrder::Fourth {
            if !aux.steps().is_multiple_of(2) {
                return Err(Error::InvalidArgument("Richardson extrapolation needs an even step count".into()));
            }
            let coarse: [Vec<f64>; 4] = std::array::from_fn(|i| fine[i].iter().step_by(2).copied().collect());
            let rough = bath_block(&coarse, 2.0 * h, conv.as_ref())?;
            block = (4.0 * block - rough) / 3.0;
        }
        total += block;
    }
    if total.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { what: "noise matrix", s: aux.t });
    }
    let eig = total.symmetric_eigenvalues();
    let norm = eig.amax();
    let min = eig.min();
    if min < -1e-10 * norm {
        return Err(Error::NotPsd { min_eigenvalue: min, norm });
    }
    Ok(total)
}

impl PropagatorMatrices {
    /// Solve the boundary-value problem at final time `t` and assemble A, B and N.
    pub fn compute(config: &ModelConfig, t: f64) -> Result<Self> {
        Self::compute_with(config, t, IvpMethod::Embedding, NoiseRoute::Auto)
    }

    pub fn compute_with(config: &ModelConfig, t: f64, method: IvpMethod, route: NoiseRoute) -> Result<Self> {
        let steps = inner_steps(config, t);
        let aux = assemble_auxiliary(config, t, steps, method)?;
        Self::from_auxiliary(&aux, config, route)
    }

    pub fn from_auxiliary(aux: &AuxiliaryFunctions, config: &ModelConfig, route: NoiseRoute) -> Result<Self> {
        let a = phase_matrix(aux, &config.oscillators);
        let normalization = normalization(&a, aux.t)?;
        let b = noise_matrix(aux, config, route)?;
        Ok(Self { t: aux.t, a, b, normalization, condition: aux.condition })
    }

    /// Long-format CSV `matrix,row,col,value` holding A, B and N.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = format!("# t = {:e}\nmatrix,row,col,value\n", self.t);
        for i in 0..8 {
            for j in 0..8 {
                out.push_str(&format!("A,{i},{j},{:e}\n", self.a[(i, j)]));
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                out.push_str(&format!("B,{i},{j},{:e}\n", self.b[(i, j)]));
            }
        }
        out.push_str(&format!("N,0,0,{:e}\n", self.normalization));
        crate::io::write_atomic(path, out.as_bytes())
    }
}
