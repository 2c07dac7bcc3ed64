//! Damped integro-differential equations of the boundary-value problem and the
//! auxiliary functions U, V (forward) and u, v (time-reversed).

use std::path::Path;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};

use crate::error::{Error, Result};
use crate::kernels::dissipation_kernel;
use crate::model::ModelConfig;

/// Which equation is solved. `Reversed` integrates `r(tau) = q(t - tau)`, which obeys
/// the forward equation with the drive read backwards, `c(t - tau)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Reversed,
}

/// Integration scheme for the memory equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum IvpMethod {
    /// Exact auxiliary-variable embedding of the exponential kernel, integrated by RK4.
    #[default]
    Embedding,
    /// Trapezoidal product integration of the memory term, valid for any kernel.
    ProductIntegration { richardson: bool },
}

/// Positions and velocities of both oscillators on a uniform grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub h: f64,
    pub q: Vec<[f64; 2]>,
    pub v: Vec<[f64; 2]>,
}

struct Coeffs {
    w2: [f64; 2],
    inv_m: [f64; 2],
    gamma: [f64; 2],
    cutoff: [f64; 2],
}

impl Coeffs {
    fn new(c: &ModelConfig) -> Self {
        let o = &c.oscillators;
        let b = &c.baths;
        Self {
            w2: [o[0].frequency.powi(2), o[1].frequency.powi(2)],
            inv_m: [1.0 / o[0].mass, 1.0 / o[1].mass],
            gamma: [b[0].coupling, b[1].coupling],
            cutoff: [b[0].cutoff, b[1].cutoff],
        }
    }
}

fn drive_at(config: &ModelConfig, dir: Direction, t: f64, s: f64) -> f64 {
    match dir {
        Direction::Forward => config.drive.eval(s),
        Direction::Reversed => config.drive.eval(t - s),
    }
}

/// Solve the damped equation on `[0, t]` with `steps` grid intervals from
/// `init = (q1, q2, v1, v2)`.
pub fn solve_ivp(
    config: &ModelConfig,
    t: f64,
    steps: usize,
    dir: Direction,
    init: [f64; 4],
    method: IvpMethod,
) -> Result<Trajectory> {
    if t.is_nan() || t <= 0.0 || steps == 0 {
        return Err(Error::InvalidArgument("solve_ivp needs t > 0 and steps >= 1".into()));
    }
    let traj = match method {
        IvpMethod::Embedding => embedding(config, t, steps, dir, init),
        IvpMethod::ProductIntegration { richardson: false } => product_integration(config, t, steps, dir, init),
        IvpMethod::ProductIntegration { richardson: true } => {
            let coarse = product_integration(config, t, steps, dir, init);
            let fine = product_integration(config, t, 2 * steps, dir, init);
            let mut out = coarse.clone();
            for k in 0..=steps {
                for a in 0..2 {
                    out.q[k][a] = (4.0 * fine.q[2 * k][a] - coarse.q[k][a]) / 3.0;
                    out.v[k][a] = (4.0 * fine.v[2 * k][a] - coarse.v[k][a]) / 3.0;
                }
            }
            out
        }
    };
    for (k, (q, v)) in traj.q.iter().zip(&traj.v).enumerate() {
        if !(q.iter().chain(v).all(|x| x.is_finite())) {
            return Err(Error::NonFinite { what: "trajectory", s: k as f64 * traj.h });
        }
    }
    Ok(traj)
}

fn embedding(config: &ModelConfig, t: f64, steps: usize, dir: Direction, init: [f64; 4]) -> Trajectory {
    let c = Coeffs::new(config);
    let h = t / steps as f64;
    let cmax = config.drive.amplitude_bound(t);
    let mut rate: f64 = 0.0;
    for a in 0..2 {
        rate = rate
            .max((c.w2[a] + c.gamma[a] * c.cutoff[a] + cmax * c.inv_m[a]).sqrt())
            .max(c.cutoff[a]);
    }
    let sub = ((h * rate) / 0.1).ceil().max(1.0) as usize;
    let dt = h / sub as f64;
    let rhs = |s: f64, y: &[f64; 6]| -> [f64; 6] {
        let cs = drive_at(config, dir, t, s);
        let mut d = [0.0; 6];
        for a in 0..2 {
            let b = 1 - a;
            let gw = c.gamma[a] * c.cutoff[a];
            d[a] = y[2 + a];
            d[2 + a] = -c.w2[a] * y[a] - cs * c.inv_m[a] * y[b] - gw * y[a] + c.cutoff[a] * y[4 + a];
            d[4 + a] = gw * y[a] - c.cutoff[a] * y[4 + a];
        }
        d
    };
    let mut y = [init[0], init[1], init[2], init[3], 0.0, 0.0];
    let mut q = Vec::with_capacity(steps + 1);
    let mut v = Vec::with_capacity(steps + 1);
    q.push([y[0], y[1]]);
    v.push([y[2], y[3]]);
    for k in 0..steps {
        for j in 0..sub {
            let s = k as f64 * h + j as f64 * dt;
            let k1 = rhs(s, &y);
            let y2: [f64; 6] = std::array::from_fn(|i| y[i] + 0.5 * dt * k1[i]);
            let k2 = rhs(s + 0.5 * dt, &y2);
            let y3: [f64; 6] = std::array::from_fn(|i| y[i] + 0.5 * dt * k2[i]);
            let k3 = rhs(s + 0.5 * dt, &y3);
            let y4: [f64; 6] = std::array::from_fn(|i| y[i] + dt * k3[i]);
            let k4 = rhs(s + dt, &y4);
            for i in 0..6 {
                y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        q.push([y[0], y[1]]);
        v.push([y[2], y[3]]);
    }
    Trajectory { h, q, v }
}

fn product_integration(config: &ModelConfig, t: f64, steps: usize, dir: Direction, init: [f64; 4]) -> Trajectory {
    let c = Coeffs::new(config);
    let h = t / steps as f64;
    let kern: Vec<[f64; 2]> = (0..=steps)
        .map(|k| {
            let s = k as f64 * h;
            [dissipation_kernel(s, &config.baths[0]), dissipation_kernel(s, &config.baths[1])]
        })
        .collect();
    let q0 = Vector2::new(init[0], init[1]);
    let mut q = vec![[init[0], init[1]]];
    let mut v = vec![[init[2], init[3]]];
    let stiffness = |s: f64| {
        let cs = drive_at(config, dir, t, s);
        Matrix2::new(c.w2[0], cs * c.inv_m[0], cs * c.inv_m[1], c.w2[1])
    };
    // Memory sum h * [ gamma(s_n) P_0 / 2 + sum_{k=1}^{n-1} gamma(s_n - s_k) P_k ].
    let history = |n: usize, v: &[[f64; 2]]| -> Vector2<f64> {
        let mut acc = [0.5 * kern[n][0] * v[0][0], 0.5 * kern[n][1] * v[0][1]];
        for (k, vk) in v.iter().enumerate().take(n).skip(1) {
            acc[0] += kern[n - k][0] * vk[0];
            acc[1] += kern[n - k][1] * vk[1];
        }
        Vector2::new(h * acc[0], h * acc[1])
    };
    let g0 = Matrix2::from_diagonal(&Vector2::new(kern[0][0], kern[0][1]));
    let mut force = -stiffness(0.0) * q0 - g0 * q0;
    for n in 0..steps {
        let qn = Vector2::new(q[n][0], q[n][1]);
        let pn = Vector2::new(v[n][0], v[n][1]);
        let sn1 = (n + 1) as f64 * h;
        let kn1 = stiffness(sn1);
        let e = history(n + 1, &v);
        let ginit = Vector2::new(kern[n + 1][0] * q0[0], kern[n + 1][1] * q0[1]);
        let lhs = Matrix2::identity() + 0.25 * h * h * (kn1 + g0);
        let rhs = pn + 0.5 * h * force - 0.5 * h * (kn1 * (qn + 0.5 * h * pn) + e + ginit);
        let pn1 = lhs.lu().solve(&rhs).expect("trapezoid step matrix is regular for small h");
        let qn1 = qn + 0.5 * h * (pn + pn1);
        force = -kn1 * qn1 - 0.5 * h * g0 * pn1 - e - ginit;
        q.push([qn1[0], qn1[1]]);
        v.push([pn1[0], pn1[1]]);
    }
    Trajectory { h, q, v }
}

/// Largest residual of the equation of motion at interior even grid points.
///
/// The acceleration comes from a fourth-order difference of the velocities and the
/// memory derivative `gamma(0) q(s) - Omega int_0^s gamma(s-u) q(u) du` from Simpson's rule.
pub fn ide_residual(config: &ModelConfig, t: f64, dir: Direction, traj: &Trajectory) -> f64 {
    let c = Coeffs::new(config);
    let n = traj.q.len() - 1;
    let h = traj.h;
    let mut worst: f64 = 0.0;
    for k in (4..n.saturating_sub(2)).step_by(2) {
        let s = k as f64 * h;
        let cs = drive_at(config, dir, t, s);
        for a in 0..2 {
            let b = 1 - a;
            let acc = (-traj.v[k + 2][a] + 8.0 * traj.v[k + 1][a] - 8.0 * traj.v[k - 1][a] + traj.v[k - 2][a])
                / (12.0 * h);
            let g = |j: usize| dissipation_kernel((k - j) as f64 * h, &config.baths[a]) * traj.q[j][a];
            let mut simpson = g(0) + g(k);
            for j in 1..k {
                simpson += if j % 2 == 1 { 4.0 * g(j) } else { 2.0 * g(j) };
            }
            simpson *= h / 3.0;
            let memory = c.gamma[a] * c.cutoff[a] * traj.q[k][a] - c.cutoff[a] * simpson;
            let r = acc + c.w2[a] * traj.q[k][a] + cs * c.inv_m[a] * traj.q[k][b] + memory;
            worst = worst.max(r.abs());
        }
    }
    worst
}

/// The four solutions started from unit initial vectors `(q1, q2, v1, v2) = e_j`.
#[derive(Clone, Debug)]
pub struct FundamentalSolutionSet {
    pub t: f64,
    pub direction: Direction,
    pub solutions: [Trajectory; 4],
}

pub fn fundamental_solutions(
    config: &ModelConfig,
    t: f64,
    steps: usize,
    dir: Direction,
    method: IvpMethod,
) -> Result<FundamentalSolutionSet> {
    let unit = |j: usize| std::array::from_fn(|i| if i == j { 1.0 } else { 0.0 });
    let sol = |j| solve_ivp(config, t, steps, dir, unit(j), method);
    Ok(FundamentalSolutionSet { t, direction: dir, solutions: [sol(0)?, sol(1)?, sol(2)?, sol(3)?] })
}

impl FundamentalSolutionSet {
    /// Matrix mapping fundamental-solution weights to `(q(0), q(t))`.
    pub fn boundary_matrix(&self) -> Matrix4<f64> {
        let n = self.solutions[0].q.len() - 1;
        Matrix4::from_fn(|i, j| match i {
            0 | 1 => (i == j) as u8 as f64,
            _ => self.solutions[j].q[n][i - 2],
        })
    }

    pub fn max_residual(&self, config: &ModelConfig) -> f64 {
        self.solutions.iter().map(|s| ide_residual(config, self.t, self.direction, s)).fold(0.0, f64::max)
    }

    /// Solutions meeting unit boundary data: column `r` of the result holds the weights
    /// whose combination has `(q(0), q(t)) = e_r`.
    fn match_boundary(&self) -> Result<(Matrix4<f64>, f64)> {
        let m = self.boundary_matrix();
        let sv = m.singular_values();
        let cond = sv.max() / sv.min();
        if !cond.is_finite() || cond > 1e10 {
            return Err(Error::SingularBoundary { t: self.t, condition: cond });
        }
        let inv = m.try_inverse().ok_or(Error::SingularBoundary { t: self.t, condition: cond })?;
        Ok((inv, cond))
    }

    /// Combination of the solutions with weights `w`, positions and velocities.
    fn combine(&self, w: &Vector4<f64>) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let n = self.solutions[0].q.len();
        let mut q = vec![[0.0; 2]; n];
        let mut v = vec![[0.0; 2]; n];
        for (j, sol) in self.solutions.iter().enumerate() {
            for k in 0..n {
                for a in 0..2 {
                    q[k][a] += w[j] * sol.q[k][a];
                    v[k][a] += w[j] * sol.v[k][a];
                }
            }
        }
        (q, v)
    }
}

/// Boundary-matched solutions of the forward (`U`, `V`) and reversed (`u`, `v`) problems.
///
/// `Q_1(s) = U1 Q1' + U2 Q1'' + U3 Q2' + U4 Q2''` and
/// `Q_2(s) = V1 Q2' + V2 Q2'' + V3 Q1' + V4 Q1''`, with primes marking the endpoint
/// values at `s = 0` and double primes at `s = t`; lower-case functions expand `q(s)` the
/// same way. Derivatives are kept at both endpoints as `[d/ds at 0, d/ds at t]`.
#[derive(Clone, Debug)]
pub struct AuxiliaryFunctions {
    pub t: f64,
    pub h: f64,
    pub big_u: [Vec<f64>; 4],
    pub big_v: [Vec<f64>; 4],
    pub small_u: [Vec<f64>; 4],
    pub small_v: [Vec<f64>; 4],
    pub d_big_u: [[f64; 2]; 4],
    pub d_big_v: [[f64; 2]; 4],
    pub d_small_u: [[f64; 2]; 4],
    pub d_small_v: [[f64; 2]; 4],
    /// Worst condition number of the two boundary-matching matrices.
    pub condition: f64,
}

/// Index of each unit boundary vector `(x(0)_1, x(0)_2, x(t)_1, x(t)_2)` into the
/// `U`/`V` (or `u`/`v`) families: `(index of the first-oscillator function, index of
/// the second-oscillator function)`.
const FORWARD_SLOTS: [(usize, usize); 4] = [(0, 2), (2, 0), (1, 3), (3, 1)];
const REVERSED_SLOTS: [(usize, usize); 4] = [(1, 3), (3, 1), (0, 2), (2, 0)];

pub fn assemble_auxiliary(config: &ModelConfig, t: f64, steps: usize, method: IvpMethod) -> Result<AuxiliaryFunctions> {
    let fwd = fundamental_solutions(config, t, steps, Direction::Forward, method)?;
    let rev = fundamental_solutions(config, t, steps, Direction::Reversed, method)?;
    let (wf, cf) = fwd.match_boundary()?;
    let (wr, cr) = rev.match_boundary()?;
    let n = steps;
    let empty = || std::array::from_fn::<Vec<f64>, 4, _>(|_| Vec::new());
    let mut aux = AuxiliaryFunctions {
        t,
        h: t / steps as f64,
        big_u: empty(),
        big_v: empty(),
        small_u: empty(),
        small_v: empty(),
        d_big_u: [[0.0; 2]; 4],
        d_big_v: [[0.0; 2]; 4],
        d_small_u: [[0.0; 2]; 4],
        d_small_v: [[0.0; 2]; 4],
        condition: cf.max(cr),
    };
    for r in 0..4 {
        let (q, v) = fwd.combine(&wf.column(r).into_owned());
        let (iu, iv) = FORWARD_SLOTS[r];
        aux.big_u[iu] = q.iter().map(|x| x[0]).collect();
        aux.big_v[iv] = q.iter().map(|x| x[1]).collect();
        aux.d_big_u[iu] = [v[0][0], v[n][0]];
        aux.d_big_v[iv] = [v[0][1], v[n][1]];

        let (q, v) = rev.combine(&wr.column(r).into_owned());
        let (iu, iv) = REVERSED_SLOTS[r];
        aux.small_u[iu] = q.iter().rev().map(|x| x[0]).collect();
        aux.small_v[iv] = q.iter().rev().map(|x| x[1]).collect();
        aux.d_small_u[iu] = [-v[n][0], -v[0][0]];
        aux.d_small_v[iv] = [-v[n][1], -v[0][1]];
    }
    Ok(aux)
}

impl AuxiliaryFunctions {
    pub fn steps(&self) -> usize {
        self.big_u[0].len() - 1
    }

    /// CSV with columns `s, U1..U4, V1..V4, u1..u4, v1..v4`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("s");
        for fam in ["U", "V", "u", "v"] {
            for i in 1..=4 {
                out.push_str(&format!(",{fam}{i}"));
            }
        }
        out.push('\n');
        for k in 0..=self.steps() {
            let mut row = vec![k as f64 * self.h];
            for fam in [&self.big_u, &self.big_v, &self.small_u, &self.small_v] {
                row.extend(fam.iter().map(|f| f[k]));
            }
            out.push_str(&crate::io::csv_row(&row));
            out.push('\n');
        }
        crate::io::write_atomic(path, out.as_bytes())
    }
}
