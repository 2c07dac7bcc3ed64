//! Spectral density, dissipation and noise kernels of a Drude bath.

use std::f64::consts::PI;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{BathParams, OscillatorParams};
use crate::special::{e1, e1_scaled, ei_scaled, integrate, trigamma};

/// `J(omega) = m gamma omega Omega^2 / (omega^2 + Omega^2)`.
pub fn spectral_density(omega: f64, bath: &BathParams, osc: &OscillatorParams) -> f64 {
    let c2 = bath.cutoff * bath.cutoff;
    osc.mass * bath.coupling * omega * c2 / (omega * omega + c2)
}

/// `gamma(s) = gamma Omega exp(-Omega |s|)`.
pub fn dissipation_kernel(s: f64, bath: &BathParams) -> f64 {
    bath.coupling * bath.cutoff * (-bath.cutoff * s.abs()).exp()
}

/// Symmetrized noise power `J(omega) coth(omega / 2T) / 2m`.
pub fn power_noise(omega: f64, bath: &BathParams, osc: &OscillatorParams) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let coth = if bath.temperature == 0.0 {
        omega.signum()
    } else {
        1.0 / (omega / (2.0 * bath.temperature)).tanh()
    };
    Ok(spectral_density(omega, bath, osc) * coth / (2.0 * osc.mass))
}

/// How the noise kernel is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KernelMethod {
    /// Matsubara expansion, valid for `T > 0`.
    #[default]
    Series,
    /// Zero-temperature closed form plus adaptive quadrature of the thermal part.
    Quadrature,
}

/// Noise kernel `K(s)`. Diverges logarithmically at `s = 0` when `gamma > 0`.
pub fn noise_kernel(s: f64, bath: &BathParams, osc: &OscillatorParams, method: KernelMethod) -> Result<f64> {
    let s = s.abs();
    if bath.coupling == 0.0 {
        return Ok(0.0);
    }
    if s == 0.0 {
        return Ok(f64::INFINITY);
    }
    let k = match method {
        KernelMethod::Series => MatsubaraSeries::new(bath, osc)?.eval(s, bath.matsubara_terms, bath.tail_correction),
        KernelMethod::Quadrature => noise_kernel_quadrature(s, bath, osc),
    };
    if k.is_finite() {
        Ok(k)
    } else {
        Err(Error::NonFinite { what: "noise kernel", s })
    }
}

fn noise_kernel_quadrature(s: f64, bath: &BathParams, osc: &OscillatorParams) -> f64 {
    let c0 = osc.mass * bath.coupling * bath.cutoff * bath.cutoff;
    let x = bath.cutoff * s;
    let zero_t = -c0 / (2.0 * PI) * (ei_scaled(x) - e1_scaled(x));
    let t = bath.temperature;
    if t == 0.0 {
        return zero_t;
    }
    let thermal = |w: f64| {
        if w == 0.0 {
            return 2.0 * osc.mass * bath.coupling * t;
        }
        2.0 * spectral_density(w, bath, osc) / (w / t).exp_m1() * (w * s).cos()
    };
    let q = integrate(thermal, 0.0, 50.0 * t, 1e-15 * c0, 1e-12, 20_000);
    zero_t + q.value / PI
}

/// Coefficients of the regrouped Matsubara expansion
/// `K(s) = A e^{-Omega s} + pair(s) + sum_n b_n e^{-nu_n s}`, `nu_n = 2 pi n T`.
///
/// The Matsubara frequency closest to the cutoff is combined with the matching part
/// of the `cot` term so that no coefficient blows up when `nu_m` approaches `Omega`.
#[derive(Clone, Debug)]
pub struct MatsubaraSeries {
    c0: f64,
    cutoff: f64,
    temperature: f64,
    lead: f64,
    pair: Option<Pair>,
    skip: usize,
}

#[derive(Clone, Copy, Debug)]
enum Pair {
    /// `ca e^{-Omega s} + cb e^{-nu s}`.
    Split { nu: f64, ca: f64, cb: f64 },
    /// `c e^{-Omega s} (1 - Omega s)` when `nu == Omega`.
    Degenerate { c: f64 },
}

/// Exponential representation of a kernel on a grid of spacing `h`:
/// `sum c e^{-l s} + sum c s e^{-l s} + local * delta-like contribution`.
///
/// `local` multiplies `f(s)` in the convolution `int_0^s K(s-u) f(u) du` and collects
/// exponentials that decay within a small fraction of one step.
#[derive(Clone, Debug, Default)]
pub struct ExponentialDecomposition {
    pub exps: Vec<(f64, f64)>,
    pub poly: Vec<(f64, f64)>,
    pub local: f64,
}

impl MatsubaraSeries {
    pub fn new(bath: &BathParams, osc: &OscillatorParams) -> Result<Self> {
        let t = bath.temperature;
        if t <= 0.0 {
            return Err(Error::ZeroTemperature);
        }
        let c0 = osc.mass * bath.coupling * bath.cutoff * bath.cutoff;
        let om = bath.cutoff;
        let a = om / (2.0 * PI * t);
        let m = a.round();
        if m < 1.0 {
            return Ok(Self {
                c0,
                cutoff: om,
                temperature: t,
                lead: 0.5 * c0 / (PI * a).tan(),
                pair: None,
                skip: 0,
            });
        }
        let eps = a - m;
        let pe = PI * eps;
        let r = if eps.abs() < 1e-3 { -pe / 3.0 - pe.powi(3) / 45.0 } else { 1.0 / pe.tan() - 1.0 / pe };
        let lead = 0.5 * c0 * (r - 1.0 / (PI * (a + m)));
        let nu = 2.0 * PI * m * t;
        let pair = if (nu - om).abs() < 1e-7 * om {
            Pair::Degenerate { c: c0 * t / om }
        } else {
            let kappa = 2.0 * c0 * t / (om * om - nu * nu);
            Pair::Split { nu, ca: kappa * om, cb: -kappa * nu }
        };
        Ok(Self { c0, cutoff: om, temperature: t, lead, pair: Some(pair), skip: m as usize })
    }

    fn nu(&self, n: usize) -> f64 {
        2.0 * PI * n as f64 * self.temperature
    }

    fn coefficient(&self, n: usize) -> f64 {
        let nu = self.nu(n);
        2.0 * self.c0 * self.temperature * nu / (nu * nu - self.cutoff * self.cutoff)
    }

    /// Index of the Matsubara term merged into the pair term (0 if none).
    pub fn merged_index(&self) -> usize {
        self.skip
    }

    fn head(&self, s: f64) -> f64 {
        let mut v = self.lead * (-self.cutoff * s).exp();
        match self.pair {
            Some(Pair::Split { nu, ca, cb }) => v += ca * (-self.cutoff * s).exp() + cb * (-nu * s).exp(),
            Some(Pair::Degenerate { c }) => v += c * (-self.cutoff * s).exp() * (1.0 - self.cutoff * s),
            None => {}
        }
        v
    }

    /// Sum of all terms with index `<= n`, without any tail estimate.
    pub fn partial_sum(&self, s: f64, n: usize) -> f64 {
        let s = s.abs();
        let n = n.max(self.skip);
        let mut v = self.head(s);
        for k in 1..=n {
            if k != self.skip {
                v += self.coefficient(k) * (-self.nu(k) * s).exp();
            }
        }
        v
    }

    /// Estimate of `sum_{n > N} b_n e^{-nu_n s}` from the midpoint integral.
    pub fn tail(&self, s: f64, n: usize) -> f64 {
        let nu = 2.0 * PI * (n as f64 + 0.5) * self.temperature;
        let x = nu * s.abs();
        let e1x = e1(x);
        let ex = (-x).exp();
        let e2 = ex - x * e1x;
        let e3 = 0.5 * (ex - x * e2);
        self.c0 / PI * (e1x + (self.cutoff / nu).powi(2) * e3)
    }

    /// Number of explicit terms that makes the remainder negligible at lag `s`.
    pub fn auto_terms(&self, s: f64) -> usize {
        let n = (30.0 / (2.0 * PI * self.temperature * s.abs())).ceil();
        (n.min(1e6) as usize).max(self.skip).max(1)
    }

    /// `K(s)` for `s > 0` with `terms` explicit terms (adaptive if `None`).
    pub fn eval(&self, s: f64, terms: Option<usize>, tail: bool) -> f64 {
        let s = s.abs();
        if s == 0.0 {
            return if self.c0 == 0.0 { 0.0 } else { f64::INFINITY };
        }
        let n = terms.unwrap_or_else(|| self.auto_terms(s)).max(self.skip);
        let mut v = self.partial_sum(s, n);
        if tail {
            v += self.tail(s, n);
        }
        v
    }

    /// `sum_{n > N} 1 / (nu_n^2 - Omega^2)` with `N >= merged_index()`.
    fn inverse_square_tail(&self, n: usize) -> f64 {
        let a = self.cutoff / (2.0 * PI * self.temperature);
        let scale = 1.0 / (2.0 * PI * self.temperature).powi(2);
        let nf = n as f64;
        let s = if nf + 1.0 > 4.0 * a && n >= 5 {
            // Explicit terms up to m, then trigamma plus a midpoint-rule remainder of
            // 1/(k^2 - a^2) - 1/k^2.
            let m = n.max(200).max((4.0 * a).ceil() as usize);
            let near: f64 = (n + 1..=m).map(|k| 1.0 / ((k * k) as f64 - a * a)).sum();
            let x = m as f64 + 0.5;
            let r = a * a / (x * x);
            let mut integral = 0.0;
            let mut pw = r / x;
            for j in 1..40 {
                integral += pw / (2 * j + 1) as f64;
                pw *= r;
                if pw < 1e-18 * integral {
                    break;
                }
            }
            let slope = (2.0 * r - r * r) / ((1.0 - r).powi(2) * 12.0 * x.powi(3));
            near + trigamma(m as f64 + 1.0) + integral + slope
        } else {
            let total = (1.0 - PI * a / (PI * a).tan()) / (2.0 * a * a);
            total - (1..=n).map(|k| 1.0 / ((k * k) as f64 - a * a)).sum::<f64>()
        };
        s * scale
    }

    /// Exponential representation for convolutions on a grid of spacing `h`.
    ///
    /// Terms with `nu_n h > 40` are folded into `local` exactly when `tail` is set and
    /// dropped otherwise. With `tail` off and `terms` given, exactly `terms` terms are kept.
    pub fn decomposition(&self, h: f64, terms: Option<usize>, tail: bool) -> ExponentialDecomposition {
        let auto = ((40.0 / h) / (2.0 * PI * self.temperature)).ceil() as usize;
        let n = match (tail, terms) {
            (false, Some(n)) => n,
            (true, Some(n)) => n.max(auto),
            (_, None) => auto,
        }
        .max(self.skip)
        .max(5);
        let mut d = ExponentialDecomposition::default();
        let mut lead = self.lead;
        match self.pair {
            Some(Pair::Split { nu, ca, cb }) => {
                lead += ca;
                d.exps.push((cb, nu));
            }
            Some(Pair::Degenerate { c }) => {
                lead += c;
                d.poly.push((-c * self.cutoff, self.cutoff));
            }
            None => {}
        }
        d.exps.push((lead, self.cutoff));
        for k in 1..=n {
            if k != self.skip {
                d.exps.push((self.coefficient(k), self.nu(k)));
            }
        }
        if tail {
            d.local = 2.0 * self.c0 * self.temperature * self.inverse_square_tail(n);
        }
        d
    }
}

/// `gamma(s)` and `K(s)` for both baths tabulated on `[0, t]`.
///
/// `K` at `s = 0` is replaced by its average over the first cell, which is finite.
#[derive(Clone, Debug)]
pub struct MemoryKernelSet {
    pub s: Vec<f64>,
    pub gamma: [Vec<f64>; 2],
    pub noise: [Vec<f64>; 2],
}

impl MemoryKernelSet {
    pub fn tabulate(
        baths: &[BathParams; 2],
        oscillators: &[OscillatorParams; 2],
        t: f64,
        steps: usize,
        method: KernelMethod,
    ) -> Result<Self> {
        if t.is_nan() || t <= 0.0 || steps < 1 {
            return Err(Error::InvalidArgument("tabulation needs t > 0 and at least one step".into()));
        }
        let h = t / steps as f64;
        let s: Vec<f64> = (0..=steps).map(|k| k as f64 * h).collect();
        let mut gamma: [Vec<f64>; 2] = Default::default();
        let mut noise: [Vec<f64>; 2] = Default::default();
        for a in 0..2 {
            let (b, o) = (&baths[a], &oscillators[a]);
            gamma[a] = s.iter().map(|&x| dissipation_kernel(x, b)).collect();
            let mut k = Vec::with_capacity(s.len());
            let avg = integrate(
                |x| noise_kernel(x, b, o, method).unwrap_or(f64::NAN),
                0.0,
                h,
                1e-14 * b.coupling.max(1e-300),
                1e-10,
                400,
            );
            k.push(avg.value / h);
            for &x in &s[1..] {
                k.push(noise_kernel(x, b, o, method)?);
            }
            if let Some(i) = k.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { what: "noise kernel", s: s[i] });
            }
            noise[a] = k;
        }
        Ok(Self { s, gamma, noise })
    }

    /// CSV with columns `s, gamma1, K1, gamma2, K2`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut rows = String::from("s,gamma1,K1,gamma2,K2\n");
        for i in 0..self.s.len() {
            rows.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e}\n",
                self.s[i], self.gamma[0][i], self.noise[0][i], self.gamma[1][i], self.noise[1][i]
            ));
        }
        crate::io::write_atomic(path, rows.as_bytes())
    }
}
