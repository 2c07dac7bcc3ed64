//! Shared oracles for the integration tests.
#![allow(dead_code)]

use nalgebra::{Complex, Matrix4};
use qlimit::{BathParams, OscillatorParams};

/// `max |a - b| / max(|b|, 1e-3)`: relative error with an absolute floor of `1e-6` at the
/// `1e-3` level.
pub fn max_entry_deviation(a: &Matrix4<f64>, b: &Matrix4<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / y.abs().max(1e-3)).fold(0.0, f64::max)
}

/// Composite five-point Gauss-Legendre rule with panels no wider than `panel`.
pub fn gauss_legendre(a: f64, b: f64, panel: f64, f: impl Fn(f64) -> f64) -> f64 {
    const X: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];
    let n = ((b - a) / panel).ceil().max(1.0) as usize;
    let h = (b - a) / n as f64;
    let mut sum = 0.0;
    for k in 0..n {
        let c = a + (k as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(W) {
            sum += w * f(c + 0.5 * h * x);
        }
    }
    0.5 * h * sum
}

/// Stationary `(sigma_qq, sigma_pp)` of one undriven oscillator with a Drude bath from the
/// fluctuation-dissipation theorem,
/// `sigma_qq = (1/pi) int_0^inf coth(w / 2T) Im chi(w) dw` and
/// `sigma_pp = (m^2/pi) int_0^inf w^2 coth(w / 2T) Im chi(w) dw`, with
/// `chi(w) = 1 / (m (w0^2 - w^2 - i w gamma Omega / (Omega - i w)))`.
pub fn equilibrium_moments(bath: &BathParams, osc: &OscillatorParams) -> (f64, f64) {
    let (m, w0, g, om, t) = (osc.mass, osc.frequency, bath.coupling, bath.cutoff, bath.temperature);
    let im_chi = |w: f64| {
        let damping = Complex::new(0.0, w) * (g * om) / Complex::new(om, -w);
        let denom = (Complex::new(w0 * w0 - w * w, 0.0) - damping) * m;
        (Complex::new(1.0, 0.0) / denom).im
    };
    let coth = |w: f64| if t == 0.0 { 1.0 } else { 1.0 / (w / (2.0 * t)).tanh() };
    let qq_density = |w: f64| if w == 0.0 { 0.0 } else { coth(w) * im_chi(w) };
    let near = 4.0 * w0.max(om);
    let far = 400.0 * w0.max(om);
    let integrate = |f: &dyn Fn(f64) -> f64| {
        gauss_legendre(0.0, near, g.min(w0) * 0.02, f) + gauss_legendre(near, far, 0.05 * w0, f)
    };
    let qq = integrate(&qq_density) / std::f64::consts::PI;
    let pp = m * m * integrate(&|w: f64| w * w * qq_density(w)) / std::f64::consts::PI;
    (qq, pp)
}
