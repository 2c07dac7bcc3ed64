//! Adaptive Gauss-Kronrod quadrature and the special functions used by the kernels.

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let pair = f(c - x) + f(c + x);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive 15-point Gauss-Kronrod integration of `f` over `[a, b]`.
///
/// Stops when the summed error estimate drops below `max(abs_tol, rel_tol * |value|)`
/// or after `max_intervals` subdivisions. Integrable endpoint singularities are fine
/// because the rule never samples the endpoints.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_intervals: usize,
) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error: 0.0, converged: true };
    }
    let (v, e) = gk15(&f, a, b);
    let mut intervals = vec![(a, b, v, e)];
    let mut value = v;
    let mut error = e;
    while error > abs_tol.max(rel_tol * value.abs()) {
        if intervals.len() >= max_intervals {
            return Quadrature { value, error, converged: false };
        }
        let (worst, _) = intervals
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, iv)| if iv.3 > acc.1 { (i, iv.3) } else { acc });
        let (lo, hi, v0, e0) = intervals.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return Quadrature { value, error, converged: false };
        }
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        intervals.push((lo, mid, v1, e1));
        intervals.push((mid, hi, v2, e2));
        value += v1 + v2 - v0;
        error += e1 + e2 - e0;
        if intervals.len() % 64 == 0 {
            value = intervals.iter().map(|iv| iv.2).sum();
            error = intervals.iter().map(|iv| iv.3).sum();
        }
    }
    value = intervals.iter().map(|iv| iv.2).sum();
    Quadrature { value, error, converged: true }
}

/// Exponential integral `E1(x)` for `x > 0`.
pub fn e1(x: f64) -> f64 {
    if x <= 1.0 {
        e1_series(x)
    } else {
        (-x).exp() * e1_scaled_cf(x)
    }
}

/// `exp(x) * E1(x)` without overflow for large `x`.
pub fn e1_scaled(x: f64) -> f64 {
    if x <= 1.0 {
        x.exp() * e1_series(x)
    } else {
        e1_scaled_cf(x)
    }
}

fn e1_series(x: f64) -> f64 {
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        term *= -x / k as f64;
        let add = term / k as f64;
        sum += add;
        if add.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn e1_scaled_cf(x: f64) -> f64 {
    // Modified Lentz evaluation of the continued fraction for exp(x) E1(x).
    let tiny = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// Exponential integral `Ei(x)` for `x > 0`.
pub fn ei(x: f64) -> f64 {
    if x > 700.0 {
        return f64::INFINITY;
    }
    ei_scaled(x) * x.exp()
}

/// `exp(-x) * Ei(x)` for `x > 0`.
pub fn ei_scaled(x: f64) -> f64 {
    if x <= 40.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..400 {
            term *= x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add < 1e-17 * sum {
                break;
            }
        }
        (-x).exp() * (sum + x.ln() + EULER_GAMMA)
    } else {
        let mut sum = 1.0;
        let mut term = 1.0;
        for k in 1..100 {
            let prev = term;
            term *= k as f64 / x;
            if term < 1e-17 {
                break;
            }
            if term < prev {
                sum += term;
            } else {
                sum -= prev;
                break;
            }
        }
        sum / x
    }
}

/// Trigamma function for `x >= 1`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x + 0.5 * x2
        + x2 / x * (1.0 / 6.0 - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 / 30.0)))
}

/// `phi_m(x) = int_0^1 y^(m-1) exp(-x y) dy` for `m = 1, 2, 3`.
pub fn phi(m: u32, x: f64) -> f64 {
    if x < 0.5 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 0..30 {
            let add = term / (k as f64 + m as f64);
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
            term *= -x / (k as f64 + 1.0);
        }
        return sum;
    }
    let ex = (-x).exp();
    match m {
        1 => (1.0 - ex) / x,
        2 => (1.0 - (1.0 + x) * ex) / (x * x),
        3 => (2.0 - (x * x + 2.0 * x + 2.0) * ex) / (x * x * x),
        _ => panic!("phi is only defined for m in 1..=3"),
    }
}
