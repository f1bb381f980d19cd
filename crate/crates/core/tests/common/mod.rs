//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

/// Φ(−1.19) to 20 digits.
pub const PHI_MINUS_1_19: f64 = 0.117_023_196_023_108_72;

/// 2.38² Φ(−1.19).
pub fn speed_constant() -> f64 {
    5.6644 * PHI_MINUS_1_19
}

pub fn kmax(n: usize) -> usize {
    ((n as f64).sqrt() * (n as f64).ln()).floor() as usize
}

/// p_n(1..=kmax) from the explicit product form around the mode(s).
pub fn pn(n: usize) -> Vec<f64> {
    let km = kmax(n);
    let nf = n as f64;
    let mut w = vec![0.0; km + 1];
    if km % 2 == 1 {
        let mode = km.div_ceil(2);
        w[mode] = 1.0;
        let mut prod = 1.0;
        for k in 1..=(km - 1) / 2 {
            prod *= 1.0 - (k as f64 - 0.5) / nf;
            w[mode + k] = prod;
            w[mode - k] = prod;
        }
    } else {
        let lo = km / 2;
        w[lo] = 1.0;
        w[lo + 1] = 1.0;
        let mut prod = 1.0;
        for k in 1..lo {
            prod *= 1.0 - k as f64 / nf;
            w[lo + 1 + k] = prod;
            w[lo - k] = prod;
        }
    }
    let total: f64 = w.iter().sum();
    w[1..].iter().map(|x| x / total).collect()
}

/// Upper tail of a chi-square with an even number of degrees of freedom.
pub fn chi2_sf_even(x: f64, df: usize) -> f64 {
    assert!(df.is_multiple_of(2) && df > 0);
    let h = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..df / 2 {
        term *= h / i as f64;
        sum += term;
    }
    (-h).exp() * sum
}

/// Minimiser of a unimodal function on [a, b].
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    (a + b) / 2.0
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f((a + b) / 2.0) + f(b))
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = (a + b) / 2.0;
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, left, eps / 2.0, depth - 1) + adaptive(f, m, b, right, eps / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, eps: f64) -> f64 {
    let whole = simpson(&f, a, b);
    adaptive(&f, a, b, whole, eps, 50)
}

/// ∫₀^∞ g(s) ds through s = t/(1−t).
pub fn integrate_half_line(g: impl Fn(f64) -> f64, eps: f64) -> f64 {
    integrate(
        |t| {
            if t >= 1.0 {
                0.0
            } else {
                let s = t / (1.0 - t);
                g(s) / ((1.0 - t) * (1.0 - t))
            }
        },
        0.0,
        1.0,
        eps,
    )
}

/// ACF estimate at `lag` with the 1/N normalisation.
pub fn acf_at(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let c0: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    let cl: f64 = xs.windows(lag + 1).map(|w| (w[0] - m) * (w[lag] - m)).sum();
    cl / c0
}
