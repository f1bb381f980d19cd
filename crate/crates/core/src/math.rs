//! Small numerical helpers shared by every module.

use std::sync::LazyLock;

/// The optimal random-walk scale for a unit-roughness target: ℓ* = 2.38/√Υ.
pub const OPTIMAL_SCALE: f64 = 2.38;

/// c = 2.38² Φ(−2.38/2), the update-speed constant at the optimal scale.
///
/// Uses 2.38² = 5.6644 exactly rather than the rounded 5.66.
pub static SPEED_CONSTANT: LazyLock<f64> =
    LazyLock::new(|| OPTIMAL_SCALE * OPTIMAL_SCALE * std_normal_cdf(-OPTIMAL_SCALE / 2.0));

/// Standard normal CDF through the complementary error function
/// (accurate to ~1e-15 over the whole real line).
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// log(Σ exp(v_i)), stable for large magnitudes. Returns −∞ for an empty or
/// all −∞ input.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// min(1, exp(log_ratio)) with −∞ mapped to 0.
#[inline]
pub fn acceptance_probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else {
        log_ratio.exp()
    }
}

/// Sample mean and unbiased (N−1) standard deviation.
pub fn mean_and_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1) as f64).sqrt())
}

/// Average ranks (1-based) with ties sharing their mean rank.
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            out[idx] = rank;
        }
        i = j + 1;
    }
    out
}

/// Spearman rank correlation. NaN when either input is constant.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = ranks(xs);
    let ry = ranks(ys);
    let (mx, sx) = mean_and_sd(&rx);
    let (my, sy) = mean_and_sd(&ry);
    let cov: f64 = rx
        .iter()
        .zip(&ry)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (xs.len() - 1) as f64;
    cov / (sx * sy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_cdf_reference_values() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
        // Φ(−1.19) from high-precision tables.
        assert!((std_normal_cdf(-1.19) - 0.117_023_196_023_108_72).abs() < 1e-13);
        assert!((std_normal_cdf(1.96) - 0.975_002_104_851_779_6).abs() < 1e-13);
    }

    #[test]
    fn speed_constant_value() {
        assert!((*SPEED_CONSTANT - 5.6644 * 0.117_023_196_023_108_72).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_extremes() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
        assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert!((log_sum_exp(&[-1000.0, f64::NEG_INFINITY]) + 1000.0).abs() < 1e-12);
    }

    #[test]
    fn spearman_monotone() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((spearman(&x, &[10.0, 20.0, 30.0, 40.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &[4.0, 3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        assert_eq!(ranks(&[3.0, 1.0, 3.0]), vec![2.5, 1.0, 2.5]);
    }
}
