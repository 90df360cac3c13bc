//! Small descriptive-statistics helpers shared across modules.

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample variance with an `n - 1` denominator; 0 for fewer than two values.
pub fn variance(x: &[f64]) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    sum_sq_dev(x) / (x.len() - 1) as f64
}

/// Sum of squared deviations from the mean, computed on data shifted by
/// the first value so that constant input gives exactly zero.
fn sum_sq_dev(x: &[f64]) -> f64 {
    let x0 = x[0];
    let m = x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - x0 - m) * (v - x0 - m)).sum()
}

pub fn sd(x: &[f64]) -> f64 {
    variance(x).sqrt()
}

/// Population standard deviation (`n` denominator).
pub fn pop_sd(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (sum_sq_dev(x) / x.len() as f64).sqrt()
}

pub fn weighted_mean(x: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let mx = mean(x);
    let my = mean(y);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

pub fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile (R type 7) of already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(x: &[f64], q: f64) -> f64 {
    quantile_sorted(&sorted(x), q)
}

/// Threshold placed at quantile `q` using the lower-midpoint rule: the
/// midpoint between the lower order statistic at `floor((n-1) q)` and its
/// successor. Ties collapse onto the shared value, so `x <= threshold`
/// always includes them.
pub fn threshold_quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let k = ((sorted.len() - 1) as f64 * q.clamp(0.0, 1.0)).floor() as usize;
    let next = (k + 1).min(sorted.len() - 1);
    0.5 * (sorted[k] + sorted[next])
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Two-sided critical value of Student's t with `df` degrees of freedom.
pub fn t_critical(level: f64, df: f64) -> f64 {
    let p = 0.5 + level / 2.0;
    if !df.is_finite() || df > 1e6 {
        return normal_quantile(p);
    }
    StudentsT::new(0.0, 1.0, df.max(1.0))
        .map(|t| t.inverse_cdf(p))
        .unwrap_or_else(|_| normal_quantile(p))
}

/// Standard error of the mean of `x`.
pub fn mean_se(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}
