//! Small sample statistics shared by the Monte Carlo modules.

/// Mean and standard error (sample standard deviation over `sqrt(n)`).
/// Summation is sequential so the result is independent of how the samples
/// were produced.
pub fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// z statistic for the difference of two independent proportions using
/// the unpooled variance. Zero when both sides are degenerate and equal.
pub fn two_proportion_z(p1: f64, n1: usize, p2: f64, n2: usize) -> f64 {
    let var = p1 * (1.0 - p1) / n1 as f64 + p2 * (1.0 - p2) / n2 as f64;
    let diff = p1 - p2;
    if var == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    } else {
        diff / var.sqrt()
    }
}

/// Same as [`two_proportion_z`] with the pooled variance, as in the
/// classical two-proportion test.
pub fn two_proportion_z_pooled(p1: f64, n1: usize, p2: f64, n2: usize) -> f64 {
    let pooled = (p1 * n1 as f64 + p2 * n2 as f64) / (n1 + n2) as f64;
    let var = pooled * (1.0 - pooled) * (1.0 / n1 as f64 + 1.0 / n2 as f64);
    let diff = p1 - p2;
    if var == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    } else {
        diff / var.sqrt()
    }
}

/// Two-sample Kolmogorov-Smirnov distance `sup |F_a - F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Critical KS distance at the 95% level for sample sizes `n` and `m`
/// (asymptotic constant 1.358).
pub fn ks_null_band_95(n: usize, m: usize) -> f64 {
    let (n, m) = (n as f64, m as f64);
    1.358 * ((n + m) / (n * m)).sqrt()
}
