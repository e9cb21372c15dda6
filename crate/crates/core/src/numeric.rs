//! Small numeric helpers shared across modules.

/// Neumaier-compensated sum; insensitive to summation order at the level
/// of a few ulps, so parallel and sequential aggregation agree.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and standard error of the mean. The standard error is NaN with
/// fewer than two values; both are NaN for an empty slice.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len();
    if k == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / k as f64;
    if k < 2 {
        return (mean, f64::NAN);
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    (mean, (ss / (k - 1) as f64 / k as f64).sqrt())
}
