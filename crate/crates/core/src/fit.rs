//! Small least-squares and extrapolation helpers shared by the exponent
//! estimator and the tail-fitting pipeline.

/// Ordinary least squares y ≈ slope·x + intercept.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub ss_res: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LineFit {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "need at least two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let mut ss_res = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let e = y - (slope * x + intercept);
        ss_res += e * e;
    }
    let r_squared = if syy > 0.0 {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else if ss_res <= 1e-30 {
        1.0
    } else {
        0.0
    };
    LineFit {
        slope,
        intercept,
        r_squared,
        ss_res,
    }
}

/// Geometric (Richardson-style) extrapolation of a sequence whose error
/// decays by a roughly constant factor per step. Returns the extrapolated
/// value, the estimated ratio q, and the magnitude of the applied correction.
pub fn geometric_extrapolate(seq: &[f64]) -> (f64, Option<f64>, f64) {
    let k = seq.len();
    if k == 0 {
        return (f64::NAN, None, 0.0);
    }
    if k < 3 {
        return (seq[k - 1], None, 0.0);
    }
    let d1 = seq[k - 2] - seq[k - 3];
    let d2 = seq[k - 1] - seq[k - 2];
    if d1.abs() < 1e-14 || d2.abs() < 1e-14 {
        return (seq[k - 1], Some(0.0), 0.0);
    }
    let q = d2 / d1;
    if !(0.0..=0.95).contains(&q) {
        // not a geometric tail; trust the last value
        return (seq[k - 1], Some(q), 0.0);
    }
    let correction = d2 * q / (1.0 - q);
    (seq[k - 1] + correction, Some(q), correction.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn recovers_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [2.0, 4.0, 6.0, 8.0];
        let f = linear_fit(&xs, &ys);
        assert_abs_diff_eq!(f.slope, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(f.intercept, 0.0, epsilon = 1e-14);
        assert!(f.r_squared > 0.999_999);
    }

    #[test]
    fn extrapolates_geometric_sequence() {
        // a_k = 2 - 2^{-k}: limit 2, ratio 1/2
        let seq: Vec<f64> = (0..6).map(|k| 2.0 - 0.5_f64.powi(k)).collect();
        let (value, q, _) = geometric_extrapolate(&seq);
        assert_abs_diff_eq!(value, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q.unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn constant_sequence_passes_through() {
        let seq = [3.0, 3.0, 3.0, 3.0];
        let (value, _, corr) = geometric_extrapolate(&seq);
        assert_eq!(value, 3.0);
        assert_eq!(corr, 0.0);
    }
}
