//! Interpolation kernels: cubic sampling along columns, periodic linear
//! interpolation on circles, and exact-on-linear barycentric weights for the
//! Cartesian quadrilaterals and triangles of a polar grid.

/// Catmull-Rom sample of tabulated values at fractional index `t`
/// (0 ≤ t ≤ len-1). Falls back to the one-sided cubic at the ends.
pub fn cubic_sample(values: &[f64], t: f64) -> f64 {
    let n = values.len();
    assert!(n >= 2);
    let t = t.clamp(0.0, (n - 1) as f64);
    let i = (t.floor() as usize).min(n - 2);
    let s = t - i as f64;
    if n == 2 {
        return values[0] * (1.0 - s) + values[1] * s;
    }
    let p1 = values[i];
    let p2 = values[i + 1];
    let p0 = if i == 0 { 2.0 * p1 - p2 } else { values[i - 1] };
    let p3 = if i + 2 >= n {
        2.0 * p2 - p1
    } else {
        values[i + 2]
    };
    0.5 * ((2.0 * p1)
        + (-p0 + p2) * s
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s * s
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s * s * s)
}

/// Linear sample at fractional index `t`, clamped.
pub fn linear_sample(values: &[f64], t: f64) -> f64 {
    let n = values.len();
    assert!(n >= 2);
    let t = t.clamp(0.0, (n - 1) as f64);
    let i = (t.floor() as usize).min(n - 2);
    let s = t - i as f64;
    values[i] * (1.0 - s) + values[i + 1] * s
}

/// Periodic linear interpolation on a circle of `values.len()` equispaced
/// nodes; `theta` in radians, node j at j·2π/len.
pub fn periodic_linear(values: &[f64], theta: f64) -> f64 {
    let n = values.len();
    let tau = std::f64::consts::TAU;
    let mut t = (theta / tau * n as f64) % n as f64;
    if t < 0.0 {
        t += n as f64;
    }
    let i = (t.floor() as usize) % n;
    let s = t - t.floor();
    values[i] * (1.0 - s) + values[(i + 1) % n] * s
}

/// Inverse-bilinear weights of point `p` inside the quadrilateral with
/// corners `c` in the order (00, 10, 11, 01): returns (s, t) with
/// p = Σ w(s,t)·c. Exact on linear functions because the weighted corner
/// positions reproduce `p` itself. Returns None when the 2×2 solve for the
/// Newton step degenerates.
pub fn inverse_bilinear(c: &[[f64; 2]; 4], p: [f64; 2]) -> Option<(f64, f64)> {
    // Newton iteration on q(s,t) − p with q bilinear; quads here are convex
    // and mildly distorted, so a handful of steps reaches machine precision.
    let (mut s, mut t) = (0.5, 0.5);
    for _ in 0..30 {
        let w00 = (1.0 - s) * (1.0 - t);
        let w10 = s * (1.0 - t);
        let w11 = s * t;
        let w01 = (1.0 - s) * t;
        let qx = w00 * c[0][0] + w10 * c[1][0] + w11 * c[2][0] + w01 * c[3][0];
        let qy = w00 * c[0][1] + w10 * c[1][1] + w11 * c[2][1] + w01 * c[3][1];
        let rx = qx - p[0];
        let ry = qy - p[1];
        // Jacobian
        let dxds = -(1.0 - t) * c[0][0] + (1.0 - t) * c[1][0] + t * c[2][0] - t * c[3][0];
        let dyds = -(1.0 - t) * c[0][1] + (1.0 - t) * c[1][1] + t * c[2][1] - t * c[3][1];
        let dxdt = -(1.0 - s) * c[0][0] - s * c[1][0] + s * c[2][0] + (1.0 - s) * c[3][0];
        let dydt = -(1.0 - s) * c[0][1] - s * c[1][1] + s * c[2][1] + (1.0 - s) * c[3][1];
        let det = dxds * dydt - dxdt * dyds;
        if det.abs() < 1e-300 {
            return None;
        }
        let ds = (rx * dydt - dxdt * ry) / det;
        let dt = (dxds * ry - rx * dyds) / det;
        s -= ds;
        t -= dt;
        if ds.abs() + dt.abs() < 1e-15 {
            break;
        }
    }
    Some((s, t))
}

/// Bilinear corner weights for parameters (s, t), corner order (00,10,11,01).
pub fn bilinear_weights(s: f64, t: f64) -> [f64; 4] {
    [
        (1.0 - s) * (1.0 - t),
        s * (1.0 - t),
        s * t,
        (1.0 - s) * t,
    ]
}

/// Barycentric weights of `p` in triangle (a, b, c); exact on linears.
/// Returns None for a degenerate triangle.
pub fn barycentric(a: [f64; 2], b: [f64; 2], c: [f64; 2], p: [f64; 2]) -> Option<[f64; 3]> {
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    if det.abs() < 1e-300 {
        return None;
    }
    let wb = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
    let wc = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
    Some([1.0 - wb - wc, wb, wc])
}
