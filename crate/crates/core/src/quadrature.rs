//! One-dimensional quadrature rules.

use std::f64::consts::PI;

/// Gauss-Legendre nodes (ascending) and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n > 0);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi initial guess, then Newton on P_n.
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `(P_n(z), P_n'(z))` by the three-term recurrence.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Gauss-Legendre rule of `order` points on every panel `[edges[k], edges[k+1]]`.
pub fn composite_gauss(edges: &[f64], order: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(order);
    let mut nodes = Vec::with_capacity(order * edges.len());
    let mut weights = Vec::with_capacity(order * edges.len());
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (xi, wi) in x.iter().zip(&w) {
            nodes.push(mid + half * xi);
            weights.push(half * wi);
        }
    }
    (nodes, weights)
}

/// Panel edges on `[a, b]` refined geometrically toward every point of
/// `clusters` (which may include the endpoints). Each cluster gets `levels`
/// panels shrinking by `ratio` on each side it touches; the rest of the
/// interval is split into panels no wider than `max_width`.
pub fn graded_edges(a: f64, b: f64, clusters: &[f64], levels: usize, ratio: f64, max_width: f64) -> Vec<f64> {
    let is_cluster = |x: f64| clusters.iter().any(|&c| (c - x).abs() < 1e-14);
    let mut cuts: Vec<f64> = clusters.iter().copied().filter(|&c| c > a && c < b).collect();
    cuts.push(a);
    cuts.push(b);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let mut edges = vec![a];
    for seg in cuts.windows(2) {
        let (lo, hi) = (seg[0], seg[1]);
        // Graded ends occupy at most a quarter of the segment each.
        let end = 0.25 * (hi - lo);
        let mut inner = Vec::new();
        let mut core = (lo, hi);
        if is_cluster(lo) {
            inner.extend((0..levels).map(|k| lo + end * ratio.powi(k as i32)));
            core.0 = lo + end;
        }
        if is_cluster(hi) {
            inner.extend((0..levels).map(|k| hi - end * ratio.powi(k as i32)));
            core.1 = hi - end;
        }
        let pieces = (((core.1 - core.0) / max_width).ceil() as usize).max(1);
        inner.extend((1..pieces).map(|k| core.0 + (core.1 - core.0) * k as f64 / pieces as f64));
        inner.retain(|&x| x > lo && x < hi);
        inner.sort_by(f64::total_cmp);
        inner.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * x.abs().max(y.abs()));
        edges.extend(inner);
        edges.push(hi);
    }
    edges
}

/// Integral of samples on a nonuniform grid by piecewise quadratic
/// interpolation (composite Simpson on uneven spacing).
pub fn simpson_nonuniform(t: &[f64], f: &[f64]) -> f64 {
    let n = t.len();
    assert_eq!(n, f.len());
    match n {
        0 | 1 => return 0.0,
        2 => return 0.5 * (t[1] - t[0]) * (f[0] + f[1]),
        _ => {}
    }
    let mut sum = 0.0;
    let mut i = 0;
    while i + 2 < n {
        let h0 = t[i + 1] - t[i];
        let h1 = t[i + 2] - t[i + 1];
        let s = h0 + h1;
        sum += s / 6.0
            * ((2.0 - h1 / h0) * f[i] + s * s / (h0 * h1) * f[i + 1] + (2.0 - h0 / h1) * f[i + 2]);
        i += 2;
    }
    if i + 2 == n {
        // One interval left: integrate the quadratic through the last three points.
        let h0 = t[n - 2] - t[n - 3];
        let h1 = t[n - 1] - t[n - 2];
        let s = h0 + h1;
        sum += f[n - 1] * (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * s)
            + f[n - 2] * (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0)
            - f[n - 3] * h1 * h1 * h1 / (6.0 * h0 * s);
    }
    sum
}
