//! Definitional oracles shared by the integration tests. Nothing here calls
//! into the crate's statistics or raster code.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::PI;

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    assert!(n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

fn phi(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF by integrating the density.
pub fn normal_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        0.5 + simpson(phi, 0.0, x, 4000)
    } else {
        simpson(phi, x - 30.0, x, 40_000)
    }
}

/// Upper normal tail `1 - Phi(x)` for `x >= 0`, integrated over `[x, x + 40]`.
pub fn normal_sf(x: f64) -> f64 {
    simpson(phi, x, x + 40.0, 200_000)
}

/// Two-sided Student-t tail `P(|T| > |t|)` with `df >= 1` degrees of freedom.
///
/// With `u = sqrt(df) tan(theta)` the density becomes proportional to
/// `cos^(df-1)(theta)`; writing `phi = pi/2 - theta = s^2` gives a smooth
/// integrand on both the tail and the full range.
pub fn t_two_sided(t: f64, df: f64) -> f64 {
    assert!(df >= 1.0);
    let g = |s: f64| (s * s).sin().powf(df - 1.0) * 2.0 * s;
    let theta = (t.abs() / df.sqrt()).atan();
    let tail = simpson(g, 0.0, (PI / 2.0 - theta).sqrt(), 20_000);
    let full = simpson(g, 0.0, (PI / 2.0).sqrt(), 20_000);
    tail / full
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn sample_var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

/// Pearson r by the raw-sums formula, with its t-test p-value.
pub fn pearson(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let syy: f64 = y.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let r = (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt();
    let df = n - 2.0;
    let p = if r.abs() >= 1.0 { 0.0 } else { t_two_sided(r * (df / (1.0 - r * r)).sqrt(), df) };
    (r, p)
}

/// Ranks by counting, ties sharing the mean of their positions.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let below = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

pub fn spearman(x: &[f64], y: &[f64]) -> (f64, f64) {
    pearson(&ranks(x), &ranks(y))
}

/// Mann-Kendall S, tie-corrected variance, continuity-corrected z and p.
pub fn mann_kendall(x: &[f64]) -> (i64, f64, f64, f64) {
    let n = x.len();
    let mut s = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            s += (x[j] - x[i]).partial_cmp(&0.0).map_or(0, |o| o as i64);
        }
    }
    let mut groups: HashMap<u64, i64> = HashMap::new();
    for v in x {
        *groups.entry(v.to_bits()).or_default() += 1;
    }
    let nn = n as i64;
    let ties: i64 = groups.values().map(|&t| t * (t - 1) * (2 * t + 5)).sum();
    let var = (nn * (nn - 1) * (2 * nn + 5) - ties) as f64 / 18.0;
    let z = match s.signum() {
        0 => 0.0,
        sg => (s - sg) as f64 / var.sqrt(),
    };
    let p = if z == 0.0 { 1.0 } else { 2.0 * normal_sf(z.abs()) };
    (s, var, z, p)
}

/// Welch's test, `t = (mean_after - mean_before) / se`.
pub fn welch(before: &[f64], after: &[f64]) -> (f64, f64, f64) {
    let (nb, na) = (before.len() as f64, after.len() as f64);
    let (vb, va) = (sample_var(before) / nb, sample_var(after) / na);
    let t = (mean(after) - mean(before)) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    (t, df, t_two_sided(t, df))
}

/// Even-odd point-in-polygon with points on an edge counted as inside.
pub fn point_in_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for i in 0..n {
        let (ax, ay) = poly[i];
        let (bx, by) = poly[(i + 1) % n];
        let cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax);
        if cross == 0.0 && px >= ax.min(bx) && px <= ax.max(bx) && py >= ay.min(by) && py <= ay.max(by) {
            return true;
        }
        if (ay > py) != (by > py) {
            let x = ax + (py - ay) * (bx - ax) / (by - ay);
            if px < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Per-pixel raster: pixel (row, col) is set when its center is inside.
pub fn raster(poly: &[(f64, f64)], w: usize, h: usize) -> Vec<bool> {
    (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .map(|(r, c)| point_in_polygon(c as f64 + 0.5, r as f64 + 0.5, poly))
        .collect()
}

/// Convex hull by gift wrapping.
pub fn gift_wrap(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let start = points
        .iter()
        .copied()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)))
        .unwrap();
    let mut hull = vec![start];
    let mut current = start;
    loop {
        let mut next = points[0];
        for &p in points {
            if next == current {
                next = p;
                continue;
            }
            let cross = (next.0 - current.0) * (p.1 - current.1) - (next.1 - current.1) * (p.0 - current.0);
            let farther = (p.0 - current.0).hypot(p.1 - current.1) > (next.0 - current.0).hypot(next.1 - current.1);
            if cross < 0.0 || (cross == 0.0 && farther) {
                next = p;
            }
        }
        if next == start {
            break;
        }
        hull.push(next);
        current = next;
    }
    hull
}

/// Fit score by counting pixels.
pub fn fit_score(pred: &[bool], roi: &[bool]) -> f64 {
    let inter = pred.iter().zip(roi).filter(|(a, b)| **a && **b).count();
    let area = roi.iter().filter(|b| **b).count();
    100.0 * inter as f64 / area as f64
}
