use serde::Serialize;

use super::distributions::normal_sf;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendResult {
    pub n: usize,
    pub s_statistic: i64,
    pub variance: f64,
    pub z: f64,
    pub p: f64,
}

pub const MIN_TREND_POINTS: usize = 8;

/// Mann-Kendall test with tie-corrected variance and continuity correction.
pub fn mann_kendall(series: &[f64]) -> Result<TrendResult> {
    let n = series.len();
    if n < MIN_TREND_POINTS {
        return Err(Error::InsufficientData(format!(
            "Mann-Kendall needs at least {MIN_TREND_POINTS} points, got {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("non-finite value in trend series".into()));
    }

    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut tie_pairs = 0i64;
    let mut tie_term = 0.0;
    for group in sorted.chunk_by(|a, b| a == b) {
        let t = group.len() as f64;
        tie_pairs += (group.len() * (group.len() - 1) / 2) as i64;
        tie_term += t * (t - 1.0) * (2.0 * t + 5.0);
    }

    let pairs = (n * (n - 1) / 2) as i64;
    let discordant = strict_inversions(&mut series.to_vec()) as i64;
    let concordant = pairs - discordant - tie_pairs;
    let s = concordant - discordant;

    let nf = n as f64;
    let variance = (nf * (nf - 1.0) * (2.0 * nf + 5.0) - tie_term) / 18.0;
    let z = if variance <= 0.0 || s == 0 {
        0.0
    } else if s > 0 {
        (s - 1) as f64 / variance.sqrt()
    } else {
        (s + 1) as f64 / variance.sqrt()
    };
    let p = (2.0 * normal_sf(z.abs())).min(1.0);
    Ok(TrendResult {
        n,
        s_statistic: s,
        variance,
        z,
        p,
    })
}

/// Counts pairs `i < j` with `v[i] > v[j]` by merge sort; sorts `v` in place.
fn strict_inversions(v: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = strict_inversions(&mut v[..mid]) + strict_inversions(&mut v[mid..]);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            merged.push(v[i]);
            i += 1;
        } else {
            count += (mid - i) as u64;
            merged.push(v[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&v[i..mid]);
    merged.extend_from_slice(&v[j..n]);
    v.copy_from_slice(&merged);
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strictly_increasing_ten() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let r = mann_kendall(&xs).unwrap();
        assert_eq!(r.s_statistic, 45);
        assert_eq!(r.variance, 125.0);
        assert!((r.z - 44.0 / 125f64.sqrt()).abs() < 1e-12);
        assert!((r.z - 3.936).abs() < 1e-3);
        assert!((r.p - 8.3e-5).abs() < 0.2e-5, "{}", r.p);
    }

    #[test]
    fn all_tied() {
        let r = mann_kendall(&[3.0; 12]).unwrap();
        assert_eq!((r.s_statistic, r.z, r.p), (0, 0.0, 1.0));
        assert_eq!(r.variance, 0.0);
    }

    #[test]
    fn negation_flips_sign() {
        let xs = [1.0, 5.0, 2.0, 2.0, 8.0, 3.0, 9.0, 9.0, 4.0, 11.0];
        let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
        let (a, b) = (mann_kendall(&xs).unwrap(), mann_kendall(&neg).unwrap());
        assert_eq!(a.s_statistic, -b.s_statistic);
        assert_eq!(a.z, -b.z);
        assert_eq!(a.p, b.p);
        assert_eq!(a.variance, b.variance);
    }

    #[test]
    fn too_short() {
        assert!(matches!(mann_kendall(&[1.0; 7]), Err(Error::InsufficientData(_))));
    }
}
