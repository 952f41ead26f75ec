use super::{cross, Point, Polygon};
use crate::error::{Error, Result};

/// Convex hull by Andrew's monotone chain.
///
/// Collinear points on hull edges are dropped, so every returned vertex is a
/// strict corner. Fails when fewer than three non-collinear points are given.
pub fn convex_hull(points: &[Point]) -> Result<Polygon> {
    if points.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
        return Err(Error::DegenerateGeometry("non-finite point".into()));
    }
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return Err(Error::DegenerateGeometry(format!(
            "{} distinct points, need at least 3",
            pts.len()
        )));
    }

    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();

    if hull.len() < 3 {
        return Err(Error::DegenerateGeometry("all points are collinear".into()));
    }
    Ok(Polygon::from_ccw_unchecked(hull))
}
