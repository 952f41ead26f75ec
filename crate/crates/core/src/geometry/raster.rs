use super::Polygon;
use crate::error::{Error, Result};

/// Row-major boolean pixel grid.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BitMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BitMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BitMask {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::from_bits(width, height, vec![false; width.saturating_mul(height)])
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidValue(format!(
                "bitmask dimensions must be positive, got {width}x{height}"
            )));
        }
        if bits.len() != width * height {
            return Err(Error::InvalidValue(format!(
                "bitmask has {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(BitMask {
            width,
            height,
            bits,
        })
    }

    /// Builds a mask from `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let bits = (0..height)
            .flat_map(|i| (0..width).map(move |j| (i, j)))
            .map(|(i, j)| f(i, j))
            .collect();
        Self::from_bits(width, height, bits)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn same_shape(&self, other: &BitMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::ShapeMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: other.width,
                right_height: other.height,
            });
        }
        Ok(())
    }

    fn zip_with(&self, other: &BitMask, f: impl Fn(bool, bool) -> bool) -> Result<BitMask> {
        self.same_shape(other)?;
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| f(a, b)).collect();
        Ok(BitMask {
            width: self.width,
            height: self.height,
            bits,
        })
    }

    pub fn and(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BitMask) -> Result<BitMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn complement(&self) -> BitMask {
        BitMask {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    /// True when every set bit of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BitMask) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// Number of pixels set in both masks.
    pub fn overlap(&self, other: &BitMask) -> Result<usize> {
        self.same_shape(other)?;
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count())
    }
}

/// Scanline rasterization at pixel centers.
///
/// Pixel `(row, col)` is set iff `(col + 0.5, row + 0.5)` lies inside the
/// polygon or on its boundary. Interior spans come from an even-odd crossing
/// rule with half-open edges; a second pass marks centers that sit exactly on
/// an edge.
pub fn rasterize(polygon: &Polygon, width: usize, height: usize) -> Result<BitMask> {
    let mut mask = BitMask::new(width, height)?;
    let v = polygon.vertices();
    let min_y = v.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_y = v.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let row_lo = (min_y - 0.5).ceil().max(0.0) as usize;
    let row_hi = ((max_y - 0.5).floor()).min(height as f64 - 1.0);
    if row_hi < 0.0 {
        return Ok(mask);
    }
    let row_hi = row_hi as usize;

    let mut crossings: Vec<f64> = Vec::with_capacity(v.len());
    for row in row_lo..=row_hi {
        let cy = row as f64 + 0.5;
        crossings.clear();
        for (a, b) in polygon.edges() {
            if a.y == b.y {
                if a.y == cy {
                    fill_span(&mut mask, row, a.x.min(b.x), a.x.max(b.x));
                }
                continue;
            }
            let (lo, hi) = if a.y < b.y { (a, b) } else { (b, a) };
            if cy < lo.y || cy > hi.y {
                continue;
            }
            let x = lo.x + (cy - lo.y) * (hi.x - lo.x) / (hi.y - lo.y);
            if cy < hi.y {
                crossings.push(x);
            }
            // boundary hit exactly at a pixel center
            let c = x - 0.5;
            if c == c.round() && c >= 0.0 && c < width as f64 {
                mask.set(row, c as usize, true);
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            fill_span(&mut mask, row, pair[0], pair[1]);
        }
    }
    Ok(mask)
}

fn fill_span(mask: &mut BitMask, row: usize, x0: f64, x1: f64) {
    let first = (x0 - 0.5).ceil().max(0.0);
    let last = (x1 - 0.5).floor().min(mask.width as f64 - 1.0);
    if last < first {
        return;
    }
    for col in first as usize..=last as usize {
        mask.set(row, col, true);
    }
}

#[cfg(test)]
mod tests {
    use super::super::{convex_hull, Point};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly(raw: &[(f64, f64)]) -> Polygon {
        Polygon::new(raw.iter().map(|&(x, y)| Point::new(x, y)).collect()).unwrap()
    }

    #[test]
    fn covering_square_sets_everything() {
        let sq = poly(&[(-1., -1.), (20., -1.), (20., 20.), (-1., 20.)]);
        let m = rasterize(&sq, 16, 12).unwrap();
        assert_eq!(m.count_ones(), 16 * 12);
    }

    #[test]
    fn exact_grid_square_includes_boundary_centers() {
        let sq = poly(&[(0.5, 0.5), (3.5, 0.5), (3.5, 3.5), (0.5, 3.5)]);
        let m = rasterize(&sq, 5, 5).unwrap();
        assert_eq!(m.count_ones(), 16);
        assert!(m.get(0, 0) && m.get(3, 3) && !m.get(4, 4));
    }

    #[test]
    fn outside_polygon_sets_nothing() {
        let t = poly(&[(100., 100.), (120., 100.), (110., 130.)]);
        assert!(rasterize(&t, 32, 32).unwrap().is_empty());
        let left = poly(&[(-30., 0.), (-10., 0.), (-20., 30.)]);
        assert!(rasterize(&left, 32, 32).unwrap().is_empty());
    }

    #[test]
    fn zero_dimension_rejected() {
        let t = poly(&[(0., 0.), (1., 0.), (0., 1.)]);
        assert!(rasterize(&t, 0, 4).is_err());
    }

    #[test]
    fn nested_hulls_give_nested_rasters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let pts: Vec<Point> = (0..20)
                .map(|_| Point::new(rng.gen_range(5.0..59.0), rng.gen_range(5.0..59.0)))
                .collect();
            let inner = convex_hull(&pts[..8]).unwrap();
            let outer = convex_hull(&pts).unwrap();
            assert!(inner.vertices().iter().all(|p| outer.contains(*p)));
            let a = rasterize(&inner, 64, 64).unwrap();
            let b = rasterize(&outer, 64, 64).unwrap();
            assert!(a.is_subset_of(&b));
        }
    }

    #[test]
    fn raster_count_converges_to_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let pts: Vec<Point> = (0..12)
                .map(|_| Point::new(rng.gen_range(50.0..950.0), rng.gen_range(50.0..950.0)))
                .collect();
            let hull = convex_hull(&pts).unwrap();
            let count = rasterize(&hull, 1000, 1000).unwrap().count_ones() as f64;
            let rel = (count - hull.area()).abs() / hull.area();
            assert!(rel < 0.01, "relative error {rel}");
        }
    }
}
