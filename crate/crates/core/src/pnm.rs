//! Binary PBM (P4) and PGM (P5) bitmaps. Any non-zero pixel reads as set.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BitMask;

pub fn read_bitmap(path: &Path) -> Result<BitMask> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_bitmap(&bytes)
}

pub fn parse_bitmap(bytes: &[u8]) -> Result<BitMask> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.token()?;
    match magic.as_slice() {
        b"P4" => {
            let (w, h) = (cur.number()?, cur.number()?);
            cur.single_whitespace()?;
            let row_bytes = w.div_ceil(8);
            let data = cur.rest(row_bytes * h)?;
            BitMask::from_fn(w, h, |i, j| data[i * row_bytes + j / 8] & (0x80 >> (j % 8)) != 0)
        }
        b"P5" => {
            let (w, h, maxval) = (cur.number()?, cur.number()?, cur.number()?);
            if maxval == 0 || maxval > 65535 {
                return Err(Error::Bitmap(format!("invalid maxval {maxval}")));
            }
            cur.single_whitespace()?;
            let depth = if maxval < 256 { 1 } else { 2 };
            let data = cur.rest(w * h * depth)?;
            BitMask::from_fn(w, h, |i, j| {
                let k = (i * w + j) * depth;
                data[k..k + depth].iter().any(|&b| b != 0)
            })
        }
        other => Err(Error::Bitmap(format!(
            "unsupported magic {:?}",
            String::from_utf8_lossy(other)
        ))),
    }
}

/// Encodes as an 8-bit P5 graymap (0 / 255).
pub fn encode_pgm(mask: &BitMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.bits().iter().map(|&b| if b { 255u8 } else { 0 }));
    out
}

/// Encodes as a packed P4 bitmap.
pub fn encode_pbm(mask: &BitMask) -> Vec<u8> {
    let (w, h) = (mask.width(), mask.height());
    let mut out = format!("P4\n{w} {h}\n").into_bytes();
    let row_bytes = w.div_ceil(8);
    for i in 0..h {
        let mut row = vec![0u8; row_bytes];
        for j in 0..w {
            if mask.get(i, j) {
                row[j / 8] |= 0x80 >> (j % 8);
            }
        }
        out.extend(row);
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<Vec<u8>> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Bitmap("truncated header".into()));
        }
        Ok(self.bytes[start..self.pos].to_vec())
    }

    fn number(&mut self) -> Result<usize> {
        let t = self.token()?;
        std::str::from_utf8(&t)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Bitmap(format!("bad header field {:?}", String::from_utf8_lossy(&t))))
    }

    fn single_whitespace(&mut self) -> Result<()> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(Error::Bitmap("missing whitespace before raster".into())),
        }
    }

    fn rest(&self, len: usize) -> Result<&[u8]> {
        self.bytes
            .get(self.pos..self.pos + len)
            .ok_or_else(|| Error::Bitmap(format!("raster truncated: need {len} bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> BitMask {
        BitMask::from_fn(13, 5, |i, j| (i + j) % 3 == 0).unwrap()
    }

    #[test]
    fn pgm_and_pbm_decode_to_same_mask() {
        let m = sample();
        assert_eq!(parse_bitmap(&encode_pgm(&m)).unwrap(), m);
        assert_eq!(parse_bitmap(&encode_pbm(&m)).unwrap(), m);
    }

    #[test]
    fn header_comments_and_gray_levels() {
        let mut bytes = b"P5 # mask\n3 1\n# depth\n255\n".to_vec();
        bytes.extend([0u8, 1, 200]);
        let m = parse_bitmap(&bytes).unwrap();
        assert_eq!(m.bits(), &[false, true, true]);
    }

    #[test]
    fn sixteen_bit_graymap() {
        let mut bytes = b"P5\n2 1\n65535\n".to_vec();
        bytes.extend([0u8, 0, 0, 1]);
        assert_eq!(parse_bitmap(&bytes).unwrap().bits(), &[false, true]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_bitmap(b"P6\n1 1\n255\n\0\0\0").is_err());
        assert!(parse_bitmap(b"P5\n4 4\n255\n\0").is_err());
        assert!(parse_bitmap(b"P4\n").is_err());
        assert!(parse_bitmap(b"").is_err());
        assert!(parse_bitmap(b"P5\n0 3\n255\n").is_err());
    }
}
