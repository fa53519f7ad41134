//! Binary masks: scanline polygon rasterization, Dice, IoU.

use crate::error::{Error, Result};

use super::Contour;

/// Boolean pixel grid. Pixel `(i, j)` corresponds to real point `(i, j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Number of set pixels.
    pub fn area(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Rasterizes a closed polygon by the even-odd rule evaluated at pixel
    /// centers: pixel (i, j) is set when a rightward ray from (i, j) crosses
    /// the boundary an odd number of times. Edges are counted half-open in y
    /// so shared vertices are not double-counted.
    pub fn from_contour(contour: &Contour, width: usize, height: usize) -> Result<Self> {
        contour.validate()?;
        let mut mask = Mask::new(width, height);
        let v = &contour.vertices;
        let n = v.len();

        let mut crossings: Vec<f64> = Vec::with_capacity(8);
        for j in 0..height {
            let yc = j as f64;
            crossings.clear();
            for i in 0..n {
                let [x0, y0] = v[i];
                let [x1, y1] = v[(i + 1) % n];
                if (y0 <= yc && yc < y1) || (y1 <= yc && yc < y0) {
                    crossings.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
                }
            }
            if crossings.is_empty() {
                continue;
            }
            crossings.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let row = &mut mask.bits[j * width..(j + 1) * width];
            for x in 0..width {
                let xc = x as f64;
                // parity of crossings strictly to the right of the center
                let right = crossings.iter().filter(|&&c| c > xc).count();
                if right % 2 == 1 {
                    row[x] = true;
                }
            }
        }
        Ok(mask)
    }

    /// Union of several contours' rasterizations.
    pub fn from_contours(contours: &[&Contour], width: usize, height: usize) -> Result<Self> {
        let mut out = Mask::new(width, height);
        for c in contours {
            let m = Mask::from_contour(c, width, height)?;
            for (o, b) in out.bits.iter_mut().zip(&m.bits) {
                *o |= *b;
            }
        }
        Ok(out)
    }

    pub fn intersection_area(&self, other: &Mask) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn iou(&self, other: &Mask) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union == 0 {
            return 0.0;
        }
        inter as f64 / union as f64
    }
}

/// Dice coefficient `2|A n B| / (|A| + |B|)`; two empty masks score 1.0 so
/// absent predictions matched against absent objects are not penalized.
pub fn mask_dice(a: &Mask, b: &Mask) -> Result<f64> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::ShapeMismatch {
            op: "mask_dice",
            expected: format!("{}x{}", a.width, a.height),
            got: format!("{}x{}", b.width, b.height),
        });
    }
    let denom = a.area() + b.area();
    if denom == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * a.intersection_area(b) as f64 / denom as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{circle_contour, Circle};

    fn square(x0: f64, y0: f64, side: f64) -> Contour {
        Contour::new(vec![
            [x0, y0],
            [x0 + side, y0],
            [x0 + side, y0 + side],
            [x0, y0 + side],
        ])
    }

    #[test]
    fn ten_by_ten_square_covers_100_pixels() {
        let m = Mask::from_contour(&square(5.0, 5.0, 10.0), 32, 32).unwrap();
        assert_eq!(m.area(), 100);
        assert!(m.get(5, 5));
        assert!(m.get(14, 14));
        assert!(!m.get(15, 15));
        assert!(!m.get(4, 5));
    }

    #[test]
    fn regular_128_gon_area_close_to_disc() {
        let c = circle_contour(&Circle::new(16.0, 16.0, 10.0), 128);
        let poly_area = c.signed_area();
        let disc = std::f64::consts::PI * 100.0;
        assert!((poly_area - disc).abs() / disc < 0.005);
        // rasterized count tracks the analytic area within a pixel rim
        let m = Mask::from_contour(&c, 32, 32).unwrap();
        assert!((m.area() as f64 - disc).abs() < 0.05 * disc, "{}", m.area());
    }

    #[test]
    fn dice_identical_disjoint_and_half_overlap() {
        let a = Mask::from_contour(&square(2.0, 2.0, 10.0), 32, 32).unwrap();
        assert_eq!(mask_dice(&a, &a).unwrap(), 1.0);

        let b = Mask::from_contour(&square(18.0, 18.0, 10.0), 32, 32).unwrap();
        assert_eq!(mask_dice(&a, &b).unwrap(), 0.0);

        // shifted 5 px: 50 shared pixels out of 100 + 100
        let c = Mask::from_contour(&square(7.0, 2.0, 10.0), 32, 32).unwrap();
        assert_eq!(mask_dice(&a, &c).unwrap(), 0.5);
    }

    #[test]
    fn empty_vs_empty_dice_is_one() {
        let a = Mask::new(8, 8);
        let b = Mask::new(8, 8);
        assert_eq!(mask_dice(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let a = Mask::new(8, 8);
        let b = Mask::new(8, 9);
        assert!(mask_dice(&a, &b).is_err());
    }

    #[test]
    fn iou_of_nested_squares() {
        let outer = Mask::from_contour(&square(0.0, 0.0, 16.0), 32, 32).unwrap();
        let inner = Mask::from_contour(&square(0.0, 0.0, 8.0), 32, 32).unwrap();
        assert!((outer.iou(&inner) - 64.0 / 256.0).abs() < 1e-12);
    }
}
