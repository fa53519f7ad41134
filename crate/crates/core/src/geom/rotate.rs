//! Exact quarter-turn lattice rotations for every entity kind.
//!
//! The counter-clockwise pixel map (array convention) is
//! `(x, y) -> (H - 1 - y, x)` on a WxH image; four applications are the
//! identity. The same map applies to real coordinates, whose convention puts
//! pixel centers at integers: coordinates produced by the dataset generator
//! are dyadic (multiples of 1/8 px), for which `H - 1 - y` is exact in f64,
//! making the round trip bitwise.

use crate::tensor::{Element, Tensor};

use super::{Circle, Contour, Mask};

/// Quarter-turn direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Turn {
    /// `(x, y) -> (H - 1 - y, x)`
    Ccw,
    /// `(x, y) -> (y, W - 1 - x)`
    Cw,
}

impl Turn {
    pub fn inverse(self) -> Turn {
        match self {
            Turn::Ccw => Turn::Cw,
            Turn::Cw => Turn::Ccw,
        }
    }
}

/// Rotates a real point inside a WxH image. Returns the mapped point; the
/// rotated frame has extents HxW.
pub fn rotate90_point(p: [f64; 2], width: usize, height: usize, turn: Turn) -> [f64; 2] {
    match turn {
        Turn::Ccw => [(height - 1) as f64 - p[1], p[0]],
        Turn::Cw => [p[1], (width - 1) as f64 - p[0]],
    }
}

/// Rotates a circle; the radius is unchanged.
pub fn rotate90_circle(c: &Circle, width: usize, height: usize, turn: Turn) -> Circle {
    let p = rotate90_point([c.cx, c.cy], width, height, turn);
    Circle::new(p[0], p[1], c.r)
}

pub fn rotate90_contour(c: &Contour, width: usize, height: usize, turn: Turn) -> Contour {
    Contour::new(
        c.vertices
            .iter()
            .map(|&v| rotate90_point(v, width, height, turn))
            .collect(),
    )
}

/// Exact lattice rotation of a mask; the set-pixel count is preserved.
pub fn rotate90_mask(m: &Mask, turn: Turn) -> Mask {
    let (w, h) = (m.width(), m.height());
    let mut out = Mask::new(h, w);
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) {
                let p = rotate90_point([x as f64, y as f64], w, h, turn);
                out.set(p[0] as usize, p[1] as usize, true);
            }
        }
    }
    out
}

/// Exact lattice rotation of a `[C, H, W]` tensor (image or feature map).
pub fn rotate90_tensor<E: Element>(t: &Tensor<E>, turn: Turn) -> Tensor<E> {
    let shape = t.shape();
    assert_eq!(shape.len(), 3, "rotate90_tensor expects [C, H, W]");
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    // output is [C, W, H]
    let mut out = Tensor::zeros(&[c, w, h]);
    let (oh, ow) = (w, h);
    let data = out.data_mut();
    for ci in 0..c {
        let src = &t.data()[ci * h * w..(ci + 1) * h * w];
        let dst = &mut data[ci * oh * ow..(ci + 1) * oh * ow];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = match turn {
                    Turn::Ccw => (h - 1 - y, x),
                    Turn::Cw => (y, w - 1 - x),
                };
                dst[ny * ow + nx] = src[y * w + x];
            }
        }
    }
    out
}
