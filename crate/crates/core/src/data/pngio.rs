//! 8-bit RGB PNG <-> `[3, H, W]` f32 tensor in [0, 1].

use std::path::Path;

use image::{ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn save_png(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let shape = image.shape();
    assert_eq!(shape.len(), 3, "save_png expects [3, H, W]");
    assert_eq!(shape[0], 3, "save_png expects 3 channels");
    let (h, w) = (shape[1], shape[2]);
    let mut buf = RgbImage::new(w as u32, h as u32);
    let plane = h * w;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let px = [
                to_u8(image.data()[i]),
                to_u8(image.data()[plane + i]),
                to_u8(image.data()[2 * plane + i]),
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path).map_err(Error::Image)
}

pub fn load_png(path: &Path) -> Result<Tensor<f32>> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?
        .decode()
        .map_err(Error::Image)?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let plane = h * w;
    let mut data = vec![0.0f32; 3 * plane];
    for y in 0..h {
        for x in 0..w {
            let px = img.get_pixel(x as u32, y as u32);
            let i = y * w + x;
            data[i] = px[0] as f32 / 255.0;
            data[plane + i] = px[1] as f32 / 255.0;
            data[2 * plane + i] = px[2] as f32 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_exact_on_quantized_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let data: Vec<f32> = (0..3 * 8 * 8).map(|i| (i % 256) as f32 / 255.0).collect();
        let t = Tensor::from_vec(&[3, 8, 8], data).unwrap();
        save_png(&path, &t).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.shape(), &[3, 8, 8]);
        for (a, b) in back.data().iter().zip(t.data()) {
            assert_eq!(a, b);
        }
    }
}
