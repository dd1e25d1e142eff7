//! Binary PGM (P5) and PPM (P6) output with maxval 255.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::localize::BBox;
use crate::scalar::Scalar;

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height);
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn encode_ppm(width: usize, height: usize, rgb: &[[u8; 3]]) -> Vec<u8> {
    assert_eq!(rgb.len(), width * height);
    let mut out = format!("P6\n{width} {height}\n255\n").into_bytes();
    for p in rgb {
        out.extend_from_slice(p);
    }
    out
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn write_pgm(path: impl AsRef<Path>, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    write(path.as_ref(), &encode_pgm(width, height, pixels))
}

pub fn write_ppm(path: impl AsRef<Path>, width: usize, height: usize, rgb: &[[u8; 3]]) -> Result<()> {
    write(path.as_ref(), &encode_ppm(width, height, rgb))
}

/// Min-max scales values to bytes; a constant grid maps to mid-gray.
pub fn to_gray<T: Scalar>(values: &[T]) -> Vec<u8> {
    let lo = values.iter().copied().fold(T::infinity(), T::min).to_f64_lossless();
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max).to_f64_lossless();
    values
        .iter()
        .map(|v| {
            if hi > lo {
                ((v.to_f64_lossless() - lo) / (hi - lo) * 255.0).round() as u8
            } else {
                128
            }
        })
        .collect()
}

/// Nearest-neighbour resize of a row-major byte grid.
pub fn resize_nearest(src: &[u8], w: usize, h: usize, wo: usize, ho: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(wo * ho);
    for y in 0..ho {
        let sy = y * h / ho;
        for x in 0..wo {
            out.push(src[sy * w + x * w / wo]);
        }
    }
    out
}

/// Gray image blended with a heatmap in the red channel, with box outlines.
pub fn overlay(
    gray: &[u8],
    heat: &[u8],
    width: usize,
    height: usize,
    boxes: &[(BBox, [u8; 3])],
) -> Vec<[u8; 3]> {
    let mut rgb: Vec<[u8; 3]> = gray
        .iter()
        .zip(heat)
        .map(|(&g, &h)| {
            let g = g / 2;
            [g.saturating_add(h / 2), g, g]
        })
        .collect();
    for (b, color) in boxes {
        let x0 = (b.x0.floor().max(0.0) as usize).min(width - 1);
        let y0 = (b.y0.floor().max(0.0) as usize).min(height - 1);
        let x1 = ((b.x1.ceil() as usize).max(x0 + 1) - 1).min(width - 1);
        let y1 = ((b.y1.ceil() as usize).max(y0 + 1) - 1).min(height - 1);
        for x in x0..=x1 {
            rgb[y0 * width + x] = *color;
            rgb[y1 * width + x] = *color;
        }
        for y in y0..=y1 {
            rgb[y * width + x0] = *color;
            rgb[y * width + x1] = *color;
        }
    }
    rgb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localize::Space;

    #[test]
    fn headers() {
        let p = encode_pgm(2, 1, &[0, 255]);
        assert_eq!(&p[..11], b"P5\n2 1\n255\n");
        assert_eq!(&p[11..], &[0, 255]);
        let c = encode_ppm(1, 1, &[[1, 2, 3]]);
        assert_eq!(c, b"P6\n1 1\n255\n\x01\x02\x03");
    }

    #[test]
    fn gray_scaling() {
        assert_eq!(to_gray(&[-1.0f64, 0.0, 1.0]), vec![0, 128, 255]);
        assert_eq!(to_gray(&[3.0f64, 3.0]), vec![128, 128]);
        assert_eq!(resize_nearest(&[1, 2, 3, 4], 2, 2, 4, 2), vec![1, 1, 2, 2, 3, 3, 4, 4]);
    }

    #[test]
    fn box_outline() {
        let b = BBox::new(1.0, 1.0, 3.0, 3.0, Space::ImagePixels).unwrap();
        let rgb = overlay(&[0; 16], &[0; 16], 4, 4, &[(b, [0, 255, 0])]);
        assert_eq!(rgb[4 + 1], [0, 255, 0]);
        assert_eq!(rgb[2 * 4 + 2], [0, 255, 0]);
        assert_eq!(rgb[0], [0, 0, 0]);
        assert_eq!(rgb[3 * 4 + 3], [0, 0, 0]);
    }
}
