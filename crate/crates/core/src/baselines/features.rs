use crate::error::{Error, Result};
use crate::image::Image;

/// One feature vector per pixel, scanline order, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelFeatures {
    pub dim: usize,
    pub rows: Vec<f64>,
    /// Window size the features were built with (1 for arbitrary data).
    pub window: usize,
}

impl PixelFeatures {
    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) {
            return Err(Error::invalid(format!(
                "{} values do not split into rows of {}",
                rows.len(),
                dim
            )));
        }
        Ok(PixelFeatures { dim, rows, window: 1 })
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }
}

/// Concatenates the RGB triples of each pixel's `window`×`window`
/// neighbourhood (row-major, clamp-to-edge outside the image).
pub fn window_features(image: &Image, window: usize) -> Result<PixelFeatures> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::invalid(format!("window must be odd and ≥ 1, got {window}")));
    }
    let (h, w) = (image.height(), image.width());
    let r = (window / 2) as isize;
    let dim = 3 * window * window;
    let mut rows = Vec::with_capacity(h * w * dim);
    for y in 0..h as isize {
        for x in 0..w as isize {
            for dy in -r..=r {
                let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    rows.extend(image.pixel(sy, sx).iter().map(|&v| v as f64));
                }
            }
        }
    }
    Ok(PixelFeatures { dim, rows, window })
}
