//! Image, label-map and mask containers.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// RGB image stored channel-major (3×H×W) with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    /// `data` is channel-major: all red values, then green, then blue.
    pub fn from_planes(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid(format!("image must be at least 1×1, got {height}×{width}")));
        }
        if data.len() != 3 * height * width {
            return Err(Error::invalid(format!(
                "image {}×{} needs {} values, got {}",
                height,
                width,
                3 * height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "pixel value {} at index {} outside [0, 1]",
                data[i], i
            )));
        }
        Ok(Image { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Result<Self> {
        let hw = height * width;
        let mut data = vec![0.0; 3 * hw];
        for y in 0..height {
            for x in 0..width {
                let rgb = f(y, x);
                for c in 0..3 {
                    data[c * hw + y * width + x] = rgb[c];
                }
            }
        }
        Self::from_planes(height, width, data)
    }

    pub fn constant(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::from_fn(height, width, |_, _| rgb)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn planes(&self) -> &[f32] {
        &self.data
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let hw = self.pixels();
        &self.data[channel * hw..(channel + 1) * hw]
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        let (hw, i) = (self.pixels(), y * self.width + x);
        [self.data[i], self.data[hw + i], self.data[2 * hw + i]]
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::from_vec(
            &[3, self.height, self.width],
            self.data.iter().map(|&v| T::of(v as f64)).collect(),
        )
        .expect("image planes are 3×H×W")
    }

    pub fn mirror_horizontal(&self) -> Image {
        Image::from_fn(self.height, self.width, |y, x| self.pixel(y, self.width - 1 - x))
            .expect("mirroring keeps a valid image")
    }
}

/// Per-pixel integer labels in scanline order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::invalid(format!(
                "label map {}×{} needs {} labels, got {}",
                height,
                width,
                height * width,
                labels.len()
            )));
        }
        Ok(LabelMap {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, label: u32) -> Self {
        LabelMap {
            height,
            width,
            labels: vec![label; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, y: usize, x: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.labels
    }

    /// Number of distinct labels present (q′).
    pub fn unique_count(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    /// Renumbers labels densely (0, 1, ...) in order of first appearance.
    pub fn relabel_dense(&self) -> LabelMap {
        let mut map = std::collections::HashMap::new();
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                let next = map.len() as u32;
                *map.entry(l).or_insert(next)
            })
            .collect();
        LabelMap {
            height: self.height,
            width: self.width,
            labels,
        }
    }
}

/// Binary pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::invalid(format!(
                "mask {}×{} needs {} entries, got {}",
                height,
                width,
                height * width,
                bits.len()
            )));
        }
        Ok(Mask { height, width, bits })
    }

    pub fn empty(height: usize, width: usize) -> Self {
        Mask {
            height,
            width,
            bits: vec![false; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Self {
        let bits = (0..height * width).map(|i| f(i / width, i % width)).collect();
        Mask { height, width, bits }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_validation() {
        assert!(Image::from_planes(0, 3, vec![]).is_err());
        assert!(Image::from_planes(1, 1, vec![0.0, 0.5]).is_err());
        assert!(Image::from_planes(1, 1, vec![0.0, 0.5, 1.5]).is_err());
        let img = Image::from_fn(2, 3, |y, x| [y as f32 / 2.0, x as f32 / 3.0, 0.25]).unwrap();
        assert_eq!(img.pixel(1, 2), [0.5, 2.0 / 3.0, 0.25]);
        assert_eq!(img.mirror_horizontal().pixel(1, 0), img.pixel(1, 2));
    }

    #[test]
    fn label_map_counts_and_relabels() {
        let l = LabelMap::new(2, 2, vec![7, 3, 7, 9]).unwrap();
        assert_eq!(l.unique_count(), 3);
        assert_eq!(l.relabel_dense().as_slice(), &[0, 1, 0, 2]);
        assert!(LabelMap::new(2, 2, vec![0; 3]).is_err());
    }
}
