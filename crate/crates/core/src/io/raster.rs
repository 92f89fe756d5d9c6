use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageReader, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::eval::GtBundle;
use crate::image::{Image, LabelMap, Mask};
use crate::losses::Scribbles;
use crate::pipeline::SegmentSet;

/// Ground-truth pixels with this raw label are excluded from scoring.
pub const VOID_LABEL: u32 = 65535;

/// Extensions recognised when listing frame or ground-truth directories.
const RASTER_EXTENSIONS: [&str; 5] = ["png", "ppm", "pgm", "pnm", "pbm"];

fn raster_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Raster {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn decode(path: &Path) -> Result<DynamicImage> {
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| raster_err(path, e))
}

/// Reads an 8- or 16-bit RGB or grayscale PNG/PNM and scales every channel
/// to `[0, 1]` by the bit-depth maximum. Grayscale is replicated to RGB and
/// alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let hw = w * h;
    let mut planes = vec![0.0f32; 3 * hw];
    match &img {
        DynamicImage::ImageLuma8(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageRgb8(_)
        | DynamicImage::ImageRgba8(_) => {
            for (n, px) in img.to_rgb8().pixels().enumerate() {
                for c in 0..3 {
                    planes[c * hw + n] = px[c] as f32 / 255.0;
                }
            }
        }
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => {
            for (n, px) in img.to_rgb16().pixels().enumerate() {
                for c in 0..3 {
                    planes[c * hw + n] = px[c] as f32 / 65535.0;
                }
            }
        }
        other => {
            return Err(raster_err(
                path,
                format!("unsupported pixel format {:?}", other.color()),
            ))
        }
    }
    Image::from_planes(h, w, planes).map_err(|e| raster_err(path, e))
}

/// Writes an image as 8-bit RGB (format from the extension).
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = RgbImage::from_fn(image.width() as u32, image.height() as u32, |x, y| {
        let p = image.pixel(y as usize, x as usize);
        Rgb(p.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
    });
    buf.save(path).map_err(|e| raster_err(path, e))
}

fn read_single_channel(path: &Path) -> Result<(usize, usize, Vec<u32>)> {
    let img = decode(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u32::from).collect(),
        DynamicImage::ImageLuma16(b) => b.into_raw().into_iter().map(u32::from).collect(),
        other => {
            return Err(raster_err(
                path,
                format!("expected a single-channel raster, got {:?}", other.color()),
            ))
        }
    };
    Ok((h, w, values))
}

/// Scribble raster: 255 marks an unscribbled pixel, `0..q` a scribble label.
pub fn load_scribbles(path: impl AsRef<Path>, q: usize) -> Result<Scribbles> {
    let path = path.as_ref();
    let (h, w, values) = read_single_channel(path)?;
    let offending: Vec<(usize, usize, u32)> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 255 && v as usize >= q)
        .map(|(n, &v)| (n / w, n % w, v))
        .collect();
    if !offending.is_empty() {
        let listed: Vec<String> = offending
            .iter()
            .take(10)
            .map(|(y, x, v)| format!("({y},{x})={v}"))
            .collect();
        return Err(Error::InvalidArgument(format!(
            "{}: {} pixels carry scribble labels ≥ q = {}: {}{}",
            path.display(),
            offending.len(),
            q,
            listed.join(" "),
            if offending.len() > 10 { " ..." } else { "" }
        )));
    }
    let mask = values.iter().map(|&v| v != 255).collect();
    let labels = values.iter().map(|&v| if v == 255 { 0 } else { v }).collect();
    Scribbles::new(h, w, mask, labels)
}

/// Writes label IDs losslessly as a 16-bit grayscale raster.
pub fn save_labelmap_raw(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(&bad) = labels.as_slice().iter().find(|&&l| l > u16::MAX as u32) {
        return Err(Error::invalid(format!("label {bad} does not fit in 16 bits")));
    }
    let raw: Vec<u16> = labels.as_slice().iter().map(|&l| l as u16).collect();
    let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_raw(labels.width() as u32, labels.height() as u32, raw)
            .expect("buffer matches dimensions");
    buf.save(path).map_err(|e| raster_err(path, e))
}

/// Colour of label `l`: the top three bytes of `(l + 1) · 0x9E3779B1`
/// (wrapping 32-bit multiply), as R, G, B.
pub fn palette_color(label: u32) -> [u8; 3] {
    let h = label.wrapping_add(1).wrapping_mul(0x9E37_79B1);
    [(h >> 24) as u8, (h >> 16) as u8, (h >> 8) as u8]
}

/// Writes an 8-bit RGB visualization using [`palette_color`].
pub fn save_labelmap_viz(labels: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let buf = RgbImage::from_fn(labels.width() as u32, labels.height() as u32, |x, y| {
        Rgb(palette_color(labels.get(y as usize, x as usize)))
    });
    buf.save(path).map_err(|e| raster_err(path, e))
}

pub fn save_labelmap(labels: &LabelMap, raw_path: impl AsRef<Path>, viz_path: Option<&Path>) -> Result<()> {
    save_labelmap_raw(labels, raw_path)?;
    if let Some(v) = viz_path {
        save_labelmap_viz(labels, v)?;
    }
    Ok(())
}

/// Reads a raw label raster (8- or 16-bit single channel).
pub fn load_labelmap(path: impl AsRef<Path>) -> Result<LabelMap> {
    let (h, w, values) = read_single_channel(path.as_ref())?;
    LabelMap::new(h, w, values)
}

fn is_raster(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| RASTER_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Raster files directly inside `dir`, sorted by file name.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_raster(&path) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads the ground truth of one image. `path` is either a single raw label
/// raster (one variant) or a directory of them (variants in file-name
/// order). Each distinct label is one segment; [`VOID_LABEL`] pixels are
/// void. All variants must agree on size and void pixels are pooled.
pub fn load_gt_bundle(path: impl AsRef<Path>) -> Result<GtBundle> {
    let path = path.as_ref();
    let files = if path.is_dir() {
        list_frames(path)?
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(raster_err(path, "no ground-truth rasters found"));
    }
    let maps = files.iter().map(load_labelmap).collect::<Result<Vec<_>>>()?;
    let (h, w) = (maps[0].height(), maps[0].width());
    if maps.iter().any(|m| (m.height(), m.width()) != (h, w)) {
        return Err(raster_err(path, "ground-truth variants differ in size"));
    }
    let void = Mask::from_fn(h, w, |y, x| maps.iter().any(|m| m.get(y, x) == VOID_LABEL));
    let variants = maps
        .iter()
        .map(|m| SegmentSet::from_label_regions(m, Some(VOID_LABEL)))
        .collect();
    Ok(GtBundle {
        variants,
        void: (void.count() > 0).then_some(void),
    })
}
