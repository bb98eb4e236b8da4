use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ratings::RatingsDataset;
use crate::error::{Error, Result};

/// A channel-major (C x H x W) image with pixel values in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::DimensionMismatch("image dimensions must be positive".into()));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {channels}x{height}x{width} image",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidInput(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
            .expect("filled image")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    /// Encodes as an 8-bit PNG (one or three channels).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let to_u8 = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
        let (h, w) = (self.height, self.width);
        let result = match self.channels {
            1 => image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
                image::Luma([to_u8(self.get(0, y as usize, x as usize))])
            })
            .save(path),
            3 => image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
                let (x, y) = (x as usize, y as usize);
                image::Rgb([0, 1, 2].map(|c| to_u8(self.get(c, y, x))))
            })
            .save(path),
            c => {
                return Err(Error::InvalidInput(format!(
                    "cannot write a {c}-channel image as PNG"
                )))
            }
        };
        result.map_err(|e| Error::ImageDecode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Bilinear resampling with corner-aligned sample grids: the four corner
/// pixels of the output coincide with the input's corners.
pub fn resize_bilinear(src: &ImageTensor, height: usize, width: usize) -> ImageTensor {
    let (sh, sw) = (src.height, src.width);
    let coord = |dst: usize, dst_len: usize, src_len: usize| -> f64 {
        if dst_len <= 1 {
            (src_len as f64 - 1.0) / 2.0
        } else {
            dst as f64 * (src_len as f64 - 1.0) / (dst_len as f64 - 1.0)
        }
    };
    let mut pixels = Vec::with_capacity(height * width * src.channels);
    for c in 0..src.channels {
        for y in 0..height {
            let fy = coord(y, height, sh);
            let y0 = (fy.floor() as usize).min(sh - 1);
            let y1 = (y0 + 1).min(sh - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = coord(x, width, sw);
                let x0 = (fx.floor() as usize).min(sw - 1);
                let x1 = (x0 + 1).min(sw - 1);
                let tx = fx - x0 as f64;
                let top = src.get(c, y0, x0) * (1.0 - tx) + src.get(c, y0, x1) * tx;
                let bottom = src.get(c, y1, x0) * (1.0 - tx) + src.get(c, y1, x1) * tx;
                pixels.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
            }
        }
    }
    ImageTensor {
        height,
        width,
        channels: src.channels,
        pixels,
    }
}

/// Item images keyed by external item id. All images share one shape.
#[derive(Debug, Clone, Default)]
pub struct ImageStore {
    height: usize,
    width: usize,
    channels: usize,
    images: BTreeMap<String, Arc<ImageTensor>>,
}

impl ImageStore {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        ImageStore {
            height,
            width,
            channels,
            images: BTreeMap::new(),
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn insert(&mut self, id: impl Into<String>, img: ImageTensor) -> Result<()> {
        if (img.height, img.width, img.channels) != self.shape() {
            return Err(Error::DimensionMismatch(format!(
                "image is {}x{}x{}, store holds {:?}",
                img.height,
                img.width,
                img.channels,
                self.shape()
            )));
        }
        self.images.insert(id.into(), Arc::new(img));
        Ok(())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.images.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Arc<ImageTensor>> {
        self.images.get(id)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Images indexed by the dataset's item indices.
    pub fn aligned(&self, ds: &RatingsDataset) -> Vec<Option<Arc<ImageTensor>>> {
        ds.item_ids().iter().map(|id| self.images.get(id).cloned()).collect()
    }
}

fn decode_png(path: &Path, height: usize, width: usize) -> Result<ImageTensor> {
    let img = image::open(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut pixels = vec![0.0; 3 * h * w];
    for (x, y, p) in rgb.enumerate_pixels() {
        for c in 0..3 {
            pixels[(c * h + y as usize) * w + x as usize] = p[c] as f64 / 255.0;
        }
    }
    let raw = ImageTensor::new(h, w, 3, pixels)?;
    if (h, w) == (height, width) {
        Ok(raw)
    } else {
        Ok(resize_bilinear(&raw, height, width))
    }
}

/// Loads `<dir>/<item_id>.png` for every item of `ds`, resized to
/// `height x width` and scaled to [0, 1]. A missing file is an error.
pub fn load_images(
    dir: impl AsRef<Path>,
    ds: &RatingsDataset,
    size: (usize, usize),
) -> Result<ImageStore> {
    load_from_dir(dir.as_ref(), ds, size, true)
}

/// Like [`load_images`] but skips items whose file is absent, for use before
/// [`filter_dataset`](super::filter_dataset) drops them.
pub fn load_available_images(
    dir: impl AsRef<Path>,
    ds: &RatingsDataset,
    size: (usize, usize),
) -> Result<ImageStore> {
    load_from_dir(dir.as_ref(), ds, size, false)
}

fn load_from_dir(
    dir: &Path,
    ds: &RatingsDataset,
    (height, width): (usize, usize),
    strict: bool,
) -> Result<ImageStore> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "image directory not found"),
        ));
    }
    let mut store = ImageStore::new(height, width, 3);
    for id in ds.item_ids() {
        let path = dir.join(format!("{id}.png"));
        if !path.is_file() {
            if strict {
                return Err(Error::MissingImage(id.clone()));
            }
            continue;
        }
        store.insert(id.clone(), decode_png(&path, height, width)?)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingScale;

    fn two_items() -> RatingsDataset {
        RatingsDataset::from_triplets(1, 2, [(0, 0, 3.0), (0, 1, 4.0)], RatingScale::default())
            .unwrap()
    }

    #[test]
    fn white_png_loads_as_ones() {
        let dir = tempfile::tempdir().unwrap();
        ImageTensor::filled(8, 8, 3, 1.0).save_png(dir.path().join("0.png")).unwrap();
        ImageTensor::filled(120, 120, 3, 1.0).save_png(dir.path().join("1.png")).unwrap();
        let store = load_images(dir.path(), &two_items(), (60, 60)).unwrap();
        for id in ["0", "1"] {
            let img = store.get(id).unwrap();
            assert_eq!((img.height(), img.width(), img.channels()), (60, 60, 3));
            assert!(img.pixels().iter().all(|&p| p == 1.0));
        }
    }

    #[test]
    fn missing_and_corrupt_files() {
        let dir = tempfile::tempdir().unwrap();
        ImageTensor::filled(4, 4, 3, 0.0).save_png(dir.path().join("0.png")).unwrap();
        assert!(matches!(
            load_images(dir.path(), &two_items(), (4, 4)),
            Err(Error::MissingImage(id)) if id == "1"
        ));
        let partial = load_available_images(dir.path(), &two_items(), (4, 4)).unwrap();
        assert_eq!(partial.len(), 1);
        std::fs::write(dir.path().join("1.png"), b"not a png").unwrap();
        assert!(matches!(
            load_images(dir.path(), &two_items(), (4, 4)),
            Err(Error::ImageDecode { .. })
        ));
    }

    #[test]
    fn bilinear_checkerboard_upscale() {
        let src = ImageTensor::new(2, 2, 1, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let out = resize_bilinear(&src, 4, 4);
        assert_eq!(out.get(0, 0, 0), 1.0);
        assert_eq!(out.get(0, 0, 3), 0.0);
        assert_eq!(out.get(0, 3, 0), 0.0);
        assert_eq!(out.get(0, 3, 3), 1.0);
        // (1,1) samples source (1/3, 1/3): weights 4/9, 2/9, 2/9, 1/9.
        let expected = 4.0 / 9.0 + 1.0 / 9.0;
        assert!((out.get(0, 1, 1) - expected).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        assert!(ImageTensor::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageTensor::new(2, 1, 1, vec![0.5]).is_err());
    }
}
