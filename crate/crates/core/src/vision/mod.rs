//! Frame preprocessing: grayscale, bilinear resize, CLAHE, scale to `[0, 1]`.

mod clahe;
pub mod io;
mod resize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub use clahe::{clahe, clipped_tile_histograms, tile_bounds, ClippedHistogram};
pub use resize::resize_bilinear;

/// 8-bit single-channel image, row major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageGray {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl ImageGray {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{} pixels for a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// 8-bit RGB image, interleaved row major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn from_planes(width: usize, height: usize, r: &[u8], g: &[u8], b: &[u8]) -> Result<Self> {
        let n = width * height;
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "channel planes of {}, {}, {} pixels for a {width}x{height} image",
                r.len(),
                g.len(),
                b.len()
            )));
        }
        Ok(Self {
            width,
            height,
            pixels: (0..n).map(|i| [r[i], g[i], b[i]]).collect(),
        })
    }
}

/// A decoded video frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Frame {
    Gray(ImageGray),
    Rgb(RgbImage),
}

/// `round(0.299 r + 0.587 g + 0.114 b)`.
pub fn to_grayscale(rgb: &RgbImage) -> Result<ImageGray> {
    if rgb.pixels.len() != rgb.width * rgb.height {
        return Err(Error::DimensionMismatch(format!(
            "{} pixels for a {}x{} image",
            rgb.pixels.len(),
            rgb.width,
            rgb.height
        )));
    }
    let pixels = rgb
        .pixels
        .iter()
        .map(|&[r, g, b]| {
            (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64)
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .collect();
    ImageGray::new(rgb.width, rgb.height, pixels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClaheConfig {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Multiple of the uniform histogram height `tile_pixels / 256`.
    pub clip_limit: f64,
}

impl Default for ClaheConfig {
    fn default() -> Self {
        Self {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 2.0,
        }
    }
}

impl ClaheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tiles_x == 0 || self.tiles_y == 0 {
            return Err(Error::InvalidConfig("CLAHE needs at least one tile".into()));
        }
        if !(self.clip_limit >= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "CLAHE clip limit {} must be >= 1",
                self.clip_limit
            )));
        }
        Ok(())
    }
}

/// Grayscale -> resize -> CLAHE -> divide by 255. Returns a `[h, w]` tensor.
pub fn preprocess_frame(
    frame: &Frame,
    target_w: usize,
    target_h: usize,
    config: &ClaheConfig,
) -> Result<Tensor> {
    let gray = match frame {
        Frame::Gray(g) => g.clone(),
        Frame::Rgb(rgb) => to_grayscale(rgb)?,
    };
    let resized = resize_bilinear(&gray, target_w, target_h);
    let equalized = clahe(&resized, config)?;
    Tensor::new(
        vec![target_h, target_w],
        equalized.pixels.iter().map(|&p| p as f64 / 255.0).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grayscale_weights() {
        let img = RgbImage::from_planes(4, 1, &[7, 255, 0, 200], &[7, 0, 0, 200], &[7, 0, 0, 200])
            .unwrap();
        let g = to_grayscale(&img).unwrap();
        assert_eq!(g.pixels(), &[7, 76, 0, 200]);
        for v in 0..=255u8 {
            let img = RgbImage::from_planes(1, 1, &[v], &[v], &[v]).unwrap();
            assert_eq!(to_grayscale(&img).unwrap().pixels(), &[v]);
        }
    }

    #[test]
    fn ragged_planes_rejected() {
        let err = RgbImage::from_planes(2, 1, &[0, 0], &[0], &[0, 0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch(_)));
    }

    #[test]
    fn black_and_white_frames() {
        let cfg = ClaheConfig::default();
        let black = Frame::Gray(ImageGray::filled(100, 80, 0));
        let t = preprocess_frame(&black, 64, 64, &cfg).unwrap();
        assert_eq!(t.shape(), &[64, 64]);
        assert!(t.data().iter().all(|&v| v == 0.0));
        let white = Frame::Rgb(RgbImage {
            width: 50,
            height: 70,
            pixels: vec![[255, 255, 255]; 3500],
        });
        let t = preprocess_frame(&white, 64, 64, &cfg).unwrap();
        assert!(t.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn preprocessing_is_deterministic() {
        let pixels: Vec<u8> = (0..90 * 90).map(|i| ((i * 37) % 251) as u8).collect();
        let frame = Frame::Gray(ImageGray::new(90, 90, pixels).unwrap());
        let cfg = ClaheConfig::default();
        let a = preprocess_frame(&frame, 64, 64, &cfg).unwrap();
        let b = preprocess_frame(&frame, 64, 64, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
