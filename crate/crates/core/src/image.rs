//! Image decoding and grayscale normalization.
//!
//! Every image entering the pipeline becomes a [`GrayImage`]: a row-major
//! field of intensities in `[0, 1]`. Color inputs are reduced with Rec. 601
//! luma weights, 8-bit channels are divided by 255 and 16-bit channels by
//! 65535.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::error::{Error, Result};
use crate::field::Field;

/// Smallest accepted height and width: the 7x7 filter support plus the
/// one-pixel shift of the pairwise products.
pub const MIN_SIDE: usize = 9;

pub const LUMA_R: f64 = 0.299;
pub const LUMA_G: f64 = 0.587;
pub const LUMA_B: f64 = 0.114;

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pixels: Field,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height < MIN_SIDE || width < MIN_SIDE {
            return Err(Error::ImageTooSmall {
                height,
                width,
                min: MIN_SIDE,
            });
        }
        if data.len() != height * width {
            return Err(Error::InsufficientData(format!(
                "expected {} intensities for a {height}x{width} image, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::IntensityOutOfRange { index, value });
        }
        Ok(Self {
            pixels: Field::from_vec(height, width, data),
        })
    }

    pub fn from_fn(height: usize, width: usize, f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        Self::new(height, width, Field::from_fn(height, width, f).into_vec())
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    /// Builds an image from arbitrary values, clipping each into `[0, 1]`.
    /// NaN maps to 0.
    pub fn from_clipped(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        let data = data
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.pixels.rows()
    }

    pub fn width(&self) -> usize {
        self.pixels.cols()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pixels.get(i, j)
    }

    pub fn as_slice(&self) -> &[f64] {
        self.pixels.as_slice()
    }

    pub fn as_field(&self) -> &Field {
        &self.pixels
    }

    /// Writes the image as an 8-bit grayscale PNG (round to nearest level).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes: Vec<u8> = self
            .as_slice()
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect();
        let buf = image::GrayImage::from_raw(self.width() as u32, self.height() as u32, bytes)
            .expect("buffer length matches image shape");
        buf.save_with_format(path, ImageFormat::Png)?;
        Ok(())
    }
}

/// Rec. 601 luma of unit-interval RGB components.
#[inline]
pub fn to_gray(r: f64, g: f64, b: f64) -> f64 {
    LUMA_R * r + LUMA_G * g + LUMA_B * b
}

/// Decodes a PNG or JPEG file into a [`GrayImage`].
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let bytes = std::fs::read(path)?;
    let format = match image::guess_format(&bytes) {
        Ok(f @ (ImageFormat::Png | ImageFormat::Jpeg)) => f,
        Ok(other) => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
        Err(_) => {
            return Err(Error::UnsupportedFormat(format!(
                "unrecognized content in {}",
                path.display()
            )))
        }
    };
    let decoded = image::load_from_memory_with_format(&bytes, format)?;
    from_dynamic(&decoded)
}

/// Converts a decoded image into unit-interval grayscale.
pub fn from_dynamic(img: &DynamicImage) -> Result<GrayImage> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            min: MIN_SIDE,
        });
    }
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => {
            buf.as_raw().iter().map(|&v| v as f64 / 65535.0).collect()
        }
        DynamicImage::ImageLumaA16(buf) => buf.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(buf) => buf
            .pixels()
            .map(|p| rgb_u8(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba8(buf) => buf
            .pixels()
            .map(|p| rgb_u8(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgb16(buf) => buf
            .pixels()
            .map(|p| rgb_u16(p.0[0], p.0[1], p.0[2]))
            .collect(),
        DynamicImage::ImageRgba16(buf) => buf
            .pixels()
            .map(|p| rgb_u16(p.0[0], p.0[1], p.0[2]))
            .collect(),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "pixel layout {:?}",
                other.color()
            )))
        }
    };
    // Rounding in the luma sum can land a hair above 1.0 for white pixels.
    GrayImage::from_clipped(h, w, data)
}

fn rgb_u8(r: u8, g: u8, b: u8) -> f64 {
    to_gray(r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0)
}

fn rgb_u16(r: u16, g: u16, b: u16) -> f64 {
    to_gray(
        r as f64 / 65535.0,
        g as f64 / 65535.0,
        b as f64 / 65535.0,
    )
}
