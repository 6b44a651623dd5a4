//! PNG/JPEG decode and encode.
//!
//! Decoded samples are normalized to [0, 1] by the source type maximum
//! (255 or 65535). Alpha is dropped. Encoded output is always 8-bit,
//! clamped and quantized round-half-up.

use std::path::Path;

use image::{DynamicImage, ImageFormat};

use crate::buffer::ImageBuffer;
use crate::error::{Error, Result};

/// Loads a PNG or JPEG into a float buffer with 1 or 3 channels.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io(io),
        other => Error::Codec(other),
    })?;
    let (h, w) = (decoded.height() as usize, decoded.width() as usize);
    let buf = match decoded {
        DynamicImage::ImageLuma8(img) => {
            let data = img.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            ImageBuffer::new(h, w, 1, data)
        }
        DynamicImage::ImageLuma16(img) => {
            let data = img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            ImageBuffer::new(h, w, 1, data)
        }
        DynamicImage::ImageLumaA8(img) => {
            let data = img.into_raw().chunks(2).map(|px| px[0] as f64 / 255.0).collect();
            ImageBuffer::new(h, w, 1, data)
        }
        DynamicImage::ImageLumaA16(img) => {
            let data = img.into_raw().chunks(2).map(|px| px[0] as f64 / 65535.0).collect();
            ImageBuffer::new(h, w, 1, data)
        }
        DynamicImage::ImageRgb16(img) => {
            let data = img.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            ImageBuffer::new(h, w, 3, data)
        }
        DynamicImage::ImageRgba16(img) => {
            let mut data = Vec::with_capacity(h * w * 3);
            for px in img.into_raw().chunks(4) {
                data.extend(px[..3].iter().map(|v| *v as f64 / 65535.0));
            }
            ImageBuffer::new(h, w, 3, data)
        }
        other => {
            let rgb = other.into_rgb8();
            let data = rgb.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
            ImageBuffer::new(h, w, 3, data)
        }
    }?;
    Ok(buf)
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    match ext.as_str() {
        "png" => Ok(ImageFormat::Png),
        "jpg" | "jpeg" => Ok(ImageFormat::Jpeg),
        other => Err(Error::invalid(format!(
            "unsupported image extension {other:?} (png, jpg, jpeg)"
        ))),
    }
}

/// Quantizes one sample to 8 bits, round half up after clamping.
pub(crate) fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Encodes an image as 8-bit PNG or JPEG, chosen by the file extension.
///
/// Samples are clamped to [0, 1] first; the caller is responsible for
/// surfacing an out-of-range warning when that matters.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let (h, w) = (img.height() as u32, img.width() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize8(v)).collect();
    let dynamic = match img.channels() {
        1 => DynamicImage::ImageLuma8(
            image::GrayImage::from_raw(w, h, bytes)
                .expect("buffer length is height*width by construction"),
        ),
        _ => DynamicImage::ImageRgb8(
            image::RgbImage::from_raw(w, h, bytes)
                .expect("buffer length is height*width*3 by construction"),
        ),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    dynamic.save_with_format(path, format)?;
    Ok(())
}
