//! File formats: PNG for images and mattes, and a small float container for
//! hint and uncertainty maps.
//!
//! Float container layout (little endian):
//!
//! | bytes | content                                  |
//! |-------|------------------------------------------|
//! | 8     | magic, `CLKHINT1` or `CLKSIGM1`          |
//! | 4     | height (`u32`)                           |
//! | 4     | width (`u32`)                            |
//! | 4·H·W | row-major `f32` payload                  |

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::domain::{AlphaMatte, HintMap, Image, UncertaintyMap};
use crate::error::{Error, Result};

pub const HINT_MAGIC: &[u8; 8] = b"CLKHINT1";
pub const SIGMA_MAGIC: &[u8; 8] = b"CLKSIGM1";

fn decode(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory(bytes).map_err(|e| Error::Decode(e.to_string()))
}

/// Decodes any 8- or 16-bit image into `[0, 1]` RGB by dividing by the max code value.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let img = decode(bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match img {
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) | DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) => {
            img.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
        }
        _ => img.to_rgb16().into_raw().into_iter().map(|v| v as f32 / 65535.0).collect(),
    };
    Image::new(h, w, data)
}

/// Decodes a matte, taking the first channel of colour inputs.
pub fn decode_alpha(bytes: &[u8]) -> Result<AlphaMatte> {
    let img = decode(bytes)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f32> = match &img {
        DynamicImage::ImageLuma8(buf) => buf.as_raw().iter().map(|&v| v as f32 / 255.0).collect(),
        DynamicImage::ImageLuma16(buf) => buf.as_raw().iter().map(|&v| v as f32 / 65535.0).collect(),
        DynamicImage::ImageRgb8(_) | DynamicImage::ImageRgba8(_) | DynamicImage::ImageLumaA8(_) => img
            .to_rgb8()
            .pixels()
            .map(|p| p.0[0] as f32 / 255.0)
            .collect(),
        _ => img.to_rgb16().pixels().map(|p| p.0[0] as f32 / 65535.0).collect(),
    };
    AlphaMatte::new(h, w, data)
}

fn to_u16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode_png(img: DynamicImage) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Decode(e.to_string()))?;
    Ok(out.into_inner())
}

/// 16-bit RGB PNG.
pub fn encode_image(image: &Image) -> Result<Vec<u8>> {
    let raw: Vec<u16> = image.data().iter().map(|&v| to_u16(v)).collect();
    let buf = ImageBuffer::<Rgb<u16>, _>::from_raw(image.width() as u32, image.height() as u32, raw)
        .expect("buffer size matches image shape");
    encode_png(DynamicImage::ImageRgb16(buf))
}

/// 8-bit RGB PNG, for previews.
pub fn encode_image_8bit(image: &Image) -> Result<Vec<u8>> {
    let raw: Vec<u8> = image.data().iter().map(|&v| to_u8(v)).collect();
    let buf = ImageBuffer::<Rgb<u8>, _>::from_raw(image.width() as u32, image.height() as u32, raw)
        .expect("buffer size matches image shape");
    encode_png(DynamicImage::ImageRgb8(buf))
}

/// 16-bit grayscale PNG.
pub fn encode_alpha(alpha: &AlphaMatte) -> Result<Vec<u8>> {
    let raw: Vec<u16> = alpha.data().iter().map(|&v| to_u16(v)).collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(alpha.width() as u32, alpha.height() as u32, raw)
        .expect("buffer size matches matte shape");
    encode_png(DynamicImage::ImageLuma16(buf))
}

/// 8-bit grayscale PNG of `sigma` linearly mapped from `[min, max]` to `[0, 255]`.
/// Returns the bytes with the `(min, max)` used.
pub fn encode_uncertainty_png(sigma: &UncertaintyMap) -> Result<(Vec<u8>, (f32, f32))> {
    let (lo, hi) = sigma.min_max();
    let span = hi - lo;
    let raw: Vec<u8> = sigma
        .data()
        .iter()
        .map(|&v| if span > 0.0 { to_u8((v - lo) / span) } else { 0 })
        .collect();
    let buf = ImageBuffer::<Luma<u8>, _>::from_raw(sigma.width() as u32, sigma.height() as u32, raw)
        .expect("buffer size matches map shape");
    Ok((encode_png(DynamicImage::ImageLuma8(buf))?, (lo, hi)))
}

fn encode_float_map(magic: &[u8; 8], height: usize, width: usize, data: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + data.len() * 4);
    out.extend_from_slice(magic);
    out.extend_from_slice(&(height as u32).to_le_bytes());
    out.extend_from_slice(&(width as u32).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn decode_float_map(magic: &[u8; 8], bytes: &[u8]) -> Result<(usize, usize, Vec<f32>)> {
    if bytes.len() < 16 || &bytes[..8] != magic {
        return Err(Error::Decode(format!(
            "missing {} header",
            String::from_utf8_lossy(magic)
        )));
    }
    let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let payload = &bytes[16..];
    if payload.len() != height * width * 4 {
        return Err(Error::Decode(format!(
            "payload of {} bytes does not match {height}x{width}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((height, width, data))
}

pub fn encode_hint_map(map: &HintMap) -> Vec<u8> {
    encode_float_map(HINT_MAGIC, map.height(), map.width(), map.data())
}

pub fn decode_hint_map(bytes: &[u8]) -> Result<HintMap> {
    let (h, w, data) = decode_float_map(HINT_MAGIC, bytes)?;
    HintMap::new(h, w, data)
}

pub fn encode_uncertainty_map(map: &UncertaintyMap) -> Vec<u8> {
    encode_float_map(SIGMA_MAGIC, map.height(), map.width(), map.data())
}

pub fn decode_uncertainty_map(bytes: &[u8]) -> Result<UncertaintyMap> {
    let (h, w, data) = decode_float_map(SIGMA_MAGIC, bytes)?;
    UncertaintyMap::new(h, w, data)
}

pub fn read_image(path: &Path) -> Result<Image> {
    decode_image(&std::fs::read(path)?)
}

pub fn read_alpha(path: &Path) -> Result<AlphaMatte> {
    decode_alpha(&std::fs::read(path)?)
}

pub fn write_image(path: &Path, image: &Image) -> Result<()> {
    std::fs::write(path, encode_image(image)?)?;
    Ok(())
}

pub fn write_alpha(path: &Path, alpha: &AlphaMatte) -> Result<()> {
    std::fs::write(path, encode_alpha(alpha)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn uncertainty_container_round_trips_bit_exactly(
            (h, w, data) in (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
                (Just(h), Just(w), proptest::collection::vec(1e-4f32..1e3, h * w))
            })
        ) {
            let map = UncertaintyMap::new(h, w, data).unwrap();
            let bytes = encode_uncertainty_map(&map);
            let back = decode_uncertainty_map(&bytes).unwrap();
            prop_assert_eq!(
                back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                map.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }

        #[test]
        fn quantized_alpha_round_trips_through_png(codes in proptest::collection::vec(0u16..=u16::MAX, 12)) {
            let data: Vec<f32> = codes.iter().map(|&c| c as f32 / 65535.0).collect();
            let alpha = AlphaMatte::new(3, 4, data).unwrap();
            let back = decode_alpha(&encode_alpha(&alpha).unwrap()).unwrap();
            prop_assert_eq!(back, alpha);
        }
    }

    #[test]
    fn hint_container_header() {
        let map = HintMap::new(1, 2, vec![1.0, -1.0]).unwrap();
        let bytes = encode_hint_map(&map);
        assert_eq!(&bytes[..8], b"CLKHINT1");
        assert_eq!(bytes.len(), 16 + 8);
        assert_eq!(decode_hint_map(&bytes).unwrap(), map);
        assert!(decode_uncertainty_map(&bytes).is_err());
    }

    #[test]
    fn eight_bit_png_is_scaled_by_255() {
        let buf = ImageBuffer::<Luma<u8>, _>::from_raw(2, 1, vec![0u8, 255]).unwrap();
        let bytes = encode_png(DynamicImage::ImageLuma8(buf)).unwrap();
        assert_eq!(decode_alpha(&bytes).unwrap().data(), &[0.0, 1.0]);
        let rgb = decode_image(&bytes).unwrap();
        assert_eq!(rgb.pixel(0, 1), [1.0, 1.0, 1.0]);
    }

    #[test]
    fn corrupt_bytes_fail_to_decode() {
        assert!(decode_image(b"not a png").is_err());
    }
}
