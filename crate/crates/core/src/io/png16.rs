//! 16-bit grayscale PNG range images quantized to millimeters (0 = invalid).

use std::io::Cursor;
use std::path::Path;

use super::{read_bytes, write_bytes, FormatError};
use crate::range_image::RangeImage;

pub const MILLIMETERS_PER_METER: f64 = 1000.0;

fn png_error(e: impl std::fmt::Display) -> FormatError {
    FormatError::at(0, format!("png: {e}"))
}

pub fn decode_png16(bytes: &[u8]) -> Result<RangeImage, FormatError> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(png_error)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return Err(FormatError::Unsupported(format!(
            "range PNG must be 16-bit grayscale, found {:?} {:?}",
            info.color_type, info.bit_depth
        )));
    }
    let (cols, rows) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_error("image too large"))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_error)?;
    let line = frame.line_size;
    let mut data = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        let bytes = &buf[row * line..row * line + 2 * cols];
        data.extend(
            bytes
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 / MILLIMETERS_PER_METER),
        );
    }
    Ok(RangeImage::from_data(rows, cols, data).expect("quantized ranges are finite"))
}

/// Encodes at millimeter resolution. Ranges beyond 65.535 m cannot be
/// represented and are written as invalid.
pub fn encode_png16(img: &RangeImage) -> Result<Vec<u8>, FormatError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.cols() as u32, img.rows() as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Sixteen);
        let mut writer = enc.write_header().map_err(png_error)?;
        let mut overflow = 0usize;
        let mut pixels = Vec::with_capacity(img.data().len() * 2);
        for &r in img.data() {
            let mm = (r * MILLIMETERS_PER_METER).round();
            let v = if mm > u16::MAX as f64 {
                overflow += 1;
                0
            } else {
                mm as u16
            };
            pixels.extend_from_slice(&v.to_be_bytes());
        }
        if overflow > 0 {
            log::warn!("{overflow} ranges exceed the 16-bit millimeter range and were dropped");
        }
        writer.write_image_data(&pixels).map_err(png_error)?;
    }
    Ok(out)
}

pub fn read_png16(path: &Path) -> crate::Result<RangeImage> {
    Ok(decode_png16(&read_bytes(path)?)?)
}

pub fn write_png16(path: &Path, img: &RangeImage) -> crate::Result<()> {
    write_bytes(path, &encode_png16(img)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn millimeter_round_trip() {
        let data: Vec<f64> = (0..6 * 10)
            .map(|i| if i % 7 == 0 { 0.0 } else { i as f64 * 0.0371 })
            .collect();
        let img = RangeImage::from_data(6, 10, data.clone()).unwrap();
        let bytes = encode_png16(&img).unwrap();
        let back = decode_png16(&bytes).unwrap();
        assert_eq!((back.rows(), back.cols()), (6, 10));
        for (a, b) in back.data().iter().zip(&data) {
            assert!((a - b).abs() <= 0.0005 + 1e-12);
            assert_eq!(*a == 0.0, *b == 0.0);
        }
        assert_eq!(encode_png16(&back).unwrap(), bytes);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_png16(b"not a png").is_err());
    }
}
