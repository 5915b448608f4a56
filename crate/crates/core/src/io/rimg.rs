//! `RIMG` range images: magic `RIMG`, u32 H, u32 W, then H·W f32 ranges in
//! meters, row-major, 0 for invalid pixels.
//!
//! Ranges are held as f64 in memory and narrowed to f32 on write, so a file
//! read and written again is reproduced byte for byte.

use std::path::Path;

use super::{read_bytes, write_bytes, ByteReader, FormatError};
use crate::lidar_model::LidarIntrinsics;
use crate::range_image::RangeImage;

pub const MAGIC: &[u8; 4] = b"RIMG";
pub const HEADER_LEN: usize = 12;

pub fn encode_rimg(img: &RangeImage) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * img.data().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(img.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(img.cols() as u32).to_le_bytes());
    for &r in img.data() {
        out.extend_from_slice(&(r as f32).to_le_bytes());
    }
    out
}

pub fn decode_rimg(bytes: &[u8]) -> Result<RangeImage, FormatError> {
    let mut r = ByteReader::new(bytes);
    let magic = r.array::<4>().map_err(|_| FormatError::MagicMismatch {
        expected: "RIMG".into(),
        found: String::from_utf8_lossy(bytes).chars().take(4).collect(),
    })?;
    if &magic != MAGIC {
        return Err(FormatError::MagicMismatch {
            expected: "RIMG".into(),
            found: String::from_utf8_lossy(&magic).into_owned(),
        });
    }
    let rows = r.u32()? as usize;
    let cols = r.u32()? as usize;
    let pixels = (rows as u64) * (cols as u64);
    r.require(pixels.saturating_mul(4))?;
    let mut data = Vec::with_capacity(pixels as usize);
    for _ in 0..pixels {
        let at = r.position();
        let v = r.f32_finite()?;
        if v < 0.0 {
            return Err(FormatError::at(at, format!("negative range {v}")));
        }
        data.push(v as f64);
    }
    r.expect_end()?;
    Ok(RangeImage::from_data(rows, cols, data).expect("validated pixel data"))
}

pub fn read_rimg(path: &Path) -> crate::Result<RangeImage> {
    Ok(decode_rimg(&read_bytes(path)?)?)
}

/// Reads an image and checks its size against `intr`.
pub fn read_rimg_for(path: &Path, intr: &LidarIntrinsics) -> crate::Result<RangeImage> {
    let img = read_rimg(path)?;
    if img.rows() != intr.height() || img.cols() != intr.width() {
        return Err(FormatError::DimensionMismatch {
            expected: (intr.height(), intr.width()),
            found: (img.rows(), img.cols()),
        }
        .into());
    }
    Ok(img)
}

pub fn write_rimg(path: &Path, img: &RangeImage) -> crate::Result<()> {
    write_bytes(path, &encode_rimg(img))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rows: usize, cols: usize, seed: u64) -> RangeImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| {
                if rng.random_bool(0.2) {
                    0.0
                } else {
                    rng.random_range(0.1f32..80.0) as f64
                }
            })
            .collect();
        RangeImage::from_data(rows, cols, data).unwrap()
    }

    #[test]
    fn round_trip_is_bitwise() {
        let img = random_image(16, 64, 3);
        let bytes = encode_rimg(&img);
        let back = decode_rimg(&bytes).unwrap();
        assert_eq!(back, img);
        assert_eq!(encode_rimg(&back), bytes);
    }

    #[test]
    fn truncated_payload_offset() {
        let bytes = encode_rimg(&random_image(4, 8, 1));
        let cut = &bytes[..HEADER_LEN + 4 * 10];
        assert_eq!(
            decode_rimg(cut),
            Err(FormatError::TruncatedPayload {
                offset: HEADER_LEN as u64,
                needed: 4 * 32,
                available: 40
            })
        );
        assert!(matches!(
            decode_rimg(&bytes[..6]),
            Err(FormatError::TruncatedPayload { offset: 4, .. })
        ));
    }

    #[test]
    fn rejects_bad_magic_nan_and_negative() {
        let mut bytes = encode_rimg(&random_image(2, 2, 2));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode_rimg(&bad),
            Err(FormatError::MagicMismatch { .. })
        ));
        bytes[HEADER_LEN + 4..HEADER_LEN + 8].copy_from_slice(&f32::INFINITY.to_le_bytes());
        assert_eq!(
            decode_rimg(&bytes),
            Err(FormatError::NonFinite {
                offset: HEADER_LEN as u64 + 4
            })
        );
        bytes[HEADER_LEN + 4..HEADER_LEN + 8].copy_from_slice(&(-1.0f32).to_le_bytes());
        assert!(matches!(
            decode_rimg(&bytes),
            Err(FormatError::Parse { offset: 16, .. })
        ));
    }

    #[test]
    fn rejects_trailing_bytes() {
        let mut bytes = encode_rimg(&random_image(2, 2, 4));
        bytes.push(0);
        assert!(decode_rimg(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn arbitrary_bytes_never_panic(bytes in proptest::collection::vec(any::<u8>(), 0..256)) {
            let _ = decode_rimg(&bytes);
            let mut framed = MAGIC.to_vec();
            framed.extend_from_slice(&bytes);
            let _ = decode_rimg(&framed);
        }
    }
}
