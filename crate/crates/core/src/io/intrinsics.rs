//! Intrinsics JSON.
//!
//! ```json
//! {"mode": "calibrated", "width": 1024, "height": 128,
//!  "receiver_radius_m": 0.015806,
//!  "azimuth_offsets_rad": [...], "elevations_rad": [...]}
//! ```
//!
//! With `"mode": "synthetic"` the two arrays may be omitted in favour of
//! `fov_min_rad` and `fov_max_rad`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{json_error, FormatError};
use crate::error::{Error, Result};
use crate::lidar_model::{IntrinsicsMode, LidarIntrinsics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntrinsicsDocument {
    pub mode: IntrinsicsMode,
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub receiver_radius_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub azimuth_offsets_rad: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elevations_rad: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_min_rad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fov_max_rad: Option<f64>,
}

impl IntrinsicsDocument {
    pub fn from_intrinsics(intr: &LidarIntrinsics) -> Self {
        let fov = (intr.mode() == IntrinsicsMode::Synthetic).then(|| intr.field_of_view());
        Self {
            mode: intr.mode(),
            width: intr.width(),
            height: intr.height(),
            receiver_radius_m: intr.receiver_radius(),
            azimuth_offsets_rad: Some(intr.azimuth_lut().to_vec()),
            elevations_rad: Some(intr.elevation_lut().to_vec()),
            fov_min_rad: fov.map(|f| f.0),
            fov_max_rad: fov.map(|f| f.1),
        }
    }

    pub fn build(&self) -> Result<LidarIntrinsics> {
        match (&self.azimuth_offsets_rad, &self.elevations_rad, self.mode) {
            (Some(az), Some(el), mode) => LidarIntrinsics::from_tables(
                self.width,
                self.height,
                self.receiver_radius_m,
                az.clone(),
                el.clone(),
                mode,
            ),
            (None, Some(el), IntrinsicsMode::Synthetic) => LidarIntrinsics::from_tables(
                self.width,
                self.height,
                self.receiver_radius_m,
                vec![0.0; el.len()],
                el.clone(),
                IntrinsicsMode::Synthetic,
            ),
            (None, None, IntrinsicsMode::Synthetic) => {
                let (Some(lo), Some(hi)) = (self.fov_min_rad, self.fov_max_rad) else {
                    return Err(Error::InvalidIntrinsics(
                        "synthetic intrinsics without tables need fov_min_rad and fov_max_rad"
                            .into(),
                    ));
                };
                if self.receiver_radius_m != 0.0 {
                    return Err(Error::InvalidIntrinsics(
                        "synthetic intrinsics require receiver_radius_m = 0".into(),
                    ));
                }
                LidarIntrinsics::synthetic(self.height, self.width, lo, hi)
            }
            _ => Err(Error::InvalidIntrinsics(
                "calibrated intrinsics need azimuth_offsets_rad and elevations_rad".into(),
            )),
        }
    }
}

pub fn intrinsics_from_json(text: &str) -> Result<LidarIntrinsics> {
    let doc: IntrinsicsDocument =
        serde_json::from_str(text).map_err(|e| -> FormatError { json_error(text, &e) })?;
    doc.build()
}

pub fn intrinsics_to_json(intr: &LidarIntrinsics) -> String {
    serde_json::to_string_pretty(&IntrinsicsDocument::from_intrinsics(intr))
        .expect("intrinsics serialize to JSON")
}

pub fn read_intrinsics(path: &Path) -> Result<LidarIntrinsics> {
    intrinsics_from_json(&fs::read_to_string(path)?)
}

pub fn write_intrinsics(path: &Path, intr: &LidarIntrinsics) -> Result<()> {
    Ok(fs::write(path, intrinsics_to_json(intr) + "\n")?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_from_fov_keys() {
        let text = r#"{"mode": "synthetic", "width": 1024, "height": 64,
                       "fov_min_rad": -0.43, "fov_max_rad": 0.05}"#;
        let intr = intrinsics_from_json(text).unwrap();
        assert_eq!(
            intr,
            LidarIntrinsics::synthetic(64, 1024, -0.43, 0.05).unwrap()
        );
    }

    #[test]
    fn calibrated_round_trip() {
        let h = 8;
        let el: Vec<f64> = (0..h)
            .map(|v| 0.3 - 0.07 * v as f64 - 0.001 * (v * v) as f64)
            .collect();
        let az: Vec<f64> = (0..h).map(|v| 0.003 * (v as f64 - 3.3)).collect();
        let intr = LidarIntrinsics::calibrated(512, h, 0.0158, az, el).unwrap();
        let text = intrinsics_to_json(&intr);
        assert_eq!(intrinsics_from_json(&text).unwrap(), intr);
        let synth = LidarIntrinsics::synthetic(16, 64, -0.3, 0.2).unwrap();
        assert_eq!(
            intrinsics_from_json(&intrinsics_to_json(&synth)).unwrap(),
            synth
        );
    }

    #[test]
    fn structured_errors() {
        let err = intrinsics_from_json("{\"mode\": \"calibrated\",\n \"width\": x}").unwrap_err();
        match err {
            Error::Format(FormatError::Parse { line, offset, .. }) => {
                assert_eq!(line, 2);
                assert!(offset > 20);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            intrinsics_from_json(r#"{"mode": "calibrated", "width": 8, "height": 2}"#),
            Err(Error::InvalidIntrinsics(_))
        ));
        assert!(intrinsics_from_json(
            r#"{"mode": "synthetic", "width": 8, "height": 2, "bogus": 1}"#
        )
        .is_err());
    }
}
