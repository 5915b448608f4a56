//! Trajectory text files, one pose per line:
//!
//! ```text
//! idx r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz
//! ```
//!
//! Each pose maps frame coordinates into the world frame. Frame indices must
//! increase strictly but may skip values. Blank lines and lines starting with
//! `#` are ignored.

use std::fs;
use std::path::Path;

use super::FormatError;
use crate::error::{Error, Result};
use crate::transform::RigidTransform;

/// Default tolerance on `‖RᵀR − I‖_F` for stored rotations.
pub const ORTHONORMALITY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OrthonormalityPolicy {
    /// Rotations off SO(3) by more than the tolerance are an error.
    #[default]
    Reject,
    /// Such rotations are projected back onto SO(3) with a warning.
    Reorthonormalize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEntry {
    pub index: usize,
    pub pose: RigidTransform,
}

pub fn parse_trajectory(
    text: &str,
    policy: OrthonormalityPolicy,
    tolerance: f64,
) -> Result<Vec<TrajectoryEntry>> {
    let mut out: Vec<TrajectoryEntry> = Vec::new();
    let mut line_start = 0usize;
    for (n, raw) in text.split_inclusive('\n').enumerate() {
        let line_no = n + 1;
        let start = line_start;
        line_start += raw.len();
        let line = raw.trim_end_matches(['\n', '\r']);
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = Vec::with_capacity(13);
        let mut cursor = 0usize;
        for tok in line.split_ascii_whitespace() {
            let col = cursor
                + line[cursor..]
                    .find(tok)
                    .expect("token comes from this line");
            cursor = col + tok.len();
            fields.push((start + col, tok));
        }
        let parse_err = |offset: usize, message: String| FormatError::Parse {
            line: line_no,
            offset: offset as u64,
            message,
        };
        if fields.len() != 13 {
            return Err(
                parse_err(start, format!("expected 13 fields, found {}", fields.len())).into(),
            );
        }
        let index: usize = fields[0]
            .1
            .parse()
            .map_err(|e| parse_err(fields[0].0, format!("frame index {:?}: {e}", fields[0].1)))?;
        if let Some(prev) = out.last() {
            if index <= prev.index {
                return Err(parse_err(
                    fields[0].0,
                    format!("frame index {index} does not increase after {}", prev.index),
                )
                .into());
            }
        }
        let mut m = [0.0f64; 12];
        for (k, &(offset, tok)) in fields[1..].iter().enumerate() {
            let v: f64 = tok
                .parse()
                .map_err(|e| parse_err(offset, format!("value {tok:?}: {e}")))?;
            if !v.is_finite() {
                return Err(FormatError::NonFinite {
                    offset: offset as u64,
                }
                .into());
            }
            m[k] = v;
        }
        let mut pose = RigidTransform::from_rows_3x4_unchecked(&m);
        let err = pose.orthonormality_error();
        if err > tolerance || pose.rotation.determinant() <= 0.0 {
            match policy {
                OrthonormalityPolicy::Reject => {
                    return Err(Error::InvalidPose(format!(
                    "line {line_no}: rotation orthonormality error {err:e} exceeds {tolerance:e}"
                )))
                }
                OrthonormalityPolicy::Reorthonormalize => {
                    if pose.rotation.determinant() <= 0.0 {
                        return Err(Error::InvalidPose(format!(
                            "line {line_no}: rotation has non-positive determinant"
                        )));
                    }
                    log::warn!("line {line_no}: reorthonormalizing rotation (error {err:e})");
                    pose.reorthonormalize();
                }
            }
        }
        out.push(TrajectoryEntry { index, pose });
    }
    Ok(out)
}

pub fn format_trajectory(entries: &[TrajectoryEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        s.push_str(&format_trajectory_line(e.index, &e.pose));
        s.push('\n');
    }
    s
}

pub fn format_trajectory_line(index: usize, pose: &RigidTransform) -> String {
    let mut s = index.to_string();
    for v in pose.to_rows_3x4() {
        s.push(' ');
        s.push_str(&v.to_string());
    }
    s
}

pub fn read_trajectory(path: &Path, policy: OrthonormalityPolicy) -> Result<Vec<TrajectoryEntry>> {
    parse_trajectory(&fs::read_to_string(path)?, policy, ORTHONORMALITY_TOLERANCE)
}

pub fn write_trajectory(path: &Path, entries: &[TrajectoryEntry]) -> Result<()> {
    Ok(fs::write(path, format_trajectory(entries))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transform::Point3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_entries(n: usize, seed: u64) -> Vec<TrajectoryEntry> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| TrajectoryEntry {
                index: 3 * i + (i % 3),
                pose: RigidTransform::from_axis_angle(
                    Point3::from_fn(|_, _| rng.random_range(-2.0..2.0)),
                    Point3::from_fn(|_, _| rng.random_range(-50.0..50.0)),
                ),
            })
            .collect()
    }

    #[test]
    fn round_trip_random_poses() {
        let entries = random_entries(50, 9);
        let text = format_trajectory(&entries);
        let back = parse_trajectory(
            &text,
            OrthonormalityPolicy::Reject,
            ORTHONORMALITY_TOLERANCE,
        )
        .unwrap();
        assert_eq!(back, entries);
        assert_eq!(format_trajectory(&back), text);
        for e in &back {
            assert!(e.pose.orthonormality_error() < 1e-6);
        }
    }

    #[test]
    fn comments_and_gaps() {
        let text = "# header\n\n0 1 0 0 1 0 1 0 2 0 0 1 3\n5 1 0 0 0 0 1 0 0 0 0 1 0\n";
        let t = parse_trajectory(text, OrthonormalityPolicy::Reject, 1e-6).unwrap();
        assert_eq!(t.iter().map(|e| e.index).collect::<Vec<_>>(), vec![0, 5]);
        assert_eq!(t[0].pose.translation, Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn drifted_rotation_policy() {
        let text = "0 1.001 0 0 0 0 1 0 0 0 0 1 0\n";
        assert!(matches!(
            parse_trajectory(text, OrthonormalityPolicy::Reject, 1e-6),
            Err(Error::InvalidPose(_))
        ));
        let fixed = parse_trajectory(text, OrthonormalityPolicy::Reorthonormalize, 1e-6).unwrap();
        assert!(fixed[0].pose.orthonormality_error() < 1e-12);
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = "0 1 0 0 0 0 1 0 0 0 0 1 0\n1 1 0 0 0 0 1 zz 0 0 0 1 0\n";
        match parse_trajectory(text, OrthonormalityPolicy::Reject, 1e-6) {
            Err(Error::Format(FormatError::Parse { line, offset, .. })) => {
                assert_eq!(line, 2);
                assert_eq!(&text[offset as usize..offset as usize + 2], "zz");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_trajectory("3 1 0 0\n", OrthonormalityPolicy::Reject, 1e-6).is_err());
        let nan = "0 NaN 0 0 0 0 1 0 0 0 0 1 0\n";
        assert!(matches!(
            parse_trajectory(nan, OrthonormalityPolicy::Reject, 1e-6),
            Err(Error::Format(FormatError::NonFinite { offset: 2 }))
        ));
        let backwards = "4 1 0 0 0 0 1 0 0 0 0 1 0\n4 1 0 0 0 0 1 0 0 0 0 1 0\n";
        assert!(parse_trajectory(backwards, OrthonormalityPolicy::Reject, 1e-6).is_err());
    }
}
