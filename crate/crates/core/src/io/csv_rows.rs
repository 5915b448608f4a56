//! CSV outputs of the evaluation commands.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::FormatError;

/// One registered pair of a frame-distance sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationRow {
    pub frame_distance: usize,
    pub pair_index: usize,
    pub rot_err_rad: f64,
    pub trans_err_m: f64,
    pub converged: bool,
    pub iters: usize,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionRow {
    pub scene: String,
    pub precision: f64,
    pub recall: f64,
    pub fscore: f64,
    pub threshold_m: f64,
}

fn csv_error(e: csv::Error) -> crate::Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => crate::Error::Io(io),
        kind => {
            let (line, offset) = match &kind {
                csv::ErrorKind::Deserialize { pos: Some(p), .. } => (p.line() as usize, p.byte()),
                csv::ErrorKind::UnequalLengths { pos: Some(p), .. } => {
                    (p.line() as usize, p.byte())
                }
                _ => (0, 0),
            };
            FormatError::Parse {
                line,
                offset,
                message: format!("{kind:?}"),
            }
            .into()
        }
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> crate::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> crate::Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_matches_schema_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reg.csv");
        let rows = vec![RegistrationRow {
            frame_distance: 3,
            pair_index: 0,
            rot_err_rad: 0.001,
            trans_err_m: 0.02,
            converged: true,
            iters: 17,
            runtime_ms: 12.5,
        }];
        write_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(
            "frame_distance,pair_index,rot_err_rad,trans_err_m,converged,iters,runtime_ms\n"
        ));
        assert_eq!(read_csv::<RegistrationRow>(&path).unwrap(), rows);

        let path = dir.path().join("rec.csv");
        write_csv(
            &path,
            &[ReconstructionRow {
                scene: "wall".into(),
                precision: 1.0,
                recall: 0.5,
                fscore: 1.0 / 3.0,
                threshold_m: 0.3,
            }],
        )
        .unwrap();
        assert!(std::fs::read_to_string(&path)
            .unwrap()
            .starts_with("scene,precision,recall,fscore,threshold_m\n"));
        std::fs::write(
            &path,
            "scene,precision,recall,fscore,threshold_m\nx,1,zz,1,1\n",
        )
        .unwrap();
        assert!(matches!(
            read_csv::<ReconstructionRow>(&path),
            Err(crate::Error::Format(FormatError::Parse { line: 2, .. }))
        ));
    }
}
