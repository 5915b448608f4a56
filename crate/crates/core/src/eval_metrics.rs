//! Registration and reconstruction metrics.

use std::collections::HashMap;

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::transform::Point3;

/// Angle of the relative rotation `R · R_gtᵀ`, in `[0, π]`.
///
/// Equal to `arccos((tr(R R_gtᵀ) − 1) / 2)`. The angle is recovered with
/// `atan2` from both the trace and the skew part, which keeps full precision
/// near 0 and π where `arccos` loses digits.
pub fn rotation_error(r: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let m = r * r_gt.transpose();
    let cos = ((m.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let axis = Point3::new(
        m[(2, 1)] - m[(1, 2)],
        m[(0, 2)] - m[(2, 0)],
        m[(1, 0)] - m[(0, 1)],
    );
    let sin = 0.5 * axis.norm();
    sin.atan2(cos)
}

pub fn translation_error(t: &Point3, t_gt: &Point3) -> f64 {
    (t - t_gt).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    /// `P·R / (P + R)`, at most 0.5.
    pub fscore: f64,
}

impl FScore {
    /// The conventional harmonic mean `2PR / (P + R)`.
    pub fn f1(&self) -> f64 {
        2.0 * self.fscore
    }
}

/// Uniform hash grid for fixed-radius neighbour tests.
pub struct PointGrid<'a> {
    points: &'a [Point3],
    cell: f64,
    cells: HashMap<[i64; 3], Vec<u32>>,
}

impl<'a> PointGrid<'a> {
    pub fn new(points: &'a [Point3], cell: f64) -> Self {
        let mut cells: HashMap<[i64; 3], Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::cell_of(p, cell))
                .or_default()
                .push(i as u32);
        }
        Self {
            points,
            cell,
            cells,
        }
    }

    fn cell_of(p: &Point3, cell: f64) -> [i64; 3] {
        [
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        ]
    }

    /// Whether any stored point lies within `radius ≤ cell` of `q`.
    pub fn any_within(&self, q: &Point3, radius: f64) -> bool {
        let c = Self::cell_of(q, self.cell);
        let r2 = radius * radius;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    if let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        if ids
                            .iter()
                            .any(|&i| (self.points[i as usize] - q).norm_squared() <= r2)
                        {
                            return true;
                        }
                    }
                }
            }
        }
        false
    }
}

fn fraction_within(queries: &[Point3], reference: &PointGrid<'_>, threshold: f64) -> f64 {
    let hits = queries
        .par_iter()
        .filter(|q| reference.any_within(q, threshold))
        .count();
    hits as f64 / queries.len() as f64
}

/// Precision: share of `recon` points with a `gt` point within `threshold`.
/// Recall: share of `gt` points with a `recon` point within `threshold`.
pub fn fscore(recon: &[Point3], gt: &[Point3], threshold: f64) -> Result<FScore> {
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "threshold {threshold} must be > 0"
        )));
    }
    if recon.is_empty() || gt.is_empty() {
        log::warn!("F-score of an empty point set is defined as zero");
        return Ok(FScore {
            precision: 0.0,
            recall: 0.0,
            fscore: 0.0,
        });
    }
    let gt_grid = PointGrid::new(gt, threshold);
    let recon_grid = PointGrid::new(recon, threshold);
    let precision = fraction_within(recon, &gt_grid, threshold);
    let recall = fraction_within(gt, &recon_grid, threshold);
    let sum = precision + recall;
    let fscore = if sum > 0.0 {
        precision * recall / sum
    } else {
        0.0
    };
    Ok(FScore {
        precision,
        recall,
        fscore,
    })
}

/// Samples `count` frame pairs `(i, i + distance)` from a trajectory of
/// `length` frames, without replacement. When `count` covers every valid
/// pair, all of them are returned in order.
pub fn sample_pairs(
    length: usize,
    distance: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if distance == 0 {
        return Err(Error::InvalidConfig("frame distance must be >= 1".into()));
    }
    if length <= distance {
        return Err(Error::EmptyInput("no frame pair at this distance"));
    }
    let available = length - distance;
    if count >= available {
        return Ok((0..available).map(|i| (i, i + distance)).collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = rand::seq::index::sample(&mut rng, available, count).into_vec();
    starts.sort_unstable();
    Ok(starts.into_iter().map(|i| (i, i + distance)).collect())
}

/// Five-number summary plus mean, with linearly interpolated quartiles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxStats {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    Some(BoxStats {
        count: v.len(),
        min: v[0],
        q1: q(0.25),
        median: q(0.5),
        q3: q(0.75),
        max: v[v.len() - 1],
        mean: v.iter().sum::<f64>() / v.len() as f64,
    })
}
