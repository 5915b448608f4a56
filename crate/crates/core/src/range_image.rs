//! Range images, strided pyramid views, point-cloud conversion and normal
//! estimation.
//!
//! Pixel `(row, col)` stores the range along the ray of row `v = row` and
//! column `u = col`. A stored range of `0.0` marks a pixel without return.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lidar_model::LidarIntrinsics;
use crate::transform::Point3;

pub type PointSet = Vec<Point3>;

pub const INVALID_RANGE: f64 = 0.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RangeImage {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RangeImage {
    /// All-invalid image.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![INVALID_RANGE; rows * cols],
        }
    }

    pub fn for_intrinsics(intr: &LidarIntrinsics) -> Self {
        Self::new(intr.height(), intr.width())
    }

    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: (rows, cols),
                found: (data.len() / cols.max(1), cols),
            });
        }
        if let Some(bad) = data.iter().find(|r| !r.is_finite() || **r < 0.0) {
            return Err(Error::InvalidConfig(format!(
                "range image values must be finite and >= 0, found {bad}"
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    /// Sets a pixel; negative or non-finite ranges are stored as invalid.
    pub fn set(&mut self, row: usize, col: usize, range: f64) {
        self.data[row * self.cols + col] = if range.is_finite() && range > 0.0 {
            range
        } else {
            INVALID_RANGE
        };
    }

    #[inline]
    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.get(row, col) > 0.0
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&r| r > 0.0).count()
    }

    pub fn strided(&self, stride: usize) -> StridedView<'_, f64> {
        StridedView::new(&self.data, self.rows, self.cols, stride)
    }

    pub fn check_intrinsics(&self, intr: &LidarIntrinsics) -> Result<()> {
        check_dims((self.rows, self.cols), intr)
    }
}

fn check_dims(found: (usize, usize), intr: &LidarIntrinsics) -> Result<()> {
    let expected = (intr.height(), intr.width());
    if found != expected {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Per-pixel unit normals aligned with a [`RangeImage`]; `None` marks pixels
/// where no normal could be estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalImage {
    rows: usize,
    cols: usize,
    data: Vec<Option<Point3>>,
}

impl NormalImage {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Option<Point3> {
        self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[Option<Point3>] {
        &self.data
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|n| n.is_some()).count()
    }

    pub fn strided(&self, stride: usize) -> StridedView<'_, Option<Point3>> {
        StridedView::new(&self.data, self.rows, self.cols, stride)
    }
}

/// Zero-copy subsampled view: view pixel `(i, j)` reads base pixel
/// `(stride·i, stride·j)`.
///
/// Views borrow an immutable snapshot of the base; the base cannot change
/// while a view is alive.
#[derive(Debug, Clone, Copy)]
pub struct StridedView<'a, T> {
    base: &'a [T],
    base_rows: usize,
    base_cols: usize,
    stride: usize,
}

impl<'a, T> StridedView<'a, T> {
    pub fn new(base: &'a [T], base_rows: usize, base_cols: usize, stride: usize) -> Self {
        assert!(stride >= 1, "stride must be >= 1");
        assert_eq!(base.len(), base_rows * base_cols);
        Self {
            base,
            base_rows,
            base_cols,
            stride,
        }
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn rows(&self) -> usize {
        self.base_rows.div_ceil(self.stride)
    }

    pub fn cols(&self) -> usize {
        self.base_cols.div_ceil(self.stride)
    }

    /// Base-image pixel behind view pixel `(i, j)`.
    #[inline]
    pub fn base_pixel(&self, i: usize, j: usize) -> (usize, usize) {
        (i * self.stride, j * self.stride)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &'a T {
        let (r, c) = self.base_pixel(i, j);
        &self.base[r * self.base_cols + c]
    }

    /// Row-major iteration yielding `(base_row, base_col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &'a T)> + '_ {
        let cols = self.cols();
        (0..self.rows()).flat_map(move |i| {
            (0..cols).map(move |j| {
                let (r, c) = self.base_pixel(i, j);
                (r, c, self.get(i, j))
            })
        })
    }
}

/// Unprojects valid pixels with `clip_min ≤ r ≤ clip_max`, in row-major
/// order.
pub fn to_point_cloud(
    img: &RangeImage,
    intr: &LidarIntrinsics,
    clip_min: f64,
    clip_max: f64,
) -> Result<PointSet> {
    img.check_intrinsics(intr)?;
    Ok(strided_point_cloud(
        &img.strided(1),
        intr,
        clip_min,
        clip_max,
    ))
}

/// [`to_point_cloud`] over a strided view; projection uses the full-resolution
/// intrinsics.
pub fn strided_point_cloud(
    view: &StridedView<'_, f64>,
    intr: &LidarIntrinsics,
    clip_min: f64,
    clip_max: f64,
) -> PointSet {
    let cols = view.cols();
    let rows: Vec<PointSet> = (0..view.rows())
        .into_par_iter()
        .map(|i| {
            let mut out = PointSet::new();
            for j in 0..cols {
                let r = *view.get(i, j);
                if r > 0.0 && r >= clip_min && r <= clip_max {
                    let (row, col) = view.base_pixel(i, j);
                    out.push(intr.unproject_pixel(col, row, r));
                }
            }
            out
        })
        .collect();
    rows.concat()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ProjectionStats {
    /// Points that landed on a pixel.
    pub projected: usize,
    /// Points discarded because a nearer point claimed the same pixel.
    pub collisions: usize,
    pub out_of_fov: usize,
    /// Points at or inside the receiver cylinder.
    pub degenerate: usize,
}

/// Z-buffered projection of a point cloud: the smallest range wins each
/// pixel.
pub fn from_point_cloud(
    points: &[Point3],
    intr: &LidarIntrinsics,
) -> (RangeImage, ProjectionStats) {
    let mut img = RangeImage::for_intrinsics(intr);
    let mut stats = ProjectionStats::default();
    let w = intr.width();
    for p in points {
        match intr.project(p) {
            Ok(ray) => {
                stats.projected += 1;
                let idx = ray.v * w + ray.column(w);
                let r = ray.r;
                let slot = &mut img.data[idx];
                if *slot > 0.0 {
                    stats.collisions += 1;
                    if r < *slot {
                        *slot = r;
                    }
                } else {
                    *slot = r;
                }
            }
            Err(Error::OutOfFov { .. }) => stats.out_of_fov += 1,
            Err(_) => stats.degenerate += 1,
        }
    }
    (img, stats)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormalMethod {
    /// Normalized cross product of the forward column and row differences.
    CrossProduct,
    /// Smallest-eigenvalue direction of the neighbor covariance in a
    /// `(2·radius + 1)²` window.
    WindowPca { radius: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalConfig {
    pub method: NormalMethod,
    /// Neighbors whose range differs from the center by more than
    /// `discontinuity_abs + discontinuity_rel · r` are ignored.
    pub discontinuity_abs: f64,
    pub discontinuity_rel: f64,
}

impl Default for NormalConfig {
    fn default() -> Self {
        Self {
            method: NormalMethod::CrossProduct,
            discontinuity_abs: 0.3,
            discontinuity_rel: 0.05,
        }
    }
}

impl NormalConfig {
    pub fn with_method(method: NormalMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    #[inline]
    fn continuous(&self, center: f64, other: f64) -> bool {
        (center - other).abs() <= self.discontinuity_abs + self.discontinuity_rel * center
    }
}

/// Normal map of `img`; every valid normal is unit length and faces the
/// sensor (`n · p < 0`). Columns wrap around the azimuth seam.
pub fn compute_normal_map(
    img: &RangeImage,
    intr: &LidarIntrinsics,
    config: &NormalConfig,
) -> Result<NormalImage> {
    img.check_intrinsics(intr)?;
    let (rows, cols) = (img.rows, img.cols);
    let mut data = vec![None; rows * cols];
    data.par_chunks_mut(cols).enumerate().for_each(|(v, out)| {
        for (u, slot) in out.iter_mut().enumerate() {
            *slot = match config.method {
                NormalMethod::CrossProduct => cross_product_normal(img, intr, config, v, u),
                NormalMethod::WindowPca { radius } => pca_normal(img, intr, config, v, u, radius),
            };
        }
    });
    Ok(NormalImage { rows, cols, data })
}

fn orient(n: Point3, p: &Point3) -> Point3 {
    if n.dot(p) > 0.0 {
        -n
    } else {
        n
    }
}

fn cross_product_normal(
    img: &RangeImage,
    intr: &LidarIntrinsics,
    config: &NormalConfig,
    v: usize,
    u: usize,
) -> Option<Point3> {
    let rc = img.get(v, u);
    if rc <= 0.0 {
        return None;
    }
    let u1 = if u + 1 == img.cols { 0 } else { u + 1 };
    // the last row differences upward; orientation is fixed afterwards
    let v1 = if v + 1 < img.rows {
        v + 1
    } else {
        v.checked_sub(1)?
    };
    let ru = img.get(v, u1);
    let rv = img.get(v1, u);
    if ru <= 0.0 || rv <= 0.0 || !config.continuous(rc, ru) || !config.continuous(rc, rv) {
        return None;
    }
    let p = intr.unproject_pixel(u, v, rc);
    let du = intr.unproject_pixel(u1, v, ru) - p;
    let dv = intr.unproject_pixel(u, v1, rv) - p;
    let n = du.cross(&dv);
    let len = n.norm();
    if !(len > 1e-12 * du.norm() * dv.norm()) {
        return None;
    }
    Some(orient(n / len, &p))
}

fn pca_normal(
    img: &RangeImage,
    intr: &LidarIntrinsics,
    config: &NormalConfig,
    v: usize,
    u: usize,
    radius: usize,
) -> Option<Point3> {
    let rc = img.get(v, u);
    if rc <= 0.0 {
        return None;
    }
    let center = intr.unproject_pixel(u, v, rc);
    let cols = img.cols as isize;
    let mut count = 0usize;
    let mut sum = Point3::zeros();
    let mut outer = Matrix3::zeros();
    let (v_lo, v_hi) = (v.saturating_sub(radius), (v + radius).min(img.rows - 1));
    for vv in v_lo..=v_hi {
        for du in -(radius as isize)..=radius as isize {
            let uu = (u as isize + du).rem_euclid(cols) as usize;
            let r = img.get(vv, uu);
            if r <= 0.0 || !config.continuous(rc, r) {
                continue;
            }
            // relative to the center for conditioning
            let q = intr.unproject_pixel(uu, vv, r) - center;
            sum += q;
            outer += q * q.transpose();
            count += 1;
        }
    }
    if count < 3 {
        return None;
    }
    let mean = sum / count as f64;
    let cov = outer / count as f64 - mean * mean.transpose();
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l0, l1, l2) = (
        eig.eigenvalues[order[0]],
        eig.eigenvalues[order[1]],
        eig.eigenvalues[order[2]],
    );
    // collinear neighborhoods leave the normal undetermined
    if !(l1 > 1e-9 * l2) || !(l2 > 0.0) || !l0.is_finite() {
        return None;
    }
    let n: Point3 = eig.eigenvectors.column(order[0]).into_owned();
    let len = n.norm();
    if !(len > 0.0) {
        return None;
    }
    Some(orient(n / len, &center))
}
