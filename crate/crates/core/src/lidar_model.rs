//! Cylindrical spinning-LiDAR sensor model.
//!
//! A pixel `(u, v)` with range `r` unprojects to
//!
//! ```text
//! x = r cos θ cos φ + r0 cos(2πu/W)
//! y = r sin θ cos φ + r0 sin(2πu/W)
//! z = r sin φ
//! θ = 2πu/W + θ_LUT[v],   φ = φ_LUT[v]
//! ```
//!
//! where `r0` is the radius of the receiver cylinder. Projection inverts this
//! with a fixed-point iteration on the receiver offset and an inverse
//! elevation table for the row lookup.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::Point3;

/// Entries of the inverse elevation table per LUT row.
pub const DEFAULT_INVERSE_LUT_FACTOR: usize = 2;
pub const DEFAULT_PROJECT_MAX_ITERS: usize = 3;
/// Convergence threshold of the receiver-offset iteration, in columns.
pub const DEFAULT_PROJECT_TOL_COLUMNS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntrinsicsMode {
    Calibrated,
    Synthetic,
}

/// A projected point: real-valued column, integer row and range from the
/// receiver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelRay {
    pub u: f64,
    pub v: usize,
    pub r: f64,
}

impl PixelRay {
    /// Nearest integer column (round half up), wrapped onto `[0, width)`.
    #[inline]
    pub fn column(&self, width: usize) -> usize {
        let c = (self.u + 0.5).floor() as usize;
        if c >= width {
            c - width
        } else {
            c
        }
    }
}

/// Uniformly binned table mapping an elevation to the LUT row nearest to the
/// bin center.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseElevationLut {
    rows: Vec<u32>,
    /// Nearest rows at the two edges of each bin, ordered, or `u32::MAX`
    /// when the bin spans more than one row boundary.
    brackets: Vec<(u32, u32)>,
    min: f64,
    max: f64,
    bin_width: f64,
    bins_per_radian: f64,
}

impl InverseElevationLut {
    pub fn build(elevations: &[f64], factor: usize) -> Result<Self> {
        if factor < 2 {
            return Err(Error::InvalidIntrinsics(format!(
                "inverse elevation table factor must be >= 2, got {factor}"
            )));
        }
        check_monotonic(elevations)?;
        let min = elevations.iter().copied().fold(f64::INFINITY, f64::min);
        let max = elevations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let bins = factor * elevations.len();
        let bin_width = (max - min) / bins as f64;
        let rows = (0..bins)
            .map(|i| {
                let center = min + (i as f64 + 0.5) * bin_width;
                nearest_row(elevations, center) as u32
            })
            .collect();
        let brackets = (0..bins)
            .map(|i| {
                let a = nearest_row(elevations, min + i as f64 * bin_width) as u32;
                let b = nearest_row(elevations, min + (i + 1) as f64 * bin_width) as u32;
                if a.abs_diff(b) <= 1 {
                    (a.min(b), a.max(b))
                } else {
                    (u32::MAX, u32::MAX)
                }
            })
            .collect();
        Ok(Self {
            rows,
            brackets,
            min,
            max,
            bin_width,
            bins_per_radian: 1.0 / bin_width,
        })
    }

    /// Row stored in the bin containing `elevation`, without refinement.
    /// Elevations outside the span are clamped to the end bins.
    #[inline]
    pub fn lookup(&self, elevation: f64) -> usize {
        self.rows[self.bin(elevation)] as usize
    }

    #[inline]
    fn bin(&self, elevation: f64) -> usize {
        let t = (elevation - self.min) * self.bins_per_radian;
        let last = self.rows.len() - 1;
        if t.is_nan() || t <= 0.0 {
            0
        } else if t >= last as f64 {
            last
        } else {
            t as usize
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// `(φ_min, φ_max)` covered by the table.
    pub fn span(&self) -> (f64, f64) {
        (self.min, self.max)
    }
}

/// Free-function form of [`InverseElevationLut::build`].
pub fn build_inverse_elevation_lut(
    elevations: &[f64],
    factor: usize,
) -> Result<InverseElevationLut> {
    InverseElevationLut::build(elevations, factor)
}

/// Exhaustive `argmin_t |φ_LUT[t] − φ|`, lowest index on ties.
pub fn nearest_row(elevations: &[f64], elevation: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (t, &e) in elevations.iter().enumerate() {
        let d = (e - elevation).abs();
        if d < best_dist {
            best = t;
            best_dist = d;
        }
    }
    best
}

fn check_monotonic(elevations: &[f64]) -> Result<()> {
    if elevations.len() < 2 {
        return Err(Error::InvalidIntrinsics(
            "elevation table needs at least 2 rows".into(),
        ));
    }
    if elevations.iter().any(|e| !e.is_finite()) {
        return Err(Error::InvalidIntrinsics("non-finite elevation".into()));
    }
    let increasing = elevations.windows(2).all(|w| w[1] > w[0]);
    let decreasing = elevations.windows(2).all(|w| w[1] < w[0]);
    if !(increasing || decreasing) {
        return Err(Error::InvalidIntrinsics(
            "elevation table is not strictly monotonic".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct RowTrig {
    cos_phi: f64,
    sin_phi: f64,
    cos_offset: f64,
    sin_offset: f64,
}

#[derive(Debug, Clone)]
pub struct LidarIntrinsics {
    width: usize,
    height: usize,
    receiver_radius: f64,
    azimuth_lut: Vec<f64>,
    elevation_lut: Vec<f64>,
    inverse_lut: InverseElevationLut,
    mode: IntrinsicsMode,
    fov: (f64, f64),
    row_trig: Vec<RowTrig>,
    column_trig: Vec<(f64, f64)>,
    column_table: ColumnTable,
}

impl PartialEq for LidarIntrinsics {
    fn eq(&self, other: &Self) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.receiver_radius == other.receiver_radius
            && self.azimuth_lut == other.azimuth_lut
            && self.elevation_lut == other.elevation_lut
            && self.mode == other.mode
    }
}

impl LidarIntrinsics {
    /// Intrinsics from manufacturer tables. `azimuth_lut` and `elevation_lut`
    /// are per row, in radians.
    pub fn calibrated(
        width: usize,
        height: usize,
        receiver_radius: f64,
        azimuth_lut: Vec<f64>,
        elevation_lut: Vec<f64>,
    ) -> Result<Self> {
        Self::build(
            width,
            height,
            receiver_radius,
            azimuth_lut,
            elevation_lut,
            IntrinsicsMode::Calibrated,
            DEFAULT_INVERSE_LUT_FACTOR,
        )
    }

    /// Degraded model for point clouds without calibration: no receiver
    /// offset, no azimuth offsets, and `H` uniform elevation bins over
    /// `[φ_min, φ_max]` with row 0 at the top. Row `v` sits at the bin center
    /// `φ_max − (v + ½)(φ_max − φ_min)/H`.
    pub fn synthetic(height: usize, width: usize, fov_min: f64, fov_max: f64) -> Result<Self> {
        if !(fov_min.is_finite() && fov_max.is_finite()) || fov_min >= fov_max {
            return Err(Error::InvalidIntrinsics(format!(
                "synthetic field of view requires min < max, got [{fov_min}, {fov_max}]"
            )));
        }
        if height < 2 || width < 2 {
            return Err(Error::InvalidIntrinsics(format!(
                "synthetic intrinsics need H >= 2 and W >= 2, got {height}x{width}"
            )));
        }
        let bin = (fov_max - fov_min) / height as f64;
        let elevations = (0..height)
            .map(|v| fov_max - (v as f64 + 0.5) * bin)
            .collect();
        Self::build(
            width,
            height,
            0.0,
            vec![0.0; height],
            elevations,
            IntrinsicsMode::Synthetic,
            DEFAULT_INVERSE_LUT_FACTOR,
        )
    }

    /// Intrinsics from explicit tables with the given mode. Synthetic mode
    /// still requires a zero receiver radius and zero azimuth offsets.
    pub fn from_tables(
        width: usize,
        height: usize,
        receiver_radius: f64,
        azimuth_lut: Vec<f64>,
        elevation_lut: Vec<f64>,
        mode: IntrinsicsMode,
    ) -> Result<Self> {
        Self::build(
            width,
            height,
            receiver_radius,
            azimuth_lut,
            elevation_lut,
            mode,
            DEFAULT_INVERSE_LUT_FACTOR,
        )
    }

    /// Rebuilds the inverse elevation table with a different resolution.
    pub fn with_inverse_lut_factor(mut self, factor: usize) -> Result<Self> {
        self.inverse_lut = InverseElevationLut::build(&self.elevation_lut, factor)?;
        Ok(self)
    }

    fn build(
        width: usize,
        height: usize,
        receiver_radius: f64,
        azimuth_lut: Vec<f64>,
        elevation_lut: Vec<f64>,
        mode: IntrinsicsMode,
        factor: usize,
    ) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::InvalidIntrinsics(format!(
                "image must be at least 2x2, got {height}x{width}"
            )));
        }
        if azimuth_lut.len() != height || elevation_lut.len() != height {
            return Err(Error::InvalidIntrinsics(format!(
                "LUT lengths ({}, {}) do not match height {height}",
                azimuth_lut.len(),
                elevation_lut.len()
            )));
        }
        if !receiver_radius.is_finite() || receiver_radius < 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "receiver radius must be finite and >= 0, got {receiver_radius}"
            )));
        }
        if let Some(bad) = azimuth_lut.iter().find(|a| !(a.abs() < PI)) {
            return Err(Error::InvalidIntrinsics(format!(
                "azimuth offset {bad} outside (-pi, pi)"
            )));
        }
        if let Some(bad) = elevation_lut.iter().find(|e| !(e.abs() <= PI / 2.0)) {
            return Err(Error::InvalidIntrinsics(format!(
                "elevation {bad} outside [-pi/2, pi/2]"
            )));
        }
        if mode == IntrinsicsMode::Synthetic
            && (receiver_radius != 0.0 || azimuth_lut.iter().any(|&a| a != 0.0))
        {
            return Err(Error::InvalidIntrinsics(
                "synthetic intrinsics require r0 = 0 and zero azimuth offsets".into(),
            ));
        }
        let inverse_lut = InverseElevationLut::build(&elevation_lut, factor)?;
        let fov = field_of_view(&elevation_lut);
        let row_trig = elevation_lut
            .iter()
            .zip(&azimuth_lut)
            .map(|(&phi, &off)| RowTrig {
                cos_phi: phi.cos(),
                sin_phi: phi.sin(),
                cos_offset: off.cos(),
                sin_offset: off.sin(),
            })
            .collect();
        let column_trig = (0..width)
            .map(|u| {
                let a = TAU * u as f64 / width as f64;
                (a.cos(), a.sin())
            })
            .collect();
        Ok(Self {
            column_table: ColumnTable::new(width),
            width,
            height,
            receiver_radius,
            azimuth_lut,
            elevation_lut,
            inverse_lut,
            mode,
            fov,
            row_trig,
            column_trig,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn receiver_radius(&self) -> f64 {
        self.receiver_radius
    }

    pub fn azimuth_lut(&self) -> &[f64] {
        &self.azimuth_lut
    }

    pub fn elevation_lut(&self) -> &[f64] {
        &self.elevation_lut
    }

    pub fn inverse_lut(&self) -> &InverseElevationLut {
        &self.inverse_lut
    }

    pub fn mode(&self) -> IntrinsicsMode {
        self.mode
    }

    /// Elevation interval accepted by [`project`](Self::project): the LUT
    /// span widened by half the spacing of the outermost rows.
    pub fn field_of_view(&self) -> (f64, f64) {
        self.fov
    }

    /// Unprojection at a real-valued column.
    pub fn unproject(&self, u: f64, v: usize, r: f64) -> Point3 {
        debug_assert!(v < self.height);
        let a = TAU * u / self.width as f64;
        let theta = a + self.azimuth_lut[v];
        let phi = self.elevation_lut[v];
        Point3::new(
            r * theta.cos() * phi.cos() + self.receiver_radius * a.cos(),
            r * theta.sin() * phi.cos() + self.receiver_radius * a.sin(),
            r * phi.sin(),
        )
    }

    /// Unprojection at an integer pixel through the cached per-row and
    /// per-column tables: `p = r · ray_direction(u, v) + ray_origin(u)`.
    #[inline]
    pub fn unproject_pixel(&self, u: usize, v: usize, r: f64) -> Point3 {
        let (origin, dir) = self.ray(u, v);
        origin + dir * r
    }

    /// Receiver position and unit ray direction of pixel `(u, v)`.
    #[inline]
    pub fn ray(&self, u: usize, v: usize) -> (Point3, Point3) {
        let (ca, sa) = self.column_trig[u];
        let row = &self.row_trig[v];
        let ct = ca * row.cos_offset - sa * row.sin_offset;
        let st = sa * row.cos_offset + ca * row.sin_offset;
        let dir = Point3::new(ct * row.cos_phi, st * row.cos_phi, row.sin_phi);
        let origin = Point3::new(self.receiver_radius * ca, self.receiver_radius * sa, 0.0);
        (origin, dir)
    }

    /// Row whose elevation is nearest to `elevation`: inverse-table lookup
    /// followed by neighbor refinement.
    #[inline]
    pub fn row_for_elevation(&self, elevation: f64) -> usize {
        let lut = &self.elevation_lut;
        let dist = |t: usize| (lut[t] - elevation).abs();
        let bin = self.inverse_lut.bin(elevation);
        let (a, b) = self.inverse_lut.brackets[bin];
        if a != u32::MAX {
            // The nearest row is one of the two bracketing the bin.
            let (a, b) = (a as usize, b as usize);
            return if dist(a) <= dist(b) { a } else { b };
        }
        let mut v = self.inverse_lut.rows[bin] as usize;
        loop {
            let here = dist(v);
            if v > 0 && dist(v - 1) <= here {
                v -= 1;
            } else if v + 1 < self.height && dist(v + 1) < here {
                v += 1;
            } else {
                return v;
            }
        }
    }

    /// `(row, column, range)` of the pixel whose ray passes nearest to `p`,
    /// `None` where [`Self::project`] fails. Equivalent to `project` followed
    /// by [`PixelRay::column`], with a branch-light path for models without a
    /// receiver offset.
    #[inline]
    pub fn project_to_pixel(&self, p: &Point3) -> Option<(usize, usize, f64)> {
        if self.receiver_radius > 0.0 {
            let ray = self.project(p).ok()?;
            return Some((ray.v, ray.column(self.width), ray.r));
        }
        let r = p.norm();
        if !(r > 0.0) {
            return None;
        }
        let phi = (p.z / r).clamp(-1.0, 1.0).asin();
        if phi < self.fov.0 || phi > self.fov.1 {
            return None;
        }
        let v = self.row_for_elevation(phi);
        let t = &self.row_trig[v];
        // Undo the row's azimuth offset, then bin by angle without atan2.
        let x = p.x * t.cos_offset + p.y * t.sin_offset;
        let y = p.y * t.cos_offset - p.x * t.sin_offset;
        Some((v, self.column_table.column(x, y), r))
    }

    pub fn project(&self, p: &Point3) -> Result<PixelRay> {
        self.project_with(p, DEFAULT_PROJECT_MAX_ITERS, DEFAULT_PROJECT_TOL_COLUMNS)
    }

    /// Projection with an explicit iteration budget for the receiver-offset
    /// compensation. `max_iters = 0` skips compensation entirely.
    pub fn project_with(&self, p: &Point3, max_iters: usize, tol_columns: f64) -> Result<PixelRay> {
        let norm = p.norm();
        if !(norm > self.receiver_radius) || norm == 0.0 {
            return Err(Error::DegenerateRange {
                norm,
                receiver_radius: self.receiver_radius,
            });
        }
        let cols_per_rad = self.width as f64 / TAU;

        let (r, phi, v, receiver_angle) = if self.receiver_radius > 0.0 && max_iters > 0 {
            // The receiver sits at angle 2πu/W; start from the raw azimuth and
            // alternate between compensating (x, y) and re-reading the row.
            let r0 = self.receiver_radius;
            let mut angle = wrap_angle(p.y.atan2(p.x));
            let mut state = (norm, 0.0, 0);
            for _ in 0..max_iters {
                let xc = p.x - r0 * angle.cos();
                let yc = p.y - r0 * angle.sin();
                let r = (xc * xc + yc * yc + p.z * p.z).sqrt();
                let phi = (p.z / r).clamp(-1.0, 1.0).asin();
                let v = self.row_for_elevation(phi);
                let next = wrap_angle(yc.atan2(xc) - self.azimuth_lut[v]);
                let step = wrapped_difference(next, angle) * cols_per_rad;
                angle = next;
                state = (r, phi, v);
                if step.abs() < tol_columns {
                    break;
                }
            }
            (state.0, state.1, state.2, angle)
        } else {
            let phi = (p.z / norm).clamp(-1.0, 1.0).asin();
            let v = self.row_for_elevation(phi);
            let angle = wrap_angle(p.y.atan2(p.x) - self.azimuth_lut[v]);
            (norm, phi, v, angle)
        };

        if phi < self.fov.0 || phi > self.fov.1 {
            return Err(Error::OutOfFov {
                elevation: phi,
                min: self.fov.0,
                max: self.fov.1,
            });
        }
        let mut u = receiver_angle * cols_per_rad;
        if u >= self.width as f64 {
            u -= self.width as f64;
        }
        Ok(PixelRay { u, v, r })
    }
}

fn field_of_view(elevations: &[f64]) -> (f64, f64) {
    let n = elevations.len();
    let (lo, lo_gap, hi, hi_gap) = if elevations[n - 1] > elevations[0] {
        (
            elevations[0],
            elevations[1] - elevations[0],
            elevations[n - 1],
            elevations[n - 1] - elevations[n - 2],
        )
    } else {
        (
            elevations[n - 1],
            elevations[n - 2] - elevations[n - 1],
            elevations[0],
            elevations[0] - elevations[1],
        )
    };
    (lo - 0.5 * lo_gap, hi + 0.5 * hi_gap)
}

/// Column lookup by azimuth without `atan2`.
///
/// Column `c` covers azimuths `[(c − ½)·2π/W, (c + ½)·2π/W)`. A monotone
/// pseudo-angle of `(x, y)` selects a bin whose first column is stored; the
/// column is then advanced past every boundary direction the point lies at or
/// beyond, tested with exact cross products. Each bin spans at most one
/// boundary.
#[derive(Debug, Clone)]
struct ColumnTable {
    width: usize,
    bin_start: Vec<u32>,
    bins_per_unit: f64,
    /// Unit direction of the upper boundary of each column.
    upper: Vec<(f64, f64)>,
}

impl ColumnTable {
    const BINS_PER_COLUMN: usize = 4;

    fn new(width: usize) -> Self {
        let step = TAU / width as f64;
        let upper = (0..width)
            .map(|c| {
                let b = (c as f64 + 0.5) * step;
                (b.cos(), b.sin())
            })
            .collect();
        let bins = Self::BINS_PER_COLUMN * width;
        let bin_start = (0..bins)
            .map(|i| {
                let pa = 4.0 * i as f64 / bins as f64;
                let angle = pseudo_angle_inverse(pa);
                ((angle / step + 0.5).floor() as usize % width) as u32
            })
            .collect();
        Self {
            width,
            bin_start,
            bins_per_unit: bins as f64 / 4.0,
            upper,
        }
    }

    #[inline]
    fn column(&self, x: f64, y: f64) -> usize {
        let bin =
            ((pseudo_angle(x, y) * self.bins_per_unit) as usize).min(self.bin_start.len() - 1);
        let mut c = self.bin_start[bin] as usize;
        // The bin start can sit in the wrapped column 0 near 2π; boundary
        // tests from column 0 are only meaningful in the first half turn.
        if c == 0 && y < 0.0 {
            c = self.width - 1;
            let (bx, by) = self.upper[c];
            return if bx * y - by * x >= 0.0 { 0 } else { c };
        }
        loop {
            let (bx, by) = self.upper[c];
            if bx * y - by * x >= 0.0 {
                c += 1;
                if c == self.width {
                    return 0;
                }
            } else {
                return c;
            }
        }
    }
}

/// Monotone map of the direction `(x, y)` onto `[0, 4)`, one unit per
/// quadrant.
#[inline]
fn pseudo_angle(x: f64, y: f64) -> f64 {
    let s = x.abs() + y.abs();
    if s == 0.0 {
        return 0.0;
    }
    let q = y / s;
    if y >= 0.0 {
        if x >= 0.0 {
            q
        } else {
            2.0 - q
        }
    } else if x < 0.0 {
        2.0 - q
    } else {
        4.0 + q
    }
}

fn pseudo_angle_inverse(pa: f64) -> f64 {
    let quadrant = pa.floor();
    let f = pa - quadrant;
    // Within a quadrant the pseudo-angle is y/(x + y) on the rotated axes.
    let local = f.atan2(1.0 - f);
    quadrant * std::f64::consts::FRAC_PI_2 + local
}

/// Maps an `atan2` result from `[−π, π]` onto `[0, 2π)`.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    let w = if a < 0.0 { a + TAU } else { a };
    if w >= TAU {
        w - TAU
    } else if w < 0.0 {
        w + TAU
    } else {
        w
    }
}

#[inline]
fn wrapped_difference(a: f64, b: f64) -> f64 {
    let mut d = a - b;
    if d > PI {
        d -= TAU;
    } else if d < -PI {
        d += TAU;
    }
    d
}
