//! C ABI over `rangefuse`.
//!
//! Objects cross the boundary as opaque handles created by `rf_*_new` /
//! `rf_*_read` style constructors and released with the matching `rf_*_free`.
//! Every fallible function returns an [`RfStatus`]; on failure a message is
//! kept per thread and can be fetched with [`rf_last_error`]. Poses are 3x4
//! row-major `[R | t]` arrays of 12 doubles. No function unwinds into C:
//! panics are caught and reported as [`RfStatus::Panic`].
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use rangefuse::io::{read_grid, read_intrinsics, read_rimg, write_grid, write_ply, write_rimg};
use rangefuse::{
    extract_mesh, register, to_point_cloud, Error, IntegrationConfig, LidarIntrinsics, Point3,
    RangeImage, RegistrationConfig, RigidTransform, SdfSample, TriangleMesh, VoxelBlockGrid,
};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidIntrinsics = 3,
    OutOfFov = 4,
    DegenerateRange = 5,
    DimensionMismatch = 6,
    EmptyInput = 7,
    DegenerateGeometry = 8,
    InvalidPose = 9,
    InvalidConfig = 10,
    Format = 11,
    Io = 12,
    MissingNormals = 13,
    Panic = 14,
}

impl From<&Error> for RfStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidIntrinsics(_) => RfStatus::InvalidIntrinsics,
            Error::OutOfFov { .. } => RfStatus::OutOfFov,
            Error::DegenerateRange { .. } => RfStatus::DegenerateRange,
            Error::DimensionMismatch { .. } => RfStatus::DimensionMismatch,
            Error::EmptyInput(_) => RfStatus::EmptyInput,
            Error::MissingNormals => RfStatus::MissingNormals,
            Error::DegenerateGeometry { .. } => RfStatus::DegenerateGeometry,
            Error::InvalidPose(_) => RfStatus::InvalidPose,
            Error::InvalidConfig(_) => RfStatus::InvalidConfig,
            Error::Format(rangefuse::io::FormatError::DimensionMismatch { .. }) => {
                RfStatus::DimensionMismatch
            }
            Error::Format(_) => RfStatus::Format,
            Error::Io(_) => RfStatus::Io,
        }
    }
}

/// Sensor model handle.
pub struct RfIntrinsics(LidarIntrinsics);
/// Range image handle (meters, 0 = no return).
pub struct RfRangeImage(RangeImage);
/// Sparse TSDF volume handle.
pub struct RfGrid(VoxelBlockGrid);
/// Triangle mesh handle.
pub struct RfMesh(TriangleMesh);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(RfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(RfStatus::from(&e), e.to_string())
    }
}

fn at(path: &Path, e: Error) -> Failure {
    let Failure(status, message) = e.into();
    Failure(status, format!("{}: {message}", path.display()))
}

fn null(what: &str) -> Failure {
    Failure(RfStatus::NullPointer, format!("{what} is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(RfStatus::InvalidArgument, message.into())
}

/// Runs `body`, translating errors and panics into a status plus the
/// thread's last-error message.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> RfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => RfStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {message}"));
            RfStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn pose_arg(p: *const f64) -> Result<RigidTransform, Failure> {
    let m: [f64; 12] = slice(p, 12, "pose")?.try_into().expect("12 elements");
    Ok(RigidTransform::from_rows_3x4(&m, 1e-6)?)
}

unsafe fn write_pose(p: *mut f64, pose: &RigidTransform) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null("pose output"));
    }
    ptr::copy_nonoverlapping(pose.to_rows_3x4().as_ptr(), p, 12);
    Ok(())
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Forgets the last error of this thread.
#[no_mangle]
pub extern "C" fn rf_clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Synthetic intrinsics: `height` uniform elevation rows over
/// `[fov_min, fov_max]` radians, no receiver offset.
///
/// # Safety
/// `out` must be NULL or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_intrinsics_synthetic(
    height: usize,
    width: usize,
    fov_min: f64,
    fov_max: f64,
    out_handle: *mut *mut RfIntrinsics,
) -> RfStatus {
    guard(|| {
        let slot = out(out_handle, "output handle")?;
        *slot = boxed(RfIntrinsics(LidarIntrinsics::synthetic(
            height, width, fov_min, fov_max,
        )?));
        Ok(())
    })
}

/// Calibrated intrinsics from per-row azimuth offsets and elevations
/// (`height` entries each, radians).
///
/// # Safety
/// The tables must hold `height` doubles; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_intrinsics_calibrated(
    height: usize,
    width: usize,
    receiver_radius: f64,
    azimuth_offsets: *const f64,
    elevations: *const f64,
    out_handle: *mut *mut RfIntrinsics,
) -> RfStatus {
    guard(|| {
        let slot = out(out_handle, "output handle")?;
        let az = slice(azimuth_offsets, height, "azimuth offsets")?.to_vec();
        let el = slice(elevations, height, "elevations")?.to_vec();
        *slot = boxed(RfIntrinsics(LidarIntrinsics::calibrated(
            width,
            height,
            receiver_radius,
            az,
            el,
        )?));
        Ok(())
    })
}

/// Reads an intrinsics JSON document.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_intrinsics_read(
    path: *const c_char,
    out_handle: *mut *mut RfIntrinsics,
) -> RfStatus {
    guard(|| {
        let slot = out(out_handle, "output handle")?;
        *slot = boxed(RfIntrinsics({
            let p = path_arg(path)?;
            read_intrinsics(&p).map_err(|e| at(&p, e))?
        }));
        Ok(())
    })
}

/// # Safety
/// `intrinsics` must come from an `rf_intrinsics_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rf_intrinsics_free(intrinsics: *mut RfIntrinsics) {
    if !intrinsics.is_null() {
        drop(Box::from_raw(intrinsics));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rf_intrinsics_size(
    intrinsics: *const RfIntrinsics,
    height: *mut usize,
    width: *mut usize,
) -> RfStatus {
    guard(|| {
        let intr = &handle(intrinsics, "intrinsics")?.0;
        *out(height, "height")? = intr.height();
        *out(width, "width")? = intr.width();
        Ok(())
    })
}

/// Projects a sensor-frame point to its continuous column `u`, row `v` and
/// range `r`.
///
/// # Safety
/// `point` must hold 3 doubles; outputs must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_intrinsics_project(
    intrinsics: *const RfIntrinsics,
    point: *const f64,
    u: *mut f64,
    v: *mut usize,
    r: *mut f64,
) -> RfStatus {
    guard(|| {
        let intr = &handle(intrinsics, "intrinsics")?.0;
        let p = slice(point, 3, "point")?;
        let ray = intr.project(&Point3::new(p[0], p[1], p[2]))?;
        *out(u, "u")? = ray.u;
        *out(v, "v")? = ray.v;
        *out(r, "r")? = ray.r;
        Ok(())
    })
}

/// Sensor-frame point seen at continuous column `u`, row `v`, range `r`.
///
/// # Safety
/// `point_out` must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_intrinsics_unproject(
    intrinsics: *const RfIntrinsics,
    u: f64,
    v: usize,
    r: f64,
    point_out: *mut f64,
) -> RfStatus {
    guard(|| {
        let intr = &handle(intrinsics, "intrinsics")?.0;
        if v >= intr.height() {
            return Err(invalid(format!("row {v} outside 0..{}", intr.height())));
        }
        if point_out.is_null() {
            return Err(null("point output"));
        }
        let p = intr.unproject(u, v, r);
        ptr::copy_nonoverlapping(p.as_ptr(), point_out, 3);
        Ok(())
    })
}

/// Range image from `rows * cols` row-major ranges.
///
/// # Safety
/// `ranges` must hold `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn rf_range_image_new(
    rows: usize,
    cols: usize,
    ranges: *const f64,
    out_handle: *mut *mut RfRangeImage,
) -> RfStatus {
    guard(|| {
        let slot = out(out_handle, "output handle")?;
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| invalid("image size overflows"))?;
        let data = slice(ranges, n, "ranges")?.to_vec();
        *slot = boxed(RfRangeImage(RangeImage::from_data(rows, cols, data)?));
        Ok(())
    })
}

/// Reads a RIMG file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_range_image_read(
    path: *const c_char,
    out_handle: *mut *mut RfRangeImage,
) -> RfStatus {
    guard(|| {
        let slot = out(out_handle, "output handle")?;
        *slot = boxed(RfRangeImage({
            let p = path_arg(path)?;
            read_rimg(&p).map_err(|e| at(&p, e))?
        }));
        Ok(())
    })
}

/// Writes a RIMG file.
///
/// # Safety
/// `image` must be a live handle; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rf_range_image_write(
    image: *const RfRangeImage,
    path: *const c_char,
) -> RfStatus {
    guard(|| {
        let img = &handle(image, "image")?.0;
        let p = path_arg(path)?;
        write_rimg(&p, img).map_err(|e| at(&p, e))?;
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rf_range_image_size(
    image: *const RfRangeImage,
    rows: *mut usize,
    cols: *mut usize,
) -> RfStatus {
    guard(|| {
        let img = &handle(image, "image")?.0;
        *out(rows, "rows")? = img.rows();
        *out(cols, "cols")? = img.cols();
        Ok(())
    })
}

/// Copies the ranges into `buffer`, which must hold `capacity >= rows * cols`
/// doubles.
///
/// # Safety
/// `buffer` must be valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn rf_range_image_copy(
    image: *const RfRangeImage,
    buffer: *mut f64,
    capacity: usize,
) -> RfStatus {
    guard(|| {
        let data = handle(image, "image")?.0.data();
        if capacity < data.len() {
            return Err(invalid(format!(
                "buffer holds {capacity} values, image has {}",
                data.len()
            )));
        }
        if buffer.is_null() {
            return Err(null("buffer"));
        }
        ptr::copy_nonoverlapping(data.as_ptr(), buffer, data.len());
        Ok(())
    })
}

/// # Safety
/// `image` must come from an `rf_range_image_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rf_range_image_free(image: *mut RfRangeImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Registers `source` to `destination`. `multi_scale` selects the
/// 4:20, 2:20, 1:10 pyramid, otherwise 50 full-resolution iterations.
/// `kernel` is the pseudo-Huber size and correspondence gate in meters.
/// `initial_pose` may be NULL for identity. Writes the pose mapping source
/// points into the destination frame.
///
/// # Safety
/// Handles must be live; `initial_pose` NULL or 12 doubles; `pose_out` 12
/// doubles; `converged` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn rf_register(
    source: *const RfRangeImage,
    destination: *const RfRangeImage,
    intrinsics: *const RfIntrinsics,
    initial_pose: *const f64,
    multi_scale: c_int,
    kernel: f64,
    pose_out: *mut f64,
    converged: *mut c_int,
) -> RfStatus {
    guard(|| {
        let src = &handle(source, "source")?.0;
        let dst = &handle(destination, "destination")?.0;
        let intr = &handle(intrinsics, "intrinsics")?.0;
        let init = if initial_pose.is_null() {
            RigidTransform::identity()
        } else {
            pose_arg(initial_pose)?
        };
        if !(kernel > 0.0) {
            return Err(invalid(format!("kernel must be positive, got {kernel}")));
        }
        let config = if multi_scale != 0 {
            RegistrationConfig::multi_scale()
        } else {
            RegistrationConfig::single_scale()
        }
        .with_kernel(kernel);
        let result = register(src, dst, intr, &init, &config)?;
        write_pose(pose_out, &result.pose)?;
        if let Some(c) = converged.as_mut() {
            *c = c_int::from(result.converged);
        }
        Ok(())
    })
}

/// Empty grid with the given voxel size and truncation distance (meters).
/// A non-positive `truncation` selects 4 voxels.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_new(
    voxel_size: f64,
    truncation: f64,
    out_handle: *mut *mut RfGrid,
) -> RfStatus {
    guard(|| {
        let slot = out(out_handle, "output handle")?;
        let grid = if truncation > 0.0 {
            VoxelBlockGrid::new(voxel_size, truncation)?
        } else {
            VoxelBlockGrid::with_voxel_size(voxel_size)?
        };
        *slot = boxed(RfGrid(grid));
        Ok(())
    })
}

/// Reads a grid snapshot.
///
/// # Safety
/// `path` must be NUL-terminated; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_read(
    path: *const c_char,
    out_handle: *mut *mut RfGrid,
) -> RfStatus {
    guard(|| {
        let slot = out(out_handle, "output handle")?;
        *slot = boxed(RfGrid({
            let p = path_arg(path)?;
            read_grid(&p).map_err(|e| at(&p, e))?
        }));
        Ok(())
    })
}

/// Writes a grid snapshot.
///
/// # Safety
/// `grid` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_write(grid: *const RfGrid, path: *const c_char) -> RfStatus {
    guard(|| {
        let grid = &handle(grid, "grid")?.0;
        let p = path_arg(path)?;
        write_grid(&p, grid).map_err(|e| at(&p, e))?;
        Ok(())
    })
}

/// Allocates the blocks around the frame's points and fuses the frame taken
/// at `frame_to_world`. Ranges outside `[clip_min, clip_max]` are ignored.
///
/// # Safety
/// Handles must be live; `frame_to_world` 12 doubles; `voxels_updated` NULL
/// or valid.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_integrate(
    grid: *mut RfGrid,
    image: *const RfRangeImage,
    intrinsics: *const RfIntrinsics,
    frame_to_world: *const f64,
    clip_min: f64,
    clip_max: f64,
    voxels_updated: *mut usize,
) -> RfStatus {
    guard(|| {
        let grid = &mut handle_mut(grid, "grid")?.0;
        let img = &handle(image, "image")?.0;
        let intr = &handle(intrinsics, "intrinsics")?.0;
        let pose = pose_arg(frame_to_world)?;
        if !(clip_min >= 0.0 && clip_max > clip_min) {
            return Err(invalid(format!(
                "clip range [{clip_min}, {clip_max}] is empty"
            )));
        }
        let points: Vec<Point3> = to_point_cloud(img, intr, clip_min, clip_max)?
            .iter()
            .map(|p| pose.apply(p))
            .collect();
        let keys = grid.activate_blocks(&points, grid.truncation());
        let config = IntegrationConfig {
            clip_min,
            clip_max,
            update_free_space: true,
        };
        let stats = grid.integrate(img, intr, &pose, &keys, &config)?;
        if let Some(n) = voxels_updated.as_mut() {
            *n = stats.voxels_updated;
        }
        Ok(())
    })
}

/// Number of allocated blocks.
///
/// # Safety
/// `grid` must be live; `count` valid.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_block_count(grid: *const RfGrid, count: *mut usize) -> RfStatus {
    guard(|| {
        *out(count, "count")? = handle(grid, "grid")?.0.block_count();
        Ok(())
    })
}

/// Trilinear SDF sample at a world point. `observed` is set to 0 where any
/// of the eight surrounding voxels is unobserved, in which case `sdf` and
/// `weight` are left untouched.
///
/// # Safety
/// `point` 3 doubles; outputs valid.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_query(
    grid: *const RfGrid,
    point: *const f64,
    observed: *mut c_int,
    sdf: *mut f64,
    weight: *mut f64,
) -> RfStatus {
    guard(|| {
        let grid = &handle(grid, "grid")?.0;
        let p = slice(point, 3, "point")?;
        let flag = out(observed, "observed")?;
        match grid.query_sdf(&Point3::new(p[0], p[1], p[2])) {
            SdfSample::Observed { sdf: d, weight: w } => {
                *flag = 1;
                *out(sdf, "sdf")? = d;
                *out(weight, "weight")? = w;
            }
            SdfSample::Unobserved => *flag = 0,
        }
        Ok(())
    })
}

/// # Safety
/// `grid` must come from an `rf_grid_*` constructor or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rf_grid_free(grid: *mut RfGrid) {
    if !grid.is_null() {
        drop(Box::from_raw(grid));
    }
}

/// Zero-level mesh of the grid; corners below `min_weight` are unobserved.
///
/// # Safety
/// `grid` must be live; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rf_mesh_extract(
    grid: *const RfGrid,
    min_weight: f32,
    out_handle: *mut *mut RfMesh,
) -> RfStatus {
    guard(|| {
        let grid = &handle(grid, "grid")?.0;
        let slot = out(out_handle, "output handle")?;
        if !(min_weight >= 0.0) {
            return Err(invalid("min_weight must be non-negative"));
        }
        *slot = boxed(RfMesh(extract_mesh(grid, min_weight)));
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rf_mesh_size(
    mesh: *const RfMesh,
    vertices: *mut usize,
    triangles: *mut usize,
) -> RfStatus {
    guard(|| {
        let mesh = &handle(mesh, "mesh")?.0;
        *out(vertices, "vertices")? = mesh.vertices.len();
        *out(triangles, "triangles")? = mesh.triangles.len();
        Ok(())
    })
}

/// Copies vertex coordinates (x, y, z per vertex) into `buffer`, which must
/// hold `capacity >= 3 * vertices` doubles.
///
/// # Safety
/// `buffer` valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn rf_mesh_copy_vertices(
    mesh: *const RfMesh,
    buffer: *mut f64,
    capacity: usize,
) -> RfStatus {
    guard(|| {
        let mesh = &handle(mesh, "mesh")?.0;
        let needed = 3 * mesh.vertices.len();
        if capacity < needed {
            return Err(invalid(format!(
                "buffer holds {capacity} values, {needed} needed"
            )));
        }
        if needed > 0 && buffer.is_null() {
            return Err(null("buffer"));
        }
        for (i, v) in mesh.vertices.iter().enumerate() {
            ptr::copy_nonoverlapping(v.as_ptr(), buffer.add(3 * i), 3);
        }
        Ok(())
    })
}

/// Copies triangle vertex indices (3 per triangle) into `buffer`, which must
/// hold `capacity >= 3 * triangles` values.
///
/// # Safety
/// `buffer` valid for `capacity` writes.
#[no_mangle]
pub unsafe extern "C" fn rf_mesh_copy_triangles(
    mesh: *const RfMesh,
    buffer: *mut u32,
    capacity: usize,
) -> RfStatus {
    guard(|| {
        let mesh = &handle(mesh, "mesh")?.0;
        let needed = 3 * mesh.triangles.len();
        if capacity < needed {
            return Err(invalid(format!(
                "buffer holds {capacity} values, {needed} needed"
            )));
        }
        if needed > 0 && buffer.is_null() {
            return Err(null("buffer"));
        }
        for (i, t) in mesh.triangles.iter().enumerate() {
            ptr::copy_nonoverlapping(t.as_ptr(), buffer.add(3 * i), 3);
        }
        Ok(())
    })
}

/// Writes a binary little-endian PLY file.
///
/// # Safety
/// `mesh` must be live; `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn rf_mesh_write_ply(mesh: *const RfMesh, path: *const c_char) -> RfStatus {
    guard(|| {
        let mesh = &handle(mesh, "mesh")?.0;
        let p = path_arg(path)?;
        write_ply(&p, mesh).map_err(|e| at(&p, e))?;
        Ok(())
    })
}

/// # Safety
/// `mesh` must come from [`rf_mesh_extract`] or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rf_mesh_free(mesh: *mut RfMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_a_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, RfStatus::Panic);
        let msg = unsafe { CStr::from_ptr(rf_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"), "{msg}");
    }

    #[test]
    fn format_dimension_mismatch_maps_to_dimension_status() {
        let e = Error::Format(rangefuse::io::FormatError::DimensionMismatch {
            expected: (2, 2),
            found: (3, 3),
        });
        assert_eq!(RfStatus::from(&e), RfStatus::DimensionMismatch);
    }

    #[test]
    fn interior_nul_in_message_is_replaced() {
        set_error("a\0b".into());
        let msg = unsafe { CStr::from_ptr(rf_last_error()) }.to_str().unwrap();
        assert_eq!(msg, "a b");
    }
}
