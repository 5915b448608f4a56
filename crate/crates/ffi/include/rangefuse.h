#ifndef RANGEFUSE_H
#define RANGEFUSE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

// Result of every fallible call.
typedef enum RfStatus {
  RF_STATUS_OK = 0,
  RF_STATUS_NULL_POINTER = 1,
  RF_STATUS_INVALID_ARGUMENT = 2,
  RF_STATUS_INVALID_INTRINSICS = 3,
  RF_STATUS_OUT_OF_FOV = 4,
  RF_STATUS_DEGENERATE_RANGE = 5,
  RF_STATUS_DIMENSION_MISMATCH = 6,
  RF_STATUS_EMPTY_INPUT = 7,
  RF_STATUS_DEGENERATE_GEOMETRY = 8,
  RF_STATUS_INVALID_POSE = 9,
  RF_STATUS_INVALID_CONFIG = 10,
  RF_STATUS_FORMAT = 11,
  RF_STATUS_IO = 12,
  RF_STATUS_MISSING_NORMALS = 13,
  RF_STATUS_PANIC = 14,
} RfStatus;

// Sparse TSDF volume handle.
typedef struct RfGrid RfGrid;

// Sensor model handle.
typedef struct RfIntrinsics RfIntrinsics;

// Triangle mesh handle.
typedef struct RfMesh RfMesh;

// Range image handle (meters, 0 = no return).
typedef struct RfRangeImage RfRangeImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *rf_last_error(void);

// Forgets the last error of this thread.
void rf_clear_error(void);

// Library version as a static NUL-terminated string.
const char *rf_version(void);

// Synthetic intrinsics: `height` uniform elevation rows over
// `[fov_min, fov_max]` radians, no receiver offset.
//
// # Safety
// `out` must be NULL or valid for writes.
enum RfStatus rf_intrinsics_synthetic(size_t height,
                                      size_t width,
                                      double fov_min,
                                      double fov_max,
                                      struct RfIntrinsics **out_handle);

// Calibrated intrinsics from per-row azimuth offsets and elevations
// (`height` entries each, radians).
//
// # Safety
// The tables must hold `height` doubles; `out` must be valid for writes.
enum RfStatus rf_intrinsics_calibrated(size_t height,
                                       size_t width,
                                       double receiver_radius,
                                       const double *azimuth_offsets,
                                       const double *elevations,
                                       struct RfIntrinsics **out_handle);

// Reads an intrinsics JSON document.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum RfStatus rf_intrinsics_read(const char *path, struct RfIntrinsics **out_handle);

// # Safety
// `intrinsics` must come from an `rf_intrinsics_*` constructor or be NULL.
void rf_intrinsics_free(struct RfIntrinsics *intrinsics);

// # Safety
// Pointers must be valid.
enum RfStatus rf_intrinsics_size(const struct RfIntrinsics *intrinsics,
                                 size_t *height,
                                 size_t *width);

// Projects a sensor-frame point to its continuous column `u`, row `v` and
// range `r`.
//
// # Safety
// `point` must hold 3 doubles; outputs must be valid for writes.
enum RfStatus rf_intrinsics_project(const struct RfIntrinsics *intrinsics,
                                    const double *point,
                                    double *u,
                                    size_t *v,
                                    double *r);

// Sensor-frame point seen at continuous column `u`, row `v`, range `r`.
//
// # Safety
// `point_out` must hold 3 doubles.
enum RfStatus rf_intrinsics_unproject(const struct RfIntrinsics *intrinsics,
                                      double u,
                                      size_t v,
                                      double r,
                                      double *point_out);

// Range image from `rows * cols` row-major ranges.
//
// # Safety
// `ranges` must hold `rows * cols` doubles.
enum RfStatus rf_range_image_new(size_t rows,
                                 size_t cols,
                                 const double *ranges,
                                 struct RfRangeImage **out_handle);

// Reads a RIMG file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be valid for writes.
enum RfStatus rf_range_image_read(const char *path, struct RfRangeImage **out_handle);

// Writes a RIMG file.
//
// # Safety
// `image` must be a live handle; `path` NUL-terminated.
enum RfStatus rf_range_image_write(const struct RfRangeImage *image, const char *path);

// # Safety
// Pointers must be valid.
enum RfStatus rf_range_image_size(const struct RfRangeImage *image, size_t *rows, size_t *cols);

// Copies the ranges into `buffer`, which must hold `capacity >= rows * cols`
// doubles.
//
// # Safety
// `buffer` must be valid for `capacity` writes.
enum RfStatus rf_range_image_copy(const struct RfRangeImage *image,
                                  double *buffer,
                                  size_t capacity);

// # Safety
// `image` must come from an `rf_range_image_*` constructor or be NULL.
void rf_range_image_free(struct RfRangeImage *image);

// Registers `source` to `destination`. `multi_scale` selects the
// 4:20, 2:20, 1:10 pyramid, otherwise 50 full-resolution iterations.
// `kernel` is the pseudo-Huber size and correspondence gate in meters.
// `initial_pose` may be NULL for identity. Writes the pose mapping source
// points into the destination frame.
//
// # Safety
// Handles must be live; `initial_pose` NULL or 12 doubles; `pose_out` 12
// doubles; `converged` NULL or valid.
enum RfStatus rf_register(const struct RfRangeImage *source,
                          const struct RfRangeImage *destination,
                          const struct RfIntrinsics *intrinsics,
                          const double *initial_pose,
                          int multi_scale,
                          double kernel,
                          double *pose_out,
                          int *converged);

// Empty grid with the given voxel size and truncation distance (meters).
// A non-positive `truncation` selects 4 voxels.
//
// # Safety
// `out` must be valid for writes.
enum RfStatus rf_grid_new(double voxel_size, double truncation, struct RfGrid **out_handle);

// Reads a grid snapshot.
//
// # Safety
// `path` must be NUL-terminated; `out` valid for writes.
enum RfStatus rf_grid_read(const char *path, struct RfGrid **out_handle);

// Writes a grid snapshot.
//
// # Safety
// `grid` must be live; `path` NUL-terminated.
enum RfStatus rf_grid_write(const struct RfGrid *grid, const char *path);

// Allocates the blocks around the frame's points and fuses the frame taken
// at `frame_to_world`. Ranges outside `[clip_min, clip_max]` are ignored.
//
// # Safety
// Handles must be live; `frame_to_world` 12 doubles; `voxels_updated` NULL
// or valid.
enum RfStatus rf_grid_integrate(struct RfGrid *grid,
                                const struct RfRangeImage *image,
                                const struct RfIntrinsics *intrinsics,
                                const double *frame_to_world,
                                double clip_min,
                                double clip_max,
                                size_t *voxels_updated);

// Number of allocated blocks.
//
// # Safety
// `grid` must be live; `count` valid.
enum RfStatus rf_grid_block_count(const struct RfGrid *grid, size_t *count);

// Trilinear SDF sample at a world point. `observed` is set to 0 where any
// of the eight surrounding voxels is unobserved, in which case `sdf` and
// `weight` are left untouched.
//
// # Safety
// `point` 3 doubles; outputs valid.
enum RfStatus rf_grid_query(const struct RfGrid *grid,
                            const double *point,
                            int *observed,
                            double *sdf,
                            double *weight);

// # Safety
// `grid` must come from an `rf_grid_*` constructor or be NULL.
void rf_grid_free(struct RfGrid *grid);

// Zero-level mesh of the grid; corners below `min_weight` are unobserved.
//
// # Safety
// `grid` must be live; `out` valid for writes.
enum RfStatus rf_mesh_extract(const struct RfGrid *grid,
                              float min_weight,
                              struct RfMesh **out_handle);

// # Safety
// Pointers must be valid.
enum RfStatus rf_mesh_size(const struct RfMesh *mesh, size_t *vertices, size_t *triangles);

// Copies vertex coordinates (x, y, z per vertex) into `buffer`, which must
// hold `capacity >= 3 * vertices` doubles.
//
// # Safety
// `buffer` valid for `capacity` writes.
enum RfStatus rf_mesh_copy_vertices(const struct RfMesh *mesh, double *buffer, size_t capacity);

// Copies triangle vertex indices (3 per triangle) into `buffer`, which must
// hold `capacity >= 3 * triangles` values.
//
// # Safety
// `buffer` valid for `capacity` writes.
enum RfStatus rf_mesh_copy_triangles(const struct RfMesh *mesh, uint32_t *buffer, size_t capacity);

// Writes a binary little-endian PLY file.
//
// # Safety
// `mesh` must be live; `path` NUL-terminated.
enum RfStatus rf_mesh_write_ply(const struct RfMesh *mesh, const char *path);

// # Safety
// `mesh` must come from [`rf_mesh_extract`] or be NULL.
void rf_mesh_free(struct RfMesh *mesh);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANGEFUSE_H */
