#ifndef CARVEMESH_H
#define CARVEMESH_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CmStatus {
  CM_STATUS_OK = 0,
  CM_STATUS_NULL_ARGUMENT = 1,
  CM_STATUS_INVALID_ARGUMENT = 2,
  CM_STATUS_CONFIG = 3,
  CM_STATUS_IO = 4,
  /**
   * A keyframe index did not increase, or a keyframe call came out of
   * sequence.
   */
  CM_STATUS_OUT_OF_ORDER = 5,
  CM_STATUS_UNKNOWN_ID = 6,
  /**
   * The triangulation or the manifold invariant failed.
   */
  CM_STATUS_RECONSTRUCTION = 7,
  /**
   * A Rust panic was caught at the boundary.
   */
  CM_STATUS_PANIC = 8,
} CmStatus;

typedef struct CmMesh CmMesh;

typedef struct CmReconstructor CmReconstructor;

/**
 * Per-keyframe counters returned by `cm_keyframe_end`.
 */
typedef struct CmKeyframeSummary {
  uint64_t index;
  double seconds;
  uint64_t new_points;
  uint64_t points_not_added;
  uint64_t vertices;
  uint64_t tets;
  uint64_t outside_tets;
} CmKeyframeSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread, or NULL. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *cm_last_error(void);

/**
 * Creates a reconstructor. `config_toml` may be NULL for defaults.
 *
 * # Safety
 * `config_toml` is NULL or a NUL-terminated string; `out` is writable.
 */
enum CmStatus cm_reconstructor_new(const char *config_toml, struct CmReconstructor **out);

/**
 * # Safety
 * `r` is NULL or a handle from `cm_reconstructor_new` not yet freed.
 */
void cm_reconstructor_free(struct CmReconstructor *r);

/**
 * Opens keyframe `index`, taken by camera `camera_id` at `center`.
 *
 * # Safety
 * `r` is a live handle; `center` points to three doubles.
 */
enum CmStatus cm_keyframe_begin(struct CmReconstructor *r,
                                uint64_t index,
                                uint32_t camera_id,
                                const double *center);

/**
 * # Safety
 * `r` is a live handle; `xyz` points to three doubles.
 */
enum CmStatus cm_keyframe_add_point(struct CmReconstructor *r,
                                    uint64_t point_id,
                                    const double *xyz);

/**
 * # Safety
 * `r` is a live handle; `xyz` points to three doubles.
 */
enum CmStatus cm_keyframe_move_point(struct CmReconstructor *r,
                                     uint64_t point_id,
                                     const double *xyz);

/**
 * # Safety
 * `r` is a live handle.
 */
enum CmStatus cm_keyframe_remove_point(struct CmReconstructor *r, uint64_t point_id);

/**
 * Records that camera `camera_id` sees point `point_id`.
 *
 * # Safety
 * `r` is a live handle.
 */
enum CmStatus cm_keyframe_observe(struct CmReconstructor *r, uint32_t camera_id, uint64_t point_id);

/**
 * Integrates the open keyframe. `summary` may be NULL.
 *
 * # Safety
 * `r` is a live handle; `summary` is NULL or writable.
 */
enum CmStatus cm_keyframe_end(struct CmReconstructor *r, struct CmKeyframeSummary *summary);

/**
 * Feeds every keyframe of a log file, stopping at the first failure.
 *
 * # Safety
 * `r` is a live handle; `path` is a NUL-terminated string.
 */
enum CmStatus cm_reconstructor_feed_log(struct CmReconstructor *r, const char *path);

/**
 * Extracts the current surface into a new mesh handle.
 *
 * # Safety
 * `r` is a live handle; `out` is writable.
 */
enum CmStatus cm_reconstructor_surface(const struct CmReconstructor *r, struct CmMesh **out);

/**
 * # Safety
 * `m` is NULL or a handle from `cm_reconstructor_surface` not yet freed.
 */
void cm_mesh_free(struct CmMesh *m);

/**
 * # Safety
 * `m` is a live mesh handle.
 */
size_t cm_mesh_vertex_count(const struct CmMesh *m);

/**
 * # Safety
 * `m` is a live mesh handle.
 */
size_t cm_mesh_triangle_count(const struct CmMesh *m);

/**
 * `3 * vertex_count` coordinates, owned by the mesh.
 *
 * # Safety
 * `m` is a live mesh handle.
 */
const double *cm_mesh_vertices(const struct CmMesh *m);

/**
 * `3 * triangle_count` vertex indices, counter-clockwise seen from the
 * free side, owned by the mesh.
 *
 * # Safety
 * `m` is a live mesh handle.
 */
const uint32_t *cm_mesh_triangles(const struct CmMesh *m);

/**
 * Writes the mesh as PLY or OFF, chosen by the file extension.
 *
 * # Safety
 * `m` is a live mesh handle; `path` is a NUL-terminated string.
 */
enum CmStatus cm_mesh_write(const struct CmMesh *m, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARVEMESH_H */
