#ifndef DETKIT_H
#define DETKIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DetkitStatus {
  DETKIT_STATUS_OK = 0,
  DETKIT_STATUS_NULL_POINTER = 1,
  DETKIT_STATUS_INVALID_ARGUMENT = 2,
  DETKIT_STATUS_IO = 3,
  DETKIT_STATUS_PARSE = 4,
  DETKIT_STATUS_PANIC = 5,
} DetkitStatus;

typedef struct DetkitDataset DetkitDataset;

typedef struct DetkitEvaluator DetkitEvaluator;

typedef struct DetkitRaster DetkitRaster;

/**
 * Box in normalized center format.
 */
typedef struct DetkitBox {
  double cx;
  double cy;
  double w;
  double h;
} DetkitBox;

typedef struct DetkitEvalSummary {
  /**
   * NaN when no class has ground truth.
   */
  double map50;
  /**
   * NaN when no class has ground truth.
   */
  double map50_95;
  uint64_t ground_truth;
  uint64_t detections;
} DetkitEvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *detkit_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *detkit_version(void);

/**
 * Copy an interleaved 8-bit raster (1 or 3 channels) into a new handle.
 *
 * # Safety
 * `data` must point to `len` readable bytes; `out` must be writable.
 */
enum DetkitStatus detkit_raster_new(uint32_t width,
                                    uint32_t height,
                                    uint8_t channels,
                                    const uint8_t *data,
                                    size_t len,
                                    struct DetkitRaster **out);

/**
 * # Safety
 * `raster` must come from this library and not be used afterwards.
 */
void detkit_raster_free(struct DetkitRaster *raster);

/**
 * # Safety
 * `raster` must be a live handle or null.
 */
uint32_t detkit_raster_width(const struct DetkitRaster *raster);

/**
 * # Safety
 * `raster` must be a live handle or null.
 */
uint32_t detkit_raster_height(const struct DetkitRaster *raster);

/**
 * # Safety
 * `raster` must be a live handle or null.
 */
uint8_t detkit_raster_channels(const struct DetkitRaster *raster);

/**
 * Borrow the samples; valid while the handle lives.
 *
 * # Safety
 * `raster` must be a live handle or null; `len` must be writable or null.
 */
const uint8_t *detkit_raster_data(const struct DetkitRaster *raster, size_t *len);

/**
 * Global histogram equalization. Color rasters are processed on luma.
 *
 * # Safety
 * `raster` must be a live handle; `out` must be writable.
 */
enum DetkitStatus detkit_raster_equalize(const struct DetkitRaster *raster,
                                         struct DetkitRaster **out);

/**
 * CLAHE over a `tiles_x` by `tiles_y` grid. A `clip_limit` that is not
 * positive (or NaN) disables clipping.
 *
 * # Safety
 * `raster` must be a live handle; `out` must be writable.
 */
enum DetkitStatus detkit_raster_clahe(const struct DetkitRaster *raster,
                                      uint32_t tiles_x,
                                      uint32_t tiles_y,
                                      double clip_limit,
                                      struct DetkitRaster **out);

/**
 * Gamma correction `255 * (v / 255) ^ gamma`.
 *
 * # Safety
 * `raster` must be a live handle; `out` must be writable.
 */
enum DetkitStatus detkit_raster_gamma(const struct DetkitRaster *raster,
                                      double gamma,
                                      struct DetkitRaster **out);

/**
 * IoU of two normalized boxes.
 *
 * # Safety
 * `out` must be writable.
 */
enum DetkitStatus detkit_iou(struct DetkitBox a, struct DetkitBox b, double *out);

/**
 * Generalized IoU of two normalized boxes.
 *
 * # Safety
 * `out` must be writable.
 */
enum DetkitStatus detkit_giou(struct DetkitBox a, struct DetkitBox b, double *out);

/**
 * Minimum-cost one-to-one assignment on a row-major `rows` by `cols`
 * matrix. Writes `min(rows, cols)` pairs sorted by row into `out_rows` and
 * `out_cols`, which must hold at least that many entries.
 *
 * # Safety
 * `cost` must point to `rows * cols` doubles; outputs must be writable.
 */
enum DetkitStatus detkit_hungarian(const double *cost,
                                   size_t rows,
                                   size_t cols,
                                   size_t *out_rows,
                                   size_t *out_cols,
                                   size_t *out_len,
                                   double *out_total);

/**
 * New evaluator over `num_classes` classes.
 *
 * # Safety
 * `out` must be writable.
 */
enum DetkitStatus detkit_evaluator_new(size_t num_classes, struct DetkitEvaluator **out);

/**
 * # Safety
 * `ev` must come from this library and not be used afterwards.
 */
void detkit_evaluator_free(struct DetkitEvaluator *ev);

/**
 * Register an image with no objects. Adding ground truth registers the
 * image too.
 *
 * # Safety
 * `ev` must be a live handle; `image_id` a NUL-terminated string.
 */
enum DetkitStatus detkit_evaluator_add_image(struct DetkitEvaluator *ev, const char *image_id);

/**
 * # Safety
 * `ev` must be a live handle; `image_id` a NUL-terminated string.
 */
enum DetkitStatus detkit_evaluator_add_ground_truth(struct DetkitEvaluator *ev,
                                                    const char *image_id,
                                                    size_t class_id,
                                                    struct DetkitBox bbox);

/**
 * # Safety
 * `ev` must be a live handle; `image_id` a NUL-terminated string.
 */
enum DetkitStatus detkit_evaluator_add_detection(struct DetkitEvaluator *ev,
                                                 const char *image_id,
                                                 size_t class_id,
                                                 double confidence,
                                                 struct DetkitBox bbox);

/**
 * Score the accumulated detections. `nms_iou` below zero (or NaN) skips
 * suppression.
 *
 * # Safety
 * `ev` must be a live handle; `out` must be writable.
 */
enum DetkitStatus detkit_evaluator_run(const struct DetkitEvaluator *ev,
                                       double conf_threshold,
                                       double nms_iou,
                                       struct DetkitEvalSummary *out);

/**
 * Load `root/images` and `root/labels`. `classes_file` may be null, in
 * which case `root/classes.txt` is used.
 *
 * # Safety
 * Strings must be NUL-terminated (or null for `classes_file`); `out` must
 * be writable.
 */
enum DetkitStatus detkit_dataset_load(const char *root,
                                      const char *classes_file,
                                      struct DetkitDataset **out);

/**
 * # Safety
 * `d` must come from this library and not be used afterwards.
 */
void detkit_dataset_free(struct DetkitDataset *d);

/**
 * # Safety
 * `d` must be a live handle or null.
 */
uint64_t detkit_dataset_image_count(const struct DetkitDataset *d);

/**
 * # Safety
 * `d` must be a live handle or null.
 */
uint64_t detkit_dataset_object_count(const struct DetkitDataset *d);

/**
 * # Safety
 * `d` must be a live handle or null.
 */
size_t detkit_dataset_class_count(const struct DetkitDataset *d);

/**
 * Objects of class `class_id`.
 *
 * # Safety
 * `d` must be a live handle; `out` must be writable.
 */
enum DetkitStatus detkit_dataset_class_objects(const struct DetkitDataset *d,
                                               size_t class_id,
                                               uint64_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DETKIT_H */
