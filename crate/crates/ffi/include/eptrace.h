#ifndef EPTRACE_H
#define EPTRACE_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EptStatus {
  EPT_STATUS_OK = 0,
  EPT_STATUS_NULL_POINTER = 1,
  EPT_STATUS_INVALID_ARGUMENT = 2,
  EPT_STATUS_SHAPE_MISMATCH = 3,
  EPT_STATUS_OUT_OF_BOUNDS = 4,
  EPT_STATUS_EMPTY_MASK = 5,
  EPT_STATUS_UNREACHABLE = 6,
  EPT_STATUS_BUFFER_TOO_SMALL = 7,
  EPT_STATUS_FORMAT = 8,
  EPT_STATUS_PANIC = 9,
} EptStatus;

// Matrix of doubles.
typedef struct EptGrid EptGrid;

// Binary mask.
typedef struct EptMask EptMask;

// Monte-Carlo stack of `passes` probability maps.
typedef struct EptStack EptStack;

typedef struct EptPoint {
  size_t row;
  size_t col;
} EptPoint;

typedef struct EptExtremePoints {
  struct EptPoint top;
  struct EptPoint bottom;
  struct EptPoint left;
  struct EptPoint right;
} EptExtremePoints;

typedef struct EptLosses {
  double boxalign;
  double usc;
  double pl;
  double total;
} EptLosses;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer is
// valid until the next failing call on the same thread.
const char *ept_last_error(void);

// Library version as a static NUL-terminated string.
const char *ept_version(void);

// Copies `height * width` row-major values into a new grid.
//
// # Safety
// `data` must point to `height * width` readable doubles; `out` must be writable.
enum EptStatus ept_grid_new(size_t height, size_t width, const double *data, struct EptGrid **out);

// # Safety
// `grid` must come from this library and not be used afterwards. Null is a no-op.
void ept_grid_free(struct EptGrid *grid);

// # Safety
// `grid` must be a live handle; `height` and `width` must be writable.
enum EptStatus ept_grid_shape(const struct EptGrid *grid, size_t *height, size_t *width);

// Copies the grid values (row-major) into `buf`, which must hold `len >= height * width` doubles.
//
// # Safety
// `grid` must be a live handle; `buf` must be writable for `len` doubles.
enum EptStatus ept_grid_copy(const struct EptGrid *grid, double *buf, size_t len);

// New mask from `height * width` bytes; nonzero is foreground.
//
// # Safety
// `data` must point to `height * width` readable bytes; `out` must be writable.
enum EptStatus ept_mask_new(size_t height, size_t width, const uint8_t *data, struct EptMask **out);

// # Safety
// `mask` must come from this library and not be used afterwards. Null is a no-op.
void ept_mask_free(struct EptMask *mask);

// # Safety
// `mask` must be a live handle; `height` and `width` must be writable.
enum EptStatus ept_mask_shape(const struct EptMask *mask, size_t *height, size_t *width);

// Number of foreground pixels.
//
// # Safety
// `mask` must be a live handle; `count` must be writable.
enum EptStatus ept_mask_count(const struct EptMask *mask, size_t *count);

// Copies the mask as 0/1 bytes (row-major) into `buf`.
//
// # Safety
// `mask` must be a live handle; `buf` must be writable for `len` bytes.
enum EptStatus ept_mask_copy(const struct EptMask *mask, uint8_t *buf, size_t len);

// New stack from `passes * height * width` values in (pass, row, col) order.
//
// # Safety
// `data` must point to `passes * height * width` readable doubles; `out` must be writable.
enum EptStatus ept_stack_new(size_t passes,
                             size_t height,
                             size_t width,
                             const double *data,
                             struct EptStack **out);

// # Safety
// `stack` must come from this library and not be used afterwards. Null is a no-op.
void ept_stack_free(struct EptStack *stack);

// # Safety
// `mask` must be a live handle; `out` must be writable.
enum EptStatus ept_extract_extreme_points(const struct EptMask *mask, struct EptExtremePoints *out);

// Cost map `1 / (G + alpha * U + eps)` from the stack's mean gradient and
// normalized variance.
//
// # Safety
// `stack` must be a live handle; `out` must be writable.
enum EptStatus ept_cost_map(const struct EptStack *stack,
                            double alpha,
                            double eps,
                            struct EptGrid **out);

// Traces the contour through the extreme points on a positive cost grid
// and fills it.
//
// # Safety
// `cost` must be a live handle; `ep` readable; `out` writable.
enum EptStatus ept_trace(const struct EptGrid *cost,
                         const struct EptExtremePoints *ep,
                         size_t margin,
                         struct EptMask **out);

// Full refresh step: stack statistics, cost map, trace and fill.
//
// # Safety
// `stack` must be a live handle; `ep` readable; `out` writable.
enum EptStatus ept_refine_pseudo_label(const struct EptStack *stack,
                                       const struct EptExtremePoints *ep,
                                       double alpha,
                                       size_t margin,
                                       struct EptMask **out);

// # Safety
// `a`, `b` must be live handles; `out` writable.
enum EptStatus ept_iou(const struct EptMask *a, const struct EptMask *b, double *out);

// # Safety
// `a`, `b` must be live handles; `out` writable.
enum EptStatus ept_dice(const struct EptMask *a, const struct EptMask *b, double *out);

// Loss components for two probability maps, the box of `ep` and a pseudo
// label, with default loss settings.
//
// # Safety
// All handles must be live; `ep` readable; `out` writable.
enum EptStatus ept_losses(const struct EptGrid *p1,
                          const struct EptGrid *p2,
                          const struct EptMask *pseudo,
                          const struct EptExtremePoints *ep,
                          double lambda1,
                          double lambda2,
                          struct EptLosses *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EPTRACE_H */
