#ifndef KERNMEM_H
#define KERNMEM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KmStatus {
  KmStatus_Ok = 0,
  KmStatus_NullPointer = 1,
  KmStatus_InvalidArgument = 2,
  KmStatus_Domain = 3,
  KmStatus_NonConvergence = 4,
  KmStatus_Data = 5,
  KmStatus_Io = 6,
  KmStatus_Panic = 7,
  KmStatus_Other = 8,
} KmStatus;

/**
 * Row-major matrix of embeddings.
 */
typedef struct KmEmbeddings KmEmbeddings;

/**
 * Hull distance of a lure to its studied set, and what it implies at
 * threshold `tau`.
 */
typedef struct KmConvexity {
  double delta_star;
  double margin;
  double tau;
  double lure_score;
  /**
   * `tau + margin - delta_star`.
   */
  double bound;
  bool accepted;
  bool bound_holds;
  /**
   * `delta_star < margin`.
   */
  bool premise_holds;
} KmConvexity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *km_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *km_version(void);

/**
 * Fraction of the unit sphere in `R^d` within angle `theta` (radians) of a
 * fixed direction.
 *
 * # Safety
 * `out` must be valid for one `double` write.
 */
enum KmStatus km_cap_fraction(size_t d, double theta, double *out);

/**
 * Copy `n × d` row-major doubles into a new handle.
 *
 * # Safety
 * `data` must point to `n * d` readable doubles (or be null when either is
 * zero); `out` must be valid for one pointer write.
 */
enum KmStatus km_embeddings_new(const double *data, size_t n, size_t d, struct KmEmbeddings **out);

/**
 * Read an embedding dump from `path`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for one
 * pointer write.
 */
enum KmStatus km_embeddings_load(const char *path, bool renormalize, struct KmEmbeddings **out);

/**
 * Release a handle; null is ignored.
 *
 * # Safety
 * `h` must be null or a handle not yet freed.
 */
void km_embeddings_free(struct KmEmbeddings *h);

/**
 * Row count and dimension of a handle.
 *
 * # Safety
 * `h` must be a live handle; `n` and `d` must each be null or writable.
 */
enum KmStatus km_embeddings_shape(const struct KmEmbeddings *h, size_t *n, size_t *d);

/**
 * Participation ratio of the covariance spectrum.
 *
 * # Safety
 * `h` must be a live handle; `out` valid for one `double` write.
 */
enum KmStatus km_participation_ratio(const struct KmEmbeddings *h, double *out);

/**
 * Maximum-likelihood intrinsic dimension with `k` neighbours.
 *
 * # Safety
 * `h` must be a live handle; `out` valid for one `double` write.
 */
enum KmStatus km_levina_bickel(const struct KmEmbeddings *h, size_t k, double *out);

/**
 * Distance from `lure` (length `d`) to the convex hull of the `k` studied
 * rows (`k × d`, row-major), with the acceptance bound at threshold `tau`.
 * When `weights` is non-null the `k` optimal hull weights are written
 * there.
 *
 * # Safety
 * `lure` must hold `d` doubles, `studied` `k * d` doubles; `out` must be
 * writable; `weights` must be null or hold `k` writable doubles.
 */
enum KmStatus km_delta_convexity(const double *lure,
                                 const double *studied,
                                 size_t k,
                                 size_t d,
                                 double tau,
                                 struct KmConvexity *out,
                                 double *weights);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KERNMEM_H */
