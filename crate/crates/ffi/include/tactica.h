#ifndef TACTICA_H
#define TACTICA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TacticaStatus {
  TACTICA_STATUS_OK = 0,
  TACTICA_STATUS_NULL_POINTER = 1,
  TACTICA_STATUS_INVALID_ARGUMENT = 2,
  TACTICA_STATUS_IO = 3,
  TACTICA_STATUS_MODEL = 4,
  TACTICA_STATUS_DATA = 5,
  TACTICA_STATUS_INTERNAL = 6,
} TacticaStatus;

/**
 * Opaque trained model.
 */
typedef struct TacticaModel TacticaModel;

/**
 * Pitch dimensions in meters and dominance-grid cell size.
 */
typedef struct TacticaPitch {
  double length;
  double width;
  double grid_cell;
} TacticaPitch;

/**
 * One player for [`tactica_space_scores`]. Coordinates are already
 * normalized so the attacking team plays toward +x.
 */
typedef struct TacticaPlayer {
  uint32_t id;
  /**
   * Nonzero for the attacking team.
   */
  uint8_t attacking;
  double x;
  double y;
  double vx;
  double vy;
} TacticaPlayer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next tactica call on the same thread.
 */
const char *tactica_last_error_message(void);

/**
 * Load a model file; on success `*out` owns a new handle.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum TacticaStatus tactica_model_load(const char *path, struct TacticaModel **out);

/**
 * Release a handle from [`tactica_model_load`]. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void tactica_model_free(struct TacticaModel *model);

/**
 * # Safety
 * `model` must be a live handle and `out` a valid pointer.
 */
enum TacticaStatus tactica_model_num_features(const struct TacticaModel *model, size_t *out);

/**
 * Success probability for one feature row (NaN cells take the model's
 * training medians).
 *
 * # Safety
 * `row` must hold `len` doubles; `out` must be valid.
 */
enum TacticaStatus tactica_model_predict_proba(const struct TacticaModel *model,
                                               const double *row,
                                               size_t len,
                                               double *out);

/**
 * Shapley attribution of the margin: writes `len` values and the base value.
 *
 * # Safety
 * `row` and `values` must hold `len` doubles; `base_value` must be valid.
 */
enum TacticaStatus tactica_model_shap(const struct TacticaModel *model,
                                      const double *row,
                                      size_t len,
                                      double *values,
                                      double *base_value);

/**
 * Field weight of a point. A null `pitch` means the default 105 x 68 m.
 *
 * # Safety
 * `pitch` must be null or valid; `out` must be valid.
 */
enum TacticaStatus tactica_field_weight(const struct TacticaPitch *pitch,
                                        double beta,
                                        double x,
                                        double y,
                                        uint8_t attacking,
                                        double *out);

/**
 * Seconds for a player at (x, y) moving at (vx, vy) to reach (tx, ty).
 *
 * # Safety
 * `out` must be valid.
 */
enum TacticaStatus tactica_arrival_time(double x,
                                        double y,
                                        double vx,
                                        double vy,
                                        double tx,
                                        double ty,
                                        double reaction_time,
                                        double max_speed,
                                        double *out);

/**
 * Space score of every player in one frame. Offside attackers get score 0
 * and `excluded[i] = 1`.
 *
 * # Safety
 * `players`, `scores` and `excluded` must each hold `n` elements; `pitch`
 * must be null or valid.
 */
enum TacticaStatus tactica_space_scores(const struct TacticaPlayer *players,
                                        size_t n,
                                        double ball_x,
                                        double ball_y,
                                        const struct TacticaPitch *pitch,
                                        double reaction_time,
                                        double max_speed,
                                        double beta,
                                        double *scores,
                                        uint8_t *excluded);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TACTICA_H */
