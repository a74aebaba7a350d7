#ifndef DET3D_H
#define DET3D_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every call.
 */
typedef enum Det3dStatus {
  DET3D_STATUS_OK = 0,
  DET3D_STATUS_NULL_POINTER = 1,
  DET3D_STATUS_INVALID_ARGUMENT = 2,
  DET3D_STATUS_OUT_OF_BOUNDS = 3,
  DET3D_STATUS_SHAPE = 4,
  DET3D_STATUS_DOMAIN = 5,
  DET3D_STATUS_CONFIG = 6,
  DET3D_STATUS_BEHIND_CAMERA = 7,
  DET3D_STATUS_FORMAT = 8,
  DET3D_STATUS_PARSE = 9,
  DET3D_STATUS_IO = 10,
  DET3D_STATUS_VALIDATION = 11,
  DET3D_STATUS_INTERNAL = 99,
} Det3dStatus;

/**
 * Camera projection matrix handle.
 */
typedef struct Det3dCamera Det3dCamera;

/**
 * Decoded detections handle.
 */
typedef struct Det3dDetections Det3dDetections;

/**
 * Feature map handle.
 */
typedef struct Det3dFeatureMap Det3dFeatureMap;

/**
 * Image box in pixels.
 */
typedef struct Det3dBox2D {
  double x_min;
  double y_min;
  double x_max;
  double y_max;
  uint32_t class_id;
  double score;
} Det3dBox2D;

/**
 * Settings for `det3d_decode_bundle_dir`.
 */
typedef struct Det3dDecodeConfig {
  double score_threshold;
  uint32_t nms_window;
  uint32_t top_k;
  double theta;
  /**
   * Nonzero to require the top-left corner above and left of the bottom-right.
   */
  uint8_t geometric_gate;
  uint32_t stride;
} Det3dDecodeConfig;

/**
 * 3D box in the camera frame; angles in degrees.
 */
typedef struct Det3dBox3D {
  double center[3];
  /**
   * Width, height, length in metres.
   */
  double dims[3];
  /**
   * Azimuth, elevation, roll.
   */
  double orientation[3];
  uint32_t class_id;
  double score;
} Det3dBox3D;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string. The
 * pointer stays valid until the next call on the same thread.
 */
const char *det3d_last_error(void);

/**
 * Creates a map from `h * w * c` row-major values. `role`: 0 heatmap,
 * 1 embedding, 2 offset, 3 generic.
 */
enum Det3dStatus det3d_feature_map_new(size_t height,
                                       size_t width,
                                       size_t channels,
                                       uint8_t role,
                                       const float *data,
                                       size_t len,
                                       struct Det3dFeatureMap **out_map);

void det3d_feature_map_free(struct Det3dFeatureMap *map);

enum Det3dStatus det3d_feature_map_shape(const struct Det3dFeatureMap *map,
                                         size_t *height,
                                         size_t *width,
                                         size_t *channels);

enum Det3dStatus det3d_feature_map_get(const struct Det3dFeatureMap *map,
                                       size_t row,
                                       size_t col,
                                       size_t channel,
                                       float *value);

/**
 * Borrowed pointer to the `h * w * c` values; valid while the map lives.
 */
const float *det3d_feature_map_data(const struct Det3dFeatureMap *map);

enum Det3dStatus det3d_feature_map_read_file(const char *path, struct Det3dFeatureMap **out_map);

enum Det3dStatus det3d_feature_map_write_file(const struct Det3dFeatureMap *map, const char *path);

/**
 * `axis`: 0 horizontal, 1 vertical. `sense`: 0 toward increasing index,
 * 1 toward decreasing index.
 */
enum Det3dStatus det3d_directional_max_scan(const struct Det3dFeatureMap *map,
                                            size_t channel,
                                            uint32_t axis,
                                            uint32_t sense,
                                            struct Det3dFeatureMap **out_map);

enum Det3dStatus det3d_center_pool(const struct Det3dFeatureMap *map,
                                   size_t channel,
                                   struct Det3dFeatureMap **out_map);

/**
 * `corner`: 0 top-left, 1 bottom-right.
 */
enum Det3dStatus det3d_cascade_corner_pool(const struct Det3dFeatureMap *map,
                                           size_t channel,
                                           uint32_t corner,
                                           struct Det3dFeatureMap **out_map);

enum Det3dStatus det3d_iou(const struct Det3dBox2D *a, const struct Det3dBox2D *b, double *value);

enum Det3dStatus det3d_diou(const struct Det3dBox2D *a, const struct Det3dBox2D *b, double *value);

enum Det3dStatus det3d_loss_diou(const struct Det3dBox2D *a,
                                 const struct Det3dBox2D *b,
                                 double *value);

/**
 * Scale-invariant log-depth error over `n` depth pairs.
 */
enum Det3dStatus det3d_sie(const double *truth, const double *pred, size_t n, double *value);

/**
 * Single-class AP of one frame. `interpolation`: 0 all-point, 1 eleven-point.
 * `defined` is set to 0 when there are neither detections nor truths.
 */
enum Det3dStatus det3d_average_precision(const struct Det3dBox2D *dets,
                                         size_t n_dets,
                                         const struct Det3dBox2D *truths,
                                         size_t n_truths,
                                         double iou_threshold,
                                         uint32_t interpolation,
                                         double *value,
                                         uint8_t *defined);

enum Det3dStatus det3d_mean_average_precision(const double *per_class, size_t n, double *value);

/**
 * Angle in degrees from `n` bins with uniform centers.
 */
enum Det3dStatus det3d_decode_multibin(const double *confidence,
                                       const double *cos_delta,
                                       const double *sin_delta,
                                       size_t n,
                                       double *angle);

/**
 * Camera from a row-major 3x4 projection matrix (12 values).
 */
enum Det3dStatus det3d_camera_new(const double *p, struct Det3dCamera **out_camera);

void det3d_camera_free(struct Det3dCamera *camera);

enum Det3dStatus det3d_project_point(const struct Det3dCamera *camera,
                                     const double *point,
                                     double *u,
                                     double *v);

/**
 * Writes the camera-frame point with depth `z` seen at pixel `(u, v)` into
 * `point[0..3]`.
 */
enum Det3dStatus det3d_back_project(const struct Det3dCamera *camera,
                                    double u,
                                    double v,
                                    double z,
                                    double *point);

/**
 * Decodes a directory of FMAP files. `camera` may be null, in which case
 * no 3D boxes are produced.
 */
enum Det3dStatus det3d_decode_bundle_dir(const char *path,
                                         const struct Det3dDecodeConfig *config,
                                         const struct Det3dCamera *camera,
                                         struct Det3dDetections **out_detections);

/**
 * Decode settings used by the command line tool.
 */
struct Det3dDecodeConfig det3d_decode_config_default(void);

size_t det3d_detections_len(const struct Det3dDetections *dets);

enum Det3dStatus det3d_detections_box2d(const struct Det3dDetections *dets,
                                        size_t index,
                                        struct Det3dBox2D *value);

/**
 * Sets `has_box3d` to 0 when the detection could not be lifted to 3D.
 */
enum Det3dStatus det3d_detections_box3d(const struct Det3dDetections *dets,
                                        size_t index,
                                        struct Det3dBox3D *value,
                                        uint8_t *has_box3d);

void det3d_detections_free(struct Det3dDetections *dets);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DET3D_H */
