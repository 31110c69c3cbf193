/* est.h -- C API for the EST spiking-transformer engine.
 *
 * All entry points return an est_status (EST_OK on success) or, for
 * constructors, a handle that is NULL on failure.  After any failure the
 * thread-local message from est_last_error() describes what went wrong.
 * Handles are opaque; free them with the matching est_*_free call.
 * Strings returned through out-parameters are heap-allocated and must be
 * released with est_string_free.
 */
#ifndef EST_EST_H
#define EST_EST_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum est_status {
  EST_OK = 0,
  EST_ERR_INVALID_ARGUMENT = 1,
  EST_ERR_DIMENSION = 2,
  EST_ERR_IO = 3,
  EST_ERR_PARSE = 4,
  EST_ERR_CONFIG = 5,
  EST_ERR_DIVERGENCE = 6,
  EST_ERR_SEQUENCING = 7,
  EST_ERR_ACCOUNTING = 8,
  EST_ERR_INTERNAL = 9
} est_status;

typedef struct est_dataset est_dataset;
typedef struct est_ann est_ann;
typedef struct est_snn est_snn;
typedef struct est_result est_result;

/* Name of a status code ("ok", "invalid_argument", ...). Static storage. */
const char* est_status_name(est_status status);

/* Message for the most recent failure on this thread. Static storage;
 * overwritten by the next failing call. */
const char* est_last_error(void);

void est_string_free(char* s);

/* ---- datasets ---- */

est_status est_dataset_generate(int n_per_class, int n_classes, int n_tokens,
                                int d_model, uint64_t seed, est_dataset** out);
est_status est_dataset_load_csv(const char* path, int n_tokens, int d_model,
                                est_dataset** out);
est_status est_dataset_load_idx(const char* image_path, const char* label_path,
                                int n_tokens, est_dataset** out);
est_status est_dataset_save_csv(const est_dataset* data, const char* path);
/* Contiguous half-open sample range [begin, end) as a new dataset. */
est_status est_dataset_slice(const est_dataset* data, int begin, int end,
                             est_dataset** out);
int est_dataset_size(const est_dataset* data);
int est_dataset_classes(const est_dataset* data);
int est_dataset_tokens(const est_dataset* data);
int est_dataset_dmodel(const est_dataset* data);
void est_dataset_free(est_dataset* data);

/* ---- analog model ---- */

est_status est_ann_create(int n_tokens, int d_model, int d_head, int d_ff,
                          int n_blocks, int n_classes, uint64_t seed,
                          est_ann** out);
est_status est_ann_train(est_ann* ann, const est_dataset* data, int epochs,
                         double lr, uint64_t seed, double* final_loss,
                         double* final_accuracy);
est_status est_ann_accuracy(const est_ann* ann, const est_dataset* data,
                            double* accuracy);
est_status est_ann_save(const est_ann* ann, const char* path);
est_status est_ann_load(const char* path, est_ann** out);
int est_ann_tokens(const est_ann* ann);
int est_ann_dmodel(const est_ann* ann);
int est_ann_classes(const est_ann* ann);
void est_ann_free(est_ann* ann);

/* ---- conversion ---- */

/* JSON report of per-population calibration at the given percentile. */
est_status est_calibration_report_json(const est_ann* ann,
                                       const est_dataset* calib,
                                       double percentile, char** out_json);

/* mode is "sa" or "psa"; rho is the PSA window fraction (ignored for "sa");
 * fixed_unit_gain nonzero pins the PSA gain to 1 instead of the automatic
 * full-window compensation; default_timesteps seeds the stored schedule. */
est_status est_convert(const est_ann* ann, const est_dataset* calib,
                       double percentile, const char* mode, double rho,
                       int fixed_unit_gain, int default_timesteps,
                       est_snn** out);
est_status est_snn_save(const est_snn* snn, const char* path);
est_status est_snn_load(const char* path, est_snn** out);
int est_snn_tokens(const est_snn* snn);
int est_snn_dmodel(const est_snn* snn);
void est_snn_free(est_snn* snn);

/* ---- inference and reporting ---- */

est_status est_snn_infer(const est_snn* snn, const est_dataset* data,
                         int timesteps, int workers, est_result** out);
double est_result_accuracy(const est_result* res);
int est_result_n_layers(const est_result* res);
const char* est_result_layer_name(const est_result* res, int layer);
double est_result_layer_mean_spikes(const est_result* res, int layer);
double est_result_layer_synops(const est_result* res, int layer);
double est_result_total_synops(const est_result* res);
double est_result_qk_score_synops(const est_result* res);
est_status est_result_write_metrics_csv(const est_result* res,
                                        const char* run_id, const char* path,
                                        int per_layer_rows);
est_status est_result_write_heatmap_csv(const est_result* res,
                                        const char* path);
est_status est_result_ops_json(const est_result* res, char** out_json);
void est_result_free(est_result* res);

/* One metrics row per timestep count, SA and PSA side by side not required:
 * runs the same model at each T and writes total rows. */
est_status est_write_sweep_csv(const est_snn* snn, const est_dataset* data,
                               const int* timesteps, int n_timesteps,
                               int workers, const char* run_id,
                               const char* path);

/* Full SA-vs-PSA comparison: calibrates the model once, converts twice,
 * runs both at the given T, and writes totals plus a reduction row. */
est_status est_write_compare_csv(const est_ann* ann, const est_dataset* calib,
                                 const est_dataset* eval, double percentile,
                                 int timesteps, double rho, int fixed_unit_gain,
                                 int workers, const char* run_id,
                                 const char* path);

#ifdef __cplusplus
}
#endif

#endif /* EST_EST_H */
