/* Copyright 2026 The AFANet Desk Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the AFANet desk pipeline. Every call takes a context that
 * owns the message of the last error and the text output of the last call.
 * Strings returned by the library stay valid until the next call on the same
 * context or until the context is destroyed.
 */
#ifndef AFANET_AFANET_H_
#define AFANET_AFANET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(AFANET_BUILDING_LIBRARY)
#define AFANET_API __attribute__((visibility("default")))
#else
#define AFANET_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum afanet_status {
  AFANET_OK = 0,
  AFANET_ERR_INVALID_ARGUMENT = 1,
  AFANET_ERR_SHAPE = 2,
  AFANET_ERR_IO = 3,
  AFANET_ERR_FORMAT = 4,
  AFANET_ERR_NUMERIC = 5,
  AFANET_ERR_INTERNAL = 6
} afanet_status;

typedef struct afanet_context afanet_context;
typedef struct afanet_tensor afanet_tensor;

AFANET_API const char* afanet_version(void);
AFANET_API const char* afanet_status_string(afanet_status status);

AFANET_API afanet_context* afanet_context_create(void);
AFANET_API void afanet_context_destroy(afanet_context* ctx);
/* Empty string when the last call succeeded. */
AFANET_API const char* afanet_last_error(const afanet_context* ctx);
/* JSON or CSV text produced by the last call, empty if none. */
AFANET_API const char* afanet_last_output(const afanet_context* ctx);

/* Renders the synthetic shape dataset into out_dir. */
AFANET_API afanet_status afanet_gen_dataset(afanet_context* ctx, uint64_t seed, uint32_t per_class,
                                            uint32_t backgrounds, const char* out_dir);

/* Writes a CLIPEMB1 table of pseudo embeddings. class_names_json is a JSON
 * array of strings; NULL selects the dataset's shape classes. */
AFANET_API afanet_status afanet_gen_embeddings(afanet_context* ctx, const char* class_names_json,
                                               uint32_t dim, uint64_t seed, const char* out_path);

/* Trains from a JSON configuration. Either output path may be NULL. The last
 * output is the loss curve as CSV. */
AFANET_API afanet_status afanet_train(afanet_context* ctx, const char* config_json,
                                      const char* checkpoint_out, const char* loss_csv_out);

/* Evaluates a checkpoint on its fold's novel classes. The last output is the
 * JSON report. */
AFANET_API afanet_status afanet_evaluate(afanet_context* ctx, const char* checkpoint_path,
                                         const char* config_json);

/* Runs the finite-difference suite. *all_passed is set to 1 iff every case
 * passed. The last output is a JSON summary. */
AFANET_API afanet_status afanet_gradcheck(afanet_context* ctx, uint32_t seeds, uint64_t base_seed,
                                          int* all_passed);

/* Writes CAM pseudo-masks and query predictions of a checkpoint as PGM files,
 * up to per_class images per class. */
AFANET_API afanet_status afanet_cam_dump(afanet_context* ctx, const char* checkpoint_path,
                                         const char* config_json, uint32_t per_class,
                                         const char* out_dir);

/* Runs the module/adapter/loss-weight ablation described by request_json:
 * {"config": {...}, "modules": [...], "adapter_sizes": [...],
 *  "alpha_betas": [[a, b], ...], "seeds": [...]}. The last output is CSV. */
AFANET_API afanet_status afanet_ablate(afanet_context* ctx, const char* request_json,
                                       const char* csv_out);

/* Dense float32 tensors. */
AFANET_API afanet_status afanet_tensor_create(afanet_context* ctx, const uint32_t* dims,
                                              uint32_t ndim, const float* data,
                                              afanet_tensor** out);
AFANET_API afanet_status afanet_tensor_load(afanet_context* ctx, const char* path,
                                            afanet_tensor** out);
AFANET_API afanet_status afanet_tensor_save(afanet_context* ctx, const afanet_tensor* tensor,
                                            const char* path);
AFANET_API uint32_t afanet_tensor_ndim(const afanet_tensor* tensor);
AFANET_API uint32_t afanet_tensor_dim(const afanet_tensor* tensor, uint32_t axis);
AFANET_API size_t afanet_tensor_numel(const afanet_tensor* tensor);
AFANET_API const float* afanet_tensor_data(const afanet_tensor* tensor);
AFANET_API void afanet_tensor_destroy(afanet_tensor* tensor);

#ifdef __cplusplus
}
#endif

#endif /* AFANET_AFANET_H_ */
