/* Copyright 2026 The learnjpeg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License"); you
 * may not use this file except in compliance with the License.  You
 * may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
 * implied.  See the License for the specific language governing
 * permissions and limitations under the License.
 */

/* C interface to learnjpeg.  Every call returns a status; on failure the
 * message is available from ljpg_last_error() on the same thread until
 * the next failing call.  Objects are opaque and owned by the caller. */

#ifndef LEARNJPEG_H_
#define LEARNJPEG_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define LJPG_API __declspec(dllexport)
#else
#define LJPG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ljpg_status {
  LJPG_OK = 0,
  LJPG_E_USAGE = 1,    /* argument outside its domain */
  LJPG_E_IO = 2,       /* file could not be read or written */
  LJPG_E_FORMAT = 3,   /* malformed or unsupported image, stream or checkpoint */
  LJPG_E_NUMERIC = 4,  /* non-finite values during training */
  LJPG_E_INTERNAL = 5
} ljpg_status;

typedef struct ljpg_image ljpg_image;
typedef struct ljpg_model ljpg_model;

/* Receives one line of text (no trailing newline). */
typedef void (*ljpg_log_fn)(const char* line, void* user);

LJPG_API const char* ljpg_version(void);
LJPG_API const char* ljpg_last_error(void);

/* Images: interleaved 8-bit RGB. */
LJPG_API ljpg_status ljpg_image_create(int width, int height, const uint8_t* rgb, ljpg_image** out);
LJPG_API ljpg_status ljpg_image_read_ppm(const char* path, ljpg_image** out);
LJPG_API ljpg_status ljpg_image_write_ppm(const ljpg_image* img, const char* path);
LJPG_API int ljpg_image_width(const ljpg_image* img);
LJPG_API int ljpg_image_height(const ljpg_image* img);
LJPG_API const uint8_t* ljpg_image_data(const ljpg_image* img);
LJPG_API void ljpg_image_free(ljpg_image* img);

/* Byte buffers returned by the library; release with ljpg_buffer_free. */
LJPG_API ljpg_status ljpg_read_file(const char* path, uint8_t** data, size_t* size);
LJPG_API ljpg_status ljpg_write_file(const char* path, const uint8_t* data, size_t size);
LJPG_API void ljpg_buffer_free(uint8_t* data);

/* Baseline JFIF with Annex K tables scaled to `quality` (1..100). */
LJPG_API ljpg_status ljpg_encode_quality(const ljpg_image* img, int quality, uint8_t** data,
                                         size_t* size);
/* JFIF carrying the model's exported tables and edited coefficients. */
LJPG_API ljpg_status ljpg_encode_model(const ljpg_model* model, const ljpg_image* img,
                                       uint8_t** data, size_t* size);
LJPG_API ljpg_status ljpg_decode(const uint8_t* data, size_t size, ljpg_image** out);

LJPG_API ljpg_status ljpg_psnr(const ljpg_image* a, const ljpg_image* b, double* out);

/* Models are loaded from training checkpoints. */
LJPG_API ljpg_status ljpg_model_load(const char* checkpoint_path, ljpg_model** out);
LJPG_API void ljpg_model_free(ljpg_model* model);
/* Exported integer tables, natural (row-major) order. */
LJPG_API ljpg_status ljpg_model_qtables(const ljpg_model* model, int luma[64], int chroma[64]);

/* `config_path` may be NULL for the defaults.  `log` receives warnings and
 * one "step,loss,d,r,al,lr" line per step. */
LJPG_API ljpg_status ljpg_train(const char* config_path, const char* data_dir, const char* out_path,
                                ljpg_log_fn log, void* user);

/* `baseline_quality` 0 selects the quality whose bpp is nearest the model's. */
LJPG_API ljpg_status ljpg_evaluate(const ljpg_model* model, const char* data_dir,
                                   const char* csv_path, int baseline_quality, ljpg_log_fn log,
                                   void* user);

#ifdef __cplusplus
}
#endif

#endif /* LEARNJPEG_H_ */
