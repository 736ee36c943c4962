/* Public C interface of libbbq: low-bit quantization (BBQ and baselines),
 * bit-exact 4-bit kernel simulation, entropy instrumentation, and the
 * desk-scale quantization-aware training harness.
 *
 * Conventions: every fallible call returns a bbq_status; on failure the
 * thread-local message from bbq_last_error() describes what went wrong.
 * Objects returned through out-parameters are owned by the caller and
 * released with the matching *_free function.
 */
#ifndef BBQ_H
#define BBQ_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bbq_status {
    BBQ_OK = 0,
    BBQ_ERR_IO = 1,
    BBQ_ERR_BAD_MAGIC = 2,
    BBQ_ERR_TRUNCATED = 3,
    BBQ_ERR_BAD_DTYPE = 4,
    BBQ_ERR_INVALID_ARGUMENT = 5,
    BBQ_ERR_DOMAIN = 6,
    BBQ_ERR_SHAPE = 7,
    BBQ_ERR_ENCODING = 8,
    BBQ_ERR_DIVERGED = 9,
    BBQ_ERR_INTERNAL = 10
} bbq_status;

typedef enum bbq_method {
    BBQ_METHOD_BBQ = 0,
    BBQ_METHOD_BBQ_FAST = 1,
    BBQ_METHOD_LSQ = 2,
    BBQ_METHOD_QUEST = 3,
    BBQ_METHOD_CODEBOOK = 4
} bbq_method;

typedef enum bbq_granularity {
    BBQ_PER_TENSOR = 0,
    BBQ_PER_CHANNEL = 1
} bbq_granularity;

typedef enum bbq_encoding {
    BBQ_ENC_RAW = 0,
    BBQ_ENC_INT4 = 1,
    BBQ_ENC_MXFP4 = 2
} bbq_encoding;

const char* bbq_status_name(bbq_status status);
const char* bbq_last_error(void);
const char* bbq_version(void);
void bbq_string_free(char* s);

/* ---------------------------------------------------------------- tensors */

typedef struct bbq_tensor bbq_tensor; /* opaque dense real32 tensor */

bbq_status bbq_tensor_create(const uint64_t* dims, size_t ndim, const float* data,
                             bbq_tensor** out);
void bbq_tensor_free(bbq_tensor* t);
size_t bbq_tensor_ndim(const bbq_tensor* t);
uint64_t bbq_tensor_dim(const bbq_tensor* t, size_t i);
size_t bbq_tensor_numel(const bbq_tensor* t);
const float* bbq_tensor_data(const bbq_tensor* t);

bbq_status bbq_tensor_read(const char* path, bbq_tensor** out);
bbq_status bbq_tensor_write(const bbq_tensor* t, const char* path);

/* ----------------------------------------------------------- quantization */

typedef struct bbq_qtensor bbq_qtensor; /* opaque packed 4-bit tensor */

typedef struct bbq_quant_config {
    bbq_method method;
    int bits;              /* 1..4 */
    uint64_t block;        /* Hadamard block size H */
    bbq_granularity granularity;
} bbq_quant_config;

/* Quantizes with freshly measured sigma; BBQ scales are initialized to
 * zeta* sigma0. The result can be packed to int4/mxfp4 per the support
 * matrix (b=4 int4-only, b=3 either, b in {1,2} mxfp4-only). */
bbq_status bbq_quantize(const bbq_tensor* x, const bbq_quant_config* cfg, bbq_qtensor** out);
bbq_status bbq_dequantize(const bbq_qtensor* q, bbq_tensor** out);
void bbq_qtensor_free(bbq_qtensor* q);

bbq_status bbq_qtensor_encode(const bbq_qtensor* q, bbq_encoding encoding, bbq_qtensor** out);
bbq_status bbq_qtensor_encoding(const bbq_qtensor* q, bbq_encoding* out);
size_t bbq_qtensor_numel(const bbq_qtensor* q);

/* Packed file plus a <path>.json sidecar carrying scales and method. */
bbq_status bbq_qtensor_write(const bbq_qtensor* q, const char* path);
bbq_status bbq_qtensor_read(const char* path, bbq_qtensor** out);

/* Empirical Shannon entropy of the stored codes, in bits. */
bbq_status bbq_qtensor_entropy(const bbq_qtensor* q, double* bits);

/* ------------------------------------------------------------- kernel sim */

/* a [M,K] x w [K,N] -> [M,N]; int4 operands accumulate exactly in int32,
 * mxfp4/raw operands in real32, scales applied once per output element. */
bbq_status bbq_lowprec_matmul(const bbq_qtensor* a, const bbq_qtensor* w, bbq_tensor** out);
bbq_status bbq_qtensor_transpose(const bbq_qtensor* q, bbq_qtensor** out);

/* MAC-count and wall-time report for quantize + matmul at the given sizes
 * (CSV text; informational only, this is a CPU simulation). */
bbq_status bbq_bench_csv(uint64_t m, uint64_t n, uint64_t k, int bits, uint64_t seed,
                         char** csv_text);

/* --------------------------------------------------------------- gaussian */

typedef struct bbq_zeta_estimate {
    double zeta_star;
    double mse_at_optimum;
    int64_t num_samples;
    uint64_t seed;
} bbq_zeta_estimate;

/* Monte-Carlo estimate of the magnitude-matching constant zeta*
 * (approximately 1.694); deterministic for a given seed. */
bbq_status bbq_estimate_zeta_star(int64_t num_samples, uint64_t seed, bbq_zeta_estimate* out);

/* Optimal uniform clip scale used by the QuEST baseline, per bit width. */
bbq_status bbq_quest_alpha_star(int bits, double* out);

/* --------------------------------------------------------------- training */

typedef struct bbq_train_config {
    bbq_method method;      /* BBQ/BBQ_FAST/LSQ/QUEST */
    int full_precision;     /* nonzero: train the unquantized baseline */
    int bits;
    uint64_t block;
    int iterations;
    int batch_size;
    double lr;
    double weight_decay;    /* never applied to scale parameters */
    int use_sgd;            /* nonzero: momentum SGD instead of Adam */
    double momentum;
    uint64_t seed;
    int vision_mode;        /* gamma recomputed as zeta*sigma each forward */
    double vision_zeta;     /* default 2.45 */
    int num_classes;
    int log_every;
} bbq_train_config;

void bbq_train_config_default(bbq_train_config* cfg);

typedef struct bbq_train_summary {
    int iterations_run;
    int diverged;
    double initial_loss;
    double final_loss;
    double final_train_accuracy;
    double initial_weight_entropy;
    double min_weight_entropy;
    double final_weight_entropy;
} bbq_train_summary;

/* Runs the toy-model training loop; writes log.csv and a checkpoint under
 * out_dir when it is non-NULL. Divergence (loss stuck above 10x its initial
 * value) reports BBQ_ERR_DIVERGED but still fills the summary and logs. */
bbq_status bbq_train(const bbq_train_config* cfg, const char* out_dir,
                     bbq_train_summary* out);

/* Per-layer and pooled weight entropy of a saved checkpoint, as CSV text. */
bbq_status bbq_checkpoint_entropy_csv(const char* checkpoint_dir, char** csv_text);

/* --------------------------------------------------------------- selftest */

/* Runs the invariant suite, printing one PASS/FAIL line per property to
 * stdout; returns the number of failures. */
int bbq_selftest(void);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* BBQ_H */
