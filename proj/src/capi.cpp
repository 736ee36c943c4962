#include "bbq.h"

#include <chrono>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include "entropy.hpp"
#include "kernelsim.hpp"
#include "selftest.hpp"
#include "training.hpp"

#include "json.hpp"

using nlohmann::json;

struct bbq_tensor {
    bbq::Tensor t;
};

struct bbq_qtensor {
    bbq::QuantizedTensor q;
};

namespace {

thread_local std::string g_last_error;

bbq_status status_of(bbq::ErrorCode code) {
    return static_cast<bbq_status>(static_cast<int>(code));
}

template <typename F>
bbq_status guarded(F&& fn) {
    try {
        fn();
        return BBQ_OK;
    } catch (const bbq::Error& e) {
        g_last_error = e.what();
        return status_of(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return BBQ_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

bbq::Method to_method(bbq_method m) {
    switch (m) {
        case BBQ_METHOD_BBQ: return bbq::Method::bbq;
        case BBQ_METHOD_BBQ_FAST: return bbq::Method::bbq_fast;
        case BBQ_METHOD_LSQ: return bbq::Method::lsq;
        case BBQ_METHOD_QUEST: return bbq::Method::quest;
        case BBQ_METHOD_CODEBOOK: return bbq::Method::codebook;
    }
    bbq::fail(bbq::ErrorCode::invalid_argument, "unknown method enum value");
}

bbq::Encoding to_encoding(bbq_encoding e) {
    switch (e) {
        case BBQ_ENC_RAW: return bbq::Encoding::raw_codes;
        case BBQ_ENC_INT4: return bbq::Encoding::int4;
        case BBQ_ENC_MXFP4: return bbq::Encoding::mxfp4;
    }
    bbq::fail(bbq::ErrorCode::invalid_argument, "unknown encoding enum value");
}

bbq_encoding from_encoding(bbq::Encoding e) {
    switch (e) {
        case bbq::Encoding::raw_codes: return BBQ_ENC_RAW;
        case bbq::Encoding::int4: return BBQ_ENC_INT4;
        case bbq::Encoding::mxfp4: return BBQ_ENC_MXFP4;
    }
    return BBQ_ENC_RAW;
}

void require_arg(const void* p, const char* name) {
    bbq::require(p != nullptr, bbq::ErrorCode::invalid_argument,
                 std::string(name) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* bbq_status_name(bbq_status status) {
    switch (status) {
        case BBQ_OK: return "ok";
        case BBQ_ERR_IO: return "io-error";
        case BBQ_ERR_BAD_MAGIC: return "bad-magic";
        case BBQ_ERR_TRUNCATED: return "truncated";
        case BBQ_ERR_BAD_DTYPE: return "bad-dtype";
        case BBQ_ERR_INVALID_ARGUMENT: return "invalid-argument";
        case BBQ_ERR_DOMAIN: return "domain-error";
        case BBQ_ERR_SHAPE: return "shape-mismatch";
        case BBQ_ERR_ENCODING: return "encoding-error";
        case BBQ_ERR_DIVERGED: return "diverged";
        case BBQ_ERR_INTERNAL: return "internal-error";
    }
    return "unknown";
}

const char* bbq_last_error(void) {
    return g_last_error.c_str();
}

const char* bbq_version(void) {
    return "1.0.0";
}

void bbq_string_free(char* s) {
    std::free(s);
}

/* ---------------------------------------------------------------- tensors */

bbq_status bbq_tensor_create(const uint64_t* dims, size_t ndim, const float* data,
                             bbq_tensor** out) {
    return guarded([&] {
        require_arg(out, "out");
        require_arg(dims, "dims");
        require_arg(data, "data");
        std::vector<size_t> shape(dims, dims + ndim);
        std::vector<float> values(data, data + bbq::shape_numel(shape));
        *out = new bbq_tensor{bbq::Tensor(std::move(shape), std::move(values))};
    });
}

void bbq_tensor_free(bbq_tensor* t) {
    delete t;
}

size_t bbq_tensor_ndim(const bbq_tensor* t) {
    return t ? t->t.ndim() : 0;
}

uint64_t bbq_tensor_dim(const bbq_tensor* t, size_t i) {
    if (!t || i >= t->t.ndim()) return 0;
    return t->t.shape()[i];
}

size_t bbq_tensor_numel(const bbq_tensor* t) {
    return t ? t->t.numel() : 0;
}

const float* bbq_tensor_data(const bbq_tensor* t) {
    return t ? t->t.data().data() : nullptr;
}

bbq_status bbq_tensor_read(const char* path, bbq_tensor** out) {
    return guarded([&] {
        require_arg(path, "path");
        require_arg(out, "out");
        *out = new bbq_tensor{bbq::read_tensor(path)};
    });
}

bbq_status bbq_tensor_write(const bbq_tensor* t, const char* path) {
    return guarded([&] {
        require_arg(t, "tensor");
        require_arg(path, "path");
        bbq::write_tensor(t->t, path);
    });
}

/* ----------------------------------------------------------- quantization */

bbq_status bbq_quantize(const bbq_tensor* x, const bbq_quant_config* cfg, bbq_qtensor** out) {
    return guarded([&] {
        require_arg(x, "tensor");
        require_arg(cfg, "config");
        require_arg(out, "out");
        const bbq::Method method = to_method(cfg->method);
        const bbq::Granularity gran = cfg->granularity == BBQ_PER_CHANNEL
                                          ? bbq::Granularity::per_channel
                                          : bbq::Granularity::per_tensor;
        switch (method) {
            case bbq::Method::bbq:
            case bbq::Method::bbq_fast: {
                bbq::QuantConfig qc{method, cfg->bits, static_cast<size_t>(cfg->block), gran};
                bbq::QuantizeTrace trace =
                    bbq::bbq_quantize_trace(x->t.to_double(), x->t.shape(), qc);
                size_t d = bbq::scale_group_size(x->t.shape(), gran);
                bbq::ScaleParam scale = bbq::make_scale_param(trace.sigma, d);
                *out = new bbq_qtensor{bbq::trace_to_quantized(trace, method, scale.gamma)};
                return;
            }
            case bbq::Method::lsq: {
                std::vector<double> values = x->t.to_double();
                bbq::LsqConfig lc{bbq::lsq_init_step(values, cfg->bits), cfg->bits};
                auto [qt, trace] = bbq::lsq_quantize(x->t, lc);
                *out = new bbq_qtensor{std::move(qt)};
                return;
            }
            case bbq::Method::quest: {
                bbq::QuestConfig qc{bbq::quest_alpha_star(cfg->bits), cfg->bits,
                                    static_cast<size_t>(cfg->block), gran};
                auto [qt, trace] = bbq::quest_quantize(x->t, qc, {qc.block});
                *out = new bbq_qtensor{std::move(qt)};
                return;
            }
            case bbq::Method::codebook: {
                bbq::require(gran == bbq::Granularity::per_tensor,
                             bbq::ErrorCode::invalid_argument,
                             "codebook quantization is per-tensor");
                std::vector<double> values = x->t.to_double();
                double sumsq = 0.0;
                for (double v : values) sumsq += v * v;
                double sigma = std::sqrt(sumsq / static_cast<double>(values.size()));
                bbq::require(sigma > 0.0, bbq::ErrorCode::domain,
                             "input tensor has zero RMS");
                bbq::Codebook cb = bbq::build_nf_codebook(cfg->bits);
                *out = new bbq_qtensor{bbq::codebook_quantize(x->t, cb, sigma)};
                return;
            }
        }
    });
}

bbq_status bbq_dequantize(const bbq_qtensor* q, bbq_tensor** out) {
    return guarded([&] {
        require_arg(q, "qtensor");
        require_arg(out, "out");
        switch (q->q.method) {
            case bbq::Method::bbq:
            case bbq::Method::bbq_fast:
                *out = new bbq_tensor{bbq::bbq_dequantize(q->q)};
                return;
            case bbq::Method::lsq:
                *out = new bbq_tensor{bbq::lsq_dequantize(q->q)};
                return;
            case bbq::Method::quest:
                *out = new bbq_tensor{bbq::quest_dequantize(q->q)};
                return;
            case bbq::Method::codebook:
                *out = new bbq_tensor{bbq::codebook_dequantize(q->q)};
                return;
        }
    });
}

void bbq_qtensor_free(bbq_qtensor* q) {
    delete q;
}

bbq_status bbq_qtensor_encode(const bbq_qtensor* q, bbq_encoding encoding, bbq_qtensor** out) {
    return guarded([&] {
        require_arg(q, "qtensor");
        require_arg(out, "out");
        *out = new bbq_qtensor{bbq::encode_codes(q->q, to_encoding(encoding))};
    });
}

bbq_status bbq_qtensor_encoding(const bbq_qtensor* q, bbq_encoding* out) {
    return guarded([&] {
        require_arg(q, "qtensor");
        require_arg(out, "out");
        *out = from_encoding(q->q.encoding);
    });
}

size_t bbq_qtensor_numel(const bbq_qtensor* q) {
    return q ? q->q.numel() : 0;
}

bbq_status bbq_qtensor_write(const bbq_qtensor* q, const char* path) {
    return guarded([&] {
        require_arg(q, "qtensor");
        require_arg(path, "path");
        bbq::write_packed(q->q.shape, q->q.packed, path);
        json meta;
        meta["format"] = "bbq-quantized";
        meta["version"] = 1;
        meta["method"] = bbq::method_name(q->q.method);
        meta["encoding"] = bbq::encoding_name(q->q.encoding);
        meta["bits"] = q->q.bits;
        meta["zero_point"] = q->q.zero_point;
        meta["block"] = q->q.block;
        meta["scale_axis"] = bbq::scale_axis_name(q->q.scale_axis);
        meta["scales"] = q->q.scales;
        if (!q->q.codebook.empty()) meta["codebook"] = q->q.codebook;
        std::ofstream os(std::string(path) + ".json", std::ios::trunc);
        bbq::require(os.good(), bbq::ErrorCode::io,
                     std::string(path) + ".json: cannot open for writing");
        os << meta.dump(2) << "\n";
        bbq::require(os.good(), bbq::ErrorCode::io, std::string(path) + ".json: write failed");
    });
}

bbq_status bbq_qtensor_read(const char* path, bbq_qtensor** out) {
    return guarded([&] {
        require_arg(path, "path");
        require_arg(out, "out");
        bbq::QuantizedTensor qt;
        bbq::read_packed(path, qt.shape, qt.packed);
        std::ifstream is(std::string(path) + ".json");
        bbq::require(is.good(), bbq::ErrorCode::io,
                     std::string(path) + ".json: missing quantization sidecar");
        json meta = json::parse(is, nullptr, false);
        bbq::require(!meta.is_discarded() && meta.value("format", "") == "bbq-quantized",
                     bbq::ErrorCode::bad_dtype,
                     std::string(path) + ".json: not a quantization sidecar");
        qt.method = bbq::parse_method(meta.at("method").get<std::string>());
        qt.encoding = bbq::parse_encoding(meta.at("encoding").get<std::string>());
        qt.bits = meta.at("bits").get<int>();
        qt.zero_point = meta.at("zero_point").get<double>();
        qt.block = meta.at("block").get<size_t>();
        qt.scale_axis = bbq::parse_scale_axis(meta.at("scale_axis").get<std::string>());
        qt.scales = meta.at("scales").get<std::vector<double>>();
        if (meta.contains("codebook"))
            qt.codebook = meta.at("codebook").get<std::vector<double>>();
        bbq::validate_quantized(qt);
        *out = new bbq_qtensor{std::move(qt)};
    });
}

bbq_status bbq_qtensor_entropy(const bbq_qtensor* q, double* bits) {
    return guarded([&] {
        require_arg(q, "qtensor");
        require_arg(bits, "bits");
        *bits = bbq::entropy(q->q);
    });
}

/* ------------------------------------------------------------- kernel sim */

bbq_status bbq_lowprec_matmul(const bbq_qtensor* a, const bbq_qtensor* w, bbq_tensor** out) {
    return guarded([&] {
        require_arg(a, "a");
        require_arg(w, "w");
        require_arg(out, "out");
        *out = new bbq_tensor{bbq::lowprec_matmul(a->q, w->q)};
    });
}

bbq_status bbq_qtensor_transpose(const bbq_qtensor* q, bbq_qtensor** out) {
    return guarded([&] {
        require_arg(q, "qtensor");
        require_arg(out, "out");
        *out = new bbq_qtensor{bbq::transpose_quantized(q->q)};
    });
}

bbq_status bbq_bench_csv(uint64_t m, uint64_t n, uint64_t k, int bits, uint64_t seed,
                         char** csv_text) {
    return guarded([&] {
        require_arg(csv_text, "csv_text");
        using clock = std::chrono::steady_clock;
        bbq::require(m > 0 && n > 0 && k > 0, bbq::ErrorCode::invalid_argument,
                     "bench sizes must be positive");
        const size_t block = std::min<size_t>(128, k);
        bbq::require(k % block == 0, bbq::ErrorCode::invalid_argument,
                     "k must be a multiple of the block size");

        bbq::Rng rng(bbq::derive_seed(seed, 0xbe9cULL));
        std::vector<float> av(m * k), wv(k * n);
        for (float& v : av) v = static_cast<float>(bbq::sample_standard_normal(rng));
        for (float& v : wv) v = static_cast<float>(bbq::sample_standard_normal(rng));
        bbq::Tensor a({static_cast<size_t>(m), static_cast<size_t>(k)}, std::move(av));
        bbq::Tensor w({static_cast<size_t>(k), static_cast<size_t>(n)}, std::move(wv));

        bbq::QuantConfig qc{bbq::Method::bbq, bits, block, bbq::Granularity::per_tensor};
        const bbq::Encoding enc = bits >= 3 ? bbq::Encoding::int4 : bbq::Encoding::mxfp4;

        auto t0 = clock::now();
        bbq::QuantizeTrace ta = bbq::bbq_quantize_trace(a.to_double(), a.shape(), qc);
        bbq::ScaleParam sa = bbq::make_scale_param(ta.sigma, a.numel());
        bbq::QuantizedTensor qa =
            bbq::encode_codes(bbq::trace_to_quantized(ta, bbq::Method::bbq, sa.gamma), enc);
        auto t1 = clock::now();

        bbq::QuantizeTrace tw = bbq::bbq_quantize_trace(w.to_double(), w.shape(), qc);
        bbq::ScaleParam sw = bbq::make_scale_param(tw.sigma, w.numel());
        bbq::QuantizedTensor qw =
            bbq::encode_codes(bbq::trace_to_quantized(tw, bbq::Method::bbq, sw.gamma), enc);

        auto t2 = clock::now();
        bbq::Tensor product = bbq::lowprec_matmul(qa, qw);
        auto t3 = clock::now();
        (void)product;

        std::vector<double> ad = bbq::bbq_dequantize(qa).to_double();
        std::vector<double> wd = bbq::bbq_dequantize(qw).to_double();
        auto t4 = clock::now();
        std::vector<double> dense(m * n, 0.0);
        for (size_t r = 0; r < m; ++r)
            for (size_t kk = 0; kk < k; ++kk) {
                const double avv = ad[r * k + kk];
                for (size_t c = 0; c < n; ++c) dense[r * n + c] += avv * wd[kk * n + c];
            }
        auto t5 = clock::now();

        auto millis = [](auto lo, auto hi) {
            return std::chrono::duration<double, std::milli>(hi - lo).count();
        };
        bbq::MacCounts macs =
            bbq::count_macs(static_cast<size_t>(m), static_cast<size_t>(n),
                            static_cast<size_t>(k), block);

        bbq::CsvTable table;
        table.header = {"op", "m", "n", "k", "bits", "encoding", "macs", "millis"};
        auto row = [&](const char* op, uint64_t mac_count, double ms) {
            table.rows.push_back({op, std::to_string(m), std::to_string(n), std::to_string(k),
                                  std::to_string(bits), bbq::encoding_name(enc),
                                  std::to_string(mac_count), std::to_string(ms)});
        };
        row("quantize_activation", macs.hadamard + macs.quantize, millis(t0, t1));
        row("lowprec_matmul", macs.matmul, millis(t2, t3));
        row("dense_matmul_reference", macs.matmul, millis(t4, t5));
        *csv_text = dup_string(bbq::csv_to_string(table));
    });
}

/* --------------------------------------------------------------- gaussian */

bbq_status bbq_estimate_zeta_star(int64_t num_samples, uint64_t seed, bbq_zeta_estimate* out) {
    return guarded([&] {
        require_arg(out, "out");
        bbq::ZetaEstimate est = bbq::estimate_zeta_star(num_samples, seed);
        out->zeta_star = est.zeta_star;
        out->mse_at_optimum = est.mse_at_optimum;
        out->num_samples = est.num_samples;
        out->seed = est.seed;
    });
}

bbq_status bbq_quest_alpha_star(int bits, double* out) {
    return guarded([&] {
        require_arg(out, "out");
        *out = bbq::quest_alpha_star(bits);
    });
}

/* --------------------------------------------------------------- training */

void bbq_train_config_default(bbq_train_config* cfg) {
    if (!cfg) return;
    cfg->method = BBQ_METHOD_BBQ;
    cfg->full_precision = 0;
    cfg->bits = 2;
    cfg->block = 128;
    cfg->iterations = 2000;
    cfg->batch_size = 64;
    cfg->lr = 1e-3;
    cfg->weight_decay = 0.0;
    cfg->use_sgd = 0;
    cfg->momentum = 0.9;
    cfg->seed = 1;
    cfg->vision_mode = 0;
    cfg->vision_zeta = 2.45;
    cfg->num_classes = 8;
    cfg->log_every = 1;
}

bbq_status bbq_train(const bbq_train_config* cfg, const char* out_dir,
                     bbq_train_summary* out) {
    return guarded([&] {
        require_arg(cfg, "config");
        bbq::TrainConfig tc;
        if (cfg->full_precision) {
            tc.method = bbq::TrainMethod::none;
        } else {
            switch (cfg->method) {
                case BBQ_METHOD_BBQ: tc.method = bbq::TrainMethod::bbq; break;
                case BBQ_METHOD_BBQ_FAST: tc.method = bbq::TrainMethod::bbq_fast; break;
                case BBQ_METHOD_LSQ: tc.method = bbq::TrainMethod::lsq; break;
                case BBQ_METHOD_QUEST: tc.method = bbq::TrainMethod::quest; break;
                default:
                    bbq::fail(bbq::ErrorCode::invalid_argument,
                              "training supports bbq, bbq-fast, lsq, quest");
            }
        }
        tc.bits = cfg->bits;
        tc.block = cfg->block;
        tc.iterations = cfg->iterations;
        tc.batch_size = cfg->batch_size;
        tc.lr = cfg->lr;
        tc.weight_decay = cfg->weight_decay;
        tc.optimizer = cfg->use_sgd ? bbq::OptimizerKind::momentum_sgd
                                    : bbq::OptimizerKind::adam;
        tc.momentum = cfg->momentum;
        tc.seed = cfg->seed;
        tc.vision_mode = cfg->vision_mode != 0;
        tc.vision_zeta = cfg->vision_zeta;
        tc.num_classes = cfg->num_classes;
        tc.log_every = cfg->log_every;

        bbq::TrainResult result = bbq::train(tc);

        if (out_dir) {
            bbq::save_checkpoint(result, out_dir);
            bbq::emit_csv(bbq::history_to_csv(result.history),
                          std::string(out_dir) + "/log.csv");
        }
        if (out) {
            out->iterations_run = result.diverged ? result.diverged_at + 1 : tc.iterations;
            out->diverged = result.diverged ? 1 : 0;
            out->initial_loss = result.initial_loss;
            out->final_loss = result.final_loss;
            out->final_train_accuracy = result.final_train_accuracy;
            out->initial_weight_entropy = result.initial_entropy;
            out->min_weight_entropy = result.min_entropy;
            out->final_weight_entropy = result.final_entropy;
        }
        bbq::require(!result.diverged, bbq::ErrorCode::diverged,
                     "training diverged at iteration " + std::to_string(result.diverged_at) +
                         " (loss stuck above 10x initial)");
    });
}

bbq_status bbq_checkpoint_entropy_csv(const char* checkpoint_dir, char** csv_text) {
    return guarded([&] {
        require_arg(checkpoint_dir, "checkpoint_dir");
        require_arg(csv_text, "csv_text");
        bbq::WeightEntropy we = bbq::checkpoint_weight_entropy(checkpoint_dir);
        bbq::CsvTable table;
        table.header = {"layer", "entropy_bits"};
        for (size_t i = 0; i < we.per_layer.size(); ++i) {
            std::ostringstream v;
            v.precision(10);
            v << we.per_layer[i];
            table.rows.push_back({we.layer_names[i], v.str()});
        }
        std::ostringstream pooled, averaged;
        pooled.precision(10);
        averaged.precision(10);
        pooled << we.pooled;
        averaged << we.averaged;
        table.rows.push_back({"pooled", pooled.str()});
        table.rows.push_back({"averaged", averaged.str()});
        *csv_text = dup_string(bbq::csv_to_string(table));
    });
}

/* --------------------------------------------------------------- selftest */

int bbq_selftest(void) {
    try {
        return bbq::run_selftest(std::cout);
    } catch (const std::exception& e) {
        std::cout << "FAIL selftest-harness: " << e.what() << "\n";
        return 1;
    }
}

} /* extern "C" */
