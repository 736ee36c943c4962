// Exercises the shared library through the public C header only.
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bbq.h"

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

bbq_tensor* make_random_tensor(uint64_t rows, uint64_t cols, unsigned seed) {
    std::vector<float> data(rows * cols);
    unsigned state = seed;
    for (float& v : data) {
        state = state * 1664525u + 1013904223u;
        v = static_cast<float>(static_cast<int>(state >> 8) % 2001 - 1000) / 250.0f;
    }
    uint64_t dims[2] = {rows, cols};
    bbq_tensor* t = nullptr;
    REQUIRE(bbq_tensor_create(dims, 2, data.data(), &t) == BBQ_OK);
    return t;
}

}  // namespace

TEST_CASE("version and status names") {
    CHECK(bbq_version() != nullptr);
    CHECK(std::strcmp(bbq_status_name(BBQ_OK), "ok") == 0);
    CHECK(std::strcmp(bbq_status_name(BBQ_ERR_BAD_MAGIC), "bad-magic") == 0);
}

TEST_CASE("tensor create, file round trip, and error reporting") {
    uint64_t dims[2] = {2, 3};
    const float data[6] = {1, 2, 3, 4, 5, 6};
    bbq_tensor* t = nullptr;
    REQUIRE(bbq_tensor_create(dims, 2, data, &t) == BBQ_OK);
    CHECK(bbq_tensor_ndim(t) == 2);
    CHECK(bbq_tensor_dim(t, 0) == 2);
    CHECK(bbq_tensor_dim(t, 1) == 3);
    CHECK(bbq_tensor_numel(t) == 6);

    std::string path = temp_path("capi_tensor.bbqt");
    REQUIRE(bbq_tensor_write(t, path.c_str()) == BBQ_OK);
    bbq_tensor* back = nullptr;
    REQUIRE(bbq_tensor_read(path.c_str(), &back) == BBQ_OK);
    for (size_t i = 0; i < 6; ++i) CHECK(bbq_tensor_data(back)[i] == data[i]);
    bbq_tensor_free(back);
    bbq_tensor_free(t);

    CHECK(bbq_tensor_read(temp_path("capi_missing.bbqt").c_str(), &back) == BBQ_ERR_IO);
    CHECK(std::strlen(bbq_last_error()) > 0);

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os << "XXXXgarbage-that-is-long-enough-to-parse";
    os.close();
    CHECK(bbq_tensor_read(path.c_str(), &back) == BBQ_ERR_BAD_MAGIC);

    const float bad[1] = {std::numeric_limits<float>::infinity()};
    uint64_t one = 1;
    CHECK(bbq_tensor_create(&one, 1, bad, &t) == BBQ_ERR_INVALID_ARGUMENT);
    std::filesystem::remove(path);
}

TEST_CASE("quantize, pack, persist, and dequantize through the C API") {
    bbq_tensor* x = make_random_tensor(16, 128, 42);
    bbq_quant_config cfg{BBQ_METHOD_BBQ, 3, 128, BBQ_PER_TENSOR};
    bbq_qtensor* raw = nullptr;
    REQUIRE(bbq_quantize(x, &cfg, &raw) == BBQ_OK);
    CHECK(bbq_qtensor_numel(raw) == 16 * 128);

    bbq_encoding enc;
    REQUIRE(bbq_qtensor_encoding(raw, &enc) == BBQ_OK);
    CHECK(enc == BBQ_ENC_RAW);

    bbq_qtensor* packed = nullptr;
    REQUIRE(bbq_qtensor_encode(raw, BBQ_ENC_INT4, &packed) == BBQ_OK);

    // b=4 -> int4 only, so re-encoding 3-bit codes as mxfp4 must succeed but
    // a 4-bit tensor must refuse mxfp4.
    bbq_qtensor* as_fp4 = nullptr;
    REQUIRE(bbq_qtensor_encode(raw, BBQ_ENC_MXFP4, &as_fp4) == BBQ_OK);
    bbq_qtensor_free(as_fp4);
    bbq_quant_config cfg4{BBQ_METHOD_BBQ, 4, 128, BBQ_PER_TENSOR};
    bbq_qtensor* raw4 = nullptr;
    REQUIRE(bbq_quantize(x, &cfg4, &raw4) == BBQ_OK);
    CHECK(bbq_qtensor_encode(raw4, BBQ_ENC_MXFP4, &as_fp4) == BBQ_ERR_ENCODING);
    bbq_qtensor_free(raw4);

    std::string path = temp_path("capi_q.bbqt");
    REQUIRE(bbq_qtensor_write(packed, path.c_str()) == BBQ_OK);
    CHECK(std::filesystem::exists(path + ".json"));
    bbq_qtensor* loaded = nullptr;
    REQUIRE(bbq_qtensor_read(path.c_str(), &loaded) == BBQ_OK);

    double e_before = 0, e_after = 0;
    REQUIRE(bbq_qtensor_entropy(packed, &e_before) == BBQ_OK);
    REQUIRE(bbq_qtensor_entropy(loaded, &e_after) == BBQ_OK);
    CHECK(e_before == e_after);
    CHECK(e_before > 2.5);
    CHECK(e_before <= 3.0);

    bbq_tensor* xhat = nullptr;
    REQUIRE(bbq_dequantize(loaded, &xhat) == BBQ_OK);
    // dequantized values live on the gamma/2^(b-1) grid {-4..3}
    CHECK(bbq_tensor_numel(xhat) == 16 * 128);
    bool nonzero = false;
    for (size_t i = 0; i < 16 * 128; ++i)
        if (bbq_tensor_data(xhat)[i] != 0.0f) nonzero = true;
    CHECK(nonzero);

    bbq_tensor_free(xhat);
    bbq_qtensor_free(loaded);
    bbq_qtensor_free(packed);
    bbq_qtensor_free(raw);
    bbq_tensor_free(x);
    std::filesystem::remove(path);
    std::filesystem::remove(path + ".json");
}

TEST_CASE("low-precision matmul through the C API") {
    bbq_tensor* a = make_random_tensor(8, 64, 7);
    bbq_tensor* w = make_random_tensor(8, 64, 9);
    bbq_quant_config cfg{BBQ_METHOD_BBQ, 3, 64, BBQ_PER_TENSOR};
    bbq_qtensor *qa_raw = nullptr, *qw_raw = nullptr;
    REQUIRE(bbq_quantize(a, &cfg, &qa_raw) == BBQ_OK);
    REQUIRE(bbq_quantize(w, &cfg, &qw_raw) == BBQ_OK);
    bbq_qtensor *qa = nullptr, *qw = nullptr, *qwt = nullptr;
    REQUIRE(bbq_qtensor_encode(qa_raw, BBQ_ENC_INT4, &qa) == BBQ_OK);
    REQUIRE(bbq_qtensor_encode(qw_raw, BBQ_ENC_INT4, &qw) == BBQ_OK);
    REQUIRE(bbq_qtensor_transpose(qw, &qwt) == BBQ_OK);

    bbq_tensor* y = nullptr;
    REQUIRE(bbq_lowprec_matmul(qa, qwt, &y) == BBQ_OK);
    CHECK(bbq_tensor_dim(y, 0) == 8);
    CHECK(bbq_tensor_dim(y, 1) == 8);

    // dequantized dense oracle
    bbq_tensor *da = nullptr, *dw = nullptr;
    REQUIRE(bbq_dequantize(qa_raw, &da) == BBQ_OK);
    REQUIRE(bbq_dequantize(qw_raw, &dw) == BBQ_OK);
    const float* ap = bbq_tensor_data(da);
    const float* wp = bbq_tensor_data(dw);
    for (size_t r = 0; r < 8; ++r)
        for (size_t c = 0; c < 8; ++c) {
            double acc = 0;
            for (size_t k = 0; k < 64; ++k)
                acc += static_cast<double>(ap[r * 64 + k]) * wp[c * 64 + k];
            CHECK(std::abs(bbq_tensor_data(y)[r * 8 + c] - acc) <=
                  1e-5 * (1.0 + std::abs(acc)));
        }

    bbq_tensor_free(da);
    bbq_tensor_free(dw);
    bbq_tensor_free(y);
    bbq_qtensor_free(qa);
    bbq_qtensor_free(qw);
    bbq_qtensor_free(qwt);
    bbq_qtensor_free(qa_raw);
    bbq_qtensor_free(qw_raw);
    bbq_tensor_free(a);
    bbq_tensor_free(w);
}

TEST_CASE("zeta and alpha-star through the C API") {
    bbq_zeta_estimate est{};
    REQUIRE(bbq_estimate_zeta_star(1000000, 7, &est) == BBQ_OK);
    CHECK(std::abs(est.zeta_star - 1.694) < 0.02);
    CHECK(est.num_samples == 1000000);
    CHECK(bbq_estimate_zeta_star(10, 7, &est) == BBQ_ERR_INVALID_ARGUMENT);

    double alpha = 0.0;
    REQUIRE(bbq_quest_alpha_star(2, &alpha) == BBQ_OK);
    CHECK(std::abs(alpha - 0.996) < 0.002);
    CHECK(bbq_quest_alpha_star(9, &alpha) == BBQ_ERR_INVALID_ARGUMENT);
}

TEST_CASE("bench report comes back as CSV") {
    char* csv = nullptr;
    REQUIRE(bbq_bench_csv(32, 32, 128, 3, 1, &csv) == BBQ_OK);
    std::string text(csv);
    bbq_string_free(csv);
    CHECK(text.find("op,m,n,k,bits,encoding,macs,millis") == 0);
    CHECK(text.find("lowprec_matmul") != std::string::npos);
    CHECK(text.find("131072") != std::string::npos);  // 32*32*128 MACs
}

TEST_CASE("training through the C API writes logs and checkpoints") {
    namespace fs = std::filesystem;
    bbq_train_config cfg{};
    bbq_train_config_default(&cfg);
    cfg.iterations = 6;
    cfg.batch_size = 16;
    cfg.bits = 2;
    cfg.seed = 3;

    std::string dir = temp_path("capi_train_dir");
    bbq_train_summary summary{};
    REQUIRE(bbq_train(&cfg, dir.c_str(), &summary) == BBQ_OK);
    CHECK(summary.iterations_run == 6);
    CHECK(summary.diverged == 0);
    CHECK(summary.initial_weight_entropy > 1.9);
    CHECK(fs::exists(dir + "/log.csv"));
    CHECK(fs::exists(dir + "/checkpoint.json"));

    char* csv = nullptr;
    REQUIRE(bbq_checkpoint_entropy_csv(dir.c_str(), &csv) == BBQ_OK);
    std::string text(csv);
    bbq_string_free(csv);
    CHECK(text.find("layer,entropy_bits") == 0);
    CHECK(text.find("pooled") != std::string::npos);
    CHECK(text.find("averaged") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("null arguments are rejected, not dereferenced") {
    CHECK(bbq_tensor_read(nullptr, nullptr) == BBQ_ERR_INVALID_ARGUMENT);
    CHECK(bbq_quantize(nullptr, nullptr, nullptr) == BBQ_ERR_INVALID_ARGUMENT);
    bbq_zeta_estimate est{};
    CHECK(bbq_estimate_zeta_star(2000000, 1, nullptr) == BBQ_ERR_INVALID_ARGUMENT);
    (void)est;
}
