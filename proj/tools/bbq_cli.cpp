// Command-line front end for libbbq. Talks to the library exclusively
// through the public C API in bbq.h.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <sys/stat.h>
#include <vector>

#include "CLI11.hpp"
#include "bbq.h"

namespace {

int fail_status(bbq_status status) {
    std::fprintf(stderr, "error: %s: %s\n", bbq_status_name(status), bbq_last_error());
    return 1;
}

bool is_directory(const std::string& path) {
    struct stat st{};
    return ::stat(path.c_str(), &st) == 0 && S_ISDIR(st.st_mode);
}

int write_or_print(const char* text, const std::string& out_path) {
    if (out_path.empty()) {
        std::printf("%s\n", text);
        return 0;
    }
    std::FILE* f = std::fopen(out_path.c_str(), "wb");
    if (!f) {
        std::fprintf(stderr, "error: io-error: cannot open %s\n", out_path.c_str());
        return 1;
    }
    std::fputs(text, f);
    std::fputc('\n', f);
    std::fclose(f);
    return 0;
}

struct QuantFlags {
    std::string method = "bbq";
    int bits = 4;
    uint64_t block = 128;
    std::string granularity = "per-tensor";
    uint64_t seed = 0;
};

void add_quant_flags(CLI::App* cmd, QuantFlags& flags) {
    cmd->add_option("--method", flags.method, "bbq | bbq-fast | lsq | quest | codebook")
        ->check(CLI::IsMember({"bbq", "bbq-fast", "lsq", "quest", "codebook"}));
    cmd->add_option("--bits", flags.bits, "precision b (1..4)")->check(CLI::Range(1, 4));
    cmd->add_option("--block", flags.block, "Hadamard block size H (power of two)");
    cmd->add_option("--granularity", flags.granularity, "per-tensor | per-channel")
        ->check(CLI::IsMember({"per-tensor", "per-channel"}));
    cmd->add_option("--seed", flags.seed, "RNG seed");
}

bbq_quant_config to_config(const QuantFlags& flags) {
    bbq_quant_config cfg{};
    if (flags.method == "bbq") cfg.method = BBQ_METHOD_BBQ;
    else if (flags.method == "bbq-fast") cfg.method = BBQ_METHOD_BBQ_FAST;
    else if (flags.method == "lsq") cfg.method = BBQ_METHOD_LSQ;
    else if (flags.method == "quest") cfg.method = BBQ_METHOD_QUEST;
    else cfg.method = BBQ_METHOD_CODEBOOK;
    cfg.bits = flags.bits;
    cfg.block = flags.block;
    cfg.granularity =
        flags.granularity == "per-channel" ? BBQ_PER_CHANNEL : BBQ_PER_TENSOR;
    return cfg;
}

// b=4 packs as int4 only, b in {1,2} as mxfp4 only, b=3 as either
// (int4 picked); lsq/quest codes are small signed integers.
bbq_encoding natural_encoding(const QuantFlags& flags) {
    if (flags.method == "codebook") return BBQ_ENC_RAW;
    if (flags.method == "lsq" || flags.method == "quest") return BBQ_ENC_INT4;
    return flags.bits >= 3 ? BBQ_ENC_INT4 : BBQ_ENC_MXFP4;
}

const char* encoding_name(bbq_encoding e) {
    switch (e) {
        case BBQ_ENC_RAW: return "raw";
        case BBQ_ENC_INT4: return "int4";
        case BBQ_ENC_MXFP4: return "mxfp4";
    }
    return "?";
}

void print_config_line(const std::string& text) {
    std::fprintf(stderr, "config: %s\n", text.c_str());
}

// ------------------------------------------------------------- subcommands

int run_quantize(const QuantFlags& flags, const std::string& input,
                 const std::string& out_path) {
    print_config_line("subcommand=quantize method=" + flags.method +
                      " bits=" + std::to_string(flags.bits) +
                      " block=" + std::to_string(flags.block) +
                      " granularity=" + flags.granularity +
                      " seed=" + std::to_string(flags.seed) + " input=" + input +
                      " out=" + out_path + " encoding=" + encoding_name(natural_encoding(flags)));
    bbq_tensor* x = nullptr;
    bbq_status st = bbq_tensor_read(input.c_str(), &x);
    if (st != BBQ_OK) return fail_status(st);
    bbq_quant_config cfg = to_config(flags);
    bbq_qtensor* raw = nullptr;
    st = bbq_quantize(x, &cfg, &raw);
    bbq_tensor_free(x);
    if (st != BBQ_OK) return fail_status(st);
    bbq_qtensor* packed = nullptr;
    st = bbq_qtensor_encode(raw, natural_encoding(flags), &packed);
    bbq_qtensor_free(raw);
    if (st != BBQ_OK) return fail_status(st);
    st = bbq_qtensor_write(packed, out_path.c_str());
    bbq_qtensor_free(packed);
    if (st != BBQ_OK) return fail_status(st);
    return 0;
}

int run_dequantize(const std::string& input, const std::string& out_path) {
    print_config_line("subcommand=dequantize input=" + input + " out=" + out_path);
    bbq_qtensor* q = nullptr;
    bbq_status st = bbq_qtensor_read(input.c_str(), &q);
    if (st != BBQ_OK) return fail_status(st);
    bbq_tensor* x = nullptr;
    st = bbq_dequantize(q, &x);
    bbq_qtensor_free(q);
    if (st != BBQ_OK) return fail_status(st);
    st = bbq_tensor_write(x, out_path.c_str());
    bbq_tensor_free(x);
    if (st != BBQ_OK) return fail_status(st);
    return 0;
}

int run_entropy(const QuantFlags& flags, const std::string& input,
                const std::string& out_path) {
    print_config_line("subcommand=entropy input=" + input + " out=" + out_path);
    if (is_directory(input)) {
        char* csv = nullptr;
        bbq_status st = bbq_checkpoint_entropy_csv(input.c_str(), &csv);
        if (st != BBQ_OK) return fail_status(st);
        int rc = write_or_print(csv, out_path);
        bbq_string_free(csv);
        return rc;
    }

    bbq_qtensor* q = nullptr;
    bbq_status st = bbq_qtensor_read(input.c_str(), &q);
    if (st == BBQ_ERR_BAD_DTYPE || st == BBQ_ERR_IO) {
        // Not a packed file: treat as real32 tensor and quantize per flags.
        bbq_tensor* x = nullptr;
        st = bbq_tensor_read(input.c_str(), &x);
        if (st != BBQ_OK) return fail_status(st);
        bbq_quant_config cfg = to_config(flags);
        st = bbq_quantize(x, &cfg, &q);
        bbq_tensor_free(x);
    }
    if (st != BBQ_OK) return fail_status(st);
    double bits = 0.0;
    st = bbq_qtensor_entropy(q, &bits);
    bbq_qtensor_free(q);
    if (st != BBQ_OK) return fail_status(st);
    char line[128];
    std::snprintf(line, sizeof(line), "layer,entropy_bits\ntensor,%.10g", bits);
    return write_or_print(line, out_path);
}

int run_zeta(int64_t samples, uint64_t seed, const std::string& out_path) {
    print_config_line("subcommand=zeta samples=" + std::to_string(samples) +
                      " seed=" + std::to_string(seed) + " out=" + out_path);
    bbq_zeta_estimate est{};
    bbq_status st = bbq_estimate_zeta_star(samples, seed, &est);
    if (st != BBQ_OK) return fail_status(st);
    char text[256];
    std::snprintf(text, sizeof(text),
                  "zeta_star,mse_at_optimum,num_samples,seed\n%.10g,%.10g,%" PRId64 ",%" PRIu64,
                  est.zeta_star, est.mse_at_optimum, est.num_samples, est.seed);
    return write_or_print(text, out_path);
}

int run_alpha_star(int bits, const std::string& out_path) {
    print_config_line("subcommand=alpha-star bits=" + std::to_string(bits));
    double alpha = 0.0;
    bbq_status st = bbq_quest_alpha_star(bits, &alpha);
    if (st != BBQ_OK) return fail_status(st);
    char text[128];
    std::snprintf(text, sizeof(text), "bits,alpha_star\n%d,%.10g", bits, alpha);
    return write_or_print(text, out_path);
}

int run_matmul(const std::string& a_path, const std::string& w_path,
               const std::string& out_path) {
    print_config_line("subcommand=matmul a=" + a_path + " w=" + w_path + " out=" + out_path);
    bbq_qtensor* a = nullptr;
    bbq_qtensor* w = nullptr;
    bbq_status st = bbq_qtensor_read(a_path.c_str(), &a);
    if (st != BBQ_OK) return fail_status(st);
    st = bbq_qtensor_read(w_path.c_str(), &w);
    if (st != BBQ_OK) {
        bbq_qtensor_free(a);
        return fail_status(st);
    }
    bbq_tensor* y = nullptr;
    st = bbq_lowprec_matmul(a, w, &y);
    if (st == BBQ_ERR_SHAPE) {
        // Per-channel weights are stored [out,in]; retry against w^T.
        bbq_qtensor* wt = nullptr;
        if (bbq_qtensor_transpose(w, &wt) == BBQ_OK) {
            std::fprintf(stderr, "note: inner dimensions mismatched, using w transposed\n");
            st = bbq_lowprec_matmul(a, wt, &y);
            bbq_qtensor_free(wt);
        }
    }
    bbq_qtensor_free(a);
    bbq_qtensor_free(w);
    if (st != BBQ_OK) return fail_status(st);
    st = bbq_tensor_write(y, out_path.c_str());
    bbq_tensor_free(y);
    if (st != BBQ_OK) return fail_status(st);
    return 0;
}

int run_bench(uint64_t m, uint64_t n, uint64_t k, int bits, uint64_t seed,
              const std::string& out_path) {
    print_config_line("subcommand=bench m=" + std::to_string(m) + " n=" + std::to_string(n) +
                      " k=" + std::to_string(k) + " bits=" + std::to_string(bits) +
                      " seed=" + std::to_string(seed));
    char* csv = nullptr;
    bbq_status st = bbq_bench_csv(m, n, k, bits, seed, &csv);
    if (st != BBQ_OK) return fail_status(st);
    int rc = write_or_print(csv, out_path);
    bbq_string_free(csv);
    return rc;
}

struct TrainFlags {
    std::string method = "bbq";
    bool full_precision = false;
    int bits = 2;
    uint64_t block = 128;
    int iterations = 2000;
    int batch = 64;
    double lr = 1e-3;
    double weight_decay = 0.0;
    bool sgd = false;
    double momentum = 0.9;
    uint64_t seed = 1;
    bool vision = false;
    double vision_zeta = 2.45;
    int classes = 8;
    int log_every = 1;
    std::string out_dir;
};

int run_train(const TrainFlags& f) {
    print_config_line(
        "subcommand=train method=" + (f.full_precision ? std::string("none") : f.method) +
        " bits=" + std::to_string(f.bits) + " block=" + std::to_string(f.block) +
        " iters=" + std::to_string(f.iterations) + " batch=" + std::to_string(f.batch) +
        " lr=" + std::to_string(f.lr) + " weight-decay=" + std::to_string(f.weight_decay) +
        " optimizer=" + (f.sgd ? "sgd" : "adam") + " seed=" + std::to_string(f.seed) +
        " vision=" + (f.vision ? "1" : "0") + " vision-zeta=" + std::to_string(f.vision_zeta) +
        " classes=" + std::to_string(f.classes) + " out=" + f.out_dir);
    bbq_train_config cfg{};
    bbq_train_config_default(&cfg);
    if (f.method == "bbq") cfg.method = BBQ_METHOD_BBQ;
    else if (f.method == "bbq-fast") cfg.method = BBQ_METHOD_BBQ_FAST;
    else if (f.method == "lsq") cfg.method = BBQ_METHOD_LSQ;
    else if (f.method == "quest") cfg.method = BBQ_METHOD_QUEST;
    else if (f.method != "none") {
        std::fprintf(stderr, "error: invalid-argument: unknown training method %s\n",
                     f.method.c_str());
        return 1;
    }
    cfg.full_precision = (f.full_precision || f.method == "none") ? 1 : 0;
    cfg.bits = f.bits;
    cfg.block = f.block;
    cfg.iterations = f.iterations;
    cfg.batch_size = f.batch;
    cfg.lr = f.lr;
    cfg.weight_decay = f.weight_decay;
    cfg.use_sgd = f.sgd ? 1 : 0;
    cfg.momentum = f.momentum;
    cfg.seed = f.seed;
    cfg.vision_mode = f.vision ? 1 : 0;
    cfg.vision_zeta = f.vision_zeta;
    cfg.num_classes = f.classes;
    cfg.log_every = f.log_every;

    bbq_train_summary summary{};
    bbq_status st = bbq_train(&cfg, f.out_dir.empty() ? nullptr : f.out_dir.c_str(), &summary);
    if (st != BBQ_OK && st != BBQ_ERR_DIVERGED) return fail_status(st);

    std::printf("iterations,diverged,initial_loss,final_loss,final_train_accuracy,"
                "entropy_initial,entropy_min,entropy_final\n");
    std::printf("%d,%d,%.10g,%.10g,%.6g,%.10g,%.10g,%.10g\n", summary.iterations_run,
                summary.diverged, summary.initial_loss, summary.final_loss,
                summary.final_train_accuracy, summary.initial_weight_entropy,
                summary.min_weight_entropy, summary.final_weight_entropy);
    if (st == BBQ_ERR_DIVERGED) return fail_status(st);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bbq: low-bit quantization toolkit (BBQ, LSQ, QuEST, quantile codebooks), "
                 "4-bit kernel simulation, entropy instrumentation, and a desk-scale "
                 "quantization-aware training harness"};
    app.require_subcommand(1);

    // quantize
    QuantFlags qflags;
    std::string input, out_path, w_path;
    CLI::App* quantize = app.add_subcommand("quantize", "quantize a real32 tensor file");
    add_quant_flags(quantize, qflags);
    quantize->add_option("input", input, "input .bbqt tensor")->required();
    quantize->add_option("--out", out_path, "output packed .bbqt path")->required();

    // dequantize
    CLI::App* dequantize = app.add_subcommand("dequantize", "dequantize a packed tensor file");
    dequantize->add_option("input", input, "packed .bbqt tensor")->required();
    dequantize->add_option("--out", out_path, "output real32 .bbqt path")->required();
    uint64_t deq_seed = 0;
    dequantize->add_option("--seed", deq_seed, "RNG seed (unused, accepted for uniformity)");

    // entropy
    QuantFlags eflags;
    CLI::App* entropy = app.add_subcommand(
        "entropy", "code entropy of a packed tensor, real32 tensor, or checkpoint dir");
    add_quant_flags(entropy, eflags);
    entropy->add_option("input", input, "packed/real32 .bbqt or checkpoint directory")
        ->required();
    entropy->add_option("--out", out_path, "output CSV path (stdout when omitted)");

    // zeta
    int64_t samples = 10000000;
    uint64_t seed = 0;
    CLI::App* zeta = app.add_subcommand("zeta", "Monte-Carlo estimate of zeta*");
    zeta->add_option("--samples", samples, "number of Monte-Carlo samples (>= 1e6)");
    zeta->add_option("--seed", seed, "RNG seed");
    zeta->add_option("--out", out_path, "output CSV path (stdout when omitted)");

    // alpha-star
    int bits = 2;
    CLI::App* alpha = app.add_subcommand("alpha-star", "optimal QuEST clip scale per bits");
    alpha->add_option("--bits", bits, "precision b (1..4)")->check(CLI::Range(1, 4));
    alpha->add_option("--out", out_path, "output CSV path (stdout when omitted)");
    uint64_t alpha_seed = 0;
    alpha->add_option("--seed", alpha_seed, "RNG seed (unused, accepted for uniformity)");

    // matmul
    CLI::App* matmul = app.add_subcommand("matmul", "low-precision matrix multiplication");
    matmul->add_option("a", input, "left operand (packed .bbqt)")->required();
    matmul->add_option("w", w_path, "right operand (packed .bbqt)")->required();
    matmul->add_option("--out", out_path, "output real32 .bbqt path")->required();
    uint64_t mm_seed = 0;
    matmul->add_option("--seed", mm_seed, "RNG seed (unused, accepted for uniformity)");

    // bench
    uint64_t bm = 256, bn = 256, bk = 256, bseed = 0;
    int bbits = 3;
    CLI::App* bench = app.add_subcommand("bench", "MAC-count and wall-time report");
    bench->add_option("--m", bm, "rows of the activation matrix");
    bench->add_option("--n", bn, "columns of the weight matrix");
    bench->add_option("--k", bk, "inner dimension");
    bench->add_option("--bits", bbits, "precision b (1..4)")->check(CLI::Range(1, 4));
    bench->add_option("--seed", bseed, "RNG seed");
    bench->add_option("--out", out_path, "output CSV path (stdout when omitted)");

    // train
    TrainFlags tf;
    CLI::App* train = app.add_subcommand("train", "desk-scale quantization-aware training");
    train->add_option("--method", tf.method, "bbq | bbq-fast | lsq | quest | none")
        ->check(CLI::IsMember({"bbq", "bbq-fast", "lsq", "quest", "none"}));
    train->add_flag("--full-precision", tf.full_precision, "train the unquantized baseline");
    train->add_option("--bits", tf.bits, "precision b (1..4)")->check(CLI::Range(1, 4));
    train->add_option("--block", tf.block, "Hadamard block size H");
    train->add_option("--iters", tf.iterations, "training iterations");
    train->add_option("--batch", tf.batch, "batch size");
    train->add_option("--lr", tf.lr, "peak learning rate");
    train->add_option("--weight-decay", tf.weight_decay,
                      "decoupled weight decay (never applied to scale parameters)");
    train->add_flag("--sgd", tf.sgd, "momentum SGD instead of Adam");
    train->add_option("--momentum", tf.momentum, "SGD momentum");
    train->add_option("--seed", tf.seed, "RNG seed");
    train->add_flag("--vision", tf.vision, "BBQ-Vision: gamma = zeta*sigma each forward");
    train->add_option("--vision-zeta", tf.vision_zeta, "zeta for vision mode");
    train->add_option("--classes", tf.classes, "number of synthetic classes");
    train->add_option("--log-every", tf.log_every, "log every n iterations");
    train->add_option("--out", tf.out_dir, "checkpoint + log directory");

    // selftest
    CLI::App* selftest = app.add_subcommand("selftest", "run the invariant suite");
    uint64_t st_seed = 0;
    selftest->add_option("--seed", st_seed, "RNG seed (unused, accepted for uniformity)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (quantize->parsed()) return run_quantize(qflags, input, out_path);
    if (dequantize->parsed()) return run_dequantize(input, out_path);
    if (entropy->parsed()) return run_entropy(eflags, input, out_path);
    if (zeta->parsed()) return run_zeta(samples, seed, out_path);
    if (alpha->parsed()) return run_alpha_star(bits, out_path);
    if (matmul->parsed()) return run_matmul(input, w_path, out_path);
    if (bench->parsed()) return run_bench(bm, bn, bk, bbits, bseed, out_path);
    if (train->parsed()) return run_train(tf);
    if (selftest->parsed()) {
        print_config_line("subcommand=selftest");
        return bbq_selftest() == 0 ? 0 : 1;
    }
    return 2;
}
