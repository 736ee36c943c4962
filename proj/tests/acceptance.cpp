// Acceptance suite: every release gate runs here with its tolerance pinned
// in code, one PASS/FAIL line per criterion. Exit code = number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "entropy.hpp"
#include "kernelsim.hpp"
#include "training.hpp"
#include "test_util.hpp"

using namespace bbq;

namespace {

using clock_type = std::chrono::steady_clock;

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<std::string()> body;  // returns detail text; throws on failure
};

[[noreturn]] void criterion_failed(const std::string& why) {
    throw std::runtime_error(why);
}

void expect(bool cond, const std::string& why) {
    if (!cond) criterion_failed(why);
}

std::string fmt(const char* format, ...) {
    char buffer[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buffer, sizeof(buffer), format, args);
    va_end(args);
    return buffer;
}

// --------------------------------------------------------------- criteria

std::string c1_zeta_star() {
    ZetaEstimate est = estimate_zeta_star(10000000, 20260810);
    expect(std::abs(est.zeta_star - 1.694) <= 0.01,
           fmt("zeta* = %.6f outside 1.694 +/- 0.01", est.zeta_star));
    return fmt("zeta* = %.4f (1.694 +/- 0.01), mse = %.4f", est.zeta_star,
               est.mse_at_optimum);
}

std::string c2_inv_cdf_table() {
    const double expected[8] = {-std::numeric_limits<double>::infinity(),
                                -1.1503493803760083,
                                -0.6744897501960818,
                                -0.3186393639643752,
                                0.0,
                                0.3186393639643752,
                                0.6744897501960818,
                                1.1503493803760083};
    InvCdfTable t = build_inv_cdf_table(3);
    expect(std::isinf(t.boundaries[0]) && t.boundaries[0] < 0, "missing -inf sentinel");
    for (int i = 1; i < 8; ++i)
        expect(std::abs(t.boundaries[i] - expected[i]) <= 1e-9,
               fmt("boundary %d = %.12f, want %.12f", i, t.boundaries[i], expected[i]));
    return "all 8 three-bit boundaries match to 1e-9";
}

std::string c3_ito_property() {
    std::vector<double> v = testutil::random_normal(1u << 20, 301);
    std::string detail;
    for (int b = 1; b <= 4; ++b) {
        QuantConfig cfg{Method::bbq, b, 128, Granularity::per_tensor};
        QuantizeTrace tr = bbq_quantize_trace(v, {v.size() / 128, 128}, cfg);
        CodeHistogram h = histogram_from_bins(tr.bins, b);
        const double want = 1.0 / static_cast<double>(1 << b);
        for (int i = 0; i < (1 << b); ++i) {
            double freq = static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
            expect(std::abs(freq - want) <= 0.005,
                   fmt("b=%d code %d frequency %.4f outside %.4f +/- 0.005", b, i, freq,
                       want));
        }
        double e = entropy_bits(h);
        expect(e >= b - 0.01, fmt("b=%d entropy %.4f below %d - 0.01", b, e, b));
        detail += fmt("%sH(b=%d)=%.3f", b == 1 ? "" : " ", b, e);
    }
    return detail;
}

std::string c4_entropy_ordering() {
    std::vector<double> v = testutil::random_normal(1u << 20, 302);
    std::vector<size_t> shape{v.size() / 128, 128};

    QuantConfig bcfg{Method::bbq, 2, 128, Granularity::per_tensor};
    double bbq_e = entropy_bits(
        histogram_from_bins(bbq_quantize_trace(v, shape, bcfg).bins, 2));

    QuestConfig qcfg{quest_alpha_star(2), 2, 128, Granularity::per_tensor};
    QuestTrace qtr = quest_quantize_trace(v, shape, qcfg);
    std::vector<uint8_t> qbins(qtr.codes.size());
    for (size_t i = 0; i < qbins.size(); ++i)
        qbins[i] = static_cast<uint8_t>(static_cast<int>(qtr.codes[i]) + 2);
    double quest_e = entropy_bits(histogram_from_bins(qbins, 2));

    expect(bbq_e > quest_e, fmt("BBQ entropy %.4f not above QuEST entropy %.4f", bbq_e,
                                quest_e));
    return fmt("BBQ %.4f bits > QuEST %.4f bits (alpha* = %.3f)", bbq_e, quest_e,
               qcfg.alpha_star);
}

std::string c5_binsearch_equivalence() {
    Rng rng(303);
    const size_t n = 1000000;
    std::vector<double> v(n);
    for (double& e : v) e = rng.uniform(-4.0, 4.0);
    InvCdfTable table = build_inv_cdf_table(3);
    std::vector<uint8_t> bins = binsearch_bins(v, table);
    size_t mismatches = 0;
    for (size_t i = 0; i < n; ++i) {
        int direct = std::clamp(static_cast<int>(std::floor(8.0 * phi(v[i]))), 0, 7);
        if (direct != static_cast<int>(bins[i])) {
            ++mismatches;
            double nearest = 1e9;
            for (int j = 1; j < 8; ++j)
                nearest = std::min(nearest, std::abs(v[i] - table.boundaries[j]));
            expect(nearest <= 1e-9,
                   fmt("mismatch at v=%.17g is %.3g from the nearest boundary", v[i],
                       nearest));
        }
    }
    double rate = static_cast<double>(mismatches) / static_cast<double>(n);
    expect(rate < 1e-5, fmt("mismatch rate %.2g not below 1e-5", rate));
    return fmt("%zu/%zu disagreements, all within 1e-9 of a boundary", mismatches, n);
}

std::string c6_packing_bijection() {
    for (Encoding enc : {Encoding::int4, Encoding::mxfp4}) {
        for (int p = 0; p < 16; ++p) {
            double value = decode_nibble(enc, static_cast<uint8_t>(p));
            uint8_t back = encode_nibble(enc, value);
            bool ok = (enc == Encoding::mxfp4 && p == 0b1000) ? back == 0 : back == p;
            expect(ok, fmt("pattern %d does not round trip under %s", p,
                           encoding_name(enc).c_str()));
        }
    }
    // Table of per-precision support: b=4 int4-only, b=3 both, b<=2 mxfp4-only.
    const bool int4_ok[5] = {false, false, false, true, true};
    const bool mxfp4_ok[5] = {false, true, true, true, false};
    for (int b = 1; b <= 4; ++b) {
        std::vector<double> codes = code_value_set(b, zero_point_for_bits(b));
        bool all_int4 = true, all_mxfp4 = true;
        for (double c : codes) {
            all_int4 = all_int4 && nibble_representable(Encoding::int4, c);
            all_mxfp4 = all_mxfp4 && nibble_representable(Encoding::mxfp4, c);
        }
        expect(all_int4 == int4_ok[b], fmt("b=%d int4 support mismatch", b));
        expect(all_mxfp4 == mxfp4_ok[b], fmt("b=%d mxfp4 support mismatch", b));
    }
    return "16/16 patterns bijective per codec; support matrix reproduced";
}

std::string c7_matmul_exactness() {
    size_t checked = 0;
    for (int trial = 0; trial < 100; ++trial) {
        Tensor at = testutil::random_tensor({64, 128}, 400 + trial);
        Tensor wt = testutil::random_tensor({64, 128}, 700 + trial);
        QuantConfig cfg{Method::bbq, 3, 128, Granularity::per_tensor};
        QuantConfig wcfg{Method::bbq, 3, 128, Granularity::per_channel};

        QuantizeTrace ta = bbq_quantize_trace(at.to_double(), at.shape(), cfg);
        QuantizeTrace tw = bbq_quantize_trace(wt.to_double(), wt.shape(), wcfg);
        ScaleParam sa = make_scale_param(ta.sigma, at.numel());
        ScaleParam sw = make_scale_param(tw.sigma, 128);
        QuantizedTensor qa =
            encode_codes(trace_to_quantized(ta, Method::bbq, sa.gamma), Encoding::int4);
        QuantizedTensor qw = transpose_quantized(
            encode_codes(trace_to_quantized(tw, Method::bbq, sw.gamma), Encoding::int4));

        std::vector<int32_t> acc = lowprec_matmul_i32(qa, qw);
        Tensor y = lowprec_matmul(qa, qw);

        for (size_t r = 0; r < 64; ++r)
            for (size_t c = 0; c < 64; ++c) {
                // integer accumulation must be exact
                int64_t ref = 0;
                for (size_t k = 0; k < 128; ++k)
                    ref += static_cast<int64_t>(ta.codes[r * 128 + k]) *
                           static_cast<int64_t>(tw.codes[c * 128 + k]);
                expect(acc[r * 64 + c] == ref,
                       fmt("trial %d accumulator (%zu,%zu): %d != %lld", trial, r, c,
                           acc[r * 64 + c], static_cast<long long>(ref)));

                // the dense oracle dequantizes in double (exactly) and
                // accumulates in double
                const double s_a = sa.gamma[0] / 4.0;
                const double s_w = sw.gamma[c] / 4.0;
                double oracle = 0.0;
                for (size_t k = 0; k < 128; ++k)
                    oracle += (ta.codes[r * 128 + k] * s_a) * (tw.codes[c * 128 + k] * s_w);
                float got = y[r * 64 + c];
                float want = static_cast<float>(oracle);
                // one float ulp, plus the provable double-accumulation noise
                // floor of the oracle itself (~128 * 2^-53 of a term)
                double floor_abs = s_a * s_w * 1e-9;
                bool ok = got == want || got == std::nextafter(want, got) ||
                          std::abs(static_cast<double>(got) - oracle) <= floor_abs;
                expect(ok, fmt("trial %d scaled (%zu,%zu): %.9g vs oracle %.9g", trial, r,
                               c, got, oracle));
                ++checked;
            }
    }
    return fmt("100 cases, %zu outputs: accumulators exact, scaling within 1 ulp", checked);
}

std::string c8_gradient_correctness() {
    // Slice-level straight-through gradient against an independent
    // double-precision oracle of the smoothed forward.
    const size_t n = 128;
    const int bits = 2;
    const double gamma = 1.1;
    std::vector<double> x = testutil::random_normal(n, 500);
    std::vector<double> g = testutil::random_normal(n, 501);
    QuantConfig cfg{Method::bbq, bits, 128, Granularity::per_tensor};
    QuantizeTrace tr = bbq_quantize_trace(x, {1, n}, cfg, /*smooth=*/true);
    ScaleParam sp;
    sp.gamma = {gamma};
    sp.sigma0 = {1.0};
    sp.d = n;
    BbqGrads grads = bbq_backward(g, tr, sp);

    auto oracle_j = [&](const std::vector<double>& input) {
        std::vector<double> y = testutil::reference_fwht_blocked(input, n);
        double sumsq = 0.0;
        for (double e : y) sumsq += e * e;
        double sigma = std::sqrt(sumsq / static_cast<double>(n));
        double j = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double cdf = 0.5 * (1.0 + std::erf(y[i] / sigma / std::sqrt(2.0)));
            j += g[i] * (gamma / 2.0) * (4.0 * cdf - 2.0 + 0.5);
        }
        return j;
    };
    const double h = 1e-5;
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        double fd = (oracle_j(xp) - oracle_j(xm)) / (2 * h);
        expect(std::abs(fd - grads.x[i]) <=
                   1e-3 * std::max({std::abs(fd), std::abs(grads.x[i]), 1e-6}),
               fmt("slice grad %zu: analytic %.8g vs fd %.8g", i, grads.x[i], fd));
    }

    // Width-reduced model: every parameter against central differences.
    TrainConfig tc;
    tc.method = TrainMethod::bbq;
    tc.bits = 2;
    tc.block = 8;
    tc.input_dim = 16;
    tc.hidden_dim = 16;
    tc.feature_dim = 8;
    tc.num_classes = 3;
    tc.batch_size = 4;
    tc.seed = 502;
    tc.smooth_quantizers = true;
    ToyModel model = make_toy_model(tc);
    SynthDataset ds(tc.seed, tc.input_dim, tc.num_classes, tc.data_margin);
    initialize_sites(model, ds.next_batch(8));
    Batch batch = ds.next_batch(1);

    ForwardResult fwd = forward(model, batch, ForwardMode::training);
    Gradients gr = backward(model, fwd);
    std::vector<ParamRef> params = parameters(model);
    std::vector<std::vector<double>*> grefs = gradient_refs(gr);
    std::vector<std::vector<double>*> aligned(grefs.begin(), grefs.begin() + 6);
    for (size_t i = 6; i < 10 && params.size() > 6; ++i) aligned.push_back(grefs[i]);

    size_t total = 0;
    const double hh = 1e-5;
    for (size_t p = 0; p < params.size(); ++p) {
        std::vector<double>& theta = *params[p].values;
        for (size_t i = 0; i < theta.size(); ++i) {
            double keep = theta[i];
            theta[i] = keep + hh;
            double lp = forward(model, batch, ForwardMode::training).loss;
            theta[i] = keep - hh;
            double lm = forward(model, batch, ForwardMode::training).loss;
            theta[i] = keep;
            double fd = (lp - lm) / (2 * hh);
            double an = (*aligned[p])[i];
            expect(std::abs(fd - an) <= 1e-3 * std::max({std::abs(fd), std::abs(an), 1e-4}),
                   fmt("%s[%zu]: analytic %.8g vs fd %.8g", params[p].name.c_str(), i, an,
                       fd));
            ++total;
        }
    }
    return fmt("slice grads (128) and %zu model parameters within 1e-3 of central FD",
               total);
}

std::string c9_bbq_fast_agreement() {
    const size_t n = 1u << 16;
    QuantConfig cfg{Method::bbq, 3, 128, Granularity::per_tensor};
    EmaState ema;
    Rng rng(504);
    for (int step = 0; step < 1000; ++step) {
        double sumsq = 0.0;
        for (size_t i = 0; i < n; ++i) {
            double v = sample_standard_normal(rng);
            sumsq += v * v;
        }
        bbq_fast_update(ema, std::sqrt(sumsq / static_cast<double>(n)));
    }
    std::vector<double> eval = sample_standard_normal(rng, n);
    QuantizeTrace exact = bbq_quantize_trace(eval, {n / 128, 128}, cfg);
    QuantizeTrace fast = bbq_fast_quantize_trace(eval, {n / 128, 128}, cfg, ema);
    size_t agree = 0;
    for (size_t i = 0; i < n; ++i)
        if (exact.bins[i] == fast.bins[i]) ++agree;
    double rate = static_cast<double>(agree) / static_cast<double>(n);
    expect(rate >= 0.99, fmt("agreement %.4f below 0.99", rate));
    return fmt("code agreement %.2f%% after 1000 EMA updates", 100.0 * rate);
}

std::string c10_training_behaviour() {
    TrainConfig cfg;  // spec defaults: 2-bit BBQ toy run
    cfg.method = TrainMethod::bbq;
    cfg.bits = 2;
    cfg.iterations = 2000;
    cfg.batch_size = 64;
    cfg.seed = 1;
    TrainResult r = train(cfg);
    expect(!r.diverged, "training diverged");
    expect(r.initial_entropy >= 1.98,
           fmt("initial pooled entropy %.4f below 1.98", r.initial_entropy));
    expect(r.min_entropy >= 1.90, fmt("entropy dipped to %.4f (< 1.90)", r.min_entropy));
    expect(r.final_loss <= 0.5 * r.initial_loss,
           fmt("loss %.4f -> %.4f is less than a 50%% drop", r.initial_loss,
               r.final_loss));
    return fmt("entropy %.3f -> min %.3f (>= 1.90); loss %.3f -> %.3f; eval acc %.1f%%",
               r.initial_entropy, r.min_entropy, r.initial_loss, r.final_loss,
               100.0 * r.final_train_accuracy);
}

std::string c11_non_reproduction_note() {
    // Paper-scale perplexities (Tables 1/3/4), GPU latencies (Figs. 4-5),
    // and ImageNet accuracies (Table 7) are intentionally not reproduced at
    // desk scale. Criteria 3, 4, 9, and 10 are their property-based
    // substitutes; this criterion exists so the substitution is explicit.
    return "paper-scale perplexity/latency/accuracy tables are out of scope by design; "
           "covered by criteria 3, 4, 9, 10";
}

}  // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "zeta-star reproduction", 30.0, c1_zeta_star},
        {2, "inverse-CDF table reproduction", 5.0, c2_inv_cdf_table},
        {3, "ITO code usage and entropy", 5.0, c3_ito_property},
        {4, "entropy ordering BBQ vs QuEST", 10.0, c4_entropy_ordering},
        {5, "binary-search/floor equivalence", 5.0, c5_binsearch_equivalence},
        {6, "nibble packing bijection", 5.0, c6_packing_bijection},
        {7, "low-precision matmul exactness", 10.0, c7_matmul_exactness},
        {8, "gradient correctness", 60.0, c8_gradient_correctness},
        {9, "BBQ-Fast code agreement", 10.0, c9_bbq_fast_agreement},
        {10, "training entropy and loss behaviour", 600.0, c10_training_behaviour},
        {11, "non-reproduction of paper-scale tables", 5.0, c11_non_reproduction_note},
    };

    int failures = 0;
    for (const Criterion& criterion : criteria) {
        auto start = clock_type::now();
        std::string detail;
        bool ok = true;
        try {
            detail = criterion.body();
        } catch (const std::exception& e) {
            ok = false;
            detail = e.what();
        }
        double seconds = std::chrono::duration<double>(clock_type::now() - start).count();
        if (ok && seconds > criterion.budget_seconds) {
            ok = false;
            detail = fmt("took %.1fs, budget %.0fs; %s", seconds,
                         criterion.budget_seconds, detail.c_str());
        }
        if (!ok) ++failures;
        std::printf("%s  %2d. %s (%.1fs): %s\n", ok ? "PASS" : "FAIL", criterion.id,
                    criterion.name, seconds, detail.c_str());
        std::fflush(stdout);
    }
    if (failures == 0)
        std::printf("acceptance: all %zu criteria passed\n", criteria.size());
    else
        std::printf("acceptance: %d criteria FAILED\n", failures);
    return failures;
}
