#include "selftest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <ostream>
#include <sstream>
#include <vector>

#include "entropy.hpp"
#include "kernelsim.hpp"
#include "training.hpp"

namespace bbq {

namespace {

struct Check {
    const char* name;
    std::function<void()> body;  // throws on failure
};

[[noreturn]] void check_failed(const std::string& why) {
    throw Error(ErrorCode::internal, why);
}

void expect(bool cond, const std::string& why) {
    if (!cond) check_failed(why);
}

void expect_near(double a, double b, double tol, const std::string& what) {
    if (!(std::abs(a - b) <= tol)) {
        std::ostringstream os;
        os << what << ": " << a << " vs " << b << " (tol " << tol << ")";
        check_failed(os.str());
    }
}

std::vector<double> random_normal(size_t n, uint64_t seed) {
    Rng rng(seed);
    return sample_standard_normal(rng, n);
}

Tensor random_tensor(std::vector<size_t> shape, uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    size_t n = shape_numel(shape);
    std::vector<float> data(n);
    for (float& v : data) v = static_cast<float>(scale * sample_standard_normal(rng));
    return Tensor(std::move(shape), std::move(data));
}

// ------------------------------------------------------------------ checks

void check_tensor_roundtrip() {
    namespace fs = std::filesystem;
    Tensor t = random_tensor({64, 32}, 11);
    std::string path = (fs::temp_directory_path() / "bbq_selftest_tensor.bbqt").string();
    write_tensor(t, path);
    Tensor back = read_tensor(path);
    expect(back.shape() == t.shape(), "shape changed in round trip");
    for (size_t i = 0; i < t.numel(); ++i)
        expect(back[i] == t[i], "payload changed in round trip");
    fs::remove(path);
}

void check_tensor_header_offset() {
    namespace fs = std::filesystem;
    Tensor t = Tensor::zeros({2, 2});
    std::string path = (fs::temp_directory_path() / "bbq_selftest_hdr.bbqt").string();
    write_tensor(t, path);
    expect(fs::file_size(path) == 13 + 8 * 2 + 16, "header size is not 13 + 8*ndim");
    fs::remove(path);
}

void check_hadamard_energy() {
    Tensor x = random_tensor({8, 128}, 21);
    Tensor y = fwht_blocked(x, {128});
    double ex = 0, ey = 0;
    for (size_t i = 0; i < x.numel(); ++i) {
        ex += static_cast<double>(x[i]) * x[i];
        ey += static_cast<double>(y[i]) * y[i];
    }
    expect_near(ey / ex, 1.0, 1e-5, "energy not preserved");
}

void check_hadamard_matrix_path() {
    const size_t h = 16;
    Tensor x = random_tensor({1, h}, 22);
    Tensor fast = fwht_blocked(x, {h});
    Tensor m = hadamard_matrix(h);
    for (size_t j = 0; j < h; ++j) {
        double acc = 0;
        for (size_t i = 0; i < h; ++i) acc += static_cast<double>(x[i]) * m[i * h + j];
        expect_near(fast[j], acc, 1e-5, "fast path disagrees with explicit matrix");
    }
}

void check_hadamard_involution() {
    Tensor x = random_tensor({4, 64}, 23);
    Tensor y = fwht_blocked(fwht_blocked(x, {64}), {64});
    for (size_t i = 0; i < x.numel(); ++i)
        expect_near(y[i], x[i], 1e-5 * (1.0 + std::abs(x[i])), "involution failed");
}

void check_hadamard_gaussianization() {
    Rng rng(24);
    const size_t n = 1 << 17;
    std::vector<double> x(n);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    fwht_blocked_inplace(x, 128);
    double m2 = 0, m4 = 0;
    for (double v : x) {
        m2 += v * v;
        m4 += v * v * v * v;
    }
    m2 /= n;
    m4 /= n;
    double excess_kurtosis = m4 / (m2 * m2) - 3.0;
    expect(std::abs(excess_kurtosis) < 0.1, "transformed uniforms are not Gaussian-like");
}

void check_phi_monotone() {
    std::vector<double> grid = random_normal(4096, 31);
    std::sort(grid.begin(), grid.end());
    for (size_t i = 1; i < grid.size(); ++i)
        expect(phi(grid[i - 1]) <= phi(grid[i]), "phi not monotone");
}

void check_phi_inverse_consistency() {
    for (int i = 1; i < 4096; ++i) {
        double p = static_cast<double>(i) / 4096.0;
        expect(std::abs(phi(phi_inv(p)) - p) <= 1e-9, "phi(phi_inv(p)) drifted");
    }
}

void check_inv_cdf_tables() {
    for (int b = 1; b <= 4; ++b) {
        InvCdfTable t = build_inv_cdf_table(b);
        const int n = 1 << b;
        expect(std::isinf(t.boundaries[0]) && t.boundaries[0] < 0, "missing -inf sentinel");
        expect(t.boundaries[n / 2] == 0.0, "midpoint is not zero");
        for (int i = 1; i < n; ++i)
            expect(t.boundaries[i] > t.boundaries[i - 1], "table not increasing");
        for (int i = 1; i < n; ++i)
            expect_near(t.boundaries[i], -t.boundaries[n - i], 1e-12, "table not symmetric");
    }
    InvCdfTable t3 = build_inv_cdf_table(3);
    expect_near(t3.boundaries[6], 0.6744897501960818, 1e-9, "Phi^-1(6/8)");
    expect_near(t3.boundaries[5], 0.3186393639643752, 1e-9, "Phi^-1(5/8)");
    expect_near(t3.boundaries[7], 1.1503493803760083, 1e-9, "Phi^-1(7/8)");
}

void check_zeta_closed_form_vs_gd() {
    ZetaEstimate cf = estimate_zeta_star(1000000, 77);
    ZetaEstimate gd = estimate_zeta_star_gd(1000000, 77);
    expect_near(cf.zeta_star, gd.zeta_star, 1e-4, "closed form vs gradient descent");
}

void check_code_range() {
    Tensor x = random_tensor({4, 256}, 41);
    for (int b = 1; b <= 4; ++b) {
        QuantConfig cfg{Method::bbq, b, 128, Granularity::per_channel};
        QuantizeTrace tr = bbq_quantize_trace(x.to_double(), x.shape(), cfg);
        std::vector<double> allowed = code_value_set(b, zero_point_for_bits(b));
        for (double q : tr.codes)
            expect(std::find(allowed.begin(), allowed.end(), q) != allowed.end(),
                   "code outside the representable set");
    }
}

void check_ito_property() {
    std::vector<double> v = random_normal(1 << 20, 42);
    for (int b = 1; b <= 4; ++b) {
        QuantConfig cfg{Method::bbq, b, 128, Granularity::per_tensor};
        QuantizeTrace tr = bbq_quantize_trace(v, {v.size() / 128, 128}, cfg);
        CodeHistogram h = histogram_from_bins(tr.bins, b);
        const double expected = 1.0 / static_cast<double>(1 << b);
        for (int i = 0; i < (1 << b); ++i) {
            double freq = static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
            expect(std::abs(freq - expected) < 0.005, "code frequency not uniform");
        }
        expect(entropy_bits(h) >= b - 0.01, "entropy below the ITO bound");
        expect(entropy_bits(h) <= b + 1e-12, "entropy above precision");
    }
}

void check_magnitude_preservation() {
    std::vector<double> v = random_normal(1 << 16, 43);
    for (double& e : v) e *= 0.37;
    for (int b = 1; b <= 4; ++b) {
        QuantConfig cfg{Method::bbq, b, 128, Granularity::per_tensor};
        QuantizeTrace tr = bbq_quantize_trace(v, {v.size() / 128, 128}, cfg);
        ScaleParam sp = make_scale_param(tr.sigma, v.size());
        std::vector<double> xhat = bbq_dequantize_values(tr, sp.gamma);
        double ma = 0, mh = 0;
        for (size_t i = 0; i < v.size(); ++i) {
            ma += std::abs(v[i]);
            mh += std::abs(xhat[i]);
        }
        expect(std::abs(mh / ma - 1.0) < 0.10, "dequantized magnitude drifted >10%");
    }
}

void check_ste_gradient() {
    const size_t n = 128;
    std::vector<double> x = random_normal(n, 44);
    std::vector<double> g = random_normal(n, 45);
    QuantConfig cfg{Method::bbq, 3, 128, Granularity::per_tensor};
    QuantizeTrace tr = bbq_quantize_trace(x, {1, n}, cfg, /*smooth=*/true);
    ScaleParam sp;
    sp.gamma = {0.9};
    sp.sigma0 = {1.0};
    sp.d = n;
    BbqGrads grads = bbq_backward(g, tr, sp);

    auto smooth_value = [&](const std::vector<double>& input) {
        QuantizeTrace t = bbq_quantize_trace(input, {1, n}, cfg, true);
        std::vector<double> xhat = bbq_dequantize_values(t, sp.gamma);
        double j = 0;
        for (size_t i = 0; i < n; ++i) j += g[i] * xhat[i];
        return j;
    };
    const double h = 1e-5;
    double norm2 = 0, err2 = 0;
    for (size_t i = 0; i < n; ++i) {
        std::vector<double> xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        double fd = (smooth_value(xp) - smooth_value(xm)) / (2 * h);
        err2 += (fd - grads.x[i]) * (fd - grads.x[i]);
        norm2 += fd * fd;
    }
    expect(std::sqrt(err2) <= 1e-4 * std::sqrt(norm2), "STE gradient disagrees with FD");
}

void check_bbq_fast_seeded_identity() {
    Tensor x = random_tensor({8, 128}, 46);
    QuantConfig cfg{Method::bbq, 3, 128, Granularity::per_tensor};
    QuantizeTrace exact = bbq_quantize_trace(x.to_double(), x.shape(), cfg);
    EmaState ema;
    bbq_fast_update(ema, exact.sigma[0]);
    QuantizeTrace fast = bbq_fast_quantize_trace(x.to_double(), x.shape(), cfg, ema);
    expect(exact.bins == fast.bins, "seeded EMA codes differ from exact-sigma codes");
}

void check_quest_contraction() {
    Tensor x = random_tensor({8, 128}, 47);
    QuestConfig cfg{quest_alpha_star(3), 3, 128, Granularity::per_tensor};
    QuestTrace tr = quest_quantize_trace(x.to_double(), x.shape(), cfg);
    std::vector<double> xhat = quest_dequantize_values(tr);
    // Per transformed coordinate the rounding error is at most half a step
    // for unclipped elements; verify in the transformed domain.
    std::vector<double> diff(x.numel());
    std::vector<double> xd = x.to_double();
    for (size_t i = 0; i < diff.size(); ++i) diff[i] = xhat[i] - xd[i];
    fwht_blocked_inplace(diff, 128);
    const double step = cfg.alpha_star * tr.sigma[0];
    for (size_t i = 0; i < diff.size(); ++i)
        if (tr.trusted[i])
            expect(std::abs(diff[i]) <= 0.5 * step + 1e-9, "round-trip error above half step");
}

void check_nibble_bijection() {
    for (Encoding enc : {Encoding::int4, Encoding::mxfp4}) {
        for (int p = 0; p < 16; ++p) {
            double value = decode_nibble(enc, static_cast<uint8_t>(p));
            uint8_t back = encode_nibble(enc, value);
            if (enc == Encoding::mxfp4 && p == 0b1000)
                expect(back == 0, "negative zero should re-encode as 0b0000");
            else
                expect(back == p, "nibble round trip failed");
        }
    }
}

void check_int4_matmul_exact() {
    Rng rng(48);
    const size_t m = 16, k = 64, n = 16;
    QuantConfig cfg{Method::bbq, 3, 64, Granularity::per_tensor};
    Tensor a = random_tensor({m, k}, 49);
    Tensor w = random_tensor({n, k}, 50);
    QuantizeTrace ta = bbq_quantize_trace(a.to_double(), a.shape(), cfg);
    QuantizeTrace tw = bbq_quantize_trace(w.to_double(), w.shape(), cfg);
    QuantizedTensor qa = encode_codes(trace_to_quantized(ta, Method::bbq, {1.0}),
                                      Encoding::int4);
    QuantizedTensor qw = transpose_quantized(
        encode_codes(trace_to_quantized(tw, Method::bbq, {1.0}), Encoding::int4));
    std::vector<int32_t> acc = lowprec_matmul_i32(qa, qw);
    for (size_t r = 0; r < m; ++r)
        for (size_t c = 0; c < n; ++c) {
            int64_t ref = 0;
            for (size_t i = 0; i < k; ++i)
                ref += static_cast<int64_t>(ta.codes[r * k + i]) *
                       static_cast<int64_t>(tw.codes[c * k + i]);
            expect(acc[r * n + c] == ref, "integer accumulator mismatch");
        }
    (void)rng;
}

void check_binsearch_floor_equivalence() {
    std::vector<double> v(200000);
    Rng rng(51);
    for (double& e : v) e = rng.uniform(-4.0, 4.0);
    InvCdfTable table = build_inv_cdf_table(3);
    std::vector<uint8_t> bins = binsearch_bins(v, table);
    size_t mismatches = 0;
    for (size_t i = 0; i < v.size(); ++i) {
        int direct = std::clamp(static_cast<int>(std::floor(8.0 * phi(v[i]))), 0, 7);
        if (direct != bins[i]) {
            ++mismatches;
            double nearest = 1e9;
            for (int j = 1; j < 8; ++j)
                nearest = std::min(nearest, std::abs(v[i] - table.boundaries[j]));
            expect(nearest < 1e-9, "mismatch away from a bin boundary");
        }
    }
    expect(static_cast<double>(mismatches) / static_cast<double>(v.size()) < 1e-5,
           "too many binary-search/floor mismatches");
}

void check_mxfp4_decode_exact() {
    const auto& table = nibble_value_table(Encoding::mxfp4);
    for (double v : table)
        expect(static_cast<double>(static_cast<float>(v)) == v,
               "MXFP4 value not exactly representable in real32");
}

void check_entropy_bounds_and_permutation() {
    Rng rng(52);
    std::vector<uint8_t> bins(4096);
    for (auto& b : bins) b = static_cast<uint8_t>(rng.below(4));
    CodeHistogram h = histogram_from_bins(bins, 2);
    double e = entropy_bits(h);
    expect(e >= 0.0 && e <= 2.0, "entropy out of [0, b]");
    std::vector<uint8_t> shuffled = bins;
    for (size_t i = shuffled.size(); i > 1; --i)
        std::swap(shuffled[i - 1], shuffled[rng.below(i)]);
    expect(entropy_bits(histogram_from_bins(shuffled, 2)) == e,
           "entropy not permutation invariant");
}

void check_entropy_mixing() {
    Rng rng(53);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<uint8_t> b1(512), b2(768);
        for (auto& b : b1) b = static_cast<uint8_t>(rng.below(4));
        for (auto& b : b2) b = static_cast<uint8_t>(rng.below(2));  // skewed
        CodeHistogram h1 = histogram_from_bins(b1, 2);
        CodeHistogram h2 = histogram_from_bins(b2, 2);
        CodeHistogram pooled = h1;
        pooled.merge(h2);
        double lo = std::min(entropy_bits(h1), entropy_bits(h2));
        expect(entropy_bits(pooled) >= lo - 1e-12, "mixture entropy below min of parts");
    }
}

TrainConfig small_train_config() {
    TrainConfig cfg;
    cfg.method = TrainMethod::bbq;
    cfg.bits = 2;
    cfg.block = 8;
    cfg.input_dim = 16;
    cfg.hidden_dim = 16;
    cfg.feature_dim = 8;
    cfg.num_classes = 3;
    cfg.iterations = 30;
    cfg.batch_size = 8;
    cfg.seed = 5;
    return cfg;
}

void check_train_determinism() {
    TrainResult r1 = train(small_train_config());
    TrainResult r2 = train(small_train_config());
    expect(r1.history.size() == r2.history.size(), "history lengths differ");
    for (size_t i = 0; i < r1.history.size(); ++i) {
        expect(r1.history[i].loss == r2.history[i].loss, "loss traces differ");
        expect(r1.history[i].entropy_pooled == r2.history[i].entropy_pooled,
               "entropy traces differ");
    }
}

void check_model_gradients() {
    TrainConfig cfg = small_train_config();
    cfg.smooth_quantizers = true;
    ToyModel model = make_toy_model(cfg);
    SynthDataset ds(cfg.seed, cfg.input_dim, cfg.num_classes, cfg.data_margin);
    Batch init = ds.next_batch(8);
    initialize_sites(model, init);
    Batch batch = ds.next_batch(2);

    ForwardResult fwd = forward(model, batch, ForwardMode::training);
    Gradients grads = backward(model, fwd);
    std::vector<std::vector<double>*> grefs = gradient_refs(grads);
    std::vector<ParamRef> params = parameters(model);
    std::vector<std::vector<double>*> aligned(grefs.begin(), grefs.begin() + 6);
    for (size_t i = 6; i < 10 && params.size() > 6; ++i) aligned.push_back(grefs[i]);

    const double h = 1e-5;
    for (size_t p = 0; p < params.size(); ++p) {
        std::vector<double>& theta = *params[p].values;
        for (size_t i = 0; i < theta.size(); i += std::max<size_t>(1, theta.size() / 5)) {
            double keep = theta[i];
            theta[i] = keep + h;
            double lp = forward(model, batch, ForwardMode::training).loss;
            theta[i] = keep - h;
            double lm = forward(model, batch, ForwardMode::training).loss;
            theta[i] = keep;
            double fd = (lp - lm) / (2 * h);
            double an = (*aligned[p])[i];
            double tol = 1e-3 * std::max({std::abs(fd), std::abs(an), 1e-4});
            expect(std::abs(fd - an) <= tol,
                   "model gradient mismatch at " + params[p].name);
        }
    }
}

void check_train_entropy_ceiling_and_init() {
    TrainConfig cfg = small_train_config();
    cfg.input_dim = 128;
    cfg.hidden_dim = 128;
    cfg.block = 128;
    cfg.iterations = 12;
    TrainResult r = train(cfg);
    expect(r.initial_entropy >= cfg.bits - 0.02, "initial entropy below ITO expectation");
    for (const LogRow& row : r.history)
        expect(row.entropy_pooled <= cfg.bits + 1e-9, "entropy exceeded precision");
}

void check_vision_gamma_recompute() {
    TrainConfig cfg = small_train_config();
    cfg.vision_mode = true;
    ToyModel model = make_toy_model(cfg);
    SynthDataset ds(cfg.seed, cfg.input_dim, cfg.num_classes, cfg.data_margin);
    initialize_sites(model, ds.next_batch(8));
    Batch batch = ds.next_batch(8);
    ForwardResult fwd = forward(model, batch, ForwardMode::training);
    for (size_t g = 0; g < fwd.w1.bbq.sigma.size(); ++g)
        expect_near(fwd.w1.gamma_used[g], cfg.vision_zeta * fwd.w1.bbq.sigma[g], 1e-12,
                    "vision gamma is not zeta*sigma");
}

}  // namespace

int run_selftest(std::ostream& out) {
    const std::vector<Check> checks = {
        {"tensorio.roundtrip_bit_exact", check_tensor_roundtrip},
        {"tensorio.header_offset", check_tensor_header_offset},
        {"hadamard.energy_preservation", check_hadamard_energy},
        {"hadamard.matches_explicit_matrix", check_hadamard_matrix_path},
        {"hadamard.involution", check_hadamard_involution},
        {"hadamard.gaussianization_kurtosis", check_hadamard_gaussianization},
        {"gaussian.phi_monotone", check_phi_monotone},
        {"gaussian.inverse_consistency", check_phi_inverse_consistency},
        {"gaussian.inv_cdf_tables", check_inv_cdf_tables},
        {"gaussian.zeta_closed_form_vs_gd", check_zeta_closed_form_vs_gd},
        {"quantizers.code_range", check_code_range},
        {"quantizers.ito_uniform_codes", check_ito_property},
        {"quantizers.magnitude_preservation", check_magnitude_preservation},
        {"quantizers.ste_gradient_vs_fd", check_ste_gradient},
        {"quantizers.bbq_fast_seeded_identity", check_bbq_fast_seeded_identity},
        {"quantizers.quest_roundtrip_contraction", check_quest_contraction},
        {"kernelsim.nibble_bijection", check_nibble_bijection},
        {"kernelsim.int4_matmul_exact", check_int4_matmul_exact},
        {"kernelsim.binsearch_floor_equivalence", check_binsearch_floor_equivalence},
        {"kernelsim.mxfp4_values_exact_real32", check_mxfp4_decode_exact},
        {"entropy.bounds_and_permutation", check_entropy_bounds_and_permutation},
        {"entropy.mixing_above_min", check_entropy_mixing},
        {"training.determinism", check_train_determinism},
        {"training.model_gradients_vs_fd", check_model_gradients},
        {"training.entropy_ceiling_and_init", check_train_entropy_ceiling_and_init},
        {"training.vision_gamma_recompute", check_vision_gamma_recompute},
    };

    int failures = 0;
    for (const Check& check : checks) {
        try {
            check.body();
            out << "PASS " << check.name << "\n";
        } catch (const std::exception& e) {
            ++failures;
            out << "FAIL " << check.name << ": " << e.what() << "\n";
        }
    }
    return failures;
}

}  // namespace bbq
