#include "training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "entropy.hpp"
#include "kernelsim.hpp"

#include "json.hpp"

namespace bbq {

namespace {

using nlohmann::json;

// --------------------------------------------------------------- small BLAS

// a [m,k] times b^T with b [n,k] -> [m,n]
std::vector<double> matmul_nt(const std::vector<double>& a, size_t m, size_t k,
                              const std::vector<double>& b, size_t n) {
    std::vector<double> out(m * n, 0.0);
    for (size_t r = 0; r < m; ++r) {
        const double* arow = a.data() + r * k;
        for (size_t c = 0; c < n; ++c) {
            const double* brow = b.data() + c * k;
            double acc = 0.0;
            for (size_t i = 0; i < k; ++i) acc += arow[i] * brow[i];
            out[r * n + c] = acc;
        }
    }
    return out;
}

// a [m,k] times b [k,n] -> [m,n]
std::vector<double> matmul_nn(const std::vector<double>& a, size_t m, size_t k,
                              const std::vector<double>& b, size_t n) {
    std::vector<double> out(m * n, 0.0);
    for (size_t r = 0; r < m; ++r) {
        double* orow = out.data() + r * n;
        for (size_t i = 0; i < k; ++i) {
            const double av = a[r * k + i];
            const double* brow = b.data() + i * n;
            for (size_t c = 0; c < n; ++c) orow[c] += av * brow[c];
        }
    }
    return out;
}

// a^T times b with a [m,k], b [m,n] -> [k,n]
std::vector<double> matmul_tn(const std::vector<double>& a, size_t m, size_t k,
                              const std::vector<double>& b, size_t n) {
    std::vector<double> out(k * n, 0.0);
    for (size_t r = 0; r < m; ++r) {
        const double* arow = a.data() + r * k;
        const double* brow = b.data() + r * n;
        for (size_t i = 0; i < k; ++i) {
            double* orow = out.data() + i * n;
            const double av = arow[i];
            for (size_t c = 0; c < n; ++c) orow[c] += av * brow[c];
        }
    }
    return out;
}

void add_bias_rows(std::vector<double>& x, size_t rows, const std::vector<double>& bias) {
    const size_t n = bias.size();
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < n; ++c) x[r * n + c] += bias[c];
}

std::vector<double> column_sums(const std::vector<double>& x, size_t rows, size_t cols) {
    std::vector<double> out(cols, 0.0);
    for (size_t r = 0; r < rows; ++r)
        for (size_t c = 0; c < cols; ++c) out[c] += x[r * cols + c];
    return out;
}

}  // namespace

double gelu(double x) {
    return x * phi(x);
}

double gelu_grad(double x) {
    return phi(x) + x * phi_pdf(x);
}

TrainMethod parse_train_method(const std::string& s) {
    if (s == "none" || s == "full" || s == "fp") return TrainMethod::none;
    if (s == "bbq") return TrainMethod::bbq;
    if (s == "bbq-fast" || s == "bbq_fast") return TrainMethod::bbq_fast;
    if (s == "lsq") return TrainMethod::lsq;
    if (s == "quest") return TrainMethod::quest;
    fail(ErrorCode::invalid_argument, "unknown training method '" + s + "'");
}

std::string train_method_name(TrainMethod m) {
    switch (m) {
        case TrainMethod::none: return "none";
        case TrainMethod::bbq: return "bbq";
        case TrainMethod::bbq_fast: return "bbq-fast";
        case TrainMethod::lsq: return "lsq";
        case TrainMethod::quest: return "quest";
    }
    return "?";
}

void validate_train_config(const TrainConfig& cfg) {
    require(cfg.bits >= 1 && cfg.bits <= 4, ErrorCode::invalid_argument, "bits must be in 1..4");
    require(cfg.iterations >= 0, ErrorCode::invalid_argument, "iterations must be >= 0");
    require(cfg.batch_size >= 1, ErrorCode::invalid_argument, "batch size must be >= 1");
    require(cfg.num_classes >= 2, ErrorCode::invalid_argument, "need at least two classes");
    require(cfg.lr >= 0.0 && cfg.weight_decay >= 0.0, ErrorCode::invalid_argument,
            "lr and weight decay must be non-negative");
    if (cfg.method != TrainMethod::none && cfg.method != TrainMethod::lsq) {
        require(is_power_of_two(cfg.block), ErrorCode::invalid_argument,
                "block must be a power of two");
        require(cfg.input_dim % cfg.block == 0 && cfg.hidden_dim % cfg.block == 0,
                ErrorCode::invalid_argument,
                "quantized layer input dims must be divisible by the block size");
    }
    if (cfg.method == TrainMethod::lsq)
        require(cfg.bits >= 2, ErrorCode::invalid_argument, "lsq does not support 1-bit");
}

// ----------------------------------------------------------------- dataset

SynthDataset::SynthDataset(uint64_t seed, size_t dim, int num_classes, double margin)
    : dim_(dim), num_classes_(num_classes), rng_(derive_seed(seed, 0xdadaULL)) {
    Rng mean_rng(derive_seed(seed, 0x3ea5ULL));
    means_.resize(static_cast<size_t>(num_classes) * dim);
    for (int c = 0; c < num_classes; ++c) {
        double* mean = means_.data() + static_cast<size_t>(c) * dim;
        double norm = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            mean[i] = sample_standard_normal(mean_rng);
            norm += mean[i] * mean[i];
        }
        norm = std::sqrt(norm);
        for (size_t i = 0; i < dim; ++i) mean[i] *= margin / norm;
    }
}

Batch SynthDataset::next_batch(size_t n) {
    Batch batch;
    batch.shape = {n, dim_};
    batch.x.resize(n * dim_);
    batch.labels.resize(n);
    for (size_t s = 0; s < n; ++s) {
        int label = static_cast<int>(cursor_++ % static_cast<uint64_t>(num_classes_));
        batch.labels[s] = label;
        const double* mean = means_.data() + static_cast<size_t>(label) * dim_;
        double* row = batch.x.data() + s * dim_;
        for (size_t i = 0; i < dim_; ++i) row[i] = mean[i] + sample_standard_normal(rng_);
    }
    return batch;
}

// ------------------------------------------------------------------- model

namespace {

LinearLayer make_linear(size_t out_dim, size_t in_dim, Rng& rng) {
    LinearLayer layer;
    layer.out_dim = out_dim;
    layer.in_dim = in_dim;
    layer.w.resize(out_dim * in_dim);
    layer.b.assign(out_dim, 0.0);
    const double std = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& v : layer.w) v = std * sample_standard_normal(rng);
    return layer;
}

bool method_has_scales(const TrainConfig& cfg) {
    if (cfg.vision_mode) return false;
    return cfg.method == TrainMethod::bbq || cfg.method == TrainMethod::bbq_fast ||
           cfg.method == TrainMethod::lsq;
}

QuantConfig site_quant_config(const TrainConfig& cfg) {
    QuantConfig q;
    q.method = cfg.method == TrainMethod::bbq_fast ? Method::bbq_fast : Method::bbq;
    q.bits = cfg.bits;
    q.block = cfg.block;
    return q;
}

}  // namespace

ToyModel make_toy_model(const TrainConfig& cfg) {
    validate_train_config(cfg);
    ToyModel model;
    model.cfg = cfg;
    Rng rng(derive_seed(cfg.seed, 0x101dULL));
    model.l1 = make_linear(cfg.hidden_dim, cfg.input_dim, rng);
    model.l2 = make_linear(cfg.feature_dim, cfg.hidden_dim, rng);
    model.readout = make_linear(static_cast<size_t>(cfg.num_classes), cfg.feature_dim, rng);
    model.a1.granularity = Granularity::per_tensor;
    model.a2.granularity = Granularity::per_tensor;
    model.w1.granularity = Granularity::per_channel;
    model.w2.granularity = Granularity::per_channel;
    return model;
}

namespace {

void init_site(QuantSite& site, const std::vector<double>& values,
               const std::vector<size_t>& shape, const TrainConfig& cfg, bool is_activation) {
    if (cfg.method == TrainMethod::none || cfg.method == TrainMethod::quest) {
        site.initialized = true;
        return;
    }
    if (cfg.method == TrainMethod::lsq) {
        site.granularity = Granularity::per_tensor;
        site.scale.gamma = {lsq_init_step(values, cfg.bits)};
        site.scale.sigma0 = site.scale.gamma;
        site.scale.d = values.size();
        site.initialized = true;
        return;
    }
    QuantConfig q = site_quant_config(cfg);
    q.granularity = site.granularity;
    QuantizeTrace trace = bbq_quantize_trace(values, shape, q);
    size_t d = is_activation ? values.size() : scale_group_size(shape, site.granularity);
    site.scale = make_scale_param(trace.sigma, d);
    site.scale.learnable = !cfg.vision_mode;
    if (is_activation && trace.sigma[0] > 0.0) bbq_fast_update(site.ema, trace.sigma[0]);
    site.initialized = true;
}

}  // namespace

void initialize_sites(ToyModel& model, const Batch& batch) {
    const TrainConfig& cfg = model.cfg;
    init_site(model.a1, batch.x, batch.shape, cfg, true);
    init_site(model.w1, model.l1.w, {model.l1.out_dim, model.l1.in_dim}, cfg, false);

    // Activation entering the second layer: propagate the batch once with
    // whatever scales exist so sigma0 is measured where training starts.
    std::vector<double> a1_deq = batch.x;
    if (cfg.method == TrainMethod::bbq || cfg.method == TrainMethod::bbq_fast) {
        QuantConfig q = site_quant_config(cfg);
        q.granularity = Granularity::per_tensor;
        QuantizeTrace t = bbq_quantize_trace(batch.x, batch.shape, q);
        std::vector<double> gamma = cfg.vision_mode
                                        ? std::vector<double>{cfg.vision_zeta * t.sigma[0]}
                                        : model.a1.scale.gamma;
        a1_deq = bbq_dequantize_values(t, gamma);
    } else if (cfg.method == TrainMethod::lsq) {
        LsqTrace t = lsq_quantize_trace(batch.x, batch.shape,
                                        {model.a1.scale.gamma[0], cfg.bits});
        a1_deq = lsq_dequantize_values(t);
    } else if (cfg.method == TrainMethod::quest) {
        QuestConfig q{quest_alpha_star(cfg.bits), cfg.bits, cfg.block, Granularity::per_tensor};
        a1_deq = quest_dequantize_values(quest_quantize_trace(batch.x, batch.shape, q));
    }

    std::vector<double> w1_deq = model.l1.w;
    if (cfg.method == TrainMethod::bbq || cfg.method == TrainMethod::bbq_fast) {
        QuantConfig q = site_quant_config(cfg);
        q.granularity = Granularity::per_channel;
        QuantizeTrace t =
            bbq_quantize_trace(model.l1.w, {model.l1.out_dim, model.l1.in_dim}, q);
        std::vector<double> gamma = model.w1.scale.gamma;
        if (cfg.vision_mode) {
            gamma = t.sigma;
            for (double& g : gamma) g *= cfg.vision_zeta;
        }
        w1_deq = bbq_dequantize_values(t, gamma);
    } else if (cfg.method == TrainMethod::lsq) {
        LsqTrace t = lsq_quantize_trace(model.l1.w, {model.l1.out_dim, model.l1.in_dim},
                                        {model.w1.scale.gamma[0], cfg.bits});
        w1_deq = lsq_dequantize_values(t);
    } else if (cfg.method == TrainMethod::quest) {
        QuestConfig q{quest_alpha_star(cfg.bits), cfg.bits, cfg.block,
                      Granularity::per_channel};
        w1_deq = quest_dequantize_values(
            quest_quantize_trace(model.l1.w, {model.l1.out_dim, model.l1.in_dim}, q));
    }

    std::vector<double> h1 =
        matmul_nt(a1_deq, batch.shape[0], model.l1.in_dim, w1_deq, model.l1.out_dim);
    add_bias_rows(h1, batch.shape[0], model.l1.b);
    for (double& v : h1) v = gelu(v);

    init_site(model.a2, h1, {batch.shape[0], model.l1.out_dim}, cfg, true);
    init_site(model.w2, model.l2.w, {model.l2.out_dim, model.l2.in_dim}, cfg, false);
}

// ----------------------------------------------------------------- forward

namespace {

SiteTrace quantize_site(const std::vector<double>& values, const std::vector<size_t>& shape,
                        QuantSite& site, const TrainConfig& cfg, bool is_activation,
                        ForwardMode mode) {
    SiteTrace st;
    st.method = cfg.method;
    switch (cfg.method) {
        case TrainMethod::none:
            st.dequant = values;
            return st;
        case TrainMethod::bbq:
        case TrainMethod::bbq_fast: {
            require(site.initialized, ErrorCode::invalid_argument,
                    "quantized site not initialized (missing gamma_init)");
            QuantConfig q = site_quant_config(cfg);
            q.granularity = site.granularity;
            const bool use_ema = is_activation && mode == ForwardMode::inference;
            st.bbq = use_ema
                         ? bbq_fast_quantize_trace(values, shape, q, site.ema,
                                                   cfg.smooth_quantizers)
                         : bbq_quantize_trace(values, shape, q, cfg.smooth_quantizers);
            if (cfg.vision_mode) {
                st.gamma_used.resize(st.bbq.sigma.size());
                for (size_t g = 0; g < st.bbq.sigma.size(); ++g)
                    st.gamma_used[g] = cfg.vision_zeta * st.bbq.sigma[g];
            } else {
                st.gamma_used = site.scale.gamma;
            }
            st.dequant = bbq_dequantize_values(st.bbq, st.gamma_used);
            if (is_activation && mode == ForwardMode::training && st.bbq.sigma[0] > 0.0)
                bbq_fast_update(site.ema, st.bbq.sigma[0]);
            return st;
        }
        case TrainMethod::lsq: {
            require(site.initialized, ErrorCode::invalid_argument,
                    "quantized site not initialized (missing step init)");
            st.lsq = lsq_quantize_trace(values, shape, {site.scale.gamma[0], cfg.bits});
            st.gamma_used = site.scale.gamma;
            st.dequant = lsq_dequantize_values(st.lsq);
            return st;
        }
        case TrainMethod::quest: {
            QuestConfig q{quest_alpha_star(cfg.bits), cfg.bits, cfg.block, site.granularity};
            st.quest = quest_quantize_trace(values, shape, q);
            st.dequant = quest_dequantize_values(st.quest);
            return st;
        }
    }
    fail(ErrorCode::internal, "unreachable");
}

struct SiteBackward {
    std::vector<double> x;
    std::vector<double> scale;
};

SiteBackward site_backward(const std::vector<double>& grad, const SiteTrace& st,
                           const QuantSite& site, const TrainConfig& cfg) {
    SiteBackward out;
    switch (st.method) {
        case TrainMethod::none:
            out.x = grad;
            return out;
        case TrainMethod::bbq:
        case TrainMethod::bbq_fast: {
            ScaleParam sp;
            sp.gamma = st.gamma_used;
            sp.sigma0 = st.gamma_used;
            sp.d = site.scale.d;
            BbqGrads bg = bbq_backward(grad, st.bbq, sp);
            out.x = std::move(bg.x);
            if (!cfg.vision_mode) out.scale = std::move(bg.gamma);
            return out;
        }
        case TrainMethod::lsq: {
            LsqGrads lg = lsq_backward(grad, st.lsq);
            out.x = std::move(lg.x);
            out.scale = {lg.s};
            return out;
        }
        case TrainMethod::quest:
            out.x = quest_backward(grad, st.quest);
            return out;
    }
    fail(ErrorCode::internal, "unreachable");
}

}  // namespace

ForwardResult forward(ToyModel& model, const Batch& batch, ForwardMode mode) {
    const TrainConfig& cfg = model.cfg;
    require(batch.shape.size() == 2 && batch.shape[1] == cfg.input_dim,
            ErrorCode::shape_mismatch, "batch shape does not match model input dim");
    const size_t n = batch.shape[0];

    ForwardResult fr;
    fr.batch = batch;

    fr.a1 = quantize_site(batch.x, batch.shape, model.a1, cfg, true, mode);
    fr.w1 = quantize_site(model.l1.w, {model.l1.out_dim, model.l1.in_dim}, model.w1, cfg,
                          false, mode);
    fr.h1 = matmul_nt(fr.a1.dequant, n, cfg.input_dim, fr.w1.dequant, cfg.hidden_dim);
    add_bias_rows(fr.h1, n, model.l1.b);

    fr.g1.resize(fr.h1.size());
    for (size_t i = 0; i < fr.h1.size(); ++i) fr.g1[i] = gelu(fr.h1[i]);

    fr.a2 = quantize_site(fr.g1, {n, cfg.hidden_dim}, model.a2, cfg, true, mode);
    fr.w2 = quantize_site(model.l2.w, {model.l2.out_dim, model.l2.in_dim}, model.w2, cfg,
                          false, mode);
    fr.h2 = matmul_nt(fr.a2.dequant, n, cfg.hidden_dim, fr.w2.dequant, cfg.feature_dim);
    add_bias_rows(fr.h2, n, model.l2.b);

    fr.logits = matmul_nt(fr.h2, n, cfg.feature_dim, model.readout.w,
                          static_cast<size_t>(cfg.num_classes));
    add_bias_rows(fr.logits, n, model.readout.b);

    // Softmax cross-entropy with the usual max-shift stabilization.
    const size_t c = static_cast<size_t>(cfg.num_classes);
    fr.probs.resize(fr.logits.size());
    double loss = 0.0;
    size_t correct = 0;
    for (size_t r = 0; r < n; ++r) {
        const double* row = fr.logits.data() + r * c;
        double* prow = fr.probs.data() + r * c;
        double mx = row[0];
        size_t argmax = 0;
        for (size_t j = 1; j < c; ++j)
            if (row[j] > mx) mx = row[j], argmax = j;
        double sum = 0.0;
        for (size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        double log_sum = std::log(sum);
        for (size_t j = 0; j < c; ++j) prow[j] = std::exp(row[j] - mx) / sum;
        loss -= (row[static_cast<size_t>(batch.labels[r])] - mx - log_sum);
        if (argmax == static_cast<size_t>(batch.labels[r])) ++correct;
    }
    fr.loss = loss / static_cast<double>(n);
    fr.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return fr;
}

Gradients backward(const ToyModel& model, const ForwardResult& fwd) {
    const TrainConfig& cfg = model.cfg;
    const size_t n = fwd.batch.shape[0];
    const size_t c = static_cast<size_t>(cfg.num_classes);

    Gradients g;

    // dL/dlogits = (softmax - onehot)/n
    std::vector<double> dlogits = fwd.probs;
    for (size_t r = 0; r < n; ++r)
        dlogits[r * c + static_cast<size_t>(fwd.batch.labels[r])] -= 1.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& v : dlogits) v *= inv_n;

    // dlogits^T [c,n] times h2 [n,feature] is exactly readout.w's [out,in] layout.
    g.w3 = matmul_tn(dlogits, n, c, fwd.h2, cfg.feature_dim);
    g.b3 = column_sums(dlogits, n, c);

    std::vector<double> dh2 = matmul_nn(dlogits, n, c, model.readout.w, cfg.feature_dim);
    g.b2 = column_sums(dh2, n, cfg.feature_dim);

    std::vector<double> dw2_deq = matmul_tn(dh2, n, cfg.feature_dim, fwd.a2.dequant,
                                            cfg.hidden_dim);
    std::vector<double> da2_deq = matmul_nn(dh2, n, cfg.feature_dim, fwd.w2.dequant,
                                            cfg.hidden_dim);

    SiteBackward sb_w2 = site_backward(dw2_deq, fwd.w2, model.w2, cfg);
    SiteBackward sb_a2 = site_backward(da2_deq, fwd.a2, model.a2, cfg);
    g.w2 = std::move(sb_w2.x);
    g.s_w2 = std::move(sb_w2.scale);
    g.s_a2 = std::move(sb_a2.scale);

    std::vector<double> dh1 = std::move(sb_a2.x);
    for (size_t i = 0; i < dh1.size(); ++i) dh1[i] *= gelu_grad(fwd.h1[i]);
    g.b1 = column_sums(dh1, n, cfg.hidden_dim);

    std::vector<double> dw1_deq =
        matmul_tn(dh1, n, cfg.hidden_dim, fwd.a1.dequant, cfg.input_dim);
    std::vector<double> da1_deq =
        matmul_nn(dh1, n, cfg.hidden_dim, fwd.w1.dequant, cfg.input_dim);

    SiteBackward sb_w1 = site_backward(dw1_deq, fwd.w1, model.w1, cfg);
    SiteBackward sb_a1 = site_backward(da1_deq, fwd.a1, model.a1, cfg);
    g.w1 = std::move(sb_w1.x);
    g.s_w1 = std::move(sb_w1.scale);
    g.s_a1 = std::move(sb_a1.scale);

    return g;
}

std::vector<double> forward_logits_lowprec(ToyModel& model, const Batch& batch) {
    const TrainConfig& cfg = model.cfg;
    require(cfg.method == TrainMethod::bbq || cfg.method == TrainMethod::bbq_fast ||
                cfg.method == TrainMethod::lsq,
            ErrorCode::invalid_argument, "low-precision matmul path needs an affine method");
    require(!cfg.smooth_quantizers, ErrorCode::invalid_argument,
            "smooth mode has no discrete codes");
    const size_t n = batch.shape[0];
    const Encoding enc =
        cfg.method == TrainMethod::lsq || cfg.bits >= 3 ? Encoding::int4 : Encoding::mxfp4;

    // Quantize one site to its packed form.
    auto quantize_packed = [&](const std::vector<double>& values,
                               const std::vector<size_t>& shape, QuantSite& site,
                               bool is_activation) {
        if (cfg.method == TrainMethod::lsq) {
            auto [qt, trace] = lsq_quantize(Tensor::from_double(shape, values),
                                            {site.scale.gamma[0], cfg.bits});
            return encode_codes(qt, enc);
        }
        SiteTrace st = quantize_site(values, shape, site, cfg, is_activation,
                                     ForwardMode::inference);
        return encode_codes(trace_to_quantized(st.bbq, Method::bbq, st.gamma_used), enc);
    };

    auto layer_lowprec = [&](const std::vector<double>& act, const std::vector<size_t>& shape,
                             QuantSite& act_site, const LinearLayer& layer,
                             QuantSite& w_site) {
        QuantizedTensor qa = quantize_packed(act, shape, act_site, true);
        QuantizedTensor qw =
            quantize_packed(layer.w, {layer.out_dim, layer.in_dim}, w_site, false);
        Tensor y = lowprec_matmul(qa, transpose_quantized(qw));
        std::vector<double> out = y.to_double();
        add_bias_rows(out, n, layer.b);
        return out;
    };

    std::vector<double> h1 = layer_lowprec(batch.x, batch.shape, model.a1, model.l1, model.w1);
    for (double& v : h1) v = gelu(v);
    std::vector<double> h2 =
        layer_lowprec(h1, {n, cfg.hidden_dim}, model.a2, model.l2, model.w2);

    std::vector<double> logits = matmul_nt(h2, n, cfg.feature_dim, model.readout.w,
                                           static_cast<size_t>(cfg.num_classes));
    add_bias_rows(logits, n, model.readout.b);
    return logits;
}

std::vector<ParamRef> parameters(ToyModel& model) {
    std::vector<ParamRef> params = {
        {"l1.w", &model.l1.w, false},      {"l1.b", &model.l1.b, false},
        {"l2.w", &model.l2.w, false},      {"l2.b", &model.l2.b, false},
        {"readout.w", &model.readout.w, false}, {"readout.b", &model.readout.b, false},
    };
    if (method_has_scales(model.cfg)) {
        params.push_back({"a1.scale", &model.a1.scale.gamma, true});
        params.push_back({"w1.scale", &model.w1.scale.gamma, true});
        params.push_back({"a2.scale", &model.a2.scale.gamma, true});
        params.push_back({"w2.scale", &model.w2.scale.gamma, true});
    }
    return params;
}

std::vector<std::vector<double>*> gradient_refs(Gradients& grads) {
    return {&grads.w1, &grads.b1, &grads.w2,   &grads.b2,   &grads.w3,   &grads.b3,
            &grads.s_a1, &grads.s_w1, &grads.s_a2, &grads.s_w2};
}

// ----------------------------------------------------------------- entropy

namespace {

std::vector<uint8_t> site_weight_bins(const SiteTrace& st, int bits) {
    switch (st.method) {
        case TrainMethod::none:
            return {};
        case TrainMethod::bbq:
        case TrainMethod::bbq_fast:
            return st.bbq.bins;
        case TrainMethod::lsq: {
            std::vector<uint8_t> bins(st.lsq.codes.size());
            const int half = 1 << (bits - 1);
            for (size_t i = 0; i < bins.size(); ++i)
                bins[i] = static_cast<uint8_t>(static_cast<int>(st.lsq.codes[i]) + half);
            return bins;
        }
        case TrainMethod::quest: {
            std::vector<uint8_t> bins(st.quest.codes.size());
            const int half = 1 << (bits - 1);
            for (size_t i = 0; i < bins.size(); ++i)
                bins[i] = static_cast<uint8_t>(static_cast<int>(st.quest.codes[i]) + half);
            return bins;
        }
    }
    return {};
}

WeightEntropy entropy_from_bins(const std::vector<std::vector<uint8_t>>& layers,
                                const std::vector<std::string>& names, int bits) {
    WeightEntropy we;
    we.layer_names = names;
    CodeHistogram pooled;
    pooled.bits = bits;
    double sum = 0.0;
    for (const auto& bins : layers) {
        CodeHistogram h = histogram_from_bins(bins, bits);
        we.per_layer.push_back(entropy_bits(h));
        sum += we.per_layer.back();
        pooled.merge(h);
    }
    we.pooled = entropy_bits(pooled);
    we.averaged = sum / static_cast<double>(layers.size());
    return we;
}

}  // namespace

WeightEntropy model_weight_entropy(ToyModel& model) {
    const TrainConfig& cfg = model.cfg;
    require(cfg.method != TrainMethod::none, ErrorCode::invalid_argument,
            "model has no quantized layers");
    SiteTrace w1 = quantize_site(model.l1.w, {model.l1.out_dim, model.l1.in_dim}, model.w1,
                                 cfg, false, ForwardMode::inference);
    SiteTrace w2 = quantize_site(model.l2.w, {model.l2.out_dim, model.l2.in_dim}, model.w2,
                                 cfg, false, ForwardMode::inference);
    return entropy_from_bins({site_weight_bins(w1, cfg.bits), site_weight_bins(w2, cfg.bits)},
                             {"l1.w", "l2.w"}, cfg.bits);
}

// ------------------------------------------------------------------- train

namespace {

double lr_at(const TrainConfig& cfg, int iter) {
    const int warmup = std::max(1, static_cast<int>(cfg.warmup_frac * cfg.iterations));
    if (iter < warmup)
        return cfg.lr * static_cast<double>(iter + 1) / static_cast<double>(warmup);
    const int tail = std::max(1, cfg.iterations - warmup);
    double progress = static_cast<double>(iter - warmup) / static_cast<double>(tail);
    return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct OptimizerState {
    // One slot per entry of parameters(model), lazily sized.
    std::vector<std::vector<double>> m, v;
    int64_t t = 0;
};

void apply_step(ToyModel& model, Gradients& grads, OptimizerState& opt, double lr) {
    const TrainConfig& cfg = model.cfg;
    std::vector<ParamRef> params = parameters(model);
    std::vector<std::vector<double>*> grefs = gradient_refs(grads);
    // gradient_refs lists all ten slots; the first six always align, the
    // scale slots only exist when the method has learnable scales.
    std::vector<std::vector<double>*> aligned(grefs.begin(), grefs.begin() + 6);
    if (params.size() > 6)
        for (size_t i = 6; i < 10; ++i) aligned.push_back(grefs[i]);

    if (opt.m.empty()) {
        opt.m.resize(params.size());
        opt.v.resize(params.size());
        for (size_t p = 0; p < params.size(); ++p) {
            opt.m[p].assign(params[p].values->size(), 0.0);
            opt.v[p].assign(params[p].values->size(), 0.0);
        }
    }
    ++opt.t;

    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(opt.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(opt.t));

    for (size_t p = 0; p < params.size(); ++p) {
        std::vector<double>& theta = *params[p].values;
        const std::vector<double>& grad = *aligned[p];
        require(grad.size() == theta.size(), ErrorCode::internal,
                "gradient size mismatch for " + params[p].name);
        const bool decay = !params[p].is_scale && cfg.weight_decay > 0.0;
        for (size_t i = 0; i < theta.size(); ++i) {
            double update;
            if (cfg.optimizer == OptimizerKind::adam) {
                opt.m[p][i] = beta1 * opt.m[p][i] + (1.0 - beta1) * grad[i];
                opt.v[p][i] = beta2 * opt.v[p][i] + (1.0 - beta2) * grad[i] * grad[i];
                update = (opt.m[p][i] / bc1) / (std::sqrt(opt.v[p][i] / bc2) + eps);
            } else {
                opt.m[p][i] = cfg.momentum * opt.m[p][i] + grad[i];
                update = opt.m[p][i];
            }
            if (decay) update += cfg.weight_decay * theta[i];
            theta[i] -= lr * update;
        }
    }
}

}  // namespace

TrainResult train(const TrainConfig& cfg) {
    validate_train_config(cfg);
    TrainResult result;
    result.cfg = cfg;
    result.model = make_toy_model(cfg);
    ToyModel& model = result.model;

    SynthDataset dataset(cfg.seed, cfg.input_dim, cfg.num_classes, cfg.data_margin);
    initialize_sites(model, dataset.next_batch(static_cast<size_t>(cfg.batch_size)));

    OptimizerState opt;
    const bool track_entropy = cfg.method != TrainMethod::none && !cfg.smooth_quantizers;
    int diverged_streak = 0;

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        Batch batch = dataset.next_batch(static_cast<size_t>(cfg.batch_size));
        ForwardResult fwd;
        try {
            fwd = forward(model, batch, ForwardMode::training);
        } catch (const Error& e) {
            // Exploding parameters eventually push non-finite values into
            // phi/gelu; report that as divergence, not as a caller error.
            if (e.code() != ErrorCode::domain) throw;
            result.diverged = true;
            result.diverged_at = iter;
            break;
        }
        Gradients grads = backward(model, fwd);
        const double lr = lr_at(cfg, iter);
        apply_step(model, grads, opt, lr);

        LogRow row;
        row.iter = iter;
        row.lr = lr;
        row.loss = fwd.loss;
        row.accuracy = fwd.accuracy;
        if (track_entropy) {
            WeightEntropy we = entropy_from_bins(
                {site_weight_bins(fwd.w1, cfg.bits), site_weight_bins(fwd.w2, cfg.bits)},
                {"l1.w", "l2.w"}, cfg.bits);
            row.entropy_pooled = we.pooled;
            row.entropy_avg = we.averaged;
        } else {
            row.entropy_pooled = std::numeric_limits<double>::quiet_NaN();
            row.entropy_avg = std::numeric_limits<double>::quiet_NaN();
        }
        if (iter % std::max(1, cfg.log_every) == 0 || iter == cfg.iterations - 1)
            result.history.push_back(row);

        if (iter == 0) {
            result.initial_loss = fwd.loss;
            result.initial_entropy = row.entropy_pooled;
            result.min_entropy = row.entropy_pooled;
        } else if (track_entropy) {
            result.min_entropy = std::min(result.min_entropy, row.entropy_pooled);
        }
        result.final_loss = fwd.loss;
        result.final_entropy = row.entropy_pooled;

        // Mirrors the divergence failure mode seen with LSQ at scale: bail
        // out once the loss has been stuck above 10x its initial value for
        // 100 iterations (a non-finite loss counts as diverged immediately).
        if (!std::isfinite(fwd.loss)) {
            result.diverged = true;
            result.diverged_at = iter;
            break;
        }
        if (iter > 0 && fwd.loss > 10.0 * result.initial_loss) {
            if (++diverged_streak >= 100) {
                result.diverged = true;
                result.diverged_at = iter;
                break;
            }
        } else {
            diverged_streak = 0;
        }
    }

    // Held-out accuracy in inference mode (EMA-based activation scales).
    if (cfg.iterations > 0) {
        SynthDataset eval_stream(derive_seed(cfg.seed, 0xe7a1ULL), cfg.input_dim,
                                 cfg.num_classes, cfg.data_margin);
        size_t correct = 0, total = 0;
        for (int b = 0; b < 16; ++b) {
            Batch batch = eval_stream.next_batch(static_cast<size_t>(cfg.batch_size));
            ForwardResult fwd = forward(model, batch, ForwardMode::inference);
            correct += static_cast<size_t>(fwd.accuracy * static_cast<double>(batch.shape[0]) +
                                           0.5);
            total += batch.shape[0];
        }
        result.final_train_accuracy = static_cast<double>(correct) / static_cast<double>(total);
    }
    return result;
}

CsvTable history_to_csv(const std::vector<LogRow>& history) {
    CsvTable table;
    table.header = {"iter", "lr", "loss", "accuracy", "entropy_pooled", "entropy_avg"};
    for (const LogRow& row : history) {
        std::ostringstream lr, loss, acc, ep, ea;
        lr.precision(10);
        loss.precision(10);
        acc.precision(6);
        ep.precision(10);
        ea.precision(10);
        lr << row.lr;
        loss << row.loss;
        acc << row.accuracy;
        ep << row.entropy_pooled;
        ea << row.entropy_avg;
        table.rows.push_back({std::to_string(row.iter), lr.str(), loss.str(), acc.str(),
                              ep.str(), ea.str()});
    }
    return table;
}

// -------------------------------------------------------------- checkpoint

namespace {

void write_vector(const std::string& path, const std::vector<size_t>& shape,
                  const std::vector<double>& values) {
    write_tensor(Tensor::from_double(shape, values), path);
}

}  // namespace

void save_checkpoint(const TrainResult& result, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::io, dir + ": cannot create checkpoint directory");

    const ToyModel& model = result.model;
    const TrainConfig& cfg = result.cfg;
    write_vector(dir + "/l1_w.bbqt", {model.l1.out_dim, model.l1.in_dim}, model.l1.w);
    write_vector(dir + "/l1_b.bbqt", {model.l1.out_dim}, model.l1.b);
    write_vector(dir + "/l2_w.bbqt", {model.l2.out_dim, model.l2.in_dim}, model.l2.w);
    write_vector(dir + "/l2_b.bbqt", {model.l2.out_dim}, model.l2.b);
    write_vector(dir + "/readout_w.bbqt", {model.readout.out_dim, model.readout.in_dim},
                 model.readout.w);
    write_vector(dir + "/readout_b.bbqt", {model.readout.out_dim}, model.readout.b);

    json meta;
    meta["format"] = "bbq-checkpoint";
    meta["version"] = 1;
    meta["method"] = train_method_name(cfg.method);
    meta["bits"] = cfg.bits;
    meta["block"] = cfg.block;
    meta["input_dim"] = cfg.input_dim;
    meta["hidden_dim"] = cfg.hidden_dim;
    meta["feature_dim"] = cfg.feature_dim;
    meta["num_classes"] = cfg.num_classes;
    meta["seed"] = cfg.seed;
    meta["vision_mode"] = cfg.vision_mode;
    meta["vision_zeta"] = cfg.vision_zeta;
    meta["iterations"] = cfg.iterations;
    meta["diverged"] = result.diverged;
    meta["final_loss"] = result.final_loss;
    meta["final_train_accuracy"] = result.final_train_accuracy;
    meta["entropy_convention"] = "pooled histogram over all quantized weight tensors; "
                                 "per-layer average also reported";
    if (method_has_scales(cfg)) {
        meta["scales"] = json::object();
        auto put_scale = [&](const char* name, const QuantSite& site) {
            write_vector(dir + "/" + name + "_scale.bbqt", {site.scale.gamma.size()},
                         site.scale.gamma);
            meta["scales"][name] = std::string(name) + "_scale.bbqt";
        };
        put_scale("a1", model.a1);
        put_scale("w1", model.w1);
        put_scale("a2", model.a2);
        put_scale("w2", model.w2);
    }
    std::ofstream os(dir + "/checkpoint.json", std::ios::trunc);
    require(os.good(), ErrorCode::io, dir + ": cannot write checkpoint.json");
    os << meta.dump(2) << "\n";
}

WeightEntropy checkpoint_weight_entropy(const std::string& dir) {
    std::ifstream is(dir + "/checkpoint.json");
    require(is.good(), ErrorCode::io, dir + ": missing checkpoint.json");
    json meta = json::parse(is, nullptr, false);
    require(!meta.is_discarded() && meta.value("format", "") == "bbq-checkpoint",
            ErrorCode::bad_dtype, dir + ": not a checkpoint directory");

    TrainConfig cfg;
    cfg.method = parse_train_method(meta.at("method").get<std::string>());
    require(cfg.method != TrainMethod::none, ErrorCode::invalid_argument,
            "checkpoint has no quantized layers");
    cfg.bits = meta.at("bits").get<int>();
    cfg.block = meta.at("block").get<size_t>();
    cfg.input_dim = meta.at("input_dim").get<size_t>();
    cfg.hidden_dim = meta.at("hidden_dim").get<size_t>();
    cfg.feature_dim = meta.at("feature_dim").get<size_t>();
    cfg.num_classes = meta.at("num_classes").get<int>();
    cfg.vision_mode = meta.value("vision_mode", false);
    cfg.vision_zeta = meta.value("vision_zeta", 2.45);
    cfg.iterations = 0;

    ToyModel model = make_toy_model(cfg);
    Tensor w1 = read_tensor(dir + "/l1_w.bbqt");
    Tensor w2 = read_tensor(dir + "/l2_w.bbqt");
    model.l1.w = w1.to_double();
    model.l2.w = w2.to_double();

    auto load_scale = [&](const char* name, QuantSite& site) {
        Tensor t = read_tensor(dir + "/" + std::string(name) + "_scale.bbqt");
        site.scale.gamma = t.to_double();
        site.scale.sigma0 = site.scale.gamma;
        site.scale.d = 1;
        site.initialized = true;
    };
    if (meta.contains("scales")) {
        load_scale("a1", model.a1);
        load_scale("w1", model.w1);
        load_scale("a2", model.a2);
        load_scale("w2", model.w2);
        model.a1.ema.initialized = true;
        model.a1.ema.e_inv_sigma = 1.0;
        model.a2.ema.initialized = true;
        model.a2.ema.e_inv_sigma = 1.0;
    } else {
        model.a1.initialized = model.w1.initialized = true;
        model.a2.initialized = model.w2.initialized = true;
    }
    return model_weight_entropy(model);
}

}  // namespace bbq
