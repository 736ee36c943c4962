#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "quantizers.hpp"
#include "tensor_io.hpp"

namespace bbq {

// Quantization-aware training on a fixed small classifier:
//   input -> quantized linear (in->hidden) -> GELU -> quantized linear
//   (hidden->feature) -> full-precision readout -> softmax cross-entropy.
// Weights and the activation entering each quantized linear are quantized
// with the configured method; the backward pass is hand-derived and checked
// against finite differences. All arithmetic is double precision internally
// (tensors on disk stay real32).

enum class TrainMethod { none, bbq, bbq_fast, lsq, quest };

TrainMethod parse_train_method(const std::string& s);
std::string train_method_name(TrainMethod m);

enum class OptimizerKind { adam, momentum_sgd };

struct TrainConfig {
    TrainMethod method = TrainMethod::bbq;
    int bits = 2;
    size_t block = 128;
    size_t input_dim = 128;
    size_t hidden_dim = 256;
    size_t feature_dim = 128;
    int num_classes = 8;
    int iterations = 2000;
    int batch_size = 64;
    double lr = 1e-3;
    double weight_decay = 0.0;
    OptimizerKind optimizer = OptimizerKind::adam;
    double momentum = 0.9;
    double warmup_frac = 0.1;  // linear warmup, then cosine decay to zero
    uint64_t seed = 1;
    bool vision_mode = false;   // gamma recomputed as zeta*sigma each forward
    double vision_zeta = 2.45;
    double data_margin = 4.0;   // class-mean radius of the synthetic task
    bool smooth_quantizers = false;  // replace floor with identity (grad checks)
    int log_every = 1;
};

void validate_train_config(const TrainConfig& cfg);

// Deterministic synthetic classification task: class-conditioned Gaussian
// mixtures with round-robin labels, learnable to high accuracy by the
// full-precision model.
struct Batch {
    std::vector<size_t> shape;  // [n, dim]
    std::vector<double> x;
    std::vector<int> labels;
};

class SynthDataset {
public:
    SynthDataset(uint64_t seed, size_t dim, int num_classes, double margin);
    Batch next_batch(size_t n);

private:
    size_t dim_;
    int num_classes_;
    std::vector<double> means_;  // [num_classes, dim]
    Rng rng_;
    uint64_t cursor_ = 0;
};

struct LinearLayer {
    size_t out_dim = 0, in_dim = 0;
    std::vector<double> w;  // [out, in]
    std::vector<double> b;  // [out]
};

struct QuantSite {
    Granularity granularity = Granularity::per_tensor;
    ScaleParam scale;  // gamma (bbq) or step size s (lsq); empty for quest/none
    EmaState ema;      // tracked for activation sites
    bool initialized = false;
};

struct ToyModel {
    TrainConfig cfg;
    LinearLayer l1, l2, readout;
    QuantSite a1, w1, a2, w2;
};

ToyModel make_toy_model(const TrainConfig& cfg);

// Measures sigma0 at every quantized site from one batch and initializes the
// scale parameters (gamma = zeta* sigma0, or the LSQ step rule). Degenerate
// slices fall back to the 1e-6 gamma floor and set the warning flag.
void initialize_sites(ToyModel& model, const Batch& batch);

enum class ForwardMode { training, inference };

struct SiteTrace {
    TrainMethod method = TrainMethod::none;
    QuantizeTrace bbq;
    LsqTrace lsq;
    QuestTrace quest;
    std::vector<double> gamma_used;  // scales applied in this pass
    std::vector<double> dequant;
};

struct ForwardResult {
    Batch batch;
    SiteTrace a1, w1, a2, w2;
    std::vector<double> h1, g1, h2, logits, probs;
    double loss = 0.0;
    double accuracy = 0.0;
};

ForwardResult forward(ToyModel& model, const Batch& batch, ForwardMode mode);

// Inference forward where every quantized matmul runs through the packed
// int4/mxfp4 kernel path instead of dequantized floats; used to cross-check
// the two routes.
std::vector<double> forward_logits_lowprec(ToyModel& model, const Batch& batch);

struct Gradients {
    std::vector<double> w1, b1, w2, b2, w3, b3;
    std::vector<double> s_a1, s_w1, s_a2, s_w2;  // scale-parameter grads
};

Gradients backward(const ToyModel& model, const ForwardResult& fwd);

// Parameter enumeration for optimizers and finite-difference checks.
struct ParamRef {
    std::string name;
    std::vector<double>* values;
    bool is_scale;  // excluded from weight decay
};

std::vector<ParamRef> parameters(ToyModel& model);
std::vector<std::vector<double>*> gradient_refs(Gradients& grads);

struct LogRow {
    int iter = 0;
    double lr = 0.0;
    double loss = 0.0;
    double accuracy = 0.0;
    double entropy_pooled = 0.0;
    double entropy_avg = 0.0;
};

struct WeightEntropy {
    std::vector<std::string> layer_names;
    std::vector<double> per_layer;
    double pooled = 0.0;
    double averaged = 0.0;
};

// Entropy of the pooled code histogram over all quantized weight tensors
// (plus the per-layer average, since the pooling convention matters).
WeightEntropy model_weight_entropy(ToyModel& model);

struct TrainResult {
    TrainConfig cfg;
    ToyModel model;
    std::vector<LogRow> history;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double final_train_accuracy = 0.0;  // inference-mode, fresh batches
    double initial_entropy = 0.0;
    double min_entropy = 0.0;
    double final_entropy = 0.0;
    bool diverged = false;
    int diverged_at = -1;
};

TrainResult train(const TrainConfig& cfg);

CsvTable history_to_csv(const std::vector<LogRow>& history);

// Checkpoint: weight/bias/scale tensors as .bbqt files plus checkpoint.json.
void save_checkpoint(const TrainResult& result, const std::string& dir);

// Per-layer and pooled weight entropy of a saved checkpoint.
WeightEntropy checkpoint_weight_entropy(const std::string& dir);

double gelu(double x);
double gelu_grad(double x);

}  // namespace bbq
