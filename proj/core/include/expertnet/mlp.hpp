#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "expertnet/dataset.hpp"

namespace expertnet {

struct TrainConfig {
    int epochs = 10;
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    int batch_size = 16;
    std::uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

/// Feed-forward stack: rectifier on hidden layers, identity on the output
/// layer. weights[l] is row-major (layer_sizes[l+1] x layer_sizes[l]).
///
/// Two read modes share the storage: a classifier applies softmax to the last
/// layer's logits, a trunk (a classifier whose head was dropped) applies the
/// rectifier to every layer and emits the final activation as its feature
/// vector.
struct Mlp {
    std::vector<int> layer_sizes;
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;

    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    /// Penultimate activation width; equals input_dim() for a single layer.
    int feature_dim() const {
        return layer_sizes.size() > 2 ? layer_sizes[layer_sizes.size() - 2] : layer_sizes.front();
    }
    std::size_t num_layers() const { return weights.size(); }
    std::size_t param_count() const;

    bool operator==(const Mlp&) const = default;
};

/// He-style scaled random initialization, deterministic in the seed.
Mlp make_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed);

struct ForwardResult {
    std::vector<double> features;  // penultimate activation (input for single layer)
    std::vector<double> probs;     // softmax over the final logits
};

ForwardResult forward(const Mlp& model, std::span<const double> input);

/// Trunk mode: rectifier after every layer, including the last.
std::vector<double> relu_stack(const Mlp& model, std::span<const double> input);

/// Drops the final (classification) layer; the remaining stack is a trunk
/// whose relu_stack output has the width of the old penultimate layer.
Mlp drop_head(const Mlp& model);

std::vector<double> softmax(std::span<const double> logits);

/// Cross-entropy -log p(label) of the classifier on one sample.
double sample_loss(const Mlp& model, const Sample& sample);

/// Parameter gradients, same shapes as the model.
struct Gradients {
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
};

Gradients zero_gradients(const Mlp& model);

/// Mean cross-entropy over the batch; gradients of that mean are accumulated
/// into `grads` (which must be zero-initialized or hold a running sum).
double loss_and_grad(const Mlp& model, std::span<const Sample> batch, Gradients& grads);

/// Per-layer activations kept for backpropagation. post[0] is the input,
/// post[l+1] the activation after layer l.
struct LayerCache {
    std::vector<std::vector<double>> post;
};

LayerCache forward_cache(const Mlp& model, std::span<const double> input, bool relu_last);

/// Backpropagates `grad_out` (dL/d post-activation of the last layer, or
/// dL/d logits when relu_last is false) through the stack, accumulating
/// parameter gradients; returns dL/d input.
std::vector<double> backward(const Mlp& model, const LayerCache& cache,
                             std::span<const double> grad_out, bool relu_last, Gradients& grads);

struct TrainResult {
    Mlp model;
    std::vector<double> loss_trace;  // mean cross-entropy per epoch
};

/// SGD with momentum over shuffled mini-batches. Deterministic in the seed.
/// Throws std::runtime_error naming the epoch if the loss becomes non-finite.
TrainResult train(Mlp model, const LabeledDataset& dataset, const TrainConfig& cfg);

/// Max over all parameters of |g_analytic - g_fd| / max(|g_a|, |g_fd|, 1e-8)
/// with central finite differences of width epsilon on the sample loss.
double grad_check(const Mlp& model, const Sample& sample, double epsilon);

/// Versioned text checkpoint: kind tag, layer sizes, parameters row-major.
/// Round-trips exactly.
void save_mlp(const Mlp& model, const std::string& path);
Mlp load_mlp(const std::string& path);

/// Anything that maps a feature vector to a probability vector over its
/// class set.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual std::vector<double> score(std::span<const double> features) const = 0;
    virtual int num_classes() const = 0;
};

class MlpScorer : public Scorer {
public:
    explicit MlpScorer(Mlp model) : model_(std::move(model)) {}
    std::vector<double> score(std::span<const double> features) const override {
        return forward(model_, features).probs;
    }
    int num_classes() const override { return model_.output_dim(); }
    const Mlp& model() const { return model_; }

private:
    Mlp model_;
};

}  // namespace expertnet
