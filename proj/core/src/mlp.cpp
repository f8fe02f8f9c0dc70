#include "expertnet/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace expertnet {

namespace {

constexpr double kLogFloor = 1e-12;

void check_dims(const Mlp& m) {
    if (m.layer_sizes.size() < 2) throw std::invalid_argument("Mlp: need at least one layer");
    if (m.weights.size() != m.layer_sizes.size() - 1 || m.biases.size() != m.weights.size())
        throw std::invalid_argument("Mlp: layer count mismatch");
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        std::size_t rows = static_cast<std::size_t>(m.layer_sizes[l + 1]);
        std::size_t cols = static_cast<std::size_t>(m.layer_sizes[l]);
        if (m.weights[l].size() != rows * cols || m.biases[l].size() != rows)
            throw std::invalid_argument("Mlp: parameter shape mismatch at layer " +
                                        std::to_string(l));
    }
}

std::vector<double> affine(const std::vector<double>& w, const std::vector<double>& b,
                           std::span<const double> x) {
    std::size_t rows = b.size();
    std::size_t cols = x.size();
    std::vector<double> out(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = b[r];
        const double* wr = w.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
    return out;
}

void relu_inplace(std::vector<double>& v) {
    for (auto& x : v) x = x > 0.0 ? x : 0.0;
}

}  // namespace

void validate(const TrainConfig& cfg) {
    if (cfg.epochs < 0) throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    // A zero rate is admitted as the documented degenerate no-op.
    if (!(cfg.learning_rate >= 0.0))
        throw std::invalid_argument("TrainConfig: learning rate must be >= 0");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0))
        throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
    if (cfg.weight_decay < 0.0)
        throw std::invalid_argument("TrainConfig: weight decay must be >= 0");
    if (cfg.batch_size < 1) throw std::invalid_argument("TrainConfig: batch size must be >= 1");
}

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
}

Mlp make_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed) {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("make_mlp: need input and output sizes");
    for (int s : layer_sizes)
        if (s < 1) throw std::invalid_argument("make_mlp: layer sizes must be positive");
    Mlp m;
    m.layer_sizes = layer_sizes;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        std::size_t rows = static_cast<std::size_t>(layer_sizes[l + 1]);
        std::size_t cols = static_cast<std::size_t>(layer_sizes[l]);
        double scale = std::sqrt(2.0 / static_cast<double>(cols));
        std::vector<double> w(rows * cols);
        for (auto& x : w) x = gauss(rng) * scale;
        m.weights.push_back(std::move(w));
        m.biases.emplace_back(rows, 0.0);
    }
    return m;
}

std::vector<double> softmax(std::span<const double> logits) {
    double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (auto& x : p) x /= sum;
    return p;
}

ForwardResult forward(const Mlp& model, std::span<const double> input) {
    check_dims(model);
    if (static_cast<int>(input.size()) != model.input_dim())
        throw std::invalid_argument("forward: input dim " + std::to_string(input.size()) +
                                    ", model expects " + std::to_string(model.input_dim()));
    std::vector<double> act(input.begin(), input.end());
    std::vector<double> penultimate = act;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        act = affine(model.weights[l], model.biases[l], act);
        if (l + 1 < model.num_layers()) {
            relu_inplace(act);
            penultimate = act;
        }
    }
    return {std::move(penultimate), softmax(act)};
}

std::vector<double> relu_stack(const Mlp& model, std::span<const double> input) {
    check_dims(model);
    if (static_cast<int>(input.size()) != model.input_dim())
        throw std::invalid_argument("relu_stack: input dim " + std::to_string(input.size()) +
                                    ", model expects " + std::to_string(model.input_dim()));
    std::vector<double> act(input.begin(), input.end());
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        act = affine(model.weights[l], model.biases[l], act);
        relu_inplace(act);
    }
    return act;
}

Mlp drop_head(const Mlp& model) {
    check_dims(model);
    if (model.num_layers() < 2)
        throw std::invalid_argument("drop_head: single-layer model has no trunk");
    Mlp trunk;
    trunk.layer_sizes.assign(model.layer_sizes.begin(), model.layer_sizes.end() - 1);
    trunk.weights.assign(model.weights.begin(), model.weights.end() - 1);
    trunk.biases.assign(model.biases.begin(), model.biases.end() - 1);
    return trunk;
}

double sample_loss(const Mlp& model, const Sample& sample) {
    auto out = forward(model, sample.features);
    if (sample.label < 0 || sample.label >= model.output_dim())
        throw std::invalid_argument("sample_loss: label outside model class set");
    return -std::log(std::max(out.probs[static_cast<std::size_t>(sample.label)], kLogFloor));
}

Gradients zero_gradients(const Mlp& model) {
    Gradients g;
    g.weights.reserve(model.num_layers());
    g.biases.reserve(model.num_layers());
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        g.weights.emplace_back(model.weights[l].size(), 0.0);
        g.biases.emplace_back(model.biases[l].size(), 0.0);
    }
    return g;
}

LayerCache forward_cache(const Mlp& model, std::span<const double> input, bool relu_last) {
    LayerCache cache;
    cache.post.reserve(model.num_layers() + 1);
    cache.post.emplace_back(input.begin(), input.end());
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        auto act = affine(model.weights[l], model.biases[l], cache.post.back());
        if (l + 1 < model.num_layers() || relu_last) relu_inplace(act);
        cache.post.push_back(std::move(act));
    }
    return cache;
}

std::vector<double> backward(const Mlp& model, const LayerCache& cache,
                             std::span<const double> grad_out, bool relu_last, Gradients& grads) {
    std::vector<double> delta(grad_out.begin(), grad_out.end());
    for (std::size_t l = model.num_layers(); l-- > 0;) {
        const auto& in = cache.post[l];
        const auto& out = cache.post[l + 1];
        // Rectifier derivative: pass-through where the activation is positive.
        if (l + 1 < model.num_layers() || relu_last)
            for (std::size_t r = 0; r < delta.size(); ++r)
                if (out[r] <= 0.0) delta[r] = 0.0;
        auto& gw = grads.weights[l];
        auto& gb = grads.biases[l];
        std::size_t cols = in.size();
        std::vector<double> prev(cols, 0.0);
        for (std::size_t r = 0; r < delta.size(); ++r) {
            gb[r] += delta[r];
            double* gwr = gw.data() + r * cols;
            const double* wr = model.weights[l].data() + r * cols;
            for (std::size_t c = 0; c < cols; ++c) {
                gwr[c] += delta[r] * in[c];
                prev[c] += wr[c] * delta[r];
            }
        }
        delta = std::move(prev);
    }
    return delta;
}

double loss_and_grad(const Mlp& model, std::span<const Sample> batch, Gradients& grads) {
    if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    double total = 0.0;
    double inv = 1.0 / static_cast<double>(batch.size());
    for (const auto& s : batch) {
        if (s.label < 0 || s.label >= model.output_dim())
            throw std::invalid_argument("loss_and_grad: label " + std::to_string(s.label) +
                                        " outside model class set");
        auto cache = forward_cache(model, s.features, false);
        auto probs = softmax(cache.post.back());
        total += -std::log(std::max(probs[static_cast<std::size_t>(s.label)], kLogFloor));
        // dL/dlogits of the mean loss: (p - y) / batch
        std::vector<double> delta = probs;
        delta[static_cast<std::size_t>(s.label)] -= 1.0;
        for (auto& x : delta) x *= inv;
        backward(model, cache, delta, false, grads);
    }
    return total * inv;
}

TrainResult train(Mlp model, const LabeledDataset& dataset, const TrainConfig& cfg) {
    check_dims(model);
    validate(cfg);
    if (dataset.samples.empty()) throw std::invalid_argument("train: empty dataset");
    if (dataset.feature_dim != model.input_dim())
        throw std::invalid_argument("train: dataset feature dim " +
                                    std::to_string(dataset.feature_dim) + ", model expects " +
                                    std::to_string(model.input_dim()));
    for (const auto& s : dataset.samples)
        if (s.label < 0 || s.label >= model.output_dim())
            throw std::invalid_argument("train: label " + std::to_string(s.label) +
                                        " outside model class set");

    Gradients velocity = zero_gradients(model);
    std::vector<std::size_t> order(dataset.samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);

    TrainResult result;
    result.loss_trace.reserve(static_cast<std::size_t>(cfg.epochs));
    std::vector<Sample> batch;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            batch.clear();
            for (std::size_t i = start; i < end; ++i)
                batch.push_back(dataset.samples[order[i]]);
            Gradients grads = zero_gradients(model);
            double batch_loss = loss_and_grad(model, batch, grads);
            epoch_loss += batch_loss * static_cast<double>(batch.size());
            seen += batch.size();
            if (!std::isfinite(batch_loss))
                throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                         std::to_string(epoch));
            for (std::size_t l = 0; l < model.num_layers(); ++l) {
                for (std::size_t i = 0; i < model.weights[l].size(); ++i) {
                    double g = grads.weights[l][i] + cfg.weight_decay * model.weights[l][i];
                    velocity.weights[l][i] = cfg.momentum * velocity.weights[l][i] -
                                             cfg.learning_rate * g;
                    model.weights[l][i] += velocity.weights[l][i];
                }
                for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
                    velocity.biases[l][i] = cfg.momentum * velocity.biases[l][i] -
                                            cfg.learning_rate * grads.biases[l][i];
                    model.biases[l][i] += velocity.biases[l][i];
                }
            }
        }
        double mean_loss = epoch_loss / static_cast<double>(seen);
        if (!std::isfinite(mean_loss))
            throw std::runtime_error("train: loss diverged (non-finite) at epoch " +
                                     std::to_string(epoch));
        result.loss_trace.push_back(mean_loss);
    }

    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        for (double w : model.weights[l])
            if (!std::isfinite(w))
                throw std::runtime_error("train: non-finite parameter after final epoch");
        for (double b : model.biases[l])
            if (!std::isfinite(b))
                throw std::runtime_error("train: non-finite parameter after final epoch");
    }
    result.model = std::move(model);
    return result;
}

double grad_check(const Mlp& model, const Sample& sample, double epsilon) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("grad_check: epsilon must be > 0");
    Gradients analytic = zero_gradients(model);
    Sample one[] = {sample};
    loss_and_grad(model, one, analytic);

    Mlp probe = model;
    double worst = 0.0;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        auto check_array = [&](std::vector<double>& arr, const std::vector<double>& ga) {
            for (std::size_t i = 0; i < arr.size(); ++i) {
                double saved = arr[i];
                arr[i] = saved + epsilon;
                double up = sample_loss(probe, sample);
                arr[i] = saved - epsilon;
                double down = sample_loss(probe, sample);
                arr[i] = saved;
                double fd = (up - down) / (2.0 * epsilon);
                double rel = std::abs(ga[i] - fd) /
                             std::max({std::abs(ga[i]), std::abs(fd), 1e-8});
                worst = std::max(worst, rel);
            }
        };
        check_array(probe.weights[l], analytic.weights[l]);
        check_array(probe.biases[l], analytic.biases[l]);
    }
    return worst;
}

void save_mlp(const Mlp& model, const std::string& path) {
    check_dims(model);
    std::string out = "mlp 1\n";
    out += std::to_string(model.layer_sizes.size());
    for (int s : model.layer_sizes) {
        out += ' ';
        out += std::to_string(s);
    }
    out += '\n';
    char buf[40];
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        for (double w : model.weights[l]) {
            std::snprintf(buf, sizeof(buf), "%.17g\n", w);
            out += buf;
        }
        for (double b : model.biases[l]) {
            std::snprintf(buf, sizeof(buf), "%.17g\n", b);
            out += buf;
        }
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << out;
    if (!f) throw std::runtime_error("write failed: " + path);
}

Mlp load_mlp(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string kind;
    int version = 0;
    if (!(f >> kind >> version) || kind != "mlp" || version != 1)
        throw std::runtime_error(path + ": not a version-1 mlp checkpoint");
    std::size_t n_sizes = 0;
    if (!(f >> n_sizes) || n_sizes < 2)
        throw std::runtime_error(path + ": malformed layer size count");
    Mlp m;
    m.layer_sizes.resize(n_sizes);
    for (auto& s : m.layer_sizes)
        if (!(f >> s) || s < 1) throw std::runtime_error(path + ": malformed layer size");
    for (std::size_t l = 0; l + 1 < n_sizes; ++l) {
        std::size_t rows = static_cast<std::size_t>(m.layer_sizes[l + 1]);
        std::size_t cols = static_cast<std::size_t>(m.layer_sizes[l]);
        std::vector<double> w(rows * cols);
        for (auto& x : w)
            if (!(f >> x)) throw std::runtime_error(path + ": truncated weights");
        std::vector<double> b(rows);
        for (auto& x : b)
            if (!(f >> x)) throw std::runtime_error(path + ": truncated biases");
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    return m;
}

}  // namespace expertnet
