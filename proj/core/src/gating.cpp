#include "expertnet/gating.hpp"

#include <stdexcept>
#include <string>

namespace expertnet {

namespace {

void check_selection(int m, int s) {
    if (m < 1) throw std::invalid_argument("gating: need at least one block");
    if (s < 1 || s > m)
        throw std::invalid_argument("gating: selection width " + std::to_string(s) +
                                    " outside [1," + std::to_string(m) + "]");
}

}  // namespace

int GateMask::ones() const {
    int count = 0;
    for (int b : bits) count += b;
    return count;
}

int surpass_count(std::span<const double> p, int q) {
    if (q < 0 || q >= static_cast<int>(p.size()))
        throw std::invalid_argument("surpass_count: index out of range");
    int u = 0;
    for (int v = 0; v < static_cast<int>(p.size()); ++v) {
        if (v == q) continue;
        double pq = p[static_cast<std::size_t>(q)];
        double pv = p[static_cast<std::size_t>(v)];
        if (pq > pv || (pq == pv && q < v)) ++u;
    }
    return u;
}

GateMask mask_direct(std::span<const double> p, int s) {
    const int m = static_cast<int>(p.size());
    check_selection(m, s);
    GateMask mask;
    mask.selection_width = s;
    mask.bits.resize(static_cast<std::size_t>(m));
    for (int q = 0; q < m; ++q)
        mask.bits[static_cast<std::size_t>(q)] = surpass_count(p, q) >= m - s ? 1 : 0;
    return mask;
}

StepNetwork make_step_network(int num_blocks, int selection_width) {
    check_selection(num_blocks, selection_width);
    StepNetwork net;
    net.num_blocks = num_blocks;
    net.selection_width = selection_width;
    net.bias = -static_cast<double>(num_blocks - selection_width);
    net.w2.assign(static_cast<std::size_t>(num_blocks - 1), 1.0);
    net.w1.reserve(static_cast<std::size_t>(num_blocks));
    for (int q = 0; q < num_blocks; ++q) {
        std::vector<double> w(static_cast<std::size_t>((num_blocks - 1) * num_blocks), 0.0);
        int row = 0;
        for (int v = 0; v < num_blocks; ++v) {
            if (v == q) continue;
            w[static_cast<std::size_t>(row * num_blocks + q)] = 1.0;
            w[static_cast<std::size_t>(row * num_blocks + v)] = -1.0;
            ++row;
        }
        net.w1.push_back(std::move(w));
    }
    return net;
}

GateMask apply_step_network(const StepNetwork& net, std::span<const double> p) {
    const int m = net.num_blocks;
    if (static_cast<int>(p.size()) != m)
        throw std::invalid_argument("apply_step_network: input width " +
                                    std::to_string(p.size()) + ", network expects " +
                                    std::to_string(m));
    GateMask mask;
    mask.selection_width = net.selection_width;
    mask.bits.resize(static_cast<std::size_t>(m));
    for (int q = 0; q < m; ++q) {
        const auto& w = net.w1[static_cast<std::size_t>(q)];
        double sum = 0.0;
        int row = 0;
        for (int v = 0; v < m; ++v) {
            if (v == q) continue;
            double diff = 0.0;
            for (int c = 0; c < m; ++c)
                diff += w[static_cast<std::size_t>(row * m + c)] * p[static_cast<std::size_t>(c)];
            // step(diff): 1 iff strictly positive; an exact zero means a tied
            // pair, which the total order awards to the lower index.
            double fired = (diff > 0.0 || (diff == 0.0 && q < v)) ? 1.0 : 0.0;
            sum += net.w2[static_cast<std::size_t>(row)] * fired;
            ++row;
        }
        mask.bits[static_cast<std::size_t>(q)] = (sum + net.bias >= 0.0) ? 1 : 0;
    }
    return mask;
}

GateMask mask_stepnet(std::span<const double> p, int s) {
    return apply_step_network(make_step_network(static_cast<int>(p.size()), s), p);
}

LabeledDataset relabel_to_superclasses(const LabeledDataset& dataset, const Partition& partition) {
    if (partition.num_classes() != dataset.num_classes)
        throw std::invalid_argument("relabel_to_superclasses: partition covers " +
                                    std::to_string(partition.num_classes()) +
                                    " classes, dataset has " +
                                    std::to_string(dataset.num_classes));
    LabeledDataset out;
    out.num_classes = partition.num_blocks;
    out.feature_dim = dataset.feature_dim;
    out.split = dataset.split;
    out.samples.reserve(dataset.samples.size());
    std::vector<std::size_t> per_block(static_cast<std::size_t>(partition.num_blocks), 0);
    for (const auto& s : dataset.samples) {
        Sample relabeled = s;
        relabeled.label = partition.block_of[static_cast<std::size_t>(s.label)];
        ++per_block[static_cast<std::size_t>(relabeled.label)];
        out.samples.push_back(std::move(relabeled));
    }
    for (int b = 0; b < partition.num_blocks; ++b)
        if (per_block[static_cast<std::size_t>(b)] == 0)
            throw std::invalid_argument("train_fam: super-class " + std::to_string(b) +
                                        " received no samples");
    return out;
}

SuperClassScorer train_fam(const LabeledDataset& train, const Partition& partition,
                           const TrainConfig& cfg, const std::vector<int>& hidden_sizes) {
    LabeledDataset relabeled = relabel_to_superclasses(train, partition);
    std::vector<int> sizes;
    sizes.push_back(train.feature_dim);
    for (int h : hidden_sizes) sizes.push_back(h);
    sizes.push_back(partition.num_blocks);
    Mlp model = make_mlp(sizes, cfg.seed);
    auto result = expertnet::train(std::move(model), relabeled, cfg);
    return SuperClassScorer{std::move(result.model)};
}

}  // namespace expertnet
