#pragma once

#include <span>
#include <vector>

#include "expertnet/gcs.hpp"
#include "expertnet/mlp.hpp"

namespace expertnet {

/// Binary selection vector over the M expert blocks, exactly S ones.
struct GateMask {
    std::vector<int> bits;
    int selection_width = 0;

    int width() const { return static_cast<int>(bits.size()); }
    int ones() const;
    bool operator==(const GateMask&) const = default;
};

/// Number of entries surpassed by p[q] under the total order
/// (value descending, index ascending): strict wins plus ties won by index.
int surpass_count(std::span<const double> p, int q);

/// Top-S mask read off the surpass counts: bit q set iff
/// surpass_count(p, q) >= M - S.
GateMask mask_direct(std::span<const double> p, int s);

/// The fixed two-layer realization of the same selection. For each output
/// unit, the first layer's comparison matrix has one +1 (the probed column)
/// and one -1 per row and an all-ones second layer with bias -(M-S); both
/// layers are shared across the M outputs.
struct StepNetwork {
    int num_blocks = 0;
    int selection_width = 0;
    /// w1[q] is the (M-1) x M comparison matrix for output unit q, row-major.
    std::vector<std::vector<double>> w1;
    std::vector<double> w2;  // all ones, length M-1
    double bias = 0.0;       // -(M - S)
};

StepNetwork make_step_network(int num_blocks, int selection_width);

/// Evaluates the network exactly: inner step fires on a strictly positive
/// comparison, the outer step on a nonnegative sum plus bias. Exact ties in a
/// comparison are resolved by the same index order as surpass_count, so the
/// mask is well-defined (and still exactly S-hot) on tied inputs.
GateMask apply_step_network(const StepNetwork& net, std::span<const double> p);

/// Convenience wrapper building the network for (|p|, s) and applying it.
GateMask mask_stepnet(std::span<const double> p, int s);

/// Classifier over the M super-class labels induced by a partition.
struct SuperClassScorer {
    Mlp model;

    std::vector<double> score(std::span<const double> features) const {
        return forward(model, features).probs;
    }
    int num_superclasses() const { return model.output_dim(); }
};

/// Relabels every sample to its block id. Throws if some block receives no
/// samples, naming the block.
LabeledDataset relabel_to_superclasses(const LabeledDataset& dataset, const Partition& partition);

SuperClassScorer train_fam(const LabeledDataset& train, const Partition& partition,
                           const TrainConfig& cfg, const std::vector<int>& hidden_sizes);

}  // namespace expertnet
