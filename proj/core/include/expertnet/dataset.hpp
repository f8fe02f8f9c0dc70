#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace expertnet {

enum class Split { train, test };

struct Sample {
    std::vector<double> features;
    int label = 0;

    bool operator==(const Sample&) const = default;
};

/// A labeled feature-vector dataset. Train splits are typically long-tailed,
/// test splits class-balanced.
struct LabeledDataset {
    std::vector<Sample> samples;
    int num_classes = 0;
    int feature_dim = 0;
    Split split = Split::train;

    bool operator==(const LabeledDataset&) const = default;
};

/// One planted confusable pair: the cluster centers of classes `a` and `b`
/// are placed at a distance that shrinks as `strength` grows toward 1.
struct OverlapEntry {
    int a = 0;
    int b = 0;
    double strength = 0.0;
};

/// Recipe for a synthetic long-tailed Gaussian-mixture dataset.
///
/// Per-class train counts interpolate geometrically from `head_count` for
/// class 0 down to `head_count / imbalance_ratio` for class N-1. Every class
/// is an isotropic unit-covariance Gaussian; `confusable_plan` moves selected
/// cluster centers close together to plant known confusions.
struct GeneratorSpec {
    int num_classes = 0;
    int feature_dim = 0;
    int head_count = 0;
    double imbalance_ratio = 1.0;
    std::vector<OverlapEntry> confusable_plan;
    std::uint64_t seed = 0;
    int test_per_class = 0;  // 0 = default max(2, head_count / 5)
};

/// Throws std::invalid_argument with a diagnostic if the spec violates its
/// invariants (ratio < 1, overlap strength outside [0,1], a == b, ...).
void validate(const GeneratorSpec& spec);

/// Planned per-class train counts (geometric interpolation, rounded).
std::vector<std::size_t> planned_counts(const GeneratorSpec& spec);

/// Cluster centers after applying the confusable plan. Deterministic in the
/// seed; the direction between a planted pair depends only on (seed, a, b),
/// so for a fixed seed a larger strength strictly shrinks the pair distance.
std::vector<std::vector<double>> planned_centers(const GeneratorSpec& spec);

/// Generates the (train, test) pair. Fully deterministic given the spec.
std::pair<LabeledDataset, LabeledDataset> generate(const GeneratorSpec& spec);

/// Line-oriented text format: header "N d split", then one sample per line
/// "label v1 v2 ... vd". Floats are written with enough digits to round-trip
/// exactly, so load(save(D)) == D including sample order.
void save(const LabeledDataset& dataset, const std::string& path);
LabeledDataset load(const std::string& path);

/// Per-class sample counts, length num_classes; classes absent from the
/// dataset report zero.
std::vector<std::size_t> class_counts(const LabeledDataset& dataset);

}  // namespace expertnet
