#pragma once

#include <array>
#include <string>
#include <vector>

#include "expertnet/dataset.hpp"
#include "expertnet/mlp.hpp"

namespace expertnet {

/// Per-class dependency targets: entry j of dN holds the class most often
/// ranked N-th for class j's train samples (true class removed first).
struct DependencySets {
    std::vector<int> d2;
    std::vector<int> d3;
    std::vector<int> d4;

    int num_classes() const { return static_cast<int>(d2.size()); }
    bool operator==(const DependencySets&) const = default;
};

/// Entries in range and never self-referencing. Distinctness across the three
/// orders is NOT required here: sets computed by compute_dependencies always
/// have it, but externally supplied sets (hand-built examples, edited files)
/// may legitimately repeat a partner across orders.
void validate(const DependencySets& deps);

/// True when d2[j], d3[j], d4[j] are pairwise distinct for every j; holds for
/// every compute_dependencies output.
bool has_distinct_orders(const DependencySets& deps);

/// Histogram of rank-2/3/4 class ids per class. counts[j][r][k] is the number
/// of class-j train samples whose rank-(r+2) class was k.
struct RankTally {
    int num_classes = 0;
    std::vector<std::array<std::vector<long>, 3>> counts;
};

/// Ranks 2..4 for one sample: classes sorted by score descending (ties broken
/// by lower class id first), with the true class removed before reading.
/// Requires at least 4 classes.
std::array<int, 3> rank_classes(const Scorer& scorer, const Sample& sample, int true_class);

RankTally tally_ranks(const Scorer& scorer, const LabeledDataset& train);

/// d_{o,j} = mode of rank-o ids over class j's train samples. Mode ties break
/// to the lowest class id; if a class already won a lower rank for the same j,
/// the higher rank takes the next most frequent remaining class.
DependencySets compute_dependencies(const Scorer& scorer, const LabeledDataset& train);
DependencySets dependencies_from_tally(const RankTally& tally);

/// Text format: one line per class, "j d2 d3 d4", j ascending.
void save_dependencies(const DependencySets& deps, const std::string& path);
DependencySets load_dependencies(const std::string& path);

}  // namespace expertnet
