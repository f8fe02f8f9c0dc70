#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expertnet/dataset.hpp"
#include "expertnet/gcs.hpp"
#include "expertnet/mlp.hpp"

namespace expertnet {

struct EvalReport {
    std::vector<std::optional<double>> per_class_ap;  // absent = no positives in test
    std::vector<std::size_t> train_counts;
    double map = 0.0;
    double accuracy = 0.0;
    double head_map = 0.0;  // classes at or above the median train count
    double tail_map = 0.0;
    std::array<std::optional<double>, 5> e_table;  // E_0..E_4, absent when no pairs
    std::vector<int> excluded_classes;
    std::string config_echo;
};

/// Non-interpolated area under the precision-recall curve: sum of
/// precision-at-k times the recall step, over the descending-score ranking
/// with ties broken by sample index. Throws if there is no positive.
double average_precision(std::span<const double> scores, std::span<const char> relevant);

/// One-vs-rest AP per class from N-way probability outputs, their mean (mAP),
/// top-1 accuracy, and head/tail mAP split at the median train count.
EvalReport map_report(const Scorer& scorer, const LabeledDataset& test,
                      const std::vector<std::size_t>& train_counts);

using ModelFactory = std::function<Mlp(int input_dim, int num_classes, std::uint64_t seed)>;

/// Linear softmax classifier; the Bayes-optimal family for unit-covariance
/// Gaussian class pairs.
ModelFactory linear_model_factory();

/// Trains a fresh binary classifier on the two classes and returns the mean
/// held-out cross-entropy. A quarter of each class (at least one sample) is
/// held out; classes need at least 4 samples.
double pair_error(const ModelFactory& factory, const LabeledDataset& dataset, int class_j,
                  int class_k, const TrainConfig& cfg);

/// E_t = mean pair_error over the census pairs of type t (deduplicated to
/// unordered pairs); E_0 over a seeded sample of at most max_e0_pairs
/// no-similarity pairs. Absent entries mark empty similarity classes.
std::array<std::optional<double>, 5> similarity_error_table(
    const SimilarityCensus& cen, const LabeledDataset& dataset, const TrainConfig& cfg,
    std::uint64_t seed, int max_e0_pairs = 20,
    const ModelFactory& factory = linear_model_factory());

/// Metrics file: "class_id AP train_count" rows, then summary lines mAP,
/// accuracy, head_mAP, tail_mAP and an E_t block. Stable column order.
void save_metrics(const EvalReport& report, const std::string& path);

/// Optional companion file of (recall, precision) points per class.
void save_pr_curves(const Scorer& scorer, const LabeledDataset& test, const std::string& path);

}  // namespace expertnet
