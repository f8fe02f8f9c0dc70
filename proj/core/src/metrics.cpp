#include "expertnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "expertnet/seeds.hpp"

namespace expertnet {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::size_t> ranking(std::span<const double> scores) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    return order;
}

double mean_ap_over(const std::vector<std::optional<double>>& aps, const std::vector<int>& classes) {
    double sum = 0.0;
    int used = 0;
    for (int c : classes)
        if (aps[static_cast<std::size_t>(c)]) {
            sum += *aps[static_cast<std::size_t>(c)];
            ++used;
        }
    return used > 0 ? sum / used : 0.0;
}

std::uint64_t mix_pair_seed(std::uint64_t seed, int j, int k) {
    return mix_seed(seed, (static_cast<std::uint64_t>(j) << 32) | static_cast<std::uint64_t>(k));
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const char> relevant) {
    if (scores.size() != relevant.size())
        throw std::invalid_argument("average_precision: score/label length mismatch");
    std::size_t positives = 0;
    for (char r : relevant) positives += r ? 1 : 0;
    if (positives == 0)
        throw std::invalid_argument("average_precision: undefined without a positive label");

    auto order = ranking(scores);
    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (!relevant[order[k]]) continue;
        ++hits;
        double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
        ap += precision / static_cast<double>(positives);  // delta recall = 1/positives
    }
    return ap;
}

EvalReport map_report(const Scorer& scorer, const LabeledDataset& test,
                      const std::vector<std::size_t>& train_counts) {
    const int n = test.num_classes;
    if (scorer.num_classes() != n)
        throw std::invalid_argument("map_report: scorer covers " +
                                    std::to_string(scorer.num_classes()) + " classes, test has " +
                                    std::to_string(n));
    if (train_counts.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("map_report: train_counts length mismatch");
    if (test.samples.empty()) throw std::invalid_argument("map_report: empty test split");

    std::vector<std::vector<double>> probs;
    probs.reserve(test.samples.size());
    std::size_t correct = 0;
    for (const auto& s : test.samples) {
        auto p = scorer.score(s.features);
        int arg = 0;
        for (int c = 1; c < n; ++c)
            if (p[static_cast<std::size_t>(c)] > p[static_cast<std::size_t>(arg)]) arg = c;
        if (arg == s.label) ++correct;
        probs.push_back(std::move(p));
    }

    EvalReport report;
    report.train_counts = train_counts;
    report.accuracy = static_cast<double>(correct) / static_cast<double>(test.samples.size());
    report.per_class_ap.assign(static_cast<std::size_t>(n), std::nullopt);

    std::vector<double> scores(test.samples.size());
    std::vector<char> relevant(test.samples.size());
    for (int c = 0; c < n; ++c) {
        bool any = false;
        for (std::size_t i = 0; i < test.samples.size(); ++i) {
            scores[i] = probs[i][static_cast<std::size_t>(c)];
            relevant[i] = test.samples[i].label == c ? 1 : 0;
            any = any || relevant[i];
        }
        if (!any) {
            report.excluded_classes.push_back(c);
            continue;
        }
        report.per_class_ap[static_cast<std::size_t>(c)] = average_precision(scores, relevant);
    }

    std::vector<int> all_classes, head, tail;
    for (int c = 0; c < n; ++c) all_classes.push_back(c);
    report.map = mean_ap_over(report.per_class_ap, all_classes);

    std::vector<std::size_t> sorted_counts = train_counts;
    std::sort(sorted_counts.begin(), sorted_counts.end());
    double median;
    if (n % 2 == 1)
        median = static_cast<double>(sorted_counts[static_cast<std::size_t>(n / 2)]);
    else
        median = 0.5 * (static_cast<double>(sorted_counts[static_cast<std::size_t>(n / 2 - 1)]) +
                        static_cast<double>(sorted_counts[static_cast<std::size_t>(n / 2)]));
    for (int c = 0; c < n; ++c)
        (static_cast<double>(train_counts[static_cast<std::size_t>(c)]) >= median ? head : tail)
            .push_back(c);
    report.head_map = mean_ap_over(report.per_class_ap, head);
    report.tail_map = mean_ap_over(report.per_class_ap, tail);
    return report;
}

ModelFactory linear_model_factory() {
    return [](int input_dim, int num_classes, std::uint64_t seed) {
        return make_mlp({input_dim, num_classes}, seed);
    };
}

double pair_error(const ModelFactory& factory, const LabeledDataset& dataset, int class_j,
                  int class_k, const TrainConfig& cfg) {
    if (class_j == class_k) throw std::invalid_argument("pair_error: classes must differ");
    std::array<std::vector<std::size_t>, 2> members;
    for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
        int lbl = dataset.samples[i].label;
        if (lbl == class_j) members[0].push_back(i);
        if (lbl == class_k) members[1].push_back(i);
    }
    for (int side = 0; side < 2; ++side)
        if (members[static_cast<std::size_t>(side)].size() < 4)
            throw std::invalid_argument("pair_error: class " +
                                        std::to_string(side == 0 ? class_j : class_k) + " has " +
                                        std::to_string(members[static_cast<std::size_t>(side)].size()) +
                                        " samples, need at least 4 to hold out");

    LabeledDataset pair_train{{}, 2, dataset.feature_dim, Split::train};
    LabeledDataset held{{}, 2, dataset.feature_dim, Split::test};
    std::mt19937_64 rng(cfg.seed);
    for (int side = 0; side < 2; ++side) {
        auto idx = members[static_cast<std::size_t>(side)];
        std::shuffle(idx.begin(), idx.end(), rng);
        std::size_t held_count = std::max<std::size_t>(1, idx.size() / 4);
        for (std::size_t i = 0; i < idx.size(); ++i) {
            Sample s = dataset.samples[idx[i]];
            s.label = side;
            (i < held_count ? held : pair_train).samples.push_back(std::move(s));
        }
    }

    Mlp model = factory(dataset.feature_dim, 2, cfg.seed);
    auto result = train(std::move(model), pair_train, cfg);
    double total = 0.0;
    for (const auto& s : held.samples) total += sample_loss(result.model, s);
    return total / static_cast<double>(held.samples.size());
}

std::array<std::optional<double>, 5> similarity_error_table(const SimilarityCensus& cen,
                                                            const LabeledDataset& dataset,
                                                            const TrainConfig& cfg,
                                                            std::uint64_t seed, int max_e0_pairs,
                                                            const ModelFactory& factory) {
    const int n = dataset.num_classes;
    auto unordered = [](const std::pair<int, int>& p) {
        return std::pair<int, int>{std::min(p.first, p.second), std::max(p.first, p.second)};
    };

    std::array<std::vector<std::pair<int, int>>, 5> groups;
    std::set<std::pair<int, int>> any_similarity;
    auto collect = [&](const std::vector<std::pair<int, int>>& pairs, int type) {
        std::set<std::pair<int, int>> dedup;
        for (const auto& pr : pairs) dedup.insert(unordered(pr));
        groups[static_cast<std::size_t>(type)].assign(dedup.begin(), dedup.end());
        any_similarity.insert(dedup.begin(), dedup.end());
    };
    collect(cen.s1, 1);
    collect(cen.s2, 2);
    collect(cen.s3, 3);
    collect(cen.s4, 4);

    std::vector<std::pair<int, int>> dissimilar;
    for (int j = 0; j < n; ++j)
        for (int k = j + 1; k < n; ++k)
            if (!any_similarity.count({j, k})) dissimilar.emplace_back(j, k);
    std::mt19937_64 rng(seed);
    std::shuffle(dissimilar.begin(), dissimilar.end(), rng);
    if (static_cast<int>(dissimilar.size()) > max_e0_pairs)
        dissimilar.resize(static_cast<std::size_t>(max_e0_pairs));
    std::sort(dissimilar.begin(), dissimilar.end());
    groups[0] = std::move(dissimilar);

    std::array<std::optional<double>, 5> table;
    for (int t = 0; t < 5; ++t) {
        const auto& pairs = groups[static_cast<std::size_t>(t)];
        if (pairs.empty()) continue;
        double sum = 0.0;
        for (const auto& [j, k] : pairs) {
            TrainConfig pair_cfg = cfg;
            pair_cfg.seed = mix_pair_seed(seed, j, k);
            sum += pair_error(factory, dataset, j, k, pair_cfg);
        }
        table[static_cast<std::size_t>(t)] = sum / static_cast<double>(pairs.size());
    }
    return table;
}

void save_metrics(const EvalReport& report, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (std::size_t c = 0; c < report.per_class_ap.size(); ++c) {
        f << c << ' '
          << (report.per_class_ap[c] ? fmt(*report.per_class_ap[c]) : std::string("absent")) << ' '
          << report.train_counts[c] << '\n';
    }
    f << "mAP " << fmt(report.map) << '\n';
    f << "accuracy " << fmt(report.accuracy) << '\n';
    f << "head_mAP " << fmt(report.head_map) << '\n';
    f << "tail_mAP " << fmt(report.tail_map) << '\n';
    for (int t = 0; t < 5; ++t) {
        f << "E_" << t << ' ';
        const auto& e = report.e_table[static_cast<std::size_t>(t)];
        f << (e ? fmt(*e) : std::string("absent")) << '\n';
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

void save_pr_curves(const Scorer& scorer, const LabeledDataset& test, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    const int n = test.num_classes;
    std::vector<std::vector<double>> probs;
    probs.reserve(test.samples.size());
    for (const auto& s : test.samples) probs.push_back(scorer.score(s.features));

    std::vector<double> scores(test.samples.size());
    for (int c = 0; c < n; ++c) {
        std::size_t positives = 0;
        for (std::size_t i = 0; i < test.samples.size(); ++i) {
            scores[i] = probs[i][static_cast<std::size_t>(c)];
            positives += test.samples[i].label == c ? 1 : 0;
        }
        if (positives == 0) continue;
        f << "class " << c << '\n';
        auto order = ranking(scores);
        std::size_t hits = 0;
        for (std::size_t k = 0; k < order.size(); ++k) {
            if (test.samples[order[k]].label != c) continue;
            ++hits;
            double recall = static_cast<double>(hits) / static_cast<double>(positives);
            double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
            f << fmt(recall) << ' ' << fmt(precision) << '\n';
        }
    }
    if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace expertnet
