#include "expertnet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace expertnet {

namespace {

constexpr double kDefaultSeparation = 8.0;  // center spacing for unconfused classes
constexpr double kNearestOverlapDistance = 0.5;

std::string split_name(Split s) { return s == Split::train ? "train" : "test"; }

void append_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

void validate(const GeneratorSpec& spec) {
    if (spec.num_classes < 1)
        throw std::invalid_argument("GeneratorSpec: num_classes must be >= 1, got " +
                                    std::to_string(spec.num_classes));
    if (spec.feature_dim < 1)
        throw std::invalid_argument("GeneratorSpec: feature_dim must be >= 1");
    if (spec.head_count < 1)
        throw std::invalid_argument("GeneratorSpec: head_count must be >= 1");
    if (!(spec.imbalance_ratio >= 1.0))
        throw std::invalid_argument("GeneratorSpec: imbalance_ratio must be >= 1, got " +
                                    std::to_string(spec.imbalance_ratio));
    if (spec.test_per_class < 0)
        throw std::invalid_argument("GeneratorSpec: test_per_class must be >= 0");
    for (const auto& e : spec.confusable_plan) {
        if (e.a == e.b)
            throw std::invalid_argument("GeneratorSpec: confusable pair references class " +
                                        std::to_string(e.a) + " twice");
        if (e.a < 0 || e.a >= spec.num_classes || e.b < 0 || e.b >= spec.num_classes)
            throw std::invalid_argument("GeneratorSpec: confusable pair (" + std::to_string(e.a) +
                                        "," + std::to_string(e.b) + ") out of class range");
        if (!(e.strength >= 0.0 && e.strength <= 1.0))
            throw std::invalid_argument("GeneratorSpec: overlap strength " +
                                        std::to_string(e.strength) + " outside [0,1]");
    }
}

std::vector<std::size_t> planned_counts(const GeneratorSpec& spec) {
    validate(spec);
    const int n = spec.num_classes;
    std::vector<std::size_t> counts(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double t = n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
        double c = spec.head_count * std::pow(spec.imbalance_ratio, -t);
        counts[static_cast<std::size_t>(i)] =
            static_cast<std::size_t>(std::max(1.0, std::round(c)));
    }
    return counts;
}

std::vector<std::vector<double>> planned_centers(const GeneratorSpec& spec) {
    validate(spec);
    const int n = spec.num_classes;
    const int d = spec.feature_dim;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Base centers: random directions at pairwise distance >= kDefaultSeparation,
    // found by deterministic rejection.
    std::vector<std::vector<double>> centers;
    centers.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<double> c(static_cast<std::size_t>(d));
        for (int attempt = 0; attempt < 1000; ++attempt) {
            double norm2 = 0.0;
            for (auto& x : c) {
                x = gauss(rng);
                norm2 += x * x;
            }
            double norm = std::sqrt(std::max(norm2, 1e-12));
            // Radius grows slowly with the class index so crowded dimensions
            // still admit a separated placement.
            double radius = kDefaultSeparation * (1.0 + 0.25 * i);
            for (auto& x : c) x *= radius / norm;
            bool ok = true;
            for (const auto& other : centers) {
                double dist2 = 0.0;
                for (int k = 0; k < d; ++k) {
                    double diff = c[static_cast<std::size_t>(k)] - other[static_cast<std::size_t>(k)];
                    dist2 += diff * diff;
                }
                if (dist2 < kDefaultSeparation * kDefaultSeparation) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
        }
        centers.push_back(std::move(c));
    }

    // Planted confusions: move center b next to center a. The direction is a
    // function of (seed, a, b) only, so distance is monotone in strength.
    for (const auto& e : spec.confusable_plan) {
        std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(e.a) + 1,
                          static_cast<std::uint64_t>(e.b) + 1, std::uint64_t{0x9e3779b97f4a7c15}};
        std::mt19937_64 pair_rng(0);
        pair_rng.seed(seq);
        std::normal_distribution<double> pair_gauss(0.0, 1.0);
        std::vector<double> dir(static_cast<std::size_t>(d));
        double norm2 = 0.0;
        for (auto& x : dir) {
            x = pair_gauss(pair_rng);
            norm2 += x * x;
        }
        double norm = std::sqrt(std::max(norm2, 1e-12));
        double dist = kNearestOverlapDistance * e.strength +
                      kDefaultSeparation * (1.0 - e.strength);
        auto& ca = centers[static_cast<std::size_t>(e.a)];
        auto& cb = centers[static_cast<std::size_t>(e.b)];
        for (int k = 0; k < d; ++k)
            cb[static_cast<std::size_t>(k)] =
                ca[static_cast<std::size_t>(k)] + dir[static_cast<std::size_t>(k)] * dist / norm;
    }
    return centers;
}

std::pair<LabeledDataset, LabeledDataset> generate(const GeneratorSpec& spec) {
    validate(spec);
    const int n = spec.num_classes;
    const int d = spec.feature_dim;
    const auto counts = planned_counts(spec);
    const auto centers = planned_centers(spec);
    const int test_per_class =
        spec.test_per_class > 0 ? spec.test_per_class : std::max(2, spec.head_count / 5);

    LabeledDataset train{{}, n, d, Split::train};
    LabeledDataset test{{}, n, d, Split::test};

    // One stream, classes in order, train then test per class: deterministic.
    std::mt19937_64 rng(spec.seed ^ 0xd1b54a32d192ed03ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto draw = [&](int cls) {
        Sample s;
        s.label = cls;
        s.features.resize(static_cast<std::size_t>(d));
        const auto& c = centers[static_cast<std::size_t>(cls)];
        for (int k = 0; k < d; ++k)
            s.features[static_cast<std::size_t>(k)] = c[static_cast<std::size_t>(k)] + gauss(rng);
        return s;
    };

    for (int cls = 0; cls < n; ++cls) {
        for (std::size_t i = 0; i < counts[static_cast<std::size_t>(cls)]; ++i)
            train.samples.push_back(draw(cls));
        for (int i = 0; i < test_per_class; ++i)
            test.samples.push_back(draw(cls));
    }
    return {std::move(train), std::move(test)};
}

void save(const LabeledDataset& dataset, const std::string& path) {
    std::string out;
    out += std::to_string(dataset.num_classes);
    out += ' ';
    out += std::to_string(dataset.feature_dim);
    out += ' ';
    out += split_name(dataset.split);
    out += '\n';
    for (const auto& s : dataset.samples) {
        out += std::to_string(s.label);
        for (double v : s.features) {
            out += ' ';
            append_double(out, v);
        }
        out += '\n';
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << out;
    if (!f) throw std::runtime_error("write failed: " + path);
}

LabeledDataset load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open dataset file: " + path);

    std::string line;
    if (!std::getline(f, line))
        throw std::runtime_error(path + ":1: empty file, expected header 'N d split'");
    std::istringstream header(line);
    LabeledDataset ds;
    std::string split_str;
    if (!(header >> ds.num_classes >> ds.feature_dim >> split_str))
        throw std::runtime_error(path + ":1: malformed header, expected 'N d split'");
    if (split_str == "train")
        ds.split = Split::train;
    else if (split_str == "test")
        ds.split = Split::test;
    else
        throw std::runtime_error(path + ":1: unknown split '" + split_str + "'");
    if (ds.num_classes < 1 || ds.feature_dim < 1)
        throw std::runtime_error(path + ":1: header values out of range");

    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        Sample s;
        if (!(ls >> s.label))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": malformed label field");
        if (s.label < 0 || s.label >= ds.num_classes)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": label " +
                                     std::to_string(s.label) + " outside [0," +
                                     std::to_string(ds.num_classes) + ")");
        s.features.resize(static_cast<std::size_t>(ds.feature_dim));
        for (int k = 0; k < ds.feature_dim; ++k) {
            if (!(ls >> s.features[static_cast<std::size_t>(k)]))
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": non-numeric or missing feature " +
                                         std::to_string(k + 1));
            if (!std::isfinite(s.features[static_cast<std::size_t>(k)]))
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": non-finite feature " + std::to_string(k + 1));
        }
        double extra;
        if (ls >> extra)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": too many feature values");
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::vector<std::size_t> class_counts(const LabeledDataset& dataset) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(dataset.num_classes), 0);
    for (const auto& s : dataset.samples) {
        if (s.label < 0 || s.label >= dataset.num_classes)
            throw std::invalid_argument("class_counts: sample label " + std::to_string(s.label) +
                                        " outside [0," + std::to_string(dataset.num_classes) + ")");
        ++counts[static_cast<std::size_t>(s.label)];
    }
    return counts;
}

}  // namespace expertnet
