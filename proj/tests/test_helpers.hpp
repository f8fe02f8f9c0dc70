#pragma once

#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "expertnet/dataset.hpp"
#include "expertnet/dependency.hpp"
#include "expertnet/mlp.hpp"

namespace testutil {

/// Unique scratch directory under the system temp dir, removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        dir_ = std::filesystem::temp_directory_path() /
               ("expertnet_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(dir_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(dir_, ec);
    }
    std::string path(const std::string& name) const { return (dir_ / name).string(); }
    std::string str() const { return dir_.string(); }

private:
    std::filesystem::path dir_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

/// Scores each class by the negated distance to its known center: under unit
/// covariance this is the Bayes-optimal rule for equal priors, usable as an
/// implementation-independent oracle.
class NearestCenterScorer : public expertnet::Scorer {
public:
    explicit NearestCenterScorer(std::vector<std::vector<double>> centers)
        : centers_(std::move(centers)) {}
    std::vector<double> score(std::span<const double> features) const override {
        std::vector<double> logits(centers_.size());
        for (std::size_t c = 0; c < centers_.size(); ++c) {
            double d2 = 0.0;
            for (std::size_t k = 0; k < features.size(); ++k) {
                double diff = features[k] - centers_[c][k];
                d2 += diff * diff;
            }
            logits[c] = -0.5 * d2;
        }
        return expertnet::softmax(logits);
    }
    int num_classes() const override { return static_cast<int>(centers_.size()); }

private:
    std::vector<std::vector<double>> centers_;
};

/// 15-class worked example: an order-2 graph with a degree-5 hub at node 5,
/// two mutual pairs {9,10} and {13,14}, and chains hanging off the hub.
inline expertnet::DependencySets example15_sets() {
    return {{1, 2, 4, 2, 5, 9, 5, 5, 5, 10, 9, 10, 11, 14, 13},
            {9, 13, 6, 1, 0, 7, 11, 13, 3, 12, 0, 4, 0, 10, 9},
            {12, 2, 4, 0, 11, 9, 1, 13, 6, 10, 3, 13, 4, 14, 4}};
}

/// Random valid dependency sets (entries distinct per class, never self).
inline expertnet::DependencySets random_dependency_sets(int n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    expertnet::DependencySets deps;
    deps.d2.resize(static_cast<std::size_t>(n));
    deps.d3.resize(static_cast<std::size_t>(n));
    deps.d4.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        std::vector<int> pool;
        for (int k = 0; k < n; ++k)
            if (k != j) pool.push_back(k);
        std::shuffle(pool.begin(), pool.end(), rng);
        deps.d2[static_cast<std::size_t>(j)] = pool[0];
        deps.d3[static_cast<std::size_t>(j)] = pool[1];
        deps.d4[static_cast<std::size_t>(j)] = pool[2];
    }
    return deps;
}

inline double l2_distance(const std::vector<double>& a, const std::vector<double>& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(d2);
}

}  // namespace testutil
