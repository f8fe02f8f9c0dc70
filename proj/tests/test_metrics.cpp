#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "expertnet/metrics.hpp"
#include "expertnet/seeds.hpp"
#include "test_helpers.hpp"

using namespace expertnet;

namespace {

/// Independent oracle: explicitly builds the ranked list and the full
/// (recall, precision) curve, then sums precision * recall-step.
double ap_by_curve(const std::vector<double>& scores, const std::vector<char>& relevant) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    std::size_t positives = 0;
    for (char r : relevant) positives += r ? 1 : 0;
    std::vector<double> precision_at, recall_at;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (relevant[order[k]]) ++hits;
        precision_at.push_back(static_cast<double>(hits) / static_cast<double>(k + 1));
        recall_at.push_back(static_cast<double>(hits) / static_cast<double>(positives));
    }
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < order.size(); ++k) {
        ap += precision_at[k] * (recall_at[k] - prev_recall);
        prev_recall = recall_at[k];
    }
    return ap;
}

class RandomScorer : public Scorer {
public:
    explicit RandomScorer(int n) : n_(n) {}
    std::vector<double> score(std::span<const double> features) const override {
        // Deterministic pseudo-random scores keyed by the sample's features.
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (double v : features) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h = (h ^ bits) * 0x100000001b3ULL;
        }
        std::mt19937_64 rng(h);
        std::vector<double> raw(static_cast<std::size_t>(n_));
        for (auto& x : raw) x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        double sum = std::accumulate(raw.begin(), raw.end(), 0.0);
        for (auto& x : raw) x /= sum;
        return raw;
    }
    int num_classes() const override { return n_; }

private:
    int n_;
};

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("perfect ranking has AP 1") {
    std::vector<double> scores{0.9, 0.8, 0.7, 0.2, 0.1};
    std::vector<char> relevant{1, 1, 1, 0, 0};
    CHECK(average_precision(scores, relevant) == doctest::Approx(1.0));
}

TEST_CASE("single positive ranked last of four has AP 0.25") {
    std::vector<double> scores{0.9, 0.8, 0.7, 0.1};
    std::vector<char> relevant{0, 0, 0, 1};
    CHECK(average_precision(scores, relevant) == doctest::Approx(0.25));
}

TEST_CASE("perfect anti-ranking of one positive in n gives 1/n") {
    for (int n : {2, 4, 8}) {
        std::vector<double> scores;
        std::vector<char> relevant;
        for (int i = 0; i < n; ++i) {
            scores.push_back(static_cast<double>(n - i));  // descending
            relevant.push_back(i == n - 1 ? 1 : 0);        // positive scored lowest
        }
        CHECK(average_precision(scores, relevant) ==
              doctest::Approx(1.0 / static_cast<double>(n)));
    }
}

TEST_CASE("no positive label is an error") {
    std::vector<double> scores{0.5, 0.4};
    std::vector<char> relevant{0, 0};
    CHECK_THROWS_AS(average_precision(scores, relevant), std::invalid_argument);
}

TEST_CASE("AP matches the explicit-curve oracle on small patterns") {
    // All label patterns and ternary score patterns up to 6 samples.
    const double alphabet[3] = {0.1, 0.2, 0.3};
    for (int n = 1; n <= 6; ++n) {
        int score_patterns = 1;
        for (int i = 0; i < n; ++i) score_patterns *= 3;
        for (int labels = 1; labels < (1 << n); ++labels) {
            for (int sp = 0; sp < score_patterns; ++sp) {
                std::vector<double> scores;
                std::vector<char> relevant;
                int code = sp;
                for (int i = 0; i < n; ++i) {
                    scores.push_back(alphabet[code % 3]);
                    code /= 3;
                    relevant.push_back((labels >> i) & 1);
                }
                CHECK(average_precision(scores, relevant) ==
                      doctest::Approx(ap_by_curve(scores, relevant)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("a perfect classifier reports mAP 1 and accuracy 1") {
    GeneratorSpec spec{4, 6, 40, 2.0, {}, 60};
    auto [train, test] = generate(spec);
    testutil::NearestCenterScorer oracle(planned_centers(spec));
    auto report = map_report(oracle, test, class_counts(train));
    CHECK(report.map == doctest::Approx(1.0));
    CHECK(report.accuracy == doctest::Approx(1.0));
    CHECK(report.head_map == doctest::Approx(1.0));
    CHECK(report.tail_map == doctest::Approx(1.0));
}

TEST_CASE("a random scorer's per-class AP approaches the class prior") {
    const int n = 4, per_class = 100;
    GeneratorSpec spec{n, 3, per_class, 1.0, {}, 61, per_class};
    auto [train, test] = generate(spec);
    RandomScorer scorer(n);
    auto report = map_report(scorer, test, class_counts(train));

    // Monte-Carlo oracle: expected AP of a random ranking with the same
    // positive count.
    std::mt19937_64 rng(42);
    std::vector<double> mc_scores(test.samples.size());
    std::vector<char> mc_relevant(test.samples.size(), 0);
    for (int i = 0; i < per_class; ++i) mc_relevant[static_cast<std::size_t>(i)] = 1;
    double mc_sum = 0.0;
    const int mc_rounds = 10000;
    for (int round = 0; round < mc_rounds; ++round) {
        for (auto& s : mc_scores) s = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        mc_sum += average_precision(mc_scores, mc_relevant);
    }
    double mc_ap = mc_sum / mc_rounds;
    for (int c = 0; c < n; ++c) {
        REQUIRE(report.per_class_ap[static_cast<std::size_t>(c)].has_value());
        CHECK(std::abs(*report.per_class_ap[static_cast<std::size_t>(c)] - mc_ap) <= 0.05);
    }
}

TEST_CASE("mAP is invariant under a consistent relabeling") {
    GeneratorSpec spec{5, 4, 30, 3.0, {}, 62};
    auto [train, test] = generate(spec);
    auto centers = planned_centers(spec);
    testutil::NearestCenterScorer scorer(centers);
    auto report = map_report(scorer, test, class_counts(train));

    std::vector<int> pi{2, 4, 0, 3, 1};
    LabeledDataset permuted_test = test;
    for (auto& s : permuted_test.samples) s.label = pi[static_cast<std::size_t>(s.label)];
    std::vector<std::vector<double>> permuted_centers(centers.size());
    for (std::size_t c = 0; c < centers.size(); ++c)
        permuted_centers[static_cast<std::size_t>(pi[c])] = centers[c];
    testutil::NearestCenterScorer permuted_scorer(permuted_centers);
    std::vector<std::size_t> permuted_counts(5);
    auto counts = class_counts(train);
    for (std::size_t c = 0; c < counts.size(); ++c)
        permuted_counts[static_cast<std::size_t>(pi[c])] = counts[c];
    auto permuted_report = map_report(permuted_scorer, permuted_test, permuted_counts);
    CHECK(report.map == doctest::Approx(permuted_report.map).epsilon(1e-12));
    CHECK(report.accuracy == doctest::Approx(permuted_report.accuracy).epsilon(1e-12));
}

TEST_CASE("a cleanly separable pair trains to near-zero error") {
    GeneratorSpec spec{4, 4, 40, 1.0, {}, 63};
    auto [train, test] = generate(spec);
    TrainConfig cfg{60, 0.1, 0.9, 0.0, 8, 5};
    double e = pair_error(linear_model_factory(), train, 0, 1, cfg);
    CHECK(e >= 0.0);
    CHECK(e < 0.05);
}

TEST_CASE("an indistinguishable pair converges to the ln 2 optimum") {
    // Both classes drawn from the same cluster: the optimal posterior is 0.5.
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    LabeledDataset ds{{}, 2, 4, Split::train};
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 60; ++i) {
            Sample s;
            s.label = c;
            for (int k = 0; k < 4; ++k) s.features.push_back(gauss(rng));
            ds.samples.push_back(std::move(s));
        }
    TrainConfig cfg{40, 0.05, 0.9, 0.0, 8, 5};
    double e = pair_error(linear_model_factory(), ds, 0, 1, cfg);
    CHECK(std::abs(e - std::log(2.0)) < 0.2);
}

TEST_CASE("pair error is nonnegative across random pairs") {
    GeneratorSpec spec{5, 3, 30, 2.0, {{0, 3, 0.7}}, 65};
    auto [train, test] = generate(spec);
    TrainConfig cfg{20, 0.1, 0.9, 0.0, 8, 5};
    for (auto [j, k] : {std::pair{0, 3}, std::pair{1, 2}, std::pair{2, 4}})
        CHECK(pair_error(linear_model_factory(), train, j, k, cfg) >= 0.0);
}

TEST_CASE("a class with fewer than four samples cannot be held out") {
    LabeledDataset ds{{}, 2, 2, Split::train};
    for (int i = 0; i < 10; ++i) ds.samples.push_back({{0.1 * i, 0.0}, 0});
    for (int i = 0; i < 3; ++i) ds.samples.push_back({{0.1 * i, 5.0}, 1});
    TrainConfig cfg{5, 0.1, 0.9, 0.0, 4, 5};
    CHECK_THROWS_WITH_AS(pair_error(linear_model_factory(), ds, 0, 1, cfg),
                         doctest::Contains("at least 4"), std::invalid_argument);
}

TEST_CASE("a one-pair similarity class averages to that pair's error exactly") {
    GeneratorSpec spec{5, 4, 40, 1.0, {{0, 1, 0.9}}, 66};
    auto [train, test] = generate(spec);
    DependencySets deps{{1, 0, 3, 4, 2}, {2, 3, 4, 0, 1}, {3, 4, 1, 2, 0}};
    auto cen = census(deps);
    REQUIRE(cen.s1.size() == 1);  // only {0,1} is mutual
    TrainConfig cfg{15, 0.1, 0.9, 0.0, 8, 5};
    auto table = similarity_error_table(cen, train, cfg, 2025);
    REQUIRE(table[1].has_value());
    TrainConfig pair_cfg = cfg;
    pair_cfg.seed = mix_seed(2025, (std::uint64_t{0} << 32) | 1);
    CHECK(*table[1] == pair_error(linear_model_factory(), train, 0, 1, pair_cfg));
}

TEST_CASE("planted overlaps push E_1 above E_0") {
    GeneratorSpec spec{6, 6, 50, 1.0, {{0, 1, 0.95}, {2, 3, 0.95}}, 67};
    auto [train, test] = generate(spec);
    DependencySets deps{{1, 0, 3, 2, 0, 0}, {2, 3, 4, 5, 1, 1}, {3, 2, 5, 4, 2, 2}};
    auto cen = census(deps);
    TrainConfig cfg{25, 0.1, 0.9, 0.0, 8, 5};
    auto table = similarity_error_table(cen, train, cfg, 31);
    REQUIRE(table[1].has_value());
    REQUIRE(table[0].has_value());
    CHECK(*table[1] > *table[0]);
    for (const auto& e : table)
        if (e) CHECK(*e >= 0.0);
}

TEST_CASE("empty similarity classes are marked absent") {
    GeneratorSpec spec{5, 3, 30, 1.0, {}, 68};
    auto [train, test] = generate(spec);
    DependencySets deps = testutil::random_dependency_sets(5, 9);
    // force a census with no mutual pairs
    deps.d2 = {1, 2, 3, 4, 0};
    auto cen = census(deps);
    REQUIRE(cen.s1.empty());
    TrainConfig cfg{10, 0.1, 0.9, 0.0, 8, 5};
    auto table = similarity_error_table(cen, train, cfg, 32);
    CHECK(!table[1].has_value());
    CHECK(table[2].has_value());
}

TEST_CASE("the metrics file has the documented line layout") {
    EvalReport report;
    report.per_class_ap = {0.5, std::nullopt};
    report.train_counts = {10, 4};
    report.map = 0.5;
    report.accuracy = 0.75;
    report.head_map = 0.5;
    report.tail_map = 0.25;
    report.e_table[0] = 0.125;
    testutil::TempDir tmp("metrics_io");
    save_metrics(report, tmp.path("m.txt"));
    CHECK(testutil::read_file(tmp.path("m.txt")) ==
          "0 0.5 10\n"
          "1 absent 4\n"
          "mAP 0.5\n"
          "accuracy 0.75\n"
          "head_mAP 0.5\n"
          "tail_mAP 0.25\n"
          "E_0 0.125\n"
          "E_1 absent\n"
          "E_2 absent\n"
          "E_3 absent\n"
          "E_4 absent\n");
}

TEST_CASE("reports are deterministic for a deterministic scorer") {
    GeneratorSpec spec{4, 4, 30, 2.0, {}, 69};
    auto [train, test] = generate(spec);
    testutil::NearestCenterScorer oracle(planned_centers(spec));
    auto a = map_report(oracle, test, class_counts(train));
    auto b = map_report(oracle, test, class_counts(train));
    CHECK(a.map == b.map);
    CHECK(a.per_class_ap == b.per_class_ap);
}

}  // TEST_SUITE
