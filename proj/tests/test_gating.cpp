#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "expertnet/gating.hpp"
#include "test_helpers.hpp"

using namespace expertnet;

namespace {

std::vector<double> random_prob_vector(std::mt19937_64& rng, int m) {
    std::exponential_distribution<double> exp_dist(1.0);
    std::vector<double> p(static_cast<std::size_t>(m));
    double sum = 0.0;
    for (auto& x : p) {
        x = exp_dist(rng) + 1e-9;
        sum += x;
    }
    for (auto& x : p) x /= sum;
    return p;
}

bool all_distinct(const std::vector<double>& p) {
    auto sorted = p;
    std::sort(sorted.begin(), sorted.end());
    return std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end();
}

}  // namespace

TEST_SUITE("gating") {

TEST_CASE("surpass counts under the total order") {
    std::vector<double> p{0.1, 0.4, 0.3, 0.2};
    CHECK(surpass_count(p, 1) == 3);  // 0.4 beats everything
    CHECK(surpass_count(p, 0) == 0);
    std::vector<double> uniform{0.25, 0.25, 0.25, 0.25};
    CHECK(surpass_count(uniform, 0) == 3);  // wins every tie by index
    CHECK(surpass_count(uniform, 3) == 0);
    std::vector<double> tied{0.4, 0.4, 0.2};
    CHECK(surpass_count(tied, 1) == 1);  // loses the tie to index 0, beats index 2
}

TEST_CASE("direct mask selects the top entries") {
    std::vector<double> p{0.1, 0.4, 0.3, 0.2};
    CHECK(mask_direct(p, 2).bits == std::vector<int>{0, 1, 1, 0});
    CHECK(mask_direct(p, 4).bits == std::vector<int>{1, 1, 1, 1});  // S = M
    std::vector<double> tied{0.4, 0.4, 0.2};
    CHECK(mask_direct(tied, 2).bits == std::vector<int>{1, 1, 0});
}

TEST_CASE("selection width outside [1, M] is rejected") {
    std::vector<double> p{0.5, 0.5};
    CHECK_THROWS_AS(mask_direct(p, 0), std::invalid_argument);
    CHECK_THROWS_AS(mask_direct(p, 3), std::invalid_argument);
    CHECK_THROWS_AS(mask_stepnet(p, 0), std::invalid_argument);
}

TEST_CASE("step network layers have the declared structure") {
    for (int m = 2; m <= 8; ++m) {
        StepNetwork net = make_step_network(m, 1);
        CHECK(net.bias == -static_cast<double>(m - 1));
        CHECK(net.w2 == std::vector<double>(static_cast<std::size_t>(m - 1), 1.0));
        for (int q = 0; q < m; ++q) {
            const auto& w = net.w1[static_cast<std::size_t>(q)];
            REQUIRE(w.size() == static_cast<std::size_t>((m - 1) * m));
            for (int row = 0; row < m - 1; ++row) {
                int plus = 0, minus = 0;
                double row_sum = 0.0;
                for (int c = 0; c < m; ++c) {
                    double v = w[static_cast<std::size_t>(row * m + c)];
                    row_sum += v;
                    if (v == 1.0) {
                        ++plus;
                        CHECK(c == q);  // the +1 sits in the probed column
                    } else if (v == -1.0) {
                        ++minus;
                    } else {
                        CHECK(v == 0.0);
                    }
                }
                CHECK(row_sum == 0.0);
                CHECK(plus == 1);
                CHECK(minus == 1);
            }
        }
    }
}

TEST_CASE("step network agrees with the direct mask on distinct entries") {
    std::mt19937_64 rng(404);
    for (int m = 2; m <= 6; ++m) {
        for (int s = 1; s <= m; ++s) {
            for (int trial = 0; trial < 100; ++trial) {
                auto p = random_prob_vector(rng, m);
                if (!all_distinct(p)) continue;
                CHECK(mask_stepnet(p, s).bits == mask_direct(p, s).bits);
            }
        }
    }
}

TEST_CASE("step network worked examples") {
    std::vector<double> two{0.9, 0.1};
    CHECK(mask_stepnet(two, 1).bits == std::vector<int>{1, 0});
    std::vector<double> four{0.1, 0.4, 0.3, 0.2};
    CHECK(mask_stepnet(four, 2).bits == std::vector<int>{0, 1, 1, 0});
}

TEST_CASE("both variants emit exactly S ones, ties included") {
    std::mt19937_64 rng(777);
    for (int trial = 0; trial < 300; ++trial) {
        int m = 2 + static_cast<int>(rng() % 5);
        auto p = random_prob_vector(rng, m);
        if (trial % 3 == 0 && m >= 3) p[1] = p[0];                // planted tie
        if (trial % 5 == 0) std::fill(p.begin(), p.end(), 0.25);  // all tied
        for (int s = 1; s <= m; ++s) {
            CHECK(mask_direct(p, s).ones() == s);
            CHECK(mask_stepnet(p, s).ones() == s);
        }
    }
}

TEST_CASE("raising a selected entry never deselects it") {
    std::mt19937_64 rng(888);
    for (int trial = 0; trial < 200; ++trial) {
        int m = 2 + static_cast<int>(rng() % 5);
        auto p = random_prob_vector(rng, m);
        int s = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(m));
        auto mask = mask_direct(p, s);
        int q = static_cast<int>(rng() % static_cast<std::uint64_t>(m));
        if (!mask.bits[static_cast<std::size_t>(q)]) continue;
        auto raised = p;
        raised[static_cast<std::size_t>(q)] += 0.25;
        CHECK(mask_direct(raised, s).bits[static_cast<std::size_t>(q)] == 1);
    }
}

TEST_CASE("scaling the logits never changes the mask") {
    std::mt19937_64 rng(999);
    std::normal_distribution<double> gauss(0.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        int m = 2 + static_cast<int>(rng() % 5);
        std::vector<double> logits(static_cast<std::size_t>(m));
        for (auto& z : logits) z = gauss(rng);
        int s = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(m));
        auto base = mask_direct(softmax(logits), s);
        for (double c : {0.5, 2.0, 7.0}) {
            auto scaled = logits;
            for (auto& z : scaled) z *= c;
            CHECK(mask_direct(softmax(scaled), s).bits == base.bits);
        }
    }
}

TEST_CASE("super-class training reaches high accuracy on separated blocks") {
    // Classes 0,1 sit close together, as do 2,3; the two pairs are far apart.
    GeneratorSpec spec{4, 6, 60, 1.0, {{0, 1, 0.6}, {2, 3, 0.6}}, 51};
    auto [train, test] = generate(spec);

    // The nearest-center oracle confirms the two super-clusters separate.
    testutil::NearestCenterScorer oracle(planned_centers(spec));
    int oracle_ok = 0;
    for (const auto& s : test.samples) {
        auto scores = oracle.score(s.features);
        int arg =
            static_cast<int>(std::max_element(scores.begin(), scores.end()) - scores.begin());
        oracle_ok += (arg / 2) == (s.label / 2);
    }
    REQUIRE(static_cast<double>(oracle_ok) / static_cast<double>(test.samples.size()) >= 0.99);

    Partition partition;
    partition.block_of = {0, 0, 1, 1};
    partition.num_blocks = 2;
    TrainConfig cfg{40, 0.05, 0.9, 0.0, 16, 7};
    SuperClassScorer fam = train_fam(train, partition, cfg, {16, 8});
    int correct = 0;
    for (const auto& s : test.samples) {
        auto probs = fam.score(s.features);
        int arg = probs[1] > probs[0] ? 1 : 0;
        correct += arg == partition.block_of[static_cast<std::size_t>(s.label)];
    }
    CHECK(static_cast<double>(correct) / static_cast<double>(test.samples.size()) >= 0.95);
}

TEST_CASE("relabeling is surjective onto the blocks for a valid partition") {
    GeneratorSpec spec{6, 3, 20, 2.0, {}, 3};
    auto [train, test] = generate(spec);
    Partition partition;
    partition.block_of = {0, 1, 2, 0, 1, 2};
    partition.num_blocks = 3;
    auto relabeled = relabel_to_superclasses(train, partition);
    auto counts = class_counts(relabeled);
    REQUIRE(counts.size() == 3);
    for (auto c : counts) CHECK(c > 0);
    CHECK(relabeled.samples.size() == train.samples.size());
}

TEST_CASE("an empty super-class is rejected by block id") {
    GeneratorSpec spec{4, 3, 20, 1.0, {}, 3};
    auto [train, test] = generate(spec);
    Partition partition;
    partition.block_of = {0, 0, 0, 0};
    partition.num_blocks = 2;
    TrainConfig cfg{5, 0.05, 0.9, 0.0, 8, 7};
    CHECK_THROWS_WITH_AS(train_fam(train, partition, cfg, {8}),
                         doctest::Contains("super-class 1"), std::invalid_argument);
}

TEST_CASE("identical seeds give identical super-class scorers") {
    GeneratorSpec spec{4, 3, 30, 2.0, {}, 13};
    auto [train, test] = generate(spec);
    Partition partition;
    partition.block_of = {0, 1, 0, 1};
    partition.num_blocks = 2;
    TrainConfig cfg{10, 0.05, 0.9, 0.0, 8, 77};
    auto a = train_fam(train, partition, cfg, {8, 4});
    auto b = train_fam(train, partition, cfg, {8, 4});
    CHECK(a.model == b.model);
}

}  // TEST_SUITE
