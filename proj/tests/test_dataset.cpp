#include <doctest.h>

#include <random>

#include "expertnet/dataset.hpp"
#include "test_helpers.hpp"

using namespace expertnet;

TEST_SUITE("dataset") {

TEST_CASE("balanced spec yields equal counts") {
    GeneratorSpec spec{4, 3, 50, 1.0, {}, 11};
    auto counts = planned_counts(spec);
    for (auto c : counts) CHECK(c == 50);
}

TEST_CASE("two-class ratio-4 counts are 100 and 25") {
    GeneratorSpec spec{2, 3, 100, 4.0, {}, 11};
    auto counts = planned_counts(spec);
    CHECK(counts[0] == 100);
    CHECK(counts[1] == 25);
    auto [train, test] = generate(spec);
    auto observed = class_counts(train);
    CHECK(observed[0] == 100);
    CHECK(observed[1] == 25);
}

TEST_CASE("same spec and seed generate bit-identical datasets") {
    GeneratorSpec spec{5, 4, 40, 3.0, {{0, 1, 0.8}}, 1234};
    auto [train_a, test_a] = generate(spec);
    auto [train_b, test_b] = generate(spec);
    CHECK(train_a == train_b);
    CHECK(test_a == test_b);

    testutil::TempDir tmp("dataset_det");
    save(train_a, tmp.path("a.txt"));
    save(train_b, tmp.path("b.txt"));
    CHECK(testutil::read_file(tmp.path("a.txt")) == testutil::read_file(tmp.path("b.txt")));
}

TEST_CASE("save/load round-trips exactly including sample order") {
    LabeledDataset ds{{{{1.25, -3.5}, 0}, {{0.1, 2e-7}, 2}, {{-0.0078125, 9.0}, 1}},
                      3,
                      2,
                      Split::train};
    testutil::TempDir tmp("dataset_rt");
    save(ds, tmp.path("d.txt"));
    CHECK(load(tmp.path("d.txt")) == ds);
}

TEST_CASE("round-trip preserves awkward doubles") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 100.0);
    LabeledDataset ds{{}, 2, 5, Split::test};
    for (int i = 0; i < 50; ++i) {
        Sample s;
        s.label = i % 2;
        for (int k = 0; k < 5; ++k) s.features.push_back(gauss(rng) / 3.0);
        ds.samples.push_back(s);
    }
    testutil::TempDir tmp("dataset_rt2");
    save(ds, tmp.path("d.txt"));
    CHECK(load(tmp.path("d.txt")) == ds);
}

TEST_CASE("label outside the declared range is a schema error") {
    testutil::TempDir tmp("dataset_schema");
    {
        std::ofstream f(tmp.path("bad.txt"));
        f << "3 2 train\n0 1.0 2.0\n3 0.5 0.5\n";
    }
    CHECK_THROWS_WITH_AS(load(tmp.path("bad.txt")),
                         doctest::Contains("label 3 outside [0,3)"), std::runtime_error);
}

TEST_CASE("non-numeric feature is a parse error naming the line") {
    testutil::TempDir tmp("dataset_parse");
    {
        std::ofstream f(tmp.path("bad.txt"));
        f << "2 2 train\n0 1.0 2.0\n1 0.5 oops\n";
    }
    CHECK_THROWS_WITH_AS(load(tmp.path("bad.txt")), doctest::Contains(":3:"),
                         std::runtime_error);
}

TEST_CASE("malformed header rejected") {
    testutil::TempDir tmp("dataset_hdr");
    {
        std::ofstream f(tmp.path("bad.txt"));
        f << "2 train\n";
    }
    CHECK_THROWS(load(tmp.path("bad.txt")));
}

TEST_CASE("class_counts on an empty dataset is all zeros") {
    LabeledDataset ds{{}, 4, 2, Split::train};
    auto counts = class_counts(ds);
    REQUIRE(counts.size() == 4);
    for (auto c : counts) CHECK(c == 0);
}

TEST_CASE("class_counts tallies labels") {
    LabeledDataset ds{{{{0.0}, 0}, {{0.0}, 0}, {{0.0}, 1}}, 2, 1, Split::train};
    auto counts = class_counts(ds);
    CHECK(counts[0] == 2);
    CHECK(counts[1] == 1);
}

TEST_CASE("invalid specs are rejected with diagnostics") {
    GeneratorSpec ratio_below_one{4, 2, 10, 0.5, {}, 0};
    CHECK_THROWS_WITH_AS(validate(ratio_below_one), doctest::Contains("imbalance_ratio"),
                         std::invalid_argument);
    GeneratorSpec bad_overlap{4, 2, 10, 2.0, {{0, 1, 1.5}}, 0};
    CHECK_THROWS_WITH_AS(validate(bad_overlap), doctest::Contains("strength"),
                         std::invalid_argument);
    GeneratorSpec self_pair{4, 2, 10, 2.0, {{2, 2, 0.5}}, 0};
    CHECK_THROWS_AS(validate(self_pair), std::invalid_argument);
}

TEST_CASE("train counts are non-increasing and span the ratio") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        GeneratorSpec spec;
        spec.num_classes = 2 + static_cast<int>(rng() % 14);
        spec.feature_dim = 3;
        spec.head_count = 20 + static_cast<int>(rng() % 200);
        spec.imbalance_ratio = 1.0 + static_cast<double>(rng() % 20);
        spec.seed = rng();
        auto counts = planned_counts(spec);
        for (std::size_t i = 1; i < counts.size(); ++i) CHECK(counts[i] <= counts[i - 1]);
        double ratio = static_cast<double>(counts.front()) / static_cast<double>(counts.back());
        double expected_min = spec.head_count / spec.imbalance_ratio;
        CHECK(std::abs(static_cast<double>(counts.back()) - expected_min) <= 0.5 + 1e-9);
        CHECK(ratio >= 1.0);
    }
}

TEST_CASE("every class appears in the generated train split") {
    GeneratorSpec spec{12, 4, 30, 25.0, {}, 5};
    auto [train, test] = generate(spec);
    auto counts = class_counts(train);
    for (auto c : counts) CHECK(c >= 1);
    // test split is class-balanced
    auto test_counts = class_counts(test);
    for (auto c : test_counts) CHECK(c == test_counts[0]);
}

TEST_CASE("larger overlap strength moves planted centers closer") {
    double prev_distance = 1e300;
    for (double strength : {0.2, 0.5, 0.9}) {
        GeneratorSpec spec{6, 8, 30, 2.0, {{1, 4, strength}}, 777};
        auto centers = planned_centers(spec);
        double d = testutil::l2_distance(centers[1], centers[4]);
        CHECK(d < prev_distance);
        prev_distance = d;
    }
}

}  // TEST_SUITE
