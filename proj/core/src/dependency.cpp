#include "expertnet/dependency.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace expertnet {

void validate(const DependencySets& deps) {
    const int n = deps.num_classes();
    if (static_cast<int>(deps.d3.size()) != n || static_cast<int>(deps.d4.size()) != n)
        throw std::invalid_argument("DependencySets: d2/d3/d4 lengths differ");
    if (n < 4) throw std::invalid_argument("DependencySets: need at least 4 classes");
    for (int j = 0; j < n; ++j) {
        std::array<int, 3> e{deps.d2[static_cast<std::size_t>(j)],
                             deps.d3[static_cast<std::size_t>(j)],
                             deps.d4[static_cast<std::size_t>(j)]};
        for (int v : e)
            if (v < 0 || v >= n || v == j)
                throw std::invalid_argument("DependencySets: entry for class " +
                                            std::to_string(j) + " invalid (" +
                                            std::to_string(v) + ")");
    }
}

bool has_distinct_orders(const DependencySets& deps) {
    for (int j = 0; j < deps.num_classes(); ++j) {
        int a = deps.d2[static_cast<std::size_t>(j)];
        int b = deps.d3[static_cast<std::size_t>(j)];
        int c = deps.d4[static_cast<std::size_t>(j)];
        if (a == b || a == c || b == c) return false;
    }
    return true;
}

std::array<int, 3> rank_classes(const Scorer& scorer, const Sample& sample, int true_class) {
    const int n = scorer.num_classes();
    if (n < 4)
        throw std::invalid_argument("rank_classes: fourth-order dependency undefined for " +
                                    std::to_string(n) + " classes");
    if (true_class < 0 || true_class >= n)
        throw std::invalid_argument("rank_classes: true class out of range");
    auto scores = scorer.score(sample.features);
    if (static_cast<int>(scores.size()) != n)
        throw std::runtime_error("rank_classes: scorer returned wrong width");

    std::vector<int> ids(static_cast<std::size_t>(n));
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        if (scores[static_cast<std::size_t>(a)] != scores[static_cast<std::size_t>(b)])
            return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
        return a < b;
    });
    // Drop the true class wherever it landed; ranks 2..4 are then the top
    // three remaining classes.
    std::array<int, 3> ranks{};
    int filled = 0;
    for (int id : ids) {
        if (id == true_class) continue;
        ranks[static_cast<std::size_t>(filled++)] = id;
        if (filled == 3) break;
    }
    return ranks;
}

RankTally tally_ranks(const Scorer& scorer, const LabeledDataset& train) {
    const int n = train.num_classes;
    if (scorer.num_classes() != n)
        throw std::invalid_argument("tally_ranks: scorer covers " +
                                    std::to_string(scorer.num_classes()) + " classes, dataset " +
                                    std::to_string(n));
    RankTally tally;
    tally.num_classes = n;
    tally.counts.resize(static_cast<std::size_t>(n));
    for (auto& per_class : tally.counts)
        for (auto& hist : per_class) hist.assign(static_cast<std::size_t>(n), 0);
    for (const auto& s : train.samples) {
        auto ranks = rank_classes(scorer, s, s.label);
        for (int r = 0; r < 3; ++r)
            ++tally.counts[static_cast<std::size_t>(s.label)][static_cast<std::size_t>(r)]
                          [static_cast<std::size_t>(ranks[static_cast<std::size_t>(r)])];
    }
    return tally;
}

DependencySets dependencies_from_tally(const RankTally& tally) {
    const int n = tally.num_classes;
    DependencySets deps;
    deps.d2.resize(static_cast<std::size_t>(n));
    deps.d3.resize(static_cast<std::size_t>(n));
    deps.d4.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        long total = 0;
        for (long c : tally.counts[static_cast<std::size_t>(j)][0]) total += c;
        if (total == 0)
            throw std::invalid_argument("compute_dependencies: class " + std::to_string(j) +
                                        " has no train samples");
        std::array<int, 3> picks{-1, -1, -1};
        for (int r = 0; r < 3; ++r) {
            const auto& hist = tally.counts[static_cast<std::size_t>(j)][static_cast<std::size_t>(r)];
            int best = -1;
            long best_count = -1;
            for (int k = 0; k < n; ++k) {
                if (k == j || k == picks[0] || k == picks[1]) continue;
                long c = hist[static_cast<std::size_t>(k)];
                if (c > best_count) {
                    best = k;
                    best_count = c;
                }
            }
            picks[static_cast<std::size_t>(r)] = best;
        }
        deps.d2[static_cast<std::size_t>(j)] = picks[0];
        deps.d3[static_cast<std::size_t>(j)] = picks[1];
        deps.d4[static_cast<std::size_t>(j)] = picks[2];
    }
    validate(deps);
    if (!has_distinct_orders(deps))
        throw std::logic_error("compute_dependencies: distinctness enforcement failed");
    return deps;
}

DependencySets compute_dependencies(const Scorer& scorer, const LabeledDataset& train) {
    return dependencies_from_tally(tally_ranks(scorer, train));
}

void save_dependencies(const DependencySets& deps, const std::string& path) {
    validate(deps);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    for (int j = 0; j < deps.num_classes(); ++j)
        f << j << ' ' << deps.d2[static_cast<std::size_t>(j)] << ' '
          << deps.d3[static_cast<std::size_t>(j)] << ' ' << deps.d4[static_cast<std::size_t>(j)]
          << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

DependencySets load_dependencies(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open dependency file: " + path);
    DependencySets deps;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        int j, a, b, c;
        if (!(ls >> j >> a >> b >> c))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 'j d2 d3 d4'");
        if (j != static_cast<int>(deps.d2.size()))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": classes must appear in ascending order");
        deps.d2.push_back(a);
        deps.d3.push_back(b);
        deps.d4.push_back(c);
    }
    validate(deps);
    return deps;
}

}  // namespace expertnet
