#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "expertnet/dependency.hpp"

namespace expertnet {

/// One dependency order as a graph: node j has the single out-edge
/// j -> d_{order,j}. Mutual order-2 edges are flagged two-way; higher orders
/// are one-way only.
struct DependencyGraph {
    int order = 2;
    int num_nodes = 0;
    std::vector<int> out_edge;
    std::vector<char> two_way;  // two_way[j]: d2[j]=k and d2[k]=j
};

DependencyGraph build_graph(const DependencySets& deps, int order);

/// Undirected degree (number of distinct neighbors) per node.
std::vector<int> connection_counts(const DependencyGraph& graph);

/// Pair lists per similarity type. S1 holds each mutual second-order pair
/// once, stored (min,max). S2 holds ordered one-way second-order pairs.
/// S3/S4 hold every ordered third/fourth-order edge; a numerically mutual
/// pair contributes two entries since those orders have no two-way notion.
struct SimilarityCensus {
    std::vector<std::pair<int, int>> s1;
    std::vector<std::pair<int, int>> s2;
    std::vector<std::pair<int, int>> s3;
    std::vector<std::pair<int, int>> s4;
};

SimilarityCensus census(const DependencySets& deps);

enum class BalanceMode { class_count, sample_count };

/// Balance constraint for a partition. class_count: block class counts differ
/// by at most one. sample_count: max/min block train-sample totals <= tau,
/// with per-class totals supplied in class_weights.
struct BalanceSpec {
    BalanceMode mode = BalanceMode::class_count;
    double tau = 2.0;
    std::vector<std::size_t> class_weights;
};

struct Partition {
    std::vector<int> block_of;
    int num_blocks = 0;
    BalanceMode mode = BalanceMode::class_count;
    double tau = 2.0;

    int num_classes() const { return static_cast<int>(block_of.size()); }
    bool operator==(const Partition&) const = default;
};

std::vector<int> block_sizes(const Partition& p);
bool balanced(const Partition& p, const BalanceSpec& balance);

/// Intra-block pair counts (s1, s2, s3, s4), compared lexicographically.
struct PartitionObjective {
    std::array<long long, 4> counts{0, 0, 0, 0};
    auto operator<=>(const PartitionObjective&) const = default;
};

PartitionObjective objective(const Partition& p, const SimilarityCensus& cen);

/// Route-walk seeding: per component of the undirected order-2 view, walk
/// simple paths from boundary nodes to the max-degree center, assigning nodes
/// to blocks cyclically so adjacent nodes split; leftover nodes fill the
/// smallest blocks; balance is then repaired by moving low-similarity nodes
/// out of over-full blocks.
Partition initial_partition(const DependencyGraph& graph2, int num_blocks,
                            const BalanceSpec& balance);

/// Moves nodes from over-full to under-full blocks (fewest intra-block
/// order-2 similarities first) until the balance constraint holds or no
/// useful move remains.
void repair_balance(Partition& p, const DependencyGraph& graph2, const BalanceSpec& balance);

/// Priority-ordered local search over single-node moves and pairwise swaps.
/// A move is accepted only if it strictly improves the lexicographic
/// objective and keeps the partition balanced; passes shrink s1/s2 first,
/// then s3 and s4 without regressing earlier counts.
Partition refine(Partition p, const SimilarityCensus& cen, const BalanceSpec& balance,
                 std::array<int, 4> priority = {0, 1, 2, 3});

/// The full division heuristic: the route-seeded start refined as above, plus
/// a fixed fan of seeded balanced restarts through the same refinement;
/// returns the lexicographically best partition found. Deterministic.
Partition gcs_partition(const DependencyGraph& graph2, const SimilarityCensus& cen,
                        int num_blocks, const BalanceSpec& balance, int restarts = 24);

struct BruteForceResult {
    Partition partition;
    PartitionObjective objective;
};

/// Exhaustive oracle over balanced assignments; guarded to N <= 12.
BruteForceResult brute_force_partition(const SimilarityCensus& cen, int num_classes,
                                       int num_blocks, const BalanceSpec& balance);

/// Seeded shuffle dealt round-robin: a class-count balanced random division.
Partition random_partition(int num_classes, int num_blocks, std::uint64_t seed);

/// Text format: header "N M mode tau", one "class_id block_id" line per class,
/// then an optional "# objective s1 s2 s3 s4" comment.
void save_partition(const Partition& p, const std::optional<PartitionObjective>& obj,
                    const std::string& path);
Partition load_partition(const std::string& path);

}  // namespace expertnet
