#include "expertnet/gcs.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace expertnet {

namespace {

std::vector<std::vector<int>> undirected_adjacency(const DependencyGraph& g) {
    std::vector<std::set<int>> nbr(static_cast<std::size_t>(g.num_nodes));
    for (int j = 0; j < g.num_nodes; ++j) {
        int k = g.out_edge[static_cast<std::size_t>(j)];
        nbr[static_cast<std::size_t>(j)].insert(k);
        nbr[static_cast<std::size_t>(k)].insert(j);
    }
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(g.num_nodes));
    for (int j = 0; j < g.num_nodes; ++j)
        adj[static_cast<std::size_t>(j)].assign(nbr[static_cast<std::size_t>(j)].begin(),
                                                nbr[static_cast<std::size_t>(j)].end());
    return adj;
}

const char* mode_name(BalanceMode m) {
    return m == BalanceMode::class_count ? "class" : "sample";
}

// Sample totals per block; class-count mode weights every class as 1.
std::vector<double> block_weights(const Partition& p, const BalanceSpec& balance) {
    std::vector<double> totals(static_cast<std::size_t>(p.num_blocks), 0.0);
    for (int c = 0; c < p.num_classes(); ++c) {
        double w = 1.0;
        if (balance.mode == BalanceMode::sample_count) {
            if (balance.class_weights.size() != static_cast<std::size_t>(p.num_classes()))
                throw std::invalid_argument("BalanceSpec: class_weights length mismatch");
            w = static_cast<double>(balance.class_weights[static_cast<std::size_t>(c)]);
        }
        totals[static_cast<std::size_t>(p.block_of[static_cast<std::size_t>(c)])] += w;
    }
    return totals;
}

bool weights_balanced(const std::vector<double>& totals, const BalanceSpec& balance) {
    auto [mn, mx] = std::minmax_element(totals.begin(), totals.end());
    if (balance.mode == BalanceMode::class_count) return *mx - *mn <= 1.0;
    if (*mn <= 0.0) return false;
    return *mx / *mn <= balance.tau + 1e-12;
}

// Number of intra-block order-2 edges touching node v in its current block.
int intra_similarity_degree(const DependencyGraph& g, const std::vector<int>& block_of, int v) {
    int count = 0;
    int out = g.out_edge[static_cast<std::size_t>(v)];
    if (block_of[static_cast<std::size_t>(out)] == block_of[static_cast<std::size_t>(v)]) ++count;
    for (int j = 0; j < g.num_nodes; ++j)
        if (j != v && g.out_edge[static_cast<std::size_t>(j)] == v &&
            block_of[static_cast<std::size_t>(j)] == block_of[static_cast<std::size_t>(v)])
            ++count;
    return count;
}

struct PriorityLess {
    std::array<int, 4> priority;
    int prefix;
    bool operator()(const PartitionObjective& a, const PartitionObjective& b) const {
        for (int i = 0; i < prefix; ++i) {
            long long av = a.counts[static_cast<std::size_t>(priority[static_cast<std::size_t>(i)])];
            long long bv = b.counts[static_cast<std::size_t>(priority[static_cast<std::size_t>(i)])];
            if (av != bv) return av < bv;
        }
        return false;
    }
};

}  // namespace

DependencyGraph build_graph(const DependencySets& deps, int order) {
    validate(deps);
    if (order < 2 || order > 4)
        throw std::invalid_argument("build_graph: order must be 2, 3 or 4");
    const auto& d = order == 2 ? deps.d2 : order == 3 ? deps.d3 : deps.d4;
    DependencyGraph g;
    g.order = order;
    g.num_nodes = deps.num_classes();
    g.out_edge = d;
    g.two_way.assign(static_cast<std::size_t>(g.num_nodes), 0);
    if (order == 2)
        for (int j = 0; j < g.num_nodes; ++j) {
            int k = d[static_cast<std::size_t>(j)];
            if (d[static_cast<std::size_t>(k)] == j) g.two_way[static_cast<std::size_t>(j)] = 1;
        }
    return g;
}

std::vector<int> connection_counts(const DependencyGraph& graph) {
    auto adj = undirected_adjacency(graph);
    std::vector<int> deg(static_cast<std::size_t>(graph.num_nodes));
    for (int j = 0; j < graph.num_nodes; ++j)
        deg[static_cast<std::size_t>(j)] = static_cast<int>(adj[static_cast<std::size_t>(j)].size());
    return deg;
}

SimilarityCensus census(const DependencySets& deps) {
    validate(deps);
    const int n = deps.num_classes();
    SimilarityCensus cen;
    for (int j = 0; j < n; ++j) {
        int k = deps.d2[static_cast<std::size_t>(j)];
        if (deps.d2[static_cast<std::size_t>(k)] == j) {
            if (j < k) cen.s1.emplace_back(j, k);
        } else {
            cen.s2.emplace_back(j, k);
        }
        cen.s3.emplace_back(j, deps.d3[static_cast<std::size_t>(j)]);
        cen.s4.emplace_back(j, deps.d4[static_cast<std::size_t>(j)]);
    }
    return cen;
}

std::vector<int> block_sizes(const Partition& p) {
    std::vector<int> sizes(static_cast<std::size_t>(p.num_blocks), 0);
    for (int b : p.block_of) {
        if (b < 0 || b >= p.num_blocks)
            throw std::invalid_argument("Partition: block id out of range");
        ++sizes[static_cast<std::size_t>(b)];
    }
    return sizes;
}

bool balanced(const Partition& p, const BalanceSpec& balance) {
    return weights_balanced(block_weights(p, balance), balance);
}

PartitionObjective objective(const Partition& p, const SimilarityCensus& cen) {
    auto intra = [&](const std::pair<int, int>& pr) {
        return p.block_of[static_cast<std::size_t>(pr.first)] ==
               p.block_of[static_cast<std::size_t>(pr.second)];
    };
    PartitionObjective obj;
    for (const auto& pr : cen.s1) obj.counts[0] += intra(pr);
    for (const auto& pr : cen.s2) obj.counts[1] += intra(pr);
    for (const auto& pr : cen.s3) obj.counts[2] += intra(pr);
    for (const auto& pr : cen.s4) obj.counts[3] += intra(pr);
    return obj;
}

Partition initial_partition(const DependencyGraph& graph2, int num_blocks,
                            const BalanceSpec& balance) {
    const int n = graph2.num_nodes;
    if (num_blocks < 2) throw std::invalid_argument("initial_partition: need at least 2 blocks");
    if (num_blocks > n)
        throw std::invalid_argument("initial_partition: more blocks (" +
                                    std::to_string(num_blocks) + ") than classes (" +
                                    std::to_string(n) + ")");

    auto adj = undirected_adjacency(graph2);
    std::vector<int> component(static_cast<std::size_t>(n), -1);
    int num_components = 0;
    for (int start = 0; start < n; ++start) {
        if (component[static_cast<std::size_t>(start)] != -1) continue;
        std::deque<int> queue{start};
        component[static_cast<std::size_t>(start)] = num_components;
        while (!queue.empty()) {
            int v = queue.front();
            queue.pop_front();
            for (int w : adj[static_cast<std::size_t>(v)])
                if (component[static_cast<std::size_t>(w)] == -1) {
                    component[static_cast<std::size_t>(w)] = num_components;
                    queue.push_back(w);
                }
        }
        ++num_components;
    }

    std::vector<int> assignment(static_cast<std::size_t>(n), -1);
    int next_block = 0;
    auto assign = [&](int v) {
        if (assignment[static_cast<std::size_t>(v)] != -1) return;
        assignment[static_cast<std::size_t>(v)] = next_block;
        next_block = (next_block + 1) % num_blocks;
    };

    // Components in ascending order of their smallest node (BFS above visits
    // them in exactly that order).
    for (int comp = 0; comp < num_components; ++comp) {
        std::vector<int> nodes;
        for (int v = 0; v < n; ++v)
            if (component[static_cast<std::size_t>(v)] == comp) nodes.push_back(v);

        // Center: maximum connection count, ties to the lowest class id.
        int center = nodes.front();
        for (int v : nodes)
            if (adj[static_cast<std::size_t>(v)].size() > adj[static_cast<std::size_t>(center)].size())
                center = v;

        // BFS tree rooted at the center; a route is the tree path from a
        // degree-1 boundary node back up to the center.
        std::vector<int> parent(static_cast<std::size_t>(n), -1);
        std::deque<int> queue{center};
        parent[static_cast<std::size_t>(center)] = center;
        while (!queue.empty()) {
            int v = queue.front();
            queue.pop_front();
            for (int w : adj[static_cast<std::size_t>(v)])
                if (parent[static_cast<std::size_t>(w)] == -1) {
                    parent[static_cast<std::size_t>(w)] = v;
                    queue.push_back(w);
                }
        }

        std::vector<std::vector<int>> routes;
        for (int v : nodes) {
            if (v == center || adj[static_cast<std::size_t>(v)].size() != 1) continue;
            std::vector<int> route{v};
            int cur = v;
            while (cur != center) {
                cur = parent[static_cast<std::size_t>(cur)];
                route.push_back(cur);
            }
            routes.push_back(std::move(route));
        }
        if (routes.empty() && nodes.size() == 1) routes.push_back({center});

        std::sort(routes.begin(), routes.end(), [](const auto& a, const auto& b) {
            if (a.size() != b.size()) return a.size() > b.size();
            return a < b;  // lexicographic node order
        });

        for (const auto& route : routes)
            for (int v : route) assign(v);
    }

    // Leftovers (cycle interiors, routeless centers) fill the smallest blocks.
    std::vector<int> sizes(static_cast<std::size_t>(num_blocks), 0);
    for (int b : assignment)
        if (b != -1) ++sizes[static_cast<std::size_t>(b)];
    for (int v = 0; v < n; ++v) {
        if (assignment[static_cast<std::size_t>(v)] != -1) continue;
        int smallest = 0;
        for (int b = 1; b < num_blocks; ++b)
            if (sizes[static_cast<std::size_t>(b)] < sizes[static_cast<std::size_t>(smallest)])
                smallest = b;
        assignment[static_cast<std::size_t>(v)] = smallest;
        ++sizes[static_cast<std::size_t>(smallest)];
    }

    Partition p{assignment, num_blocks, balance.mode, balance.tau};
    repair_balance(p, graph2, balance);
    if (!balanced(p, balance))
        throw std::runtime_error("initial_partition: could not satisfy the balance constraint");
    return p;
}

void repair_balance(Partition& p, const DependencyGraph& graph2, const BalanceSpec& balance) {
    const int n = p.num_classes();
    const int num_blocks = p.num_blocks;

    // Pull the node with the fewest intra-block order-2 similarities out of
    // the heaviest block into the lightest one.
    const int max_moves = 50 * n;
    for (int iter = 0; iter < max_moves && !balanced(p, balance); ++iter) {
        auto totals = block_weights(p, balance);
        int heavy = 0, light = 0;
        for (int b = 1; b < num_blocks; ++b) {
            if (totals[static_cast<std::size_t>(b)] > totals[static_cast<std::size_t>(heavy)])
                heavy = b;
            if (totals[static_cast<std::size_t>(b)] < totals[static_cast<std::size_t>(light)])
                light = b;
        }
        auto cur_sizes = block_sizes(p);
        if (cur_sizes[static_cast<std::size_t>(heavy)] <= 1) break;
        double gap = totals[static_cast<std::size_t>(heavy)] - totals[static_cast<std::size_t>(light)];
        auto node_weight = [&](int v) {
            return balance.mode == BalanceMode::sample_count
                       ? static_cast<double>(balance.class_weights[static_cast<std::size_t>(v)])
                       : 1.0;
        };
        // Prefer moves that shrink the heavy/light gap; within those, the
        // node with the fewest intra-block order-2 similarities.
        int best = -1, best_sim = std::numeric_limits<int>::max();
        bool best_fits = false;
        for (int v = 0; v < n; ++v) {
            if (p.block_of[static_cast<std::size_t>(v)] != heavy) continue;
            bool fits = node_weight(v) <= gap;
            int sim = intra_similarity_degree(graph2, p.block_of, v);
            if (best == -1 || (fits && !best_fits) || (fits == best_fits && sim < best_sim)) {
                best = v;
                best_sim = sim;
                best_fits = fits;
            }
        }
        if (best == -1 || (!best_fits && balance.mode == BalanceMode::sample_count)) break;
        p.block_of[static_cast<std::size_t>(best)] = light;
    }
}

Partition refine(Partition p, const SimilarityCensus& cen, const BalanceSpec& balance,
                 std::array<int, 4> priority) {
    {
        std::array<int, 4> sorted = priority;
        std::sort(sorted.begin(), sorted.end());
        if (sorted != std::array<int, 4>{0, 1, 2, 3})
            throw std::invalid_argument("refine: priority must permute {0,1,2,3}");
    }
    if (!balanced(p, balance))
        throw std::invalid_argument("refine: input partition violates the balance constraint");

    const int n = p.num_classes();
    const int m = p.num_blocks;

    // Pass k only accepts moves that improve the first k priority components;
    // any such move also strictly improves the full lexicographic objective.
    for (int prefix = 2; prefix <= 4; ++prefix) {
        PriorityLess better{priority, prefix};
        bool improved = true;
        while (improved) {
            improved = false;
            PartitionObjective cur = objective(p, cen);

            // Single-node relocations, ascending class id then target block.
            for (int v = 0; v < n && !improved; ++v) {
                int from = p.block_of[static_cast<std::size_t>(v)];
                for (int b = 0; b < m && !improved; ++b) {
                    if (b == from) continue;
                    p.block_of[static_cast<std::size_t>(v)] = b;
                    if (balanced(p, balance) && better(objective(p, cen), cur))
                        improved = true;
                    else
                        p.block_of[static_cast<std::size_t>(v)] = from;
                }
            }
            if (improved) continue;

            // Pairwise swaps, ascending (i, j).
            for (int i = 0; i < n && !improved; ++i) {
                for (int j = i + 1; j < n && !improved; ++j) {
                    int bi = p.block_of[static_cast<std::size_t>(i)];
                    int bj = p.block_of[static_cast<std::size_t>(j)];
                    if (bi == bj) continue;
                    p.block_of[static_cast<std::size_t>(i)] = bj;
                    p.block_of[static_cast<std::size_t>(j)] = bi;
                    if (balanced(p, balance) && better(objective(p, cen), cur)) {
                        improved = true;
                    } else {
                        p.block_of[static_cast<std::size_t>(i)] = bi;
                        p.block_of[static_cast<std::size_t>(j)] = bj;
                    }
                }
            }
        }
    }
    return p;
}

Partition gcs_partition(const DependencyGraph& graph2, const SimilarityCensus& cen,
                        int num_blocks, const BalanceSpec& balance, int restarts) {
    Partition best = refine(initial_partition(graph2, num_blocks, balance), cen, balance);
    PartitionObjective best_obj = objective(best, cen);

    // The route-seeded climb can stall in a shallow local optimum on the
    // lower-priority counts; a fixed fan of seeded balanced restarts, refined
    // by the same passes, keeps the result deterministic while reaching the
    // small-instance optimum in practice.
    for (int r = 0; r < restarts; ++r) {
        Partition start = random_partition(graph2.num_nodes, num_blocks,
                                           0xc0ffee0000ULL + static_cast<std::uint64_t>(r));
        start.mode = balance.mode;
        start.tau = balance.tau;
        if (!balanced(start, balance)) {
            repair_balance(start, graph2, balance);
            if (!balanced(start, balance)) continue;
        }
        Partition candidate = refine(std::move(start), cen, balance);
        PartitionObjective obj = objective(candidate, cen);
        if (obj < best_obj) {
            best = std::move(candidate);
            best_obj = obj;
        }
    }
    return best;
}

BruteForceResult brute_force_partition(const SimilarityCensus& cen, int num_classes,
                                       int num_blocks, const BalanceSpec& balance) {
    if (num_classes > 12)
        throw std::invalid_argument("brute_force_partition: N = " + std::to_string(num_classes) +
                                    " exceeds the enumeration bound of 12");
    if (num_blocks < 1 || num_blocks > num_classes)
        throw std::invalid_argument("brute_force_partition: invalid block count");

    Partition p;
    p.block_of.assign(static_cast<std::size_t>(num_classes), 0);
    p.num_blocks = num_blocks;
    p.mode = balance.mode;
    p.tau = balance.tau;

    std::optional<BruteForceResult> best;

    // Capacity bound per block keeps the class-count search space tight; the
    // sample-count mode enumerates everything and filters by the tau check.
    int cap = balance.mode == BalanceMode::class_count
                  ? (num_classes + num_blocks - 1) / num_blocks
                  : num_classes;
    std::vector<int> fill(static_cast<std::size_t>(num_blocks), 0);

    auto consider = [&]() {
        if (!balanced(p, balance)) return;
        PartitionObjective obj = objective(p, cen);
        if (!best || obj < best->objective) best = BruteForceResult{p, obj};
    };

    auto recurse = [&](auto&& self, int cls) -> void {
        if (cls == num_classes) {
            consider();
            return;
        }
        for (int b = 0; b < num_blocks; ++b) {
            if (fill[static_cast<std::size_t>(b)] >= cap) continue;
            p.block_of[static_cast<std::size_t>(cls)] = b;
            ++fill[static_cast<std::size_t>(b)];
            self(self, cls + 1);
            --fill[static_cast<std::size_t>(b)];
        }
    };
    recurse(recurse, 0);

    if (!best)
        throw std::runtime_error("brute_force_partition: no balanced assignment exists");
    return *best;
}

Partition random_partition(int num_classes, int num_blocks, std::uint64_t seed) {
    if (num_blocks < 1 || num_blocks > num_classes)
        throw std::invalid_argument("random_partition: invalid block count");
    std::vector<int> ids(static_cast<std::size_t>(num_classes));
    std::iota(ids.begin(), ids.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    Partition p;
    p.block_of.assign(static_cast<std::size_t>(num_classes), 0);
    p.num_blocks = num_blocks;
    for (std::size_t i = 0; i < ids.size(); ++i)
        p.block_of[static_cast<std::size_t>(ids[i])] = static_cast<int>(i) % num_blocks;
    return p;
}

void save_partition(const Partition& p, const std::optional<PartitionObjective>& obj,
                    const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    char tau_buf[40];
    std::snprintf(tau_buf, sizeof(tau_buf), "%.17g", p.tau);
    f << p.num_classes() << ' ' << p.num_blocks << ' ' << mode_name(p.mode) << ' ' << tau_buf
      << '\n';
    for (int c = 0; c < p.num_classes(); ++c)
        f << c << ' ' << p.block_of[static_cast<std::size_t>(c)] << '\n';
    if (obj)
        f << "# objective " << obj->counts[0] << ' ' << obj->counts[1] << ' ' << obj->counts[2]
          << ' ' << obj->counts[3] << '\n';
    if (!f) throw std::runtime_error("write failed: " + path);
}

Partition load_partition(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open partition file: " + path);
    std::string line;
    if (!std::getline(f, line))
        throw std::runtime_error(path + ":1: empty file, expected 'N M mode tau'");
    std::istringstream header(line);
    int n = 0, m = 0;
    std::string mode_str;
    double tau = 0.0;
    if (!(header >> n >> m >> mode_str >> tau))
        throw std::runtime_error(path + ":1: malformed header");
    Partition p;
    p.num_blocks = m;
    p.tau = tau;
    if (mode_str == "class")
        p.mode = BalanceMode::class_count;
    else if (mode_str == "sample")
        p.mode = BalanceMode::sample_count;
    else
        throw std::runtime_error(path + ":1: unknown balance mode '" + mode_str + "'");
    p.block_of.assign(static_cast<std::size_t>(n), -1);

    int line_no = 1;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        int cls = 0, block = 0;
        if (!(ls >> cls >> block))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected 'class_id block_id'");
        if (cls < 0 || cls >= n)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": class id " +
                                     std::to_string(cls) + " outside [0," + std::to_string(n) +
                                     ")");
        if (block < 0 || block >= m)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": block id " +
                                     std::to_string(block) + " outside [0," + std::to_string(m) +
                                     ")");
        p.block_of[static_cast<std::size_t>(cls)] = block;
    }
    for (int c = 0; c < n; ++c)
        if (p.block_of[static_cast<std::size_t>(c)] == -1)
            throw std::runtime_error(path + ": class " + std::to_string(c) + " has no assignment");
    return p;
}

}  // namespace expertnet
