#include "expertnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

#include "expertnet/digest.hpp"
#include "expertnet/metrics.hpp"
#include "expertnet/seeds.hpp"

namespace expertnet {

namespace {

struct Momentum {
    Gradients head;
    std::vector<Gradients> trunks;
};

void apply_update(Mlp& model, const Gradients& grads, Gradients& velocity,
                  const TrainConfig& cfg) {
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        for (std::size_t i = 0; i < model.weights[l].size(); ++i) {
            double g = grads.weights[l][i] + cfg.weight_decay * model.weights[l][i];
            velocity.weights[l][i] = cfg.momentum * velocity.weights[l][i] - cfg.learning_rate * g;
            model.weights[l][i] += velocity.weights[l][i];
        }
        for (std::size_t i = 0; i < model.biases[l].size(); ++i) {
            velocity.biases[l][i] =
                cfg.momentum * velocity.biases[l][i] - cfg.learning_rate * grads.biases[l][i];
            model.biases[l][i] += velocity.biases[l][i];
        }
    }
}

}  // namespace

void validate(const PipelineConfig& cfg) {
    if (cfg.num_blocks < 2) throw std::invalid_argument("PipelineConfig: M must be >= 2");
    if (cfg.selection_width < 1 || cfg.selection_width > cfg.num_blocks)
        throw std::invalid_argument("PipelineConfig: S must be in [1, M]");
    if (cfg.trunk_feature_dim < 1)
        throw std::invalid_argument("PipelineConfig: trunk feature dim must be >= 1");
    if (cfg.hidden < 1) throw std::invalid_argument("PipelineConfig: hidden size must be >= 1");
    if (!(cfg.tau >= 1.0)) throw std::invalid_argument("PipelineConfig: tau must be >= 1");
    validate(cfg.baseline_cfg);
    validate(cfg.expert_cfg);
    validate(cfg.fam_cfg);
    validate(cfg.head_cfg);
}

std::vector<int> trunk_hidden_sizes(const PipelineConfig& cfg) {
    return {cfg.hidden, cfg.trunk_feature_dim};
}

std::vector<int> block_classes(const Partition& partition, int block) {
    std::vector<int> classes;
    for (int c = 0; c < partition.num_classes(); ++c)
        if (partition.block_of[static_cast<std::size_t>(c)] == block) classes.push_back(c);
    return classes;
}

LabeledDataset block_subset(const LabeledDataset& dataset, const Partition& partition, int block) {
    auto classes = block_classes(partition, block);
    std::vector<int> local(static_cast<std::size_t>(partition.num_classes()), -1);
    for (std::size_t i = 0; i < classes.size(); ++i)
        local[static_cast<std::size_t>(classes[i])] = static_cast<int>(i);

    LabeledDataset subset{{}, static_cast<int>(classes.size()), dataset.feature_dim, dataset.split};
    for (const auto& s : dataset.samples) {
        int lid = local[static_cast<std::size_t>(s.label)];
        if (lid == -1) continue;
        Sample copy = s;
        copy.label = lid;
        subset.samples.push_back(std::move(copy));
    }
    return subset;
}

PretrainResult pretrain_experts(const LabeledDataset& train_ds, const Partition& partition,
                                const PipelineConfig& cfg) {
    validate(cfg);
    if (partition.num_blocks != cfg.num_blocks)
        throw std::invalid_argument("pretrain_experts: partition has " +
                                    std::to_string(partition.num_blocks) + " blocks, config " +
                                    std::to_string(cfg.num_blocks));
    PretrainResult result;
    for (int q = 0; q < partition.num_blocks; ++q) {
        auto classes = block_classes(partition, q);
        if (classes.size() < 2)
            throw std::invalid_argument("pretrain_experts: block " + std::to_string(q) + " has " +
                                        std::to_string(classes.size()) +
                                        " classes, experts need at least 2");
        LabeledDataset subset = block_subset(train_ds, partition, q);
        if (subset.samples.empty())
            throw std::invalid_argument("pretrain_experts: block " + std::to_string(q) +
                                        " has no train samples");

        std::vector<std::size_t> seen(static_cast<std::size_t>(train_ds.num_classes), 0);
        for (const auto& s : subset.samples)
            ++seen[static_cast<std::size_t>(classes[static_cast<std::size_t>(s.label)])];
        result.seen_label_counts.push_back(std::move(seen));

        std::vector<int> sizes{train_ds.feature_dim, cfg.hidden, cfg.trunk_feature_dim,
                               static_cast<int>(classes.size())};
        TrainConfig expert_cfg = cfg.expert_cfg;
        expert_cfg.seed = mix_seed(cfg.expert_cfg.seed, static_cast<std::uint64_t>(q));
        auto trained = train(make_mlp(sizes, expert_cfg.seed), subset, expert_cfg);
        result.trunks.push_back(drop_head(trained.model));
    }
    return result;
}

GateMask gate_for(const ExpertEnsemble& ensemble, std::span<const double> features,
                  int selection_width, bool cgc) {
    if (!cgc) {
        GateMask all;
        all.selection_width = ensemble.num_blocks();
        all.bits.assign(static_cast<std::size_t>(ensemble.num_blocks()), 1);
        return all;
    }
    auto probs = ensemble.fam.score(features);
    return mask_direct(probs, selection_width);
}

std::vector<double> fused_features(const ExpertEnsemble& ensemble,
                                   std::span<const double> features, const GateMask& mask) {
    if (mask.width() != ensemble.num_blocks())
        throw std::invalid_argument("fused_features: mask width " + std::to_string(mask.width()) +
                                    ", ensemble has " + std::to_string(ensemble.num_blocks()) +
                                    " blocks");
    const int f = ensemble.feature_dim();
    std::vector<double> fused(static_cast<std::size_t>(mask.width() * f), 0.0);
    for (int q = 0; q < mask.width(); ++q) {
        if (!mask.bits[static_cast<std::size_t>(q)]) continue;
        auto block = relu_stack(ensemble.trunks[static_cast<std::size_t>(q)], features);
        std::copy(block.begin(), block.end(), fused.begin() + q * f);
    }
    return fused;
}

namespace {

double head_pass(ExpertEnsemble& ensemble, const LabeledDataset& train, const TrainConfig& cfg,
                 int selection_width, bool cgc, bool update_trunks,
                 std::vector<double>& loss_trace) {
    validate(cfg);
    if (train.samples.empty()) throw std::invalid_argument("train_head: empty dataset");

    Momentum velocity;
    velocity.head = zero_gradients(ensemble.head);
    if (update_trunks)
        for (const auto& t : ensemble.trunks) velocity.trunks.push_back(zero_gradients(t));

    std::vector<std::size_t> order(train.samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed);
    const int f = ensemble.feature_dim();
    const int m = ensemble.num_blocks();

    double last_epoch_loss = 0.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            double inv = 1.0 / static_cast<double>(end - start);

            Gradients head_grads = zero_gradients(ensemble.head);
            std::vector<Gradients> trunk_grads;
            if (update_trunks)
                for (const auto& t : ensemble.trunks) trunk_grads.push_back(zero_gradients(t));

            for (std::size_t i = start; i < end; ++i) {
                const Sample& s = train.samples[order[i]];
                GateMask mask = gate_for(ensemble, s.features, selection_width, cgc);

                std::vector<LayerCache> trunk_caches;
                std::vector<double> fused(static_cast<std::size_t>(m * f), 0.0);
                for (int q = 0; q < m; ++q) {
                    if (!mask.bits[static_cast<std::size_t>(q)]) {
                        trunk_caches.emplace_back();
                        continue;
                    }
                    auto cache = forward_cache(ensemble.trunks[static_cast<std::size_t>(q)],
                                               s.features, true);
                    const auto& out = cache.post.back();
                    std::copy(out.begin(), out.end(), fused.begin() + q * f);
                    trunk_caches.push_back(std::move(cache));
                }

                auto head_cache = forward_cache(ensemble.head, fused, false);
                auto probs = softmax(head_cache.post.back());
                epoch_loss += -std::log(
                    std::max(probs[static_cast<std::size_t>(s.label)], 1e-12));

                std::vector<double> delta = probs;
                delta[static_cast<std::size_t>(s.label)] -= 1.0;
                for (auto& x : delta) x *= inv;
                auto fused_grad = backward(ensemble.head, head_cache, delta, false, head_grads);

                if (update_trunks) {
                    // Masked blocks contribute zero features, so they get
                    // exactly zero gradient: skip them.
                    for (int q = 0; q < m; ++q) {
                        if (!mask.bits[static_cast<std::size_t>(q)]) continue;
                        std::span<const double> seg(fused_grad.data() + q * f,
                                                    static_cast<std::size_t>(f));
                        backward(ensemble.trunks[static_cast<std::size_t>(q)],
                                 trunk_caches[static_cast<std::size_t>(q)], seg, true,
                                 trunk_grads[static_cast<std::size_t>(q)]);
                    }
                }
            }

            apply_update(ensemble.head, head_grads, velocity.head, cfg);
            if (update_trunks)
                for (int q = 0; q < m; ++q)
                    apply_update(ensemble.trunks[static_cast<std::size_t>(q)],
                                 trunk_grads[static_cast<std::size_t>(q)],
                                 velocity.trunks[static_cast<std::size_t>(q)], cfg);
        }
        last_epoch_loss = epoch_loss / static_cast<double>(order.size());
        if (!std::isfinite(last_epoch_loss))
            throw std::runtime_error("train_head: loss diverged (non-finite) at epoch " +
                                     std::to_string(epoch));
        loss_trace.push_back(last_epoch_loss);
    }
    return last_epoch_loss;
}

}  // namespace

std::vector<double> train_head(ExpertEnsemble& ensemble, const LabeledDataset& train,
                               const TrainConfig& cfg, int selection_width, bool cgc) {
    std::vector<double> trace;
    head_pass(ensemble, train, cfg, selection_width, cgc, false, trace);
    return trace;
}

std::vector<double> fine_tune(ExpertEnsemble& ensemble, const LabeledDataset& train,
                              const TrainConfig& cfg, int selection_width, bool cgc) {
    std::vector<double> trace;
    head_pass(ensemble, train, cfg, selection_width, cgc, true, trace);
    return trace;
}

std::vector<double> predict(const ExpertEnsemble& ensemble, std::span<const double> features,
                            int selection_width, bool cgc) {
    GateMask mask = gate_for(ensemble, features, selection_width, cgc);
    auto fused = fused_features(ensemble, features, mask);
    return forward(ensemble.head, fused).probs;
}

void save_manifest(const RunManifest& manifest, const std::string& path) {
    std::string out = "manifest 1\n";
    out += "division " + manifest.division + "\n";
    out += "seed " + std::to_string(manifest.seed) + "\n";
    out += "out_env_override " + manifest.out_env_override + "\n";
    out += "config_digest " + fnv1a_hex(manifest.config_echo) + "\n";
    for (const auto& e : manifest.entries)
        out += "stage " + e.stage + " " + e.artifact + " " + e.digest + "\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "mAP %.17g\n", manifest.map);
    out += buf;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f << out;
    if (!f) throw std::runtime_error("write failed: " + path);
}

RunManifest run_all(const PipelineConfig& cfg, const std::string& train_path,
                    const std::string& test_path, const std::string& out_dir,
                    const std::string& config_echo, const std::string& env_override) {
    validate(cfg);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    RunManifest manifest;
    manifest.division = cfg.division == DivisionMode::gcs ? "gcs" : "random";
    manifest.seed = cfg.seed;
    manifest.config_echo = config_echo;
    manifest.out_env_override = env_override;

    auto add_artifact = [&](const std::string& stage, const std::string& name) {
        manifest.entries.push_back({stage, name, file_digest(out_dir + "/" + name)});
    };
    auto stage_guard = [](const std::string& stage, auto&& fn) {
        try {
            fn();
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(stage, e.what());
        }
    };

    LabeledDataset train_ds, test_ds;
    stage_guard("baseline", [&] {
        train_ds = load(train_path);
        test_ds = load(test_path);
    });
    const int n = train_ds.num_classes;

    // 1. Flat baseline over all N classes; also the dependency scorer.
    Mlp baseline;
    stage_guard("baseline", [&] {
        std::vector<int> sizes{train_ds.feature_dim, cfg.hidden, cfg.trunk_feature_dim, n};
        auto trained = train(make_mlp(sizes, cfg.baseline_cfg.seed), train_ds, cfg.baseline_cfg);
        baseline = std::move(trained.model);
        save_mlp(baseline, out_dir + "/baseline.mlp");
        add_artifact("baseline", "baseline.mlp");
    });

    // 2. Dependency sets from the baseline's per-sample rankings.
    DependencySets deps;
    stage_guard("deps", [&] {
        MlpScorer scorer(baseline);
        deps = compute_dependencies(scorer, train_ds);
        save_dependencies(deps, out_dir + "/deps.txt");
        add_artifact("deps", "deps.txt");
    });

    // 3. Super-class division.
    Partition partition;
    stage_guard("partition", [&] {
        BalanceSpec balance{cfg.balance, cfg.tau, class_counts(train_ds)};
        if (cfg.division == DivisionMode::gcs) {
            partition = gcs_partition(build_graph(deps, 2), census(deps), cfg.num_blocks, balance);
        } else {
            partition = random_partition(n, cfg.num_blocks, mix_seed(cfg.seed, 0x7a));
            partition.mode = cfg.balance;
            partition.tau = cfg.tau;
        }
        save_partition(partition, objective(partition, census(deps)), out_dir + "/partition.txt");
        add_artifact("partition", "partition.txt");
    });

    // 4. Expert pretraining on block subsets.
    PretrainResult experts;
    stage_guard("experts", [&] {
        experts = pretrain_experts(train_ds, partition, cfg);
        for (int q = 0; q < cfg.num_blocks; ++q) {
            std::string name = "expert_" + std::to_string(q) + ".mlp";
            save_mlp(experts.trunks[static_cast<std::size_t>(q)], out_dir + "/" + name);
            add_artifact("experts", name);
        }
    });

    // 5. Super-class scorer.
    ExpertEnsemble ensemble;
    ensemble.trunks = std::move(experts.trunks);
    ensemble.partition = partition;
    stage_guard("fam", [&] {
        ensemble.fam = train_fam(train_ds, partition, cfg.fam_cfg, trunk_hidden_sizes(cfg));
        save_mlp(ensemble.fam.model, out_dir + "/fam.mlp");
        add_artifact("fam", "fam.mlp");
    });

    // 6. Fused head (optionally followed by the joint fine-tune pass).
    stage_guard("head", [&] {
        ensemble.head = make_mlp({cfg.num_blocks * cfg.trunk_feature_dim, n},
                                 mix_seed(cfg.head_cfg.seed, 0x68));
        train_head(ensemble, train_ds, cfg.head_cfg, cfg.selection_width, cfg.cgc);
        if (cfg.fine_tune) {
            fine_tune(ensemble, train_ds, cfg.head_cfg, cfg.selection_width, cfg.cgc);
            for (int q = 0; q < cfg.num_blocks; ++q) {
                std::string name = "expert_" + std::to_string(q) + "_finetuned.mlp";
                save_mlp(ensemble.trunks[static_cast<std::size_t>(q)], out_dir + "/" + name);
                add_artifact("head", name);
            }
        }
        save_mlp(ensemble.head, out_dir + "/head.mlp");
        add_artifact("head", "head.mlp");
    });

    // 7. Evaluation on the test split.
    stage_guard("eval", [&] {
        EnsembleScorer scorer(ensemble, cfg.selection_width, cfg.cgc);
        EvalReport report = map_report(scorer, test_ds, class_counts(train_ds));
        report.config_echo = config_echo;
        save_metrics(report, out_dir + "/metrics.txt");
        add_artifact("eval", "metrics.txt");
        manifest.map = report.map;
    });

    save_manifest(manifest, out_dir + "/manifest.txt");
    return manifest;
}

}  // namespace expertnet
