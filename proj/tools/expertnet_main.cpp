// Command-line front end: every pipeline stage as its own subcommand, plus
// run-all and the ablation grid. Stage artifacts are plain files so any stage
// can be rerun or swapped out by hand.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "expertnet/config.hpp"
#include "expertnet/dataset.hpp"
#include "expertnet/dependency.hpp"
#include "expertnet/digest.hpp"
#include "expertnet/gating.hpp"
#include "expertnet/gcs.hpp"
#include "expertnet/metrics.hpp"
#include "expertnet/mlp.hpp"
#include "expertnet/pipeline.hpp"
#include "expertnet/seeds.hpp"

namespace fs = std::filesystem;
using namespace expertnet;

namespace {

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> division;
    std::optional<int> m;
    std::optional<int> s;
    std::optional<std::string> cgc;
};

struct CliState {
    std::string config_path;
    Overrides over;
    std::string pr_curves_path;  // eval only
    std::string env_override = "none";
};

RunConfig effective_config(const CliState& state) {
    RunConfig cfg = parse_config_file(state.config_path);
    if (state.over.seed) {
        cfg.master_seed = *state.over.seed;
        finalize_seeds_and_paths(cfg);
    }
    if (state.over.out) {
        cfg.out_dir = *state.over.out;
        finalize_seeds_and_paths(cfg);
    }
    if (state.over.division)
        cfg.pipe.division =
            *state.over.division == "gcs" ? DivisionMode::gcs : DivisionMode::random_division;
    if (state.over.m) cfg.pipe.num_blocks = *state.over.m;
    if (state.over.s) cfg.pipe.selection_width = *state.over.s;
    if (state.over.cgc) cfg.pipe.cgc = *state.over.cgc == "on";
    validate(cfg.pipe);
    return cfg;
}

BalanceSpec balance_for(const RunConfig& cfg, const LabeledDataset& train_ds) {
    return BalanceSpec{cfg.pipe.balance, cfg.pipe.tau, class_counts(train_ds)};
}

std::string artifact(const RunConfig& cfg, const std::string& name) {
    return cfg.out_dir + "/" + name;
}

LabeledDataset load_train(const RunConfig& cfg) { return load(cfg.train_path); }

ExpertEnsemble load_ensemble(const RunConfig& cfg, int num_classes) {
    ExpertEnsemble ensemble;
    ensemble.partition = load_partition(artifact(cfg, "partition.txt"));
    for (int q = 0; q < cfg.pipe.num_blocks; ++q) {
        std::string fine = artifact(cfg, "expert_" + std::to_string(q) + "_finetuned.mlp");
        std::string base = artifact(cfg, "expert_" + std::to_string(q) + ".mlp");
        ensemble.trunks.push_back(load_mlp(cfg.pipe.fine_tune && fs::exists(fine) ? fine : base));
    }
    ensemble.fam = SuperClassScorer{load_mlp(artifact(cfg, "fam.mlp"))};
    ensemble.head = load_mlp(artifact(cfg, "head.mlp"));
    if (ensemble.head.output_dim() != num_classes)
        throw std::runtime_error("head.mlp covers " + std::to_string(ensemble.head.output_dim()) +
                                 " classes, dataset has " + std::to_string(num_classes));
    return ensemble;
}

int cmd_gen(const CliState& state) {
    RunConfig cfg = effective_config(state);
    auto [train_ds, test_ds] = generate(cfg.gen);
    fs::create_directories(fs::path(cfg.train_path).parent_path().empty()
                               ? "."
                               : fs::path(cfg.train_path).parent_path().string());
    fs::create_directories(fs::path(cfg.test_path).parent_path().empty()
                               ? "."
                               : fs::path(cfg.test_path).parent_path().string());
    save(train_ds, cfg.train_path);
    save(test_ds, cfg.test_path);
    std::printf("gen: wrote %s (%zu samples) and %s (%zu samples)\n", cfg.train_path.c_str(),
                train_ds.samples.size(), cfg.test_path.c_str(), test_ds.samples.size());
    return 0;
}

int cmd_train_baseline(const CliState& state) {
    RunConfig cfg = effective_config(state);
    LabeledDataset train_ds = load_train(cfg);
    std::vector<int> sizes{train_ds.feature_dim, cfg.pipe.hidden, cfg.pipe.trunk_feature_dim,
                           train_ds.num_classes};
    auto result = train(make_mlp(sizes, cfg.pipe.baseline_cfg.seed), train_ds,
                        cfg.pipe.baseline_cfg);
    fs::create_directories(cfg.out_dir);
    save_mlp(result.model, artifact(cfg, "baseline.mlp"));
    std::printf("train-baseline: wrote %s (final loss %.6f)\n",
                artifact(cfg, "baseline.mlp").c_str(),
                result.loss_trace.empty() ? 0.0 : result.loss_trace.back());
    return 0;
}

int cmd_deps(const CliState& state) {
    RunConfig cfg = effective_config(state);
    LabeledDataset train_ds = load_train(cfg);
    MlpScorer scorer(load_mlp(artifact(cfg, "baseline.mlp")));
    DependencySets deps = compute_dependencies(scorer, train_ds);
    save_dependencies(deps, artifact(cfg, "deps.txt"));
    std::printf("deps: wrote %s (%d classes)\n", artifact(cfg, "deps.txt").c_str(),
                deps.num_classes());
    return 0;
}

int cmd_partition(const CliState& state) {
    RunConfig cfg = effective_config(state);
    LabeledDataset train_ds = load_train(cfg);
    BalanceSpec balance = balance_for(cfg, train_ds);
    Partition partition;
    std::optional<PartitionObjective> obj;
    if (cfg.pipe.division == DivisionMode::gcs) {
        DependencySets deps = load_dependencies(artifact(cfg, "deps.txt"));
        auto cen = census(deps);
        partition = gcs_partition(build_graph(deps, 2), cen, cfg.pipe.num_blocks, balance);
        obj = objective(partition, cen);
    } else {
        partition = random_partition(train_ds.num_classes, cfg.pipe.num_blocks,
                                     mix_seed(cfg.master_seed, 0x7a));
        partition.mode = cfg.pipe.balance;
        partition.tau = cfg.pipe.tau;
        if (fs::exists(artifact(cfg, "deps.txt")))
            obj = objective(partition, census(load_dependencies(artifact(cfg, "deps.txt"))));
    }
    fs::create_directories(cfg.out_dir);
    save_partition(partition, obj, artifact(cfg, "partition.txt"));
    std::printf("partition: wrote %s (division %s, M=%d)\n",
                artifact(cfg, "partition.txt").c_str(),
                cfg.pipe.division == DivisionMode::gcs ? "gcs" : "random", cfg.pipe.num_blocks);
    return 0;
}

int cmd_train_experts(const CliState& state) {
    RunConfig cfg = effective_config(state);
    LabeledDataset train_ds = load_train(cfg);
    Partition partition = load_partition(artifact(cfg, "partition.txt"));
    PretrainResult experts = pretrain_experts(train_ds, partition, cfg.pipe);
    for (int q = 0; q < partition.num_blocks; ++q)
        save_mlp(experts.trunks[static_cast<std::size_t>(q)],
                 artifact(cfg, "expert_" + std::to_string(q) + ".mlp"));
    std::printf("train-experts: wrote %d expert trunks under %s\n", partition.num_blocks,
                cfg.out_dir.c_str());
    return 0;
}

int cmd_train_fam(const CliState& state) {
    RunConfig cfg = effective_config(state);
    LabeledDataset train_ds = load_train(cfg);
    Partition partition = load_partition(artifact(cfg, "partition.txt"));
    SuperClassScorer fam =
        train_fam(train_ds, partition, cfg.pipe.fam_cfg, trunk_hidden_sizes(cfg.pipe));
    save_mlp(fam.model, artifact(cfg, "fam.mlp"));
    std::printf("train-fam: wrote %s (%d super-classes)\n", artifact(cfg, "fam.mlp").c_str(),
                partition.num_blocks);
    return 0;
}

int cmd_train_head(const CliState& state) {
    RunConfig cfg = effective_config(state);
    LabeledDataset train_ds = load_train(cfg);
    ExpertEnsemble ensemble;
    ensemble.partition = load_partition(artifact(cfg, "partition.txt"));
    for (int q = 0; q < cfg.pipe.num_blocks; ++q)
        ensemble.trunks.push_back(load_mlp(artifact(cfg, "expert_" + std::to_string(q) + ".mlp")));
    ensemble.fam = SuperClassScorer{load_mlp(artifact(cfg, "fam.mlp"))};
    ensemble.head =
        make_mlp({cfg.pipe.num_blocks * cfg.pipe.trunk_feature_dim, train_ds.num_classes},
                 mix_seed(cfg.pipe.head_cfg.seed, 0x68));
    train_head(ensemble, train_ds, cfg.pipe.head_cfg, cfg.pipe.selection_width, cfg.pipe.cgc);
    if (cfg.pipe.fine_tune) {
        fine_tune(ensemble, train_ds, cfg.pipe.head_cfg, cfg.pipe.selection_width, cfg.pipe.cgc);
        for (int q = 0; q < cfg.pipe.num_blocks; ++q)
            save_mlp(ensemble.trunks[static_cast<std::size_t>(q)],
                     artifact(cfg, "expert_" + std::to_string(q) + "_finetuned.mlp"));
    }
    save_mlp(ensemble.head, artifact(cfg, "head.mlp"));
    std::printf("train-head: wrote %s\n", artifact(cfg, "head.mlp").c_str());
    return 0;
}

int cmd_eval(const CliState& state) {
    RunConfig cfg = effective_config(state);
    LabeledDataset train_ds = load_train(cfg);
    LabeledDataset test_ds = load(cfg.test_path);
    ExpertEnsemble ensemble = load_ensemble(cfg, test_ds.num_classes);
    EnsembleScorer scorer(ensemble, cfg.pipe.selection_width, cfg.pipe.cgc);
    EvalReport report = map_report(scorer, test_ds, class_counts(train_ds));
    report.config_echo = canonical_echo(cfg);
    if (cfg.eval_pair_errors) {
        DependencySets deps = load_dependencies(artifact(cfg, "deps.txt"));
        report.e_table = similarity_error_table(census(deps), train_ds, cfg.pipe.baseline_cfg,
                                                cfg.master_seed);
    }
    save_metrics(report, artifact(cfg, "metrics.txt"));
    if (!state.pr_curves_path.empty()) save_pr_curves(scorer, test_ds, state.pr_curves_path);
    std::printf("eval: wrote %s (mAP %.6f, accuracy %.6f)\n", artifact(cfg, "metrics.txt").c_str(),
                report.map, report.accuracy);
    return 0;
}

int cmd_run_all(const CliState& state) {
    RunConfig cfg = effective_config(state);
    RunManifest manifest = run_all(cfg.pipe, cfg.train_path, cfg.test_path, cfg.out_dir,
                                   canonical_echo(cfg), state.env_override);
    std::printf("run-all: wrote %s/manifest.txt (mAP %.6f)\n", cfg.out_dir.c_str(), manifest.map);
    return 0;
}

int cmd_ablate(const CliState& state) {
    RunConfig base = effective_config(state);
    fs::create_directories(base.out_dir + "/ablate");

    struct Cell {
        int m;
        int s;
        bool cgc;
        double map_sum = 0.0;
    };
    std::vector<Cell> cells;
    for (int m : base.ablate_m) {
        for (int s : base.ablate_s)
            if (s <= m) cells.push_back({m, s, true});
        cells.push_back({m, m, false});  // unmasked concatenation row
    }

    for (std::uint64_t seed : base.ablate_seeds) {
        RunConfig cfg = base;
        cfg.master_seed = seed;
        finalize_seeds_and_paths(cfg);
        std::string seed_dir = base.out_dir + "/ablate/seed" + std::to_string(seed);
        fs::create_directories(seed_dir);
        cfg.train_path = seed_dir + "/train.txt";
        cfg.test_path = seed_dir + "/test.txt";
        auto [train_ds, test_ds] = generate(cfg.gen);
        save(train_ds, cfg.train_path);
        save(test_ds, cfg.test_path);

        for (auto& cell : cells) {
            PipelineConfig pipe = cfg.pipe;
            pipe.num_blocks = cell.m;
            pipe.selection_width = cell.s;
            pipe.cgc = cell.cgc;
            pipe.seed = seed;
            std::string cell_dir = seed_dir + "/M" + std::to_string(cell.m) + "_S" +
                                   std::to_string(cell.s) + (cell.cgc ? "" : "_nocgc");
            RunManifest manifest =
                run_all(pipe, cfg.train_path, cfg.test_path, cell_dir, canonical_echo(cfg),
                        state.env_override);
            cell.map_sum += manifest.map;
        }
    }

    std::string report_path = base.out_dir + "/ablate/report.txt";
    std::string out = "# ablation grid: mean mAP over " +
                      std::to_string(base.ablate_seeds.size()) + " seeds\nM S cgc mAP\n";
    char buf[96];
    for (const auto& cell : cells) {
        std::snprintf(buf, sizeof(buf), "%d %d %s %.6f\n", cell.m, cell.s,
                      cell.cgc ? "on" : "off",
                      cell.map_sum / static_cast<double>(base.ablate_seeds.size()));
        out += buf;
    }
    std::ofstream f(report_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + report_path);
    f << out;
    std::printf("ablate: wrote %s (%zu cells x %zu seeds)\n", report_path.c_str(), cells.size(),
                base.ablate_seeds.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-phase multi-expert classifier with graph-based super-class selection"};
    app.require_subcommand(1);

    CliState state;
    if (const char* env_out = std::getenv("EXPERTNET_OUT")) {
        state.over.out = std::string(env_out);
        state.env_override = env_out;
    }

    struct SubCmd {
        const char* name;
        const char* help;
        int (*fn)(const CliState&);
    };
    const SubCmd commands[] = {
        {"gen", "generate the synthetic dataset", cmd_gen},
        {"train-baseline", "train the flat baseline classifier", cmd_train_baseline},
        {"deps", "compute dependency sets from the baseline", cmd_deps},
        {"partition", "divide classes into super-classes", cmd_partition},
        {"train-experts", "pretrain one expert per super-class", cmd_train_experts},
        {"train-fam", "train the super-class scorer", cmd_train_fam},
        {"train-head", "train the fused classification head", cmd_train_head},
        {"eval", "evaluate and write the metrics file", cmd_eval},
        {"run-all", "run every stage and write the manifest", cmd_run_all},
        {"ablate", "run the M x S grid with shared seeds", cmd_ablate},
    };

    int (*selected)(const CliState&) = nullptr;
    std::string selected_name;
    for (const auto& cmd : commands) {
        CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("--config", state.config_path, "run configuration file")->required();
        sub->add_option("--seed", state.over.seed, "override the master seed");
        sub->add_option("--out", state.over.out, "override the output directory");
        sub->add_option("--division", state.over.division, "super-class division method")
            ->check(CLI::IsMember({"gcs", "random"}));
        sub->add_option("--M", state.over.m, "override the number of super-classes");
        sub->add_option("--S", state.over.s, "override the gate selection width");
        sub->add_option("--cgc", state.over.cgc, "gating on, or off for plain concatenation")
            ->check(CLI::IsMember({"on", "off"}));
        if (std::string(cmd.name) == "eval")
            sub->add_option("--pr-curves", state.pr_curves_path,
                            "also write per-class recall/precision points to this file");
        sub->callback([&selected, &selected_name, &cmd] {
            selected = cmd.fn;
            selected_name = cmd.name;
        });
    }

    CLI11_PARSE(app, argc, argv);

    try {
        return selected(state);
    } catch (const StageError& e) {
        std::fprintf(stderr, "expertnet %s: %s\n", selected_name.c_str(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "expertnet %s: %s\n", selected_name.c_str(), e.what());
        return 1;
    }
}
