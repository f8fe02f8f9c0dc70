#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "expertnet/dataset.hpp"
#include "expertnet/gating.hpp"
#include "expertnet/gcs.hpp"
#include "expertnet/mlp.hpp"

namespace expertnet {

enum class DivisionMode { gcs, random_division };

struct PipelineConfig {
    int num_blocks = 4;        // M
    int selection_width = 2;   // S
    int trunk_feature_dim = 32;
    int hidden = 64;           // first hidden layer of every trunk-shaped model
    TrainConfig baseline_cfg;
    TrainConfig expert_cfg;
    TrainConfig fam_cfg;
    TrainConfig head_cfg;
    bool fine_tune = false;
    bool cgc = true;  // off = unmasked concatenation of all expert features
    DivisionMode division = DivisionMode::gcs;
    BalanceMode balance = BalanceMode::sample_count;
    double tau = 2.0;
    std::uint64_t seed = 0;
};

void validate(const PipelineConfig& cfg);

/// Hidden sizes of a trunk-shaped classifier: [hidden, trunk_feature_dim].
std::vector<int> trunk_hidden_sizes(const PipelineConfig& cfg);

/// M expert trunks plus the super-class scorer and the fused head over the
/// masked concatenation of trunk features.
struct ExpertEnsemble {
    std::vector<Mlp> trunks;  // feature extractors (relu_stack semantics)
    SuperClassScorer fam;
    Mlp head;  // [M * F] -> N
    Partition partition;

    int num_blocks() const { return static_cast<int>(trunks.size()); }
    int feature_dim() const { return trunks.empty() ? 0 : trunks.front().output_dim(); }
};

/// Classes of one block, ascending; expert q's local label order.
std::vector<int> block_classes(const Partition& partition, int block);

/// Samples of one block with labels remapped to local ids; everything an
/// expert is allowed to see during pretraining.
LabeledDataset block_subset(const LabeledDataset& dataset, const Partition& partition, int block);

struct PretrainResult {
    std::vector<Mlp> trunks;
    /// Data-access log: per expert, how many samples of each global class it
    /// was trained on. All entries outside the expert's block are zero.
    std::vector<std::vector<std::size_t>> seen_label_counts;
};

/// Trains expert q as a classifier over block q's classes on block-q samples
/// only, then drops its classification head. Blocks need at least 2 classes.
PretrainResult pretrain_experts(const LabeledDataset& train, const Partition& partition,
                                const PipelineConfig& cfg);

GateMask gate_for(const ExpertEnsemble& ensemble, std::span<const double> features,
                  int selection_width, bool cgc);

/// Concatenated trunk features with masked blocks zeroed, length M * F.
std::vector<double> fused_features(const ExpertEnsemble& ensemble,
                                   std::span<const double> features, const GateMask& mask);

/// Trains the fused head with per-sample masks recomputed from the FAM;
/// trunks and FAM stay frozen. Returns the per-epoch loss trace.
std::vector<double> train_head(ExpertEnsemble& ensemble, const LabeledDataset& train,
                               const TrainConfig& cfg, int selection_width, bool cgc);

/// Joint trunk+head pass (FAM frozen, masks recomputed per sample). Masked
/// trunks receive exactly zero gradient.
std::vector<double> fine_tune(ExpertEnsemble& ensemble, const LabeledDataset& train,
                              const TrainConfig& cfg, int selection_width, bool cgc);

std::vector<double> predict(const ExpertEnsemble& ensemble, std::span<const double> features,
                            int selection_width, bool cgc = true);

class EnsembleScorer : public Scorer {
public:
    EnsembleScorer(const ExpertEnsemble& ensemble, int selection_width, bool cgc = true)
        : ensemble_(ensemble), selection_width_(selection_width), cgc_(cgc) {}
    std::vector<double> score(std::span<const double> features) const override {
        return predict(ensemble_, features, selection_width_, cgc_);
    }
    int num_classes() const override { return ensemble_.head.output_dim(); }

private:
    const ExpertEnsemble& ensemble_;
    int selection_width_;
    bool cgc_;
};

struct ManifestEntry {
    std::string stage;
    std::string artifact;  // path relative to the run directory
    std::string digest;
};

struct RunManifest {
    std::vector<ManifestEntry> entries;
    std::string division;
    std::uint64_t seed = 0;
    double map = 0.0;
    std::string config_echo;
    std::string out_env_override;  // "none" unless the env override was used
};

void save_manifest(const RunManifest& manifest, const std::string& path);

/// Thrown when a pipeline stage fails; artifacts written by earlier stages
/// are left in place.
struct StageError : std::runtime_error {
    std::string stage;
    StageError(std::string stage_name, const std::string& what)
        : std::runtime_error("stage " + stage_name + ": " + what), stage(std::move(stage_name)) {}
};

/// Full run: baseline -> deps -> partition -> experts -> fam -> head -> eval.
/// Writes every artifact plus manifest.txt under out_dir.
RunManifest run_all(const PipelineConfig& cfg, const std::string& train_path,
                    const std::string& test_path, const std::string& out_dir,
                    const std::string& config_echo = "", const std::string& env_override = "none");

}  // namespace expertnet
