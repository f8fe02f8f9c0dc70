#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "expertnet/dataset.hpp"
#include "expertnet/pipeline.hpp"

namespace expertnet {

/// Everything a run needs, parsed from a sectioned key-value config file.
/// Unknown sections or keys are rejected by name. Stage seeds left unset are
/// derived deterministically from the master seed.
struct RunConfig {
    GeneratorSpec gen;    // [dataset]
    PipelineConfig pipe;  // [pipeline] + [baseline]/[expert]/[fam]/[head]
    std::uint64_t master_seed = 0;
    std::string out_dir = "out";
    std::string train_path;  // defaults to <out>/train.txt
    std::string test_path;   // defaults to <out>/test.txt
    bool eval_pair_errors = false;
    std::vector<int> ablate_m{3, 4, 5};
    std::vector<int> ablate_s{1, 2, 3};
    std::vector<std::uint64_t> ablate_seeds{1, 2, 3};

    // Which seeds and paths were written explicitly (survive overrides of the
    // master seed or output directory).
    bool explicit_gen_seed = false;
    bool explicit_baseline_seed = false;
    bool explicit_expert_seed = false;
    bool explicit_fam_seed = false;
    bool explicit_head_seed = false;
    bool explicit_train_path = false;
    bool explicit_test_path = false;
};

RunConfig parse_config_file(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");

/// Re-derives unset stage seeds from the master seed and fills defaulted
/// paths. Called by parse_*; call again after overriding master_seed.
void finalize_seeds_and_paths(RunConfig& cfg);

/// Canonical text form: every effective key in a fixed order. Identical
/// configs echo identically; the echo digests into the run manifest.
std::string canonical_echo(const RunConfig& cfg);

}  // namespace expertnet
