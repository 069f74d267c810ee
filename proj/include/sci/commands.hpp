#pragma once

#include <filesystem>
#include <iosfwd>

#include "sci/pipeline.hpp"

namespace sci {

/// `gen`: write the synthetic dataset (manifest + blob) into cfg.out_dir.
/// Refuses to overwrite an existing dataset unless force is set.
void cmd_gen(RunConfig cfg, bool force, std::ostream& out);

/// `train`: stage 1 then stage 2; writes checkpoint.bin and train_log.jsonl.
void cmd_train(RunConfig cfg, bool force, std::ostream& out);

/// `eval`: load a checkpoint, embed query+gallery, evaluate the requested
/// protocols, write metrics.jsonl. dataset_dir may be empty when the
/// checkpoint's config describes the dataset.
void cmd_eval(const std::filesystem::path& checkpoint_path,
              const std::filesystem::path& dataset_dir,
              const std::vector<Protocol>& protocols, int k_max,
              const std::filesystem::path& out_dir, bool force, std::ostream& out);

struct AblationRow {
    std::string variant;
    std::string protocol;
    float rank1 = 0.0f;
    float rank5 = 0.0f;
    float map = 0.0f;
};

/// `ablate`: train and evaluate baseline / +SSE / +SIM / full with one seed;
/// writes ablation.jsonl and prints the comparison table with the
/// full-vs-baseline margin.
std::vector<AblationRow> cmd_ablate(RunConfig cfg, bool force, std::ostream& out);

/// Dataset acquisition shared by train/ablate: load from cfg.dataset_path or
/// generate from the inline synth config.
Dataset acquire_dataset(const RunConfig& cfg);

} // namespace sci
