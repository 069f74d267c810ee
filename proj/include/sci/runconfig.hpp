#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sci/encoders.hpp"
#include "sci/evalkit.hpp"
#include "sci/sse.hpp"
#include "sci/synthdata.hpp"

namespace sci {

/// Resolved run configuration: dataset source, model geometry, loss weights,
/// schedules, batch layout, protocols. Every output file embeds the resolved
/// JSON echo of this struct.
struct RunConfig {
    uint64_t seed = 1;
    bool seed_set = false; // seed is mandatory: must come from file or flag
    std::string out_dir = "out";

    std::string dataset_path; // empty -> generate from `synth` inline
    SynthConfig synth;
    bool synth_seed_set = false; // config gave an explicit generator seed

    /// The generator seed follows the run seed unless set explicitly.
    void apply_seed_inheritance() {
        if (!synth_seed_set) synth.seed = seed;
    }

    EncoderConfig encoder;
    int context_len = 4; // learnable tokens per prompt

    bool use_sse = true;
    bool use_sim = true;
    SseLossWeights sse_weights;
    float logit_scale_init = 2.6592600f; // ln(1/0.07)
    float cal_tau = 1.0f / 16.0f;
    float smoothing = 0.1f;

    int batch_p = 4;
    int batch_k = 4;

    int stage1_epochs = 30;
    float stage1_lr = 3.5e-4f;
    int stage2_epochs = 30;
    float stage2_lr = 3.5e-4f;
    std::vector<int> stage2_milestones = {10, 20};
    float stage2_decay = 0.1f;

    std::vector<Protocol> protocols = {Protocol::General, Protocol::SameClothes,
                                       Protocol::ClothChanging};
    int k_max = 10;

    void validate() const; // ContractError naming the offending field
    nlohmann::ordered_json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load_file(const std::filesystem::path& path);
};

} // namespace sci
