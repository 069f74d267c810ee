#pragma once

#include <optional>

#include "sci/checkpoint.hpp"
#include "sci/evalkit.hpp"
#include "sci/runconfig.hpp"
#include "sci/sim.hpp"

namespace sci {

/// Full model state: encoders, prompt bank, refinement blocks, heads, the
/// learnable similarity scale, and the stage-1 text feature cache.
struct Model {
    RunConfig cfg;
    LabelSpace labels;
    TextEncoderStub text_enc;
    VisualEncoderStub visual_enc;
    PromptBank bank;
    NonLocalBlock nonlocal;
    CrossAttnRefiner refiner;
    IdHead id_head;
    CalHead cal_head;
    Tensor logit_scale; // scalar parameter; similarity multiplier is exp(·)
    TextFeatureSet cache;
    bool cache_ready = false;

    /// Deterministic per-component initialization from cfg.seed.
    static Model build(const RunConfig& cfg, const Dataset& dataset);

    /// Trainable parameters for the stage-2 main step (visual encoder,
    /// refinement blocks when enabled, identity head, similarity scale).
    std::vector<Tensor> stage2_main_params() const;
};

/// Pooled image feature on the training path (graph-attached). Runs the
/// refinement pipeline when enabled; ContractError if the stage-1 cache is
/// required but missing.
Tensor forward_pooled(const Model& model, const Tensor& image);

/// Inference path: L2-normalized embedding, no tape, deterministic.
Tensor extract_embedding(const Model& model, const Tensor& image);

/// Embeddings for a list of dataset samples, one normalized row each.
/// Per-image work runs in parallel with results identical to serial.
Tensor embed_rows(const Model& model, const Dataset& dataset, std::span<const int> indices);

Stage1Config stage1_config_from(const RunConfig& cfg);

struct Stage2Config {
    int epochs = 30;
    LrSchedule schedule{LrSchedule::Kind::StepDecay, 3.5e-4f, 30, {10, 20}, 0.1f};
    int batch_p = 4;
    int batch_k = 4;
    float smoothing = 0.1f;
    uint64_t seed = 1;
};

Stage2Config stage2_config_from(const RunConfig& cfg);

struct Stage2LossRow {
    int epoch = 0;
    float id = 0.0f;
    float cal = 0.0f;
    float i2tce = 0.0f;
    float total = 0.0f;
    float clf = 0.0f; // clothes-classifier CE step
};

struct Stage2Result {
    std::vector<Stage2LossRow> log;
    AdamState main_state;
    AdamState clf_state;
};

/// Alternates the clothes-classifier CE step with the main step minimizing
/// id + cal + i2tce. Trains the visual encoder, refinement blocks, identity
/// head and similarity scale; the prompt bank, text encoder and cached text
/// features stay untouched. ContractError without a stage-1 cache.
Stage2Result train_stage2(Model& model, const Dataset& dataset, const Stage2Config& cfg);

/// Model state -> checkpoint sections (encoders, prompt_bank, sim, heads,
/// f_ort, optimizer when given).
Checkpoint checkpoint_from_model(Model& model, const AdamState* main_state = nullptr,
                                 const AdamState* clf_state = nullptr);

/// Restore parameters by name; ContractError when a stored tensor's shape
/// does not match the freshly built model (dataset/config mismatch).
void load_model_params(Model& model, const Checkpoint& ckpt);

} // namespace sci
