#pragma once

#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "sci/encoders.hpp"
#include "sci/optim.hpp"
#include "sci/synthdata.hpp"

namespace sci {

/// Tiny built-in vocabulary backing the fixed prompt templates.
/// Template text: "a photo of a <ctx>*M person ." / "a photo of the <ctx>*M clothes ."
namespace vocab {
constexpr int kPad = 0;
constexpr int kA = 1;
constexpr int kPhoto = 2;
constexpr int kOf = 3;
constexpr int kThe = 4;
constexpr int kPerson = 5;
constexpr int kClothes = 6;
constexpr int kPeriod = 7;

std::vector<int> id_prefix();   // a photo of a
std::vector<int> id_suffix();   // person .
std::vector<int> clo_prefix();  // a photo of the
std::vector<int> clo_suffix();  // clothes .
} // namespace vocab

/// Learnable context tokens: one [M×token_dim] block per identity and per
/// clothing class, Gaussian-initialized (sigma 0.02). Construct with
/// num_clothes = 0 for the single-prompt baseline variant.
class PromptBank {
public:
    PromptBank() = default;
    PromptBank(int num_pids, int num_clothes, int context_len, int token_dim, Rng& rng);

    /// Prompt token sequences: fixed prefix ⊕ M context embeddings ⊕ fixed
    /// suffix. Indices are label-space indices; ContractError out of range.
    std::vector<Tensor> id_prompt(const TextEncoderStub& enc, int pid_index) const;
    std::vector<Tensor> clo_prompt(const TextEncoderStub& enc, int clothes_index) const;

    Tensor id_context(int pid_index) const;
    Tensor clo_context(int clothes_index) const;

    int num_pids() const { return static_cast<int>(id_contexts_.size()); }
    int num_clothes() const { return static_cast<int>(clo_contexts_.size()); }
    int context_len() const { return context_len_; }

    std::vector<Tensor> parameters() const;
    std::vector<NamedParam> named_parameters();
    uint64_t checksum() const;

private:
    int context_len_ = 0;
    std::vector<Tensor> id_contexts_;  // per identity: [M×token_dim]
    std::vector<Tensor> clo_contexts_; // per clothing class: [M×token_dim]
};

/// Cached per-class text features, all [num×text_dim] plain tensors.
/// Row i of ortho is collinear with row i of id_features by construction.
struct TextFeatureSet {
    Tensor id_features;      // per identity
    Tensor clothes_features; // per clothing class
    Tensor projected;        // clothing component along each identity feature
    Tensor ortho;            // identity features after removing that component
};

/// Label bookkeeping: contiguous train-side indices for identities and
/// clothing classes, plus the clothes -> identity ownership map.
struct ClothesIndex {
    std::map<int, int> clothes_to_pid;
    std::map<int, std::vector<int>> pid_to_clothes;
    int num_clothes() const { return static_cast<int>(clothes_to_pid.size()); }
};

/// DataError if a clothes id appears under more than one identity.
ClothesIndex clo_pairing(std::span<const SampleMeta> samples);

struct LabelSpace {
    std::vector<int> pid_values;     // sorted train pids
    std::vector<int> clothes_values; // sorted train clothes ids
    std::unordered_map<int, int> pid_index;
    std::unordered_map<int, int> clothes_index;
    std::vector<int> clothes_owner; // clothes index -> pid index

    int num_pids() const { return static_cast<int>(pid_values.size()); }
    int num_clothes() const { return static_cast<int>(clothes_values.size()); }
    std::vector<std::vector<int>> pid_clothes() const; // pid index -> clothes indices

    static LabelSpace from_train_split(const Dataset& dataset);
};

// -- SSE geometry -----------------------------------------------------------

/// Component of clothes_f along id_f: (⟨clothes_f,id_f⟩/‖id_f‖²)·id_f.
/// DegenerateVectorError when ‖id_f‖ = 0.
Tensor project(const Tensor& clothes_f, const Tensor& id_f);

/// id_f − projected, elementwise.
Tensor orthogonalize(const Tensor& id_f, const Tensor& projected);

// -- stage-1 losses -----------------------------------------------------------

struct SseLossWeights {
    float lambda1 = 0.7f;
    float lambda2 = 0.3f;
};

/// Batch mean of λ₁(1−cos(ortho_i, id_i)) + λ₂·cos(ortho_i, clothes_i).
Tensor sse_similarity_loss(const std::vector<Tensor>& ortho_rows,
                           const std::vector<Tensor>& id_rows,
                           const std::vector<Tensor>& clothes_rows,
                           const SseLossWeights& weights);

/// Image-to-text contrastive loss: row i of texts is row i's own class text.
/// Rows are L2-normalized; similarity is cosine × scale (scalar tensor).
Tensor i2t_loss(const Tensor& visual, const Tensor& texts, const Tensor& scale);

/// Text-to-image loss with multi-positive sets: labels index rows of the
/// text table; each batch entry contributes its identity's per-identity
/// term. Table identities absent from the batch are skipped (counted in
/// *skipped when given).
Tensor t2i_loss(const Tensor& visual, const std::vector<int>& labels,
                const Tensor& text_table, const Tensor& scale, int* skipped = nullptr);

// -- stage-1 driver -----------------------------------------------------------

struct Stage1Config {
    int epochs = 30;
    LrSchedule schedule{LrSchedule::Kind::Cosine, 3.5e-4f, 30, {}, 0.1f};
    int batch_p = 4;
    int batch_k = 4;
    SseLossWeights weights;
    uint64_t seed = 1;
    bool use_sse = true; // false: single person prompt, ortho cache = id features
};

struct EpochLossRow {
    int epoch = 0;
    float i2t = 0.0f;
    float t2i = 0.0f;
    float sim = 0.0f;
    float total = 0.0f;
};

struct Stage1Result {
    TextFeatureSet cache;
    std::vector<EpochLossRow> log;
};

/// Optimizes the prompt contexts only; ContractError unless both encoders
/// are frozen. Recomputes the full TextFeatureSet cache on completion (also
/// for epochs = 0).
Stage1Result train_stage1(PromptBank& bank, const TextEncoderStub& text_enc,
                          const VisualEncoderStub& visual_enc, const Dataset& dataset,
                          const LabelSpace& labels, const Tensor& logit_scale,
                          const Stage1Config& cfg);

/// Recompute the cached feature set from the current bank (no training).
TextFeatureSet compute_text_features(const PromptBank& bank, const TextEncoderStub& text_enc,
                                     const LabelSpace& labels, bool use_sse);

} // namespace sci
