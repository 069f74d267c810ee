#pragma once

#include <vector>

#include "sci/encoders.hpp"
#include "sci/sse.hpp"

namespace sci {

/// Non-local context block over a [N_pix×C] feature map. The residual output
/// projection is zero-initialized, so at init forward(x) == x bit-exactly.
class NonLocalBlock {
public:
    NonLocalBlock() = default;
    NonLocalBlock(int channels, int inner, Rng& rng);

    /// x + W((θ(x)·φ(x)ᵀ/N_pix)·g(x))
    Tensor forward(const Tensor& feature_map) const;

    std::vector<Tensor> parameters() const;
    std::vector<NamedParam> named_parameters();

    int channels() const { return channels_; }

private:
    int channels_ = 0;
    int inner_ = 0;
    Tensor theta_, phi_, g_; // [C×inner]
    Tensor w_;               // [inner×C], zero-init
};

/// Text-guided refinement: cross-attention from pixels to the refined text
/// rows, LayerNorm+MLP, and a per-channel gated residual. The gate is
/// zero-initialized, so at init fuse(...) returns the original features
/// bit-exactly.
class CrossAttnRefiner {
public:
    CrossAttnRefiner() = default;
    CrossAttnRefiner(int channels, Rng& rng);

    /// F_res + softmax(F_res·textsᵀ/√d_k)·texts; ShapeError on dim mismatch.
    Tensor attend(const Tensor& feature_map, const Tensor& text_rows) const;
    /// MLP(LayerNorm(x)), two layers C→4C→C with GELU.
    Tensor refine(const Tensor& attended) const;
    /// original + gate ⊙ delta (channel-wise).
    Tensor fuse(const Tensor& original, const Tensor& delta) const;

    Tensor gate() const { return alpha_; }
    int key_dim() const { return d_k_; }

    std::vector<Tensor> parameters() const;
    std::vector<NamedParam> named_parameters();

private:
    int channels_ = 0;
    int d_k_ = 0;
    Tensor ln_g_, ln_b_;
    Tensor mlp_w1_, mlp_b1_; // [C×4C]
    Tensor mlp_w2_, mlp_b2_; // [4C×C], zero-init
    Tensor alpha_;           // [C], zero-init
};

/// Linear identity classifier over pooled features.
class IdHead {
public:
    IdHead() = default;
    IdHead(int num_pids, int dim, Rng& rng);

    Tensor logits(const Tensor& features) const; // [N×d] -> [N×num_pids]
    int num_pids() const { return weight_.defined() ? weight_.dim(0) : 0; }

    std::vector<Tensor> parameters() const { return {weight_}; }
    std::vector<NamedParam> named_parameters() { return {{"heads.id_w", weight_}}; }

private:
    Tensor weight_; // [num_pids×d]
};

/// Cosine clothes classifier with temperature, plus the clothes→identity
/// ownership map used by the adversarial loss.
class CalHead {
public:
    CalHead() = default;
    CalHead(int num_clothes, int dim, float tau, std::vector<int> clothes_owner, Rng& rng);

    /// ⟨f̂, φ̂_c⟩/τ over all clothes classes.
    Tensor logits(const Tensor& features) const; // [N×d] -> [N×num_clothes]
    Tensor weight() const { return weight_; }
    float tau() const { return tau_; }
    const std::vector<int>& clothes_owner() const { return clothes_owner_; }
    int num_clothes() const { return weight_.defined() ? weight_.dim(0) : 0; }

    std::vector<Tensor> parameters() const { return {weight_}; }
    std::vector<NamedParam> named_parameters() { return {{"heads.cal_w", weight_}}; }

private:
    Tensor weight_; // [num_clothes×d]
    float tau_ = 1.0f / 16.0f;
    std::vector<int> clothes_owner_; // clothes index -> pid index
};

/// Softmax cross-entropy over identity logits; labels index the logit rows.
Tensor id_loss(const Tensor& logits, const std::vector<int>& labels);

/// Clothes-based adversarial loss: for each sample, the positive classes are
/// the other outfits of its own identity (uniform weights), negatives are
/// the clothes classes of other identities; the sample's own outfit is
/// excluded from both. Gradients flow to the features only — the classifier
/// weights are treated as constants here (they train in a separate CE step).
/// Samples whose identity has a single outfit contribute 0 and are counted
/// in *skipped when given.
Tensor cal_loss(const Tensor& features, const std::vector<int>& pid_labels,
                const std::vector<int>& clothes_labels, const CalHead& head,
                int* skipped = nullptr);

/// Image-to-text cross entropy against all class text rows with label
/// smoothing: q_k = (1−eps)·1[k=y] + eps/N_cls.
Tensor i2tce_loss(const Tensor& visual, const Tensor& text_table,
                  const std::vector<int>& labels, float smoothing, const Tensor& scale);

} // namespace sci
