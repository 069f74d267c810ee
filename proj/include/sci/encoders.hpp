#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sci/ops.hpp"
#include "sci/rng.hpp"
#include "sci/tensor.hpp"

namespace sci {

/// Desk-scale geometry for both encoder stubs. The two encoders share the
/// output feature dimension text_dim so visual and text features live in one
/// embedding space.
struct EncoderConfig {
    int height = 32;
    int width = 16;
    int patch = 4;
    int channels = 32;   // visual mixing width
    int token_dim = 32;  // text mixing width
    int text_dim = 64;   // shared output feature dimension
    int vocab_size = 16;
    int max_seq_len = 16;
    int heads = 2;
    uint64_t seed = 1;

    int patches_h() const { return height / patch; }
    int patches_w() const { return width / patch; }
    int num_patches() const { return patches_h() * patches_w(); }

    void validate() const; // ContractError naming the offending field
};

using NamedParam = std::pair<std::string, Tensor>;

/// Pre-norm transformer block (multi-head attention + MLP) over [L×d] rows.
struct AttentionBlock {
    AttentionBlock() = default;
    AttentionBlock(int dim, int heads, Rng& rng);

    Tensor forward(const Tensor& x) const;
    void collect_params(const std::string& prefix, std::vector<NamedParam>& out);

    int dim = 0;
    int heads = 0;
    Tensor wq, wk, wv, wo;
    Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

/// Text encoder stand-in: token + positional embeddings, one attention
/// block, mean pooling, projection to text_dim. Mixed prompts are encoded as
/// a list of per-token embedding rows, so learnable context tokens stay
/// differentiable even while every encoder weight is frozen.
class TextEncoderStub {
public:
    TextEncoderStub() = default;
    TextEncoderStub(const EncoderConfig& cfg, Rng& rng);

    /// tokens: one [token_dim] embedding per sequence position.
    /// ContractError if the sequence exceeds max_seq_len.
    Tensor encode(const std::vector<Tensor>& tokens) const;

    /// Embedding-table row for a fixed vocabulary id.
    Tensor token_embedding(int id) const;

    void set_frozen(bool frozen);
    bool frozen() const { return frozen_; }
    std::vector<Tensor> parameters() const;
    std::vector<NamedParam> named_parameters();
    uint64_t checksum() const;

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    Tensor embed_;   // [vocab × token_dim]
    Tensor pos_;     // [max_seq_len × token_dim]
    AttentionBlock block_;
    Tensor out_proj_; // [token_dim × text_dim]
    bool frozen_ = true;
};

/// Visual encoder stand-in: non-overlapping patch embedding, two attention
/// mixing blocks, per-patch projection into the shared text_dim space. The
/// pooled global feature is the mean of the projected patch tokens, so the
/// refinement pipeline and the plain pooled path share one projection.
class VisualEncoderStub {
public:
    struct Features {
        Tensor patch_map; // [num_patches × channels], pre-projection
        Tensor tokens;    // [num_patches × text_dim], projected per patch
        Tensor global;    // [text_dim], mean of tokens rows
    };

    VisualEncoderStub() = default;
    VisualEncoderStub(const EncoderConfig& cfg, Rng& rng);

    /// image: [H×W×3], treated as a constant input (no gradient to pixels).
    Features encode(const Tensor& image) const;

    void set_frozen(bool frozen);
    bool frozen() const { return frozen_; }
    std::vector<Tensor> parameters() const;
    std::vector<NamedParam> named_parameters();
    uint64_t checksum() const;

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    Tensor patch_w_;  // [patch*patch*3 × channels]
    Tensor patch_b_;  // [channels]
    Tensor pos_;      // [num_patches × channels]
    AttentionBlock block1_, block2_;
    Tensor out_proj_; // [channels × text_dim]
    bool frozen_ = false;
};

} // namespace sci
