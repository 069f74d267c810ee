#include "sci/encoders.hpp"

#include <cmath>

namespace sci {

namespace {
constexpr float kInitStd = 0.02f;

void set_params_frozen(std::span<const Tensor> params, bool frozen) {
    for (Tensor p : params) p.set_requires_grad(!frozen);
}
} // namespace

void EncoderConfig::validate() const {
    if (height < 1 || width < 1) throw ContractError("encoder config: height/width must be positive");
    if (patch < 1) throw ContractError("encoder config: patch must be positive");
    if (height % patch != 0) throw ContractError("encoder config: height not divisible by patch");
    if (width % patch != 0) throw ContractError("encoder config: width not divisible by patch");
    if (text_dim < 1) throw ContractError("encoder config: text_dim must be positive");
    if (channels < 1 || token_dim < 1) throw ContractError("encoder config: channels/token_dim must be positive");
    if (heads < 1 || channels % heads != 0 || token_dim % heads != 0)
        throw ContractError("encoder config: heads must divide channels and token_dim");
    if (vocab_size < 8) throw ContractError("encoder config: vocab_size must be at least 8");
    if (max_seq_len < 1) throw ContractError("encoder config: max_seq_len must be positive");
}

AttentionBlock::AttentionBlock(int dim_, int heads_, Rng& rng) : dim(dim_), heads(heads_) {
    const int hidden = 2 * dim;
    wq = Tensor::randn({dim, dim}, rng, kInitStd, true);
    wk = Tensor::randn({dim, dim}, rng, kInitStd, true);
    wv = Tensor::randn({dim, dim}, rng, kInitStd, true);
    wo = Tensor::randn({dim, dim}, rng, kInitStd, true);
    ln1_g = Tensor::full({dim}, 1.0f, true);
    ln1_b = Tensor::zeros({dim}, true);
    ln2_g = Tensor::full({dim}, 1.0f, true);
    ln2_b = Tensor::zeros({dim}, true);
    mlp_w1 = Tensor::randn({dim, hidden}, rng, kInitStd, true);
    mlp_b1 = Tensor::zeros({hidden}, true);
    mlp_w2 = Tensor::randn({hidden, dim}, rng, kInitStd, true);
    mlp_b2 = Tensor::zeros({dim}, true);
}

Tensor AttentionBlock::forward(const Tensor& x) const {
    const int head_dim = dim / heads;
    const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(head_dim));

    Tensor h = layer_norm(x, ln1_g, ln1_b);
    Tensor q = matmul(h, wq);
    Tensor k = matmul(h, wk);
    Tensor v = matmul(h, wv);
    std::vector<Tensor> head_outs;
    head_outs.reserve(static_cast<size_t>(heads));
    for (int i = 0; i < heads; ++i) {
        Tensor qh = slice_cols(q, i * head_dim, head_dim);
        Tensor kh = slice_cols(k, i * head_dim, head_dim);
        Tensor vh = slice_cols(v, i * head_dim, head_dim);
        Tensor weights = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt), -1);
        head_outs.push_back(matmul(weights, vh));
    }
    Tensor attn = matmul(heads == 1 ? head_outs[0] : concat_cols(head_outs), wo);
    Tensor x1 = add(x, attn);

    Tensor h2 = layer_norm(x1, ln2_g, ln2_b);
    Tensor mid = gelu(add_rowvec(matmul(h2, mlp_w1), mlp_b1));
    Tensor out = add_rowvec(matmul(mid, mlp_w2), mlp_b2);
    return add(x1, out);
}

void AttentionBlock::collect_params(const std::string& prefix, std::vector<NamedParam>& out) {
    out.emplace_back(prefix + ".wq", wq);
    out.emplace_back(prefix + ".wk", wk);
    out.emplace_back(prefix + ".wv", wv);
    out.emplace_back(prefix + ".wo", wo);
    out.emplace_back(prefix + ".ln1_g", ln1_g);
    out.emplace_back(prefix + ".ln1_b", ln1_b);
    out.emplace_back(prefix + ".ln2_g", ln2_g);
    out.emplace_back(prefix + ".ln2_b", ln2_b);
    out.emplace_back(prefix + ".mlp_w1", mlp_w1);
    out.emplace_back(prefix + ".mlp_b1", mlp_b1);
    out.emplace_back(prefix + ".mlp_w2", mlp_w2);
    out.emplace_back(prefix + ".mlp_b2", mlp_b2);
}

TextEncoderStub::TextEncoderStub(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    embed_ = Tensor::randn({cfg_.vocab_size, cfg_.token_dim}, rng, kInitStd, true);
    pos_ = Tensor::randn({cfg_.max_seq_len, cfg_.token_dim}, rng, kInitStd, true);
    block_ = AttentionBlock(cfg_.token_dim, cfg_.heads, rng);
    out_proj_ = Tensor::randn({cfg_.token_dim, cfg_.text_dim}, rng, kInitStd, true);
    set_frozen(true);
}

Tensor TextEncoderStub::encode(const std::vector<Tensor>& tokens) const {
    const int len = static_cast<int>(tokens.size());
    if (len == 0) throw ContractError("encode_text: empty token sequence");
    if (len > cfg_.max_seq_len)
        throw ContractError("encode_text: sequence length " + std::to_string(len) +
                            " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    Tensor x = stack_rows(tokens);
    std::vector<int> positions(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) positions[static_cast<size_t>(i)] = i;
    x = add(x, embedding_rows(pos_, positions));
    x = block_.forward(x);
    Tensor pooled = mean_rows(x);
    return row(matmul(stack_rows({pooled}), out_proj_), 0);
}

Tensor TextEncoderStub::token_embedding(int id) const {
    return row(embed_, id);
}

void TextEncoderStub::set_frozen(bool frozen) {
    frozen_ = frozen;
    set_params_frozen(parameters(), frozen);
}

std::vector<Tensor> TextEncoderStub::parameters() const {
    std::vector<NamedParam> named = const_cast<TextEncoderStub*>(this)->named_parameters();
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

std::vector<NamedParam> TextEncoderStub::named_parameters() {
    std::vector<NamedParam> out;
    out.emplace_back("text.embed", embed_);
    out.emplace_back("text.pos", pos_);
    block_.collect_params("text.block", out);
    out.emplace_back("text.out_proj", out_proj_);
    return out;
}

uint64_t TextEncoderStub::checksum() const {
    auto params = parameters();
    return params_checksum(params);
}

VisualEncoderStub::VisualEncoderStub(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    const int patch_in = cfg_.patch * cfg_.patch * 3;
    patch_w_ = Tensor::randn({patch_in, cfg_.channels}, rng, kInitStd, true);
    patch_b_ = Tensor::zeros({cfg_.channels}, true);
    pos_ = Tensor::randn({cfg_.num_patches(), cfg_.channels}, rng, kInitStd, true);
    block1_ = AttentionBlock(cfg_.channels, cfg_.heads, rng);
    block2_ = AttentionBlock(cfg_.channels, cfg_.heads, rng);
    out_proj_ = Tensor::randn({cfg_.channels, cfg_.text_dim}, rng, kInitStd, true);
}

VisualEncoderStub::Features VisualEncoderStub::encode(const Tensor& image) const {
    const Shape expect{cfg_.height, cfg_.width, 3};
    if (image.shape() != expect)
        throw ContractError("encode_image: image shape " + shape_str(image.shape()) +
                            " does not match config " + shape_str(expect));

    // Unfold p×p patches row-major; pixels carry no gradient.
    const int ph = cfg_.patches_h(), pw = cfg_.patches_w(), p = cfg_.patch;
    const int patch_in = p * p * 3;
    std::vector<float> rows(static_cast<size_t>(ph * pw) * patch_in);
    auto img = image.data();
    for (int by = 0; by < ph; ++by) {
        for (int bx = 0; bx < pw; ++bx) {
            float* dst = rows.data() + (static_cast<size_t>(by * pw + bx)) * patch_in;
            for (int y = 0; y < p; ++y) {
                for (int x = 0; x < p; ++x) {
                    const size_t src = ((static_cast<size_t>(by * p + y) * cfg_.width) + bx * p + x) * 3;
                    *dst++ = img[src];
                    *dst++ = img[src + 1];
                    *dst++ = img[src + 2];
                }
            }
        }
    }
    Tensor patches = Tensor::from_data({ph * pw, patch_in}, std::move(rows));

    Tensor x = add_rowvec(matmul(patches, patch_w_), patch_b_);
    x = add(x, pos_);
    x = block1_.forward(x);
    x = block2_.forward(x);

    Features f;
    f.patch_map = x;
    f.tokens = matmul(x, out_proj_);
    f.global = mean_rows(f.tokens);
    return f;
}

void VisualEncoderStub::set_frozen(bool frozen) {
    frozen_ = frozen;
    set_params_frozen(parameters(), frozen);
}

std::vector<Tensor> VisualEncoderStub::parameters() const {
    std::vector<NamedParam> named = const_cast<VisualEncoderStub*>(this)->named_parameters();
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (auto& [name, t] : named) out.push_back(t);
    return out;
}

std::vector<NamedParam> VisualEncoderStub::named_parameters() {
    std::vector<NamedParam> out;
    out.emplace_back("visual.patch_w", patch_w_);
    out.emplace_back("visual.patch_b", patch_b_);
    out.emplace_back("visual.pos", pos_);
    block1_.collect_params("visual.block1", out);
    block2_.collect_params("visual.block2", out);
    out.emplace_back("visual.out_proj", out_proj_);
    return out;
}

uint64_t VisualEncoderStub::checksum() const {
    auto params = parameters();
    return params_checksum(params);
}

} // namespace sci
