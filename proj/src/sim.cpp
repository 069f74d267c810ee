#include "sci/sim.hpp"

#include <cmath>

namespace sci {

namespace {
constexpr float kInitStd = 0.02f;
}

NonLocalBlock::NonLocalBlock(int channels, int inner, Rng& rng)
    : channels_(channels), inner_(inner) {
    if (channels < 1 || inner < 1)
        throw ContractError("nonlocal block: channels and inner dim must be >= 1");
    theta_ = Tensor::randn({channels, inner}, rng, kInitStd, true);
    phi_ = Tensor::randn({channels, inner}, rng, kInitStd, true);
    g_ = Tensor::randn({channels, inner}, rng, kInitStd, true);
    w_ = Tensor::zeros({inner, channels}, true);
}

Tensor NonLocalBlock::forward(const Tensor& feature_map) const {
    if (feature_map.ndim() != 2 || feature_map.dim(1) != channels_)
        throw ContractError("nonlocal block: expected [N_pix x " + std::to_string(channels_) +
                            "], got " + shape_str(feature_map.shape()));
    const int n_pix = feature_map.dim(0);
    Tensor t = matmul(feature_map, theta_);
    Tensor p = matmul(feature_map, phi_);
    Tensor gm = matmul(feature_map, g_);
    Tensor pairwise = scale(matmul(t, transpose(p)), 1.0f / static_cast<float>(n_pix));
    Tensor context = matmul(pairwise, gm);
    return add(matmul(context, w_), feature_map);
}

std::vector<Tensor> NonLocalBlock::parameters() const { return {theta_, phi_, g_, w_}; }

std::vector<NamedParam> NonLocalBlock::named_parameters() {
    return {{"sim.nonlocal.theta", theta_},
            {"sim.nonlocal.phi", phi_},
            {"sim.nonlocal.g", g_},
            {"sim.nonlocal.w", w_}};
}

CrossAttnRefiner::CrossAttnRefiner(int channels, Rng& rng) : channels_(channels), d_k_(channels) {
    if (channels < 1) throw ContractError("refiner: channels must be >= 1");
    const int hidden = 4 * channels;
    ln_g_ = Tensor::full({channels}, 1.0f, true);
    ln_b_ = Tensor::zeros({channels}, true);
    mlp_w1_ = Tensor::randn({channels, hidden}, rng, kInitStd, true);
    mlp_b1_ = Tensor::zeros({hidden}, true);
    // The zero gate alone makes fuse() the identity at init. The MLP output
    // layer keeps a live init: zeroing it too would pin the gate's gradient
    // (and its own) at exactly zero, freezing the whole branch.
    mlp_w2_ = Tensor::randn({hidden, channels}, rng, kInitStd, true);
    mlp_b2_ = Tensor::zeros({channels}, true);
    alpha_ = Tensor::zeros({channels}, true);
}

Tensor CrossAttnRefiner::attend(const Tensor& feature_map, const Tensor& text_rows) const {
    if (feature_map.ndim() != 2 || feature_map.dim(1) != channels_)
        throw ContractError("refiner: feature map " + shape_str(feature_map.shape()) +
                            " does not match channels " + std::to_string(channels_));
    if (text_rows.ndim() != 2 || text_rows.dim(1) != channels_ || text_rows.dim(0) < 1)
        throw ContractError("refiner: text rows " + shape_str(text_rows.shape()) +
                            " must be [T x " + std::to_string(channels_) + "] with T >= 1");
    Tensor scores = scale(matmul(feature_map, transpose(text_rows)),
                          1.0f / std::sqrt(static_cast<float>(d_k_)));
    Tensor weights = softmax(scores, -1);
    return add(feature_map, matmul(weights, text_rows));
}

Tensor CrossAttnRefiner::refine(const Tensor& attended) const {
    Tensor h = layer_norm(attended, ln_g_, ln_b_);
    Tensor mid = gelu(add_rowvec(matmul(h, mlp_w1_), mlp_b1_));
    return add_rowvec(matmul(mid, mlp_w2_), mlp_b2_);
}

Tensor CrossAttnRefiner::fuse(const Tensor& original, const Tensor& delta) const {
    if (original.shape() != delta.shape())
        throw ContractError("refiner fuse: shape mismatch " + shape_str(original.shape()) + " vs " +
                            shape_str(delta.shape()));
    return add(original, mul_rowvec(delta, alpha_));
}

std::vector<Tensor> CrossAttnRefiner::parameters() const {
    return {ln_g_, ln_b_, mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_, alpha_};
}

std::vector<NamedParam> CrossAttnRefiner::named_parameters() {
    return {{"sim.refiner.ln_g", ln_g_},   {"sim.refiner.ln_b", ln_b_},
            {"sim.refiner.mlp_w1", mlp_w1_}, {"sim.refiner.mlp_b1", mlp_b1_},
            {"sim.refiner.mlp_w2", mlp_w2_}, {"sim.refiner.mlp_b2", mlp_b2_},
            {"sim.refiner.alpha", alpha_}};
}

IdHead::IdHead(int num_pids, int dim, Rng& rng) {
    if (num_pids < 1 || dim < 1) throw ContractError("id head: num_pids and dim must be >= 1");
    weight_ = Tensor::randn({num_pids, dim}, rng, kInitStd, true);
}

Tensor IdHead::logits(const Tensor& features) const {
    return matmul(features, transpose(weight_));
}

CalHead::CalHead(int num_clothes, int dim, float tau, std::vector<int> clothes_owner, Rng& rng)
    : tau_(tau), clothes_owner_(std::move(clothes_owner)) {
    if (num_clothes < 1 || dim < 1) throw ContractError("cal head: num_clothes and dim must be >= 1");
    if (tau <= 0.0f) throw ContractError("cal head: tau must be positive");
    if (static_cast<int>(clothes_owner_.size()) != num_clothes)
        throw ContractError("cal head: clothes_owner size must equal num_clothes");
    weight_ = Tensor::randn({num_clothes, dim}, rng, kInitStd, true);
}

Tensor CalHead::logits(const Tensor& features) const {
    Tensor sims = matmul(l2_normalize_rows(features), transpose(l2_normalize_rows(weight_)));
    return scale(sims, 1.0f / tau_);
}

Tensor id_loss(const Tensor& logits, const std::vector<int>& labels) {
    const int n = logits.dim(0), c = logits.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw ContractError("id_loss: labels size " + std::to_string(labels.size()) +
                            " does not match batch " + std::to_string(n));
    std::vector<float> targets(static_cast<size_t>(n) * c, 0.0f);
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= c)
            throw ContractError("id_loss: label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(c) + ")");
        targets[static_cast<size_t>(i) * c + y] = 1.0f;
    }
    return cross_entropy(logits, Tensor::from_data({n, c}, std::move(targets)));
}

Tensor cal_loss(const Tensor& features, const std::vector<int>& pid_labels,
                const std::vector<int>& clothes_labels, const CalHead& head, int* skipped) {
    const int n = features.dim(0);
    const int c = head.num_clothes();
    if (static_cast<int>(pid_labels.size()) != n || static_cast<int>(clothes_labels.size()) != n)
        throw ContractError("cal_loss: label sizes must match batch size " + std::to_string(n));
    const std::vector<int>& owner = head.clothes_owner();
    for (int i = 0; i < n; ++i) {
        const int ci = clothes_labels[static_cast<size_t>(i)];
        if (ci < 0 || ci >= c)
            throw ContractError("cal_loss: clothes label " + std::to_string(ci) + " out of range");
        if (owner[static_cast<size_t>(ci)] != pid_labels[static_cast<size_t>(i)])
            throw ContractError("cal_loss: clothes label " + std::to_string(ci) +
                                " is not owned by pid label " +
                                std::to_string(pid_labels[static_cast<size_t>(i)]));
    }

    // Classifier weights are constants here; only the features receive
    // gradient (the classifier trains in its own CE step).
    Tensor sims = matmul(l2_normalize_rows(features), transpose(l2_normalize_rows(detach(head.weight()))));
    Tensor logits = scale(sims, 1.0f / head.tau());
    Tensor exps = exp(logits);

    std::vector<float> neg_mask(static_cast<size_t>(n) * c, 0.0f);
    std::vector<float> pos_weight(static_cast<size_t>(n) * c, 0.0f);
    int skip_count = 0;
    for (int i = 0; i < n; ++i) {
        const int pid = pid_labels[static_cast<size_t>(i)];
        const int own = clothes_labels[static_cast<size_t>(i)];
        int positives = 0;
        for (int j = 0; j < c; ++j) {
            if (owner[static_cast<size_t>(j)] != pid)
                neg_mask[static_cast<size_t>(i) * c + j] = 1.0f;
            else if (j != own)
                ++positives;
        }
        if (positives == 0) {
            ++skip_count;
            continue;
        }
        const float q = -1.0f / (static_cast<float>(n) * static_cast<float>(positives));
        for (int j = 0; j < c; ++j)
            if (owner[static_cast<size_t>(j)] == pid && j != own)
                pos_weight[static_cast<size_t>(i) * c + j] = q;
    }
    if (skipped) *skipped = skip_count;

    Tensor neg_sums = row_sums(mul(exps, Tensor::from_data({n, c}, std::move(neg_mask))));
    Tensor log_denom = log(add_colvec(exps, neg_sums));
    Tensor terms = sub(logits, log_denom);
    return sum(mul(terms, Tensor::from_data({n, c}, std::move(pos_weight))));
}

Tensor i2tce_loss(const Tensor& visual, const Tensor& text_table,
                  const std::vector<int>& labels, float smoothing, const Tensor& scale_t) {
    if (smoothing < 0.0f || smoothing >= 1.0f)
        throw ContractError("i2tce_loss: smoothing must be in [0, 1)");
    const int n = visual.dim(0);
    const int num_classes = text_table.dim(0);
    if (static_cast<int>(labels.size()) != n)
        throw ContractError("i2tce_loss: labels size does not match batch");
    std::vector<float> targets(static_cast<size_t>(n) * num_classes,
                               smoothing / static_cast<float>(num_classes));
    for (int i = 0; i < n; ++i) {
        const int y = labels[static_cast<size_t>(i)];
        if (y < 0 || y >= num_classes)
            throw ContractError("i2tce_loss: label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(num_classes) + ")");
        targets[static_cast<size_t>(i) * num_classes + y] += 1.0f - smoothing;
    }
    Tensor sims = scale_by(matmul(l2_normalize_rows(visual), transpose(l2_normalize_rows(text_table))),
                           scale_t);
    return cross_entropy(sims, Tensor::from_data({n, num_classes}, std::move(targets)));
}

} // namespace sci
