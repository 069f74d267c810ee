#include "sci/sse.hpp"

#include <algorithm>
#include <cmath>

namespace sci {

namespace vocab {
std::vector<int> id_prefix() { return {kA, kPhoto, kOf, kA}; }
std::vector<int> id_suffix() { return {kPerson, kPeriod}; }
std::vector<int> clo_prefix() { return {kA, kPhoto, kOf, kThe}; }
std::vector<int> clo_suffix() { return {kClothes, kPeriod}; }
} // namespace vocab

PromptBank::PromptBank(int num_pids, int num_clothes, int context_len, int token_dim, Rng& rng)
    : context_len_(context_len) {
    if (num_pids < 1) throw ContractError("prompt bank: num_pids must be >= 1");
    if (num_clothes < 0) throw ContractError("prompt bank: num_clothes must be >= 0");
    if (context_len < 1) throw ContractError("prompt bank: context_len must be >= 1");
    id_contexts_.reserve(static_cast<size_t>(num_pids));
    for (int i = 0; i < num_pids; ++i)
        id_contexts_.push_back(Tensor::randn({context_len, token_dim}, rng, 0.02f, true));
    clo_contexts_.reserve(static_cast<size_t>(num_clothes));
    for (int i = 0; i < num_clothes; ++i)
        clo_contexts_.push_back(Tensor::randn({context_len, token_dim}, rng, 0.02f, true));
}

namespace {
std::vector<Tensor> assemble_prompt(const TextEncoderStub& enc, const std::vector<int>& prefix,
                                    const Tensor& context, const std::vector<int>& suffix) {
    std::vector<Tensor> tokens;
    tokens.reserve(prefix.size() + static_cast<size_t>(context.dim(0)) + suffix.size());
    for (int id : prefix) tokens.push_back(enc.token_embedding(id));
    for (int j = 0; j < context.dim(0); ++j) tokens.push_back(row(context, j));
    for (int id : suffix) tokens.push_back(enc.token_embedding(id));
    return tokens;
}
} // namespace

std::vector<Tensor> PromptBank::id_prompt(const TextEncoderStub& enc, int pid_index) const {
    return assemble_prompt(enc, vocab::id_prefix(), id_context(pid_index), vocab::id_suffix());
}

std::vector<Tensor> PromptBank::clo_prompt(const TextEncoderStub& enc, int clothes_index) const {
    return assemble_prompt(enc, vocab::clo_prefix(), clo_context(clothes_index), vocab::clo_suffix());
}

Tensor PromptBank::id_context(int pid_index) const {
    if (pid_index < 0 || pid_index >= num_pids())
        throw ContractError("prompt bank: pid index " + std::to_string(pid_index) + " out of range [0, " +
                            std::to_string(num_pids()) + ")");
    return id_contexts_[static_cast<size_t>(pid_index)];
}

Tensor PromptBank::clo_context(int clothes_index) const {
    if (clothes_index < 0 || clothes_index >= num_clothes())
        throw ContractError("prompt bank: clothes index " + std::to_string(clothes_index) +
                            " out of range [0, " + std::to_string(num_clothes()) + ")");
    return clo_contexts_[static_cast<size_t>(clothes_index)];
}

std::vector<Tensor> PromptBank::parameters() const {
    std::vector<Tensor> out;
    out.reserve(id_contexts_.size() + clo_contexts_.size());
    out.insert(out.end(), id_contexts_.begin(), id_contexts_.end());
    out.insert(out.end(), clo_contexts_.begin(), clo_contexts_.end());
    return out;
}

std::vector<NamedParam> PromptBank::named_parameters() {
    std::vector<NamedParam> out;
    for (size_t i = 0; i < id_contexts_.size(); ++i)
        out.emplace_back("bank.id_ctx." + std::to_string(i), id_contexts_[i]);
    for (size_t i = 0; i < clo_contexts_.size(); ++i)
        out.emplace_back("bank.clo_ctx." + std::to_string(i), clo_contexts_[i]);
    return out;
}

uint64_t PromptBank::checksum() const {
    auto params = parameters();
    return params_checksum(params);
}

ClothesIndex clo_pairing(std::span<const SampleMeta> samples) {
    ClothesIndex index;
    for (const SampleMeta& m : samples) {
        auto [it, inserted] = index.clothes_to_pid.emplace(m.clothes_id, m.pid);
        if (!inserted && it->second != m.pid)
            throw DataError("clothes id " + std::to_string(m.clothes_id) +
                            " is shared by pids " + std::to_string(it->second) + " and " +
                            std::to_string(m.pid));
    }
    for (const auto& [clothes_id, pid] : index.clothes_to_pid)
        index.pid_to_clothes[pid].push_back(clothes_id);
    return index;
}

std::vector<std::vector<int>> LabelSpace::pid_clothes() const {
    std::vector<std::vector<int>> out(static_cast<size_t>(num_pids()));
    for (int c = 0; c < num_clothes(); ++c)
        out[static_cast<size_t>(clothes_owner[static_cast<size_t>(c)])].push_back(c);
    return out;
}

LabelSpace LabelSpace::from_train_split(const Dataset& dataset) {
    std::vector<SampleMeta> train;
    for (const SampleMeta& m : dataset.meta)
        if (m.split == Split::Train) train.push_back(m);
    if (train.empty()) throw DataError("dataset has no train split");
    const ClothesIndex index = clo_pairing(train);

    LabelSpace space;
    for (const auto& [pid, clothes] : index.pid_to_clothes) space.pid_values.push_back(pid);
    std::sort(space.pid_values.begin(), space.pid_values.end());
    for (size_t i = 0; i < space.pid_values.size(); ++i)
        space.pid_index[space.pid_values[i]] = static_cast<int>(i);
    for (const auto& [clothes_id, pid] : index.clothes_to_pid) space.clothes_values.push_back(clothes_id);
    std::sort(space.clothes_values.begin(), space.clothes_values.end());
    for (size_t i = 0; i < space.clothes_values.size(); ++i) {
        space.clothes_index[space.clothes_values[i]] = static_cast<int>(i);
        space.clothes_owner.push_back(space.pid_index.at(index.clothes_to_pid.at(space.clothes_values[i])));
    }
    return space;
}

Tensor project(const Tensor& clothes_f, const Tensor& id_f) {
    if (clothes_f.shape() != id_f.shape() || id_f.ndim() != 1)
        throw ShapeError("project: expected equal-length vectors, got " + shape_str(clothes_f.shape()) +
                         " and " + shape_str(id_f.shape()));
    double norm_sq = 0.0;
    for (float v : id_f.data()) norm_sq += static_cast<double>(v) * v;
    if (norm_sq < 1e-24)
        throw DegenerateVectorError("project: zero-norm identity feature");
    Tensor coef = div(dot(clothes_f, id_f), dot(id_f, id_f));
    return scale_by(id_f, coef);
}

Tensor orthogonalize(const Tensor& id_f, const Tensor& projected) {
    return sub(id_f, projected);
}

Tensor sse_similarity_loss(const std::vector<Tensor>& ortho_rows,
                           const std::vector<Tensor>& id_rows,
                           const std::vector<Tensor>& clothes_rows,
                           const SseLossWeights& weights) {
    if (weights.lambda1 < 0.0f || weights.lambda2 < 0.0f)
        throw ContractError("sse_similarity_loss: lambda weights must be >= 0");
    const size_t n = ortho_rows.size();
    if (n == 0 || id_rows.size() != n || clothes_rows.size() != n)
        throw ContractError("sse_similarity_loss: row lists must be equal-length and non-empty");
    Tensor acc = Tensor::scalar(0.0f);
    for (size_t i = 0; i < n; ++i) {
        Tensor sim_id = cosine_sim(ortho_rows[i], id_rows[i]);
        Tensor sim_clo = cosine_sim(ortho_rows[i], clothes_rows[i]);
        Tensor term = add(scale(sub(Tensor::scalar(1.0f), sim_id), weights.lambda1),
                          scale(sim_clo, weights.lambda2));
        acc = add(acc, term);
    }
    return scale(acc, 1.0f / static_cast<float>(n));
}

Tensor i2t_loss(const Tensor& visual, const Tensor& texts, const Tensor& scale_t) {
    if (visual.ndim() != 2 || visual.dim(0) < 1)
        throw ContractError("i2t_loss: empty batch");
    if (visual.shape() != texts.shape())
        throw ShapeError("i2t_loss: visual " + shape_str(visual.shape()) + " vs texts " +
                         shape_str(texts.shape()));
    const int n = visual.dim(0);
    Tensor sims = scale_by(matmul(l2_normalize_rows(visual), transpose(l2_normalize_rows(texts))), scale_t);
    Tensor logp = log_softmax(sims, -1);
    std::vector<float> mask(static_cast<size_t>(n) * n, 0.0f);
    for (int i = 0; i < n; ++i) mask[static_cast<size_t>(i) * n + i] = -1.0f / static_cast<float>(n);
    return sum(mul(logp, Tensor::from_data({n, n}, std::move(mask))));
}

Tensor t2i_loss(const Tensor& visual, const std::vector<int>& labels,
                const Tensor& text_table, const Tensor& scale_t, int* skipped) {
    if (visual.ndim() != 2 || visual.dim(0) < 1)
        throw ContractError("t2i_loss: empty batch");
    const int n = visual.dim(0);
    if (static_cast<int>(labels.size()) != n)
        throw ContractError("t2i_loss: labels size " + std::to_string(labels.size()) +
                            " does not match batch " + std::to_string(n));
    const int num_classes = text_table.dim(0);
    for (int y : labels)
        if (y < 0 || y >= num_classes)
            throw ContractError("t2i_loss: label " + std::to_string(y) + " out of range [0, " +
                                std::to_string(num_classes) + ")");

    // sims[y][k]: text y against image k; each positive image contributes
    // -1/N through its identity's log-softmax row.
    Tensor sims = scale_by(matmul(l2_normalize_rows(text_table), transpose(l2_normalize_rows(visual))), scale_t);
    Tensor logp = log_softmax(sims, -1);
    std::vector<float> mask(static_cast<size_t>(num_classes) * n, 0.0f);
    for (int i = 0; i < n; ++i)
        mask[static_cast<size_t>(labels[static_cast<size_t>(i)]) * n + i] = -1.0f / static_cast<float>(n);
    if (skipped) {
        int present = 0;
        std::vector<char> seen(static_cast<size_t>(num_classes), 0);
        for (int y : labels)
            if (!seen[static_cast<size_t>(y)]) {
                seen[static_cast<size_t>(y)] = 1;
                ++present;
            }
        *skipped = num_classes - present;
    }
    return sum(mul(logp, Tensor::from_data({num_classes, n}, std::move(mask))));
}

TextFeatureSet compute_text_features(const PromptBank& bank, const TextEncoderStub& text_enc,
                                     const LabelSpace& labels, bool use_sse) {
    NoGradGuard no_grad;
    const int num_pids = labels.num_pids();
    std::vector<Tensor> id_rows;
    id_rows.reserve(static_cast<size_t>(num_pids));
    for (int i = 0; i < num_pids; ++i) id_rows.push_back(text_enc.encode(bank.id_prompt(text_enc, i)));

    TextFeatureSet set;
    set.id_features = stack_rows(id_rows);
    if (!use_sse || bank.num_clothes() == 0) {
        // Single-prompt variant: no clothing branch, refined features are the
        // identity features themselves.
        set.clothes_features = Tensor::zeros({0, text_enc.config().text_dim});
        set.projected = Tensor::zeros({num_pids, text_enc.config().text_dim});
        set.ortho = set.id_features;
        return set;
    }

    const int num_clothes = labels.num_clothes();
    std::vector<Tensor> clo_rows;
    clo_rows.reserve(static_cast<size_t>(num_clothes));
    for (int c = 0; c < num_clothes; ++c) clo_rows.push_back(text_enc.encode(bank.clo_prompt(text_enc, c)));
    set.clothes_features = stack_rows(clo_rows);

    // Identity-level clothing feature: mean over that identity's outfits.
    const auto per_pid = labels.pid_clothes();
    std::vector<Tensor> proj_rows, ortho_rows;
    proj_rows.reserve(static_cast<size_t>(num_pids));
    ortho_rows.reserve(static_cast<size_t>(num_pids));
    for (int i = 0; i < num_pids; ++i) {
        const std::vector<int>& outfits = per_pid[static_cast<size_t>(i)];
        Tensor mean_clo;
        if (outfits.empty()) {
            mean_clo = Tensor::zeros({text_enc.config().text_dim});
        } else {
            std::vector<Tensor> rows;
            rows.reserve(outfits.size());
            for (int c : outfits) rows.push_back(clo_rows[static_cast<size_t>(c)]);
            mean_clo = mean_rows(stack_rows(rows));
        }
        Tensor projected = project(mean_clo, id_rows[static_cast<size_t>(i)]);
        proj_rows.push_back(projected);
        ortho_rows.push_back(orthogonalize(id_rows[static_cast<size_t>(i)], projected));
    }
    set.projected = stack_rows(proj_rows);
    set.ortho = stack_rows(ortho_rows);
    return set;
}

Stage1Result train_stage1(PromptBank& bank, const TextEncoderStub& text_enc,
                          const VisualEncoderStub& visual_enc, const Dataset& dataset,
                          const LabelSpace& labels, const Tensor& logit_scale,
                          const Stage1Config& cfg) {
    if (!text_enc.frozen() || !visual_enc.frozen())
        throw ContractError("train_stage1: both encoders must be frozen");

    Stage1Result result;
    const std::vector<int> train = dataset.split_indices(Split::Train);
    const int batch_size = cfg.batch_p * cfg.batch_k;
    const int iters = std::max<int>(1, static_cast<int>(train.size()) / batch_size);

    Adam optimizer(bank.parameters(), AdamConfig{cfg.schedule.base_lr});
    Rng rng(mix_seed(cfg.seed, 0x51a6e1ull));

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        optimizer.set_lr(cfg.schedule.at(epoch - 1));
        double sum_i2t = 0.0, sum_t2i = 0.0, sum_sim = 0.0;
        for (int iter = 0; iter < iters; ++iter) {
            const PkBatch batch = pk_sample(dataset, cfg.batch_p, cfg.batch_k, rng);
            const int n = static_cast<int>(batch.indices.size());

            // Frozen visual side: plain feature rows, no tape.
            std::vector<Tensor> v_rows;
            v_rows.reserve(static_cast<size_t>(n));
            {
                NoGradGuard no_grad;
                for (int idx : batch.indices) {
                    auto img = dataset.image(idx);
                    Tensor image = Tensor::from_data({dataset.config.height, dataset.config.width, 3},
                                                     std::vector<float>(img.begin(), img.end()));
                    v_rows.push_back(visual_enc.encode(image).global);
                }
            }
            Tensor visual = stack_rows(v_rows);

            // Distinct prompt encodings, shared across the batch rows.
            std::map<int, Tensor> id_feats, clo_feats;
            std::vector<int> batch_pid_idx(static_cast<size_t>(n));
            std::vector<int> batch_clo_idx(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const SampleMeta& m = dataset.meta[static_cast<size_t>(batch.indices[static_cast<size_t>(i)])];
                batch_pid_idx[static_cast<size_t>(i)] = labels.pid_index.at(m.pid);
                batch_clo_idx[static_cast<size_t>(i)] = labels.clothes_index.at(m.clothes_id);
            }
            for (int i = 0; i < n; ++i) {
                const int pi = batch_pid_idx[static_cast<size_t>(i)];
                if (!id_feats.count(pi)) id_feats.emplace(pi, text_enc.encode(bank.id_prompt(text_enc, pi)));
                if (cfg.use_sse) {
                    const int ci = batch_clo_idx[static_cast<size_t>(i)];
                    if (!clo_feats.count(ci)) clo_feats.emplace(ci, text_enc.encode(bank.clo_prompt(text_enc, ci)));
                }
            }

            std::vector<Tensor> ortho_rows(static_cast<size_t>(n));
            std::vector<Tensor> id_rows(static_cast<size_t>(n));
            std::vector<Tensor> clo_rows(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                Tensor id_f = id_feats.at(batch_pid_idx[static_cast<size_t>(i)]);
                id_rows[static_cast<size_t>(i)] = id_f;
                if (cfg.use_sse) {
                    Tensor clo_f = clo_feats.at(batch_clo_idx[static_cast<size_t>(i)]);
                    clo_rows[static_cast<size_t>(i)] = clo_f;
                    ortho_rows[static_cast<size_t>(i)] = orthogonalize(id_f, project(clo_f, id_f));
                } else {
                    ortho_rows[static_cast<size_t>(i)] = id_f;
                }
            }

            // Per-identity text table for the text-to-image direction.
            std::vector<Tensor> table_rows;
            std::vector<int> table_labels(static_cast<size_t>(n));
            {
                std::map<int, int> row_of;
                for (int i = 0; i < n; ++i) {
                    const int pi = batch_pid_idx[static_cast<size_t>(i)];
                    auto [it, inserted] = row_of.emplace(pi, static_cast<int>(table_rows.size()));
                    if (inserted) table_rows.push_back(ortho_rows[static_cast<size_t>(i)]);
                    table_labels[static_cast<size_t>(i)] = it->second;
                }
            }

            Tensor scale_mult = exp(logit_scale);
            Tensor loss_i2t = i2t_loss(visual, stack_rows(ortho_rows), scale_mult);
            Tensor loss_t2i = t2i_loss(visual, table_labels, stack_rows(table_rows), scale_mult);
            Tensor loss_sim = cfg.use_sse
                                  ? sse_similarity_loss(ortho_rows, id_rows, clo_rows, cfg.weights)
                                  : Tensor::scalar(0.0f);
            Tensor total = add(add(loss_i2t, loss_t2i), loss_sim);

            sum_i2t += loss_i2t.item();
            sum_t2i += loss_t2i.item();
            sum_sim += loss_sim.item();

            optimizer.zero_grad();
            backward(total);
            for (Tensor p : bank.parameters()) p.grad_mut(); // untouched contexts: explicit zero grad
            optimizer.step();
        }
        EpochLossRow rowlog;
        rowlog.epoch = epoch;
        rowlog.i2t = static_cast<float>(sum_i2t / iters);
        rowlog.t2i = static_cast<float>(sum_t2i / iters);
        rowlog.sim = static_cast<float>(sum_sim / iters);
        rowlog.total = rowlog.i2t + rowlog.t2i + rowlog.sim;
        result.log.push_back(rowlog);
    }

    result.cache = compute_text_features(bank, text_enc, labels, cfg.use_sse);
    return result;
}

} // namespace sci
