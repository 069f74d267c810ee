#include "sci/pipeline.hpp"

#include <cmath>

#include "sci/kernels.hpp"

namespace sci {

namespace {
enum SeedStream : uint64_t {
    kStreamText = 0x7e47,
    kStreamVisual = 0x715a,
    kStreamBank = 0xba4c,
    kStreamSim = 0x51b0,
    kStreamHeads = 0x6ead,
    kStreamStage1 = 0x57a1,
    kStreamStage2 = 0x57a2,
};

Tensor image_tensor(const Dataset& dataset, int index) {
    auto img = dataset.image(index);
    return Tensor::from_data({dataset.config.height, dataset.config.width, 3},
                             std::vector<float>(img.begin(), img.end()));
}
} // namespace

Model Model::build(const RunConfig& cfg, const Dataset& dataset) {
    cfg.validate();
    if (dataset.config.height != cfg.encoder.height || dataset.config.width != cfg.encoder.width)
        throw ContractError("model: dataset image size " + std::to_string(dataset.config.height) + "x" +
                            std::to_string(dataset.config.width) + " does not match encoder config " +
                            std::to_string(cfg.encoder.height) + "x" + std::to_string(cfg.encoder.width));

    Model m;
    m.cfg = cfg;
    m.labels = LabelSpace::from_train_split(dataset);

    const Rng root(cfg.seed);
    Rng text_rng = root.fork(kStreamText);
    Rng visual_rng = root.fork(kStreamVisual);
    Rng bank_rng = root.fork(kStreamBank);
    Rng sim_rng = root.fork(kStreamSim);
    Rng heads_rng = root.fork(kStreamHeads);

    m.text_enc = TextEncoderStub(cfg.encoder, text_rng);
    m.visual_enc = VisualEncoderStub(cfg.encoder, visual_rng);
    m.bank = PromptBank(m.labels.num_pids(), cfg.use_sse ? m.labels.num_clothes() : 0,
                        cfg.context_len, cfg.encoder.token_dim, bank_rng);
    if (cfg.use_sim) {
        const int channels = cfg.encoder.text_dim;
        m.nonlocal = NonLocalBlock(channels, std::max(1, channels / 2), sim_rng);
        m.refiner = CrossAttnRefiner(channels, sim_rng);
    }
    m.id_head = IdHead(m.labels.num_pids(), cfg.encoder.text_dim, heads_rng);
    m.cal_head = CalHead(m.labels.num_clothes(), cfg.encoder.text_dim, cfg.cal_tau,
                         m.labels.clothes_owner, heads_rng);
    m.logit_scale = Tensor::scalar(cfg.logit_scale_init, true);
    return m;
}

std::vector<Tensor> Model::stage2_main_params() const {
    std::vector<Tensor> params = visual_enc.parameters();
    if (cfg.use_sim) {
        auto nl = nonlocal.parameters();
        params.insert(params.end(), nl.begin(), nl.end());
        auto rf = refiner.parameters();
        params.insert(params.end(), rf.begin(), rf.end());
    }
    auto id = id_head.parameters();
    params.insert(params.end(), id.begin(), id.end());
    params.push_back(logit_scale);
    return params;
}

Tensor forward_pooled(const Model& model, const Tensor& image) {
    VisualEncoderStub::Features feats = model.visual_enc.encode(image);
    if (!model.cfg.use_sim) return feats.global;
    if (!model.cache_ready)
        throw ContractError("forward: refinement pipeline needs the stage-1 text feature cache");
    Tensor original = feats.tokens;
    Tensor contextual = model.nonlocal.forward(original);
    Tensor attended = model.refiner.attend(contextual, model.cache.ortho);
    Tensor delta = model.refiner.refine(attended);
    Tensor fused = model.refiner.fuse(original, delta);
    return mean_rows(fused);
}

Tensor extract_embedding(const Model& model, const Tensor& image) {
    NoGradGuard no_grad;
    return l2_normalize(forward_pooled(model, image));
}

Tensor embed_rows(const Model& model, const Dataset& dataset, std::span<const int> indices) {
    const int n = static_cast<int>(indices.size());
    const int d = model.cfg.encoder.text_dim;
    Tensor out = Tensor::zeros({n, d});
    auto out_data = out.data();
    kernels::parallel_for(n, [&](int64_t i) {
        Tensor emb = extract_embedding(model, image_tensor(dataset, indices[static_cast<size_t>(i)]));
        auto e = emb.data();
        std::copy(e.begin(), e.end(), out_data.begin() + static_cast<size_t>(i) * d);
    });
    return out;
}

Stage1Config stage1_config_from(const RunConfig& cfg) {
    Stage1Config s;
    s.epochs = cfg.stage1_epochs;
    s.schedule = LrSchedule{LrSchedule::Kind::Cosine, cfg.stage1_lr, std::max(1, cfg.stage1_epochs), {}, 0.1f};
    s.batch_p = cfg.batch_p;
    s.batch_k = cfg.batch_k;
    s.weights = cfg.sse_weights;
    s.seed = mix_seed(cfg.seed, kStreamStage1);
    s.use_sse = cfg.use_sse;
    return s;
}

Stage2Config stage2_config_from(const RunConfig& cfg) {
    Stage2Config s;
    s.epochs = cfg.stage2_epochs;
    s.schedule = LrSchedule{LrSchedule::Kind::StepDecay, cfg.stage2_lr, std::max(1, cfg.stage2_epochs),
                            cfg.stage2_milestones, cfg.stage2_decay};
    s.batch_p = cfg.batch_p;
    s.batch_k = cfg.batch_k;
    s.smoothing = cfg.smoothing;
    s.seed = mix_seed(cfg.seed, kStreamStage2);
    return s;
}

Stage2Result train_stage2(Model& model, const Dataset& dataset, const Stage2Config& cfg) {
    if (!model.cache_ready)
        throw ContractError("train_stage2: stage-1 text feature cache missing");

    model.visual_enc.set_frozen(false);
    Adam main_opt(model.stage2_main_params(), AdamConfig{cfg.schedule.base_lr});
    Adam clf_opt(model.cal_head.parameters(), AdamConfig{cfg.schedule.base_lr});
    Rng rng(mix_seed(cfg.seed, 0x57a9e2ull));

    const std::vector<int> train = dataset.split_indices(Split::Train);
    const int batch_size = cfg.batch_p * cfg.batch_k;
    const int iters = std::max<int>(1, static_cast<int>(train.size()) / batch_size);

    std::vector<Stage2LossRow> log;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const float lr = cfg.schedule.at(epoch - 1);
        main_opt.set_lr(lr);
        clf_opt.set_lr(lr);
        double sum_id = 0.0, sum_cal = 0.0, sum_i2tce = 0.0, sum_clf = 0.0;
        for (int iter = 0; iter < iters; ++iter) {
            const PkBatch batch = pk_sample(dataset, cfg.batch_p, cfg.batch_k, rng);
            const int n = static_cast<int>(batch.indices.size());

            std::vector<int> pid_labels(static_cast<size_t>(n));
            std::vector<int> clothes_labels(static_cast<size_t>(n));
            std::vector<Tensor> pooled_rows(static_cast<size_t>(n));
            for (int i = 0; i < n; ++i) {
                const int idx = batch.indices[static_cast<size_t>(i)];
                const SampleMeta& meta = dataset.meta[static_cast<size_t>(idx)];
                pid_labels[static_cast<size_t>(i)] = model.labels.pid_index.at(meta.pid);
                clothes_labels[static_cast<size_t>(i)] = model.labels.clothes_index.at(meta.clothes_id);
                pooled_rows[static_cast<size_t>(i)] = forward_pooled(model, image_tensor(dataset, idx));
            }
            Tensor pooled = stack_rows(pooled_rows);

            // (a) clothes classifier trains on detached features.
            Tensor clf_loss = id_loss(model.cal_head.logits(detach(pooled)), clothes_labels);
            sum_clf += clf_loss.item();
            clf_opt.zero_grad();
            backward(clf_loss);
            clf_opt.step();

            // (b) main step: classifier weights fixed, features adapt.
            Tensor loss_id = id_loss(model.id_head.logits(pooled), pid_labels);
            Tensor loss_cal = cal_loss(pooled, pid_labels, clothes_labels, model.cal_head);
            Tensor loss_i2tce = i2tce_loss(pooled, model.cache.ortho, pid_labels, cfg.smoothing,
                                           exp(model.logit_scale));
            Tensor total = add(add(loss_id, loss_cal), loss_i2tce);
            sum_id += loss_id.item();
            sum_cal += loss_cal.item();
            sum_i2tce += loss_i2tce.item();

            main_opt.zero_grad();
            backward(total);
            main_opt.step();
        }
        Stage2LossRow rowlog;
        rowlog.epoch = epoch;
        rowlog.id = static_cast<float>(sum_id / iters);
        rowlog.cal = static_cast<float>(sum_cal / iters);
        rowlog.i2tce = static_cast<float>(sum_i2tce / iters);
        rowlog.total = rowlog.id + rowlog.cal + rowlog.i2tce;
        rowlog.clf = static_cast<float>(sum_clf / iters);
        log.push_back(rowlog);
    }
    Stage2Result result;
    result.log = std::move(log);
    result.main_state = main_opt.state();
    result.clf_state = clf_opt.state();
    return result;
}

namespace {

void add_optimizer_section(Checkpoint& ckpt, const std::string& prefix, const AdamState& st) {
    ckpt.add("optimizer", prefix + ".step",
             Tensor::scalar(static_cast<float>(st.step)));
    for (size_t i = 0; i < st.m.size(); ++i) {
        ckpt.add("optimizer", prefix + ".m." + std::to_string(i),
                 Tensor::from_data({static_cast<int>(st.m[i].size())}, st.m[i]));
        ckpt.add("optimizer", prefix + ".v." + std::to_string(i),
                 Tensor::from_data({static_cast<int>(st.v[i].size())}, st.v[i]));
    }
}

} // namespace

Checkpoint checkpoint_from_model(Model& model, const AdamState* main_state, const AdamState* clf_state) {
    Checkpoint ckpt;
    ckpt.config_json = model.cfg.to_json().dump();
    for (auto& [name, t] : model.text_enc.named_parameters()) ckpt.add("encoders", name, t);
    for (auto& [name, t] : model.visual_enc.named_parameters()) ckpt.add("encoders", name, t);
    for (auto& [name, t] : model.bank.named_parameters()) ckpt.add("prompt_bank", name, t);
    if (model.cfg.use_sim) {
        for (auto& [name, t] : model.nonlocal.named_parameters()) ckpt.add("sim", name, t);
        for (auto& [name, t] : model.refiner.named_parameters()) ckpt.add("sim", name, t);
    }
    for (auto& [name, t] : model.id_head.named_parameters()) ckpt.add("heads", name, t);
    for (auto& [name, t] : model.cal_head.named_parameters()) ckpt.add("heads", name, t);
    ckpt.add("heads", "heads.logit_scale", model.logit_scale);
    if (model.cache_ready) {
        ckpt.add("f_ort", "cache.id_features", model.cache.id_features);
        ckpt.add("f_ort", "cache.clothes_features", model.cache.clothes_features);
        ckpt.add("f_ort", "cache.projected", model.cache.projected);
        ckpt.add("f_ort", "cache.ortho", model.cache.ortho);
    }
    if (main_state) add_optimizer_section(ckpt, "main", *main_state);
    if (clf_state) add_optimizer_section(ckpt, "clf", *clf_state);
    return ckpt;
}

namespace {

void restore_named(const Checkpoint& ckpt, const std::string& section_name,
                   std::vector<NamedParam> params) {
    const CheckpointSection* section = ckpt.find(section_name);
    if (!section) throw ContractError("checkpoint: missing section '" + section_name + "'");
    for (auto& [name, t] : params) {
        const TensorRecord* rec = section->find(name);
        if (!rec) throw ContractError("checkpoint: missing tensor '" + name + "'");
        if (rec->shape != t.shape())
            throw ContractError("checkpoint: tensor '" + name + "' has shape " + shape_str(rec->shape) +
                                ", model expects " + shape_str(t.shape()));
        std::copy(rec->data.begin(), rec->data.end(), t.data().begin());
    }
}

Tensor tensor_from_record(const TensorRecord& rec) {
    return Tensor::from_data(rec.shape, rec.data);
}

} // namespace

void load_model_params(Model& model, const Checkpoint& ckpt) {
    restore_named(ckpt, "encoders", model.text_enc.named_parameters());
    restore_named(ckpt, "encoders", model.visual_enc.named_parameters());
    restore_named(ckpt, "prompt_bank", model.bank.named_parameters());
    if (model.cfg.use_sim) {
        restore_named(ckpt, "sim", model.nonlocal.named_parameters());
        restore_named(ckpt, "sim", model.refiner.named_parameters());
    }
    restore_named(ckpt, "heads", model.id_head.named_parameters());
    restore_named(ckpt, "heads", model.cal_head.named_parameters());
    restore_named(ckpt, "heads", {{"heads.logit_scale", model.logit_scale}});
    if (const CheckpointSection* cache = ckpt.find("f_ort")) {
        auto need = [cache](const char* name) -> const TensorRecord& {
            const TensorRecord* rec = cache->find(name);
            if (!rec) throw ContractError(std::string("checkpoint: missing tensor '") + name + "'");
            return *rec;
        };
        model.cache.id_features = tensor_from_record(need("cache.id_features"));
        model.cache.clothes_features = tensor_from_record(need("cache.clothes_features"));
        model.cache.projected = tensor_from_record(need("cache.projected"));
        model.cache.ortho = tensor_from_record(need("cache.ortho"));
        if (model.cache.ortho.dim(0) != model.labels.num_pids())
            throw ContractError("checkpoint: cached text features cover " +
                                std::to_string(model.cache.ortho.dim(0)) + " identities, dataset has " +
                                std::to_string(model.labels.num_pids()));
        model.cache_ready = true;
    }
}

} // namespace sci
