#include "sci/runconfig.hpp"

#include <fstream>

namespace sci {

using ordered_json = nlohmann::ordered_json;

void RunConfig::validate() const {
    if (!seed_set) throw ContractError("run config: seed is mandatory (config file or --seed)");
    if (context_len < 1) throw ContractError("run config: context_len must be >= 1");
    if (batch_p < 1 || batch_k < 1) throw ContractError("run config: batch p/k must be >= 1");
    if (stage1_epochs < 0 || stage2_epochs < 0)
        throw ContractError("run config: epochs must be >= 0");
    if (stage1_lr <= 0.0f || stage2_lr <= 0.0f)
        throw ContractError("run config: learning rates must be positive");
    if (smoothing < 0.0f || smoothing >= 1.0f)
        throw ContractError("run config: smoothing must be in [0, 1)");
    if (cal_tau <= 0.0f) throw ContractError("run config: cal_tau must be positive");
    if (sse_weights.lambda1 < 0.0f || sse_weights.lambda2 < 0.0f)
        throw ContractError("run config: lambda weights must be >= 0");
    if (k_max < 1) throw ContractError("run config: k_max must be >= 1");
    if (protocols.empty()) throw ContractError("run config: protocol list must not be empty");
    encoder.validate();
    if (dataset_path.empty()) {
        synth.validate();
        if (synth.height != encoder.height || synth.width != encoder.width)
            throw ContractError("run config: synth image size must match encoder height/width");
    }
}

ordered_json RunConfig::to_json() const {
    ordered_json j;
    j["seed"] = seed;
    j["out_dir"] = out_dir;
    if (!dataset_path.empty()) {
        j["dataset"] = ordered_json{{"path", dataset_path}};
    } else {
        ordered_json s;
        s["num_pids"] = synth.num_pids;
        s["outfits_per_pid"] = synth.outfits_per_pid;
        s["cams"] = synth.cams;
        s["images_per"] = synth.images_per;
        s["height"] = synth.height;
        s["width"] = synth.width;
        s["id_signal"] = synth.id_signal;
        s["clo_signal"] = synth.clo_signal;
        s["noise_sigma"] = synth.noise_sigma;
        s["preset"] = to_string(synth.preset);
        s["seed"] = synth.seed;
        j["dataset"] = ordered_json{{"synth", std::move(s)}};
    }
    ordered_json e;
    e["height"] = encoder.height;
    e["width"] = encoder.width;
    e["patch"] = encoder.patch;
    e["channels"] = encoder.channels;
    e["token_dim"] = encoder.token_dim;
    e["text_dim"] = encoder.text_dim;
    e["vocab_size"] = encoder.vocab_size;
    e["max_seq_len"] = encoder.max_seq_len;
    e["heads"] = encoder.heads;
    j["encoder"] = std::move(e);
    j["context_len"] = context_len;
    j["use_sse"] = use_sse;
    j["use_sim"] = use_sim;
    j["lambda1"] = sse_weights.lambda1;
    j["lambda2"] = sse_weights.lambda2;
    j["logit_scale_init"] = logit_scale_init;
    j["cal_tau"] = cal_tau;
    j["smoothing"] = smoothing;
    j["batch_p"] = batch_p;
    j["batch_k"] = batch_k;
    j["stage1"] = ordered_json{{"epochs", stage1_epochs}, {"lr", stage1_lr}, {"schedule", "cosine"}};
    j["stage2"] = ordered_json{{"epochs", stage2_epochs},
                               {"lr", stage2_lr},
                               {"schedule", "step_decay"},
                               {"milestones", stage2_milestones},
                               {"decay", stage2_decay}};
    ordered_json plist = ordered_json::array();
    for (Protocol p : protocols) plist.push_back(to_string(p));
    j["protocols"] = std::move(plist);
    j["k_max"] = k_max;
    return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig cfg;
    auto get = [&j](const char* key, auto& out) {
        if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
    };
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<uint64_t>();
        cfg.seed_set = true;
    }
    get("out_dir", cfg.out_dir);
    if (j.contains("dataset")) {
        const auto& d = j.at("dataset");
        if (d.contains("path")) {
            cfg.dataset_path = d.at("path").get<std::string>();
        } else if (d.contains("synth")) {
            const auto& s = d.at("synth");
            auto gets = [&s](const char* key, auto& out) {
                if (s.contains(key)) out = s.at(key).get<std::decay_t<decltype(out)>>();
            };
            gets("num_pids", cfg.synth.num_pids);
            gets("outfits_per_pid", cfg.synth.outfits_per_pid);
            gets("cams", cfg.synth.cams);
            gets("images_per", cfg.synth.images_per);
            gets("height", cfg.synth.height);
            gets("width", cfg.synth.width);
            gets("id_signal", cfg.synth.id_signal);
            gets("clo_signal", cfg.synth.clo_signal);
            gets("noise_sigma", cfg.synth.noise_sigma);
            if (s.contains("preset")) cfg.synth.preset = camera_preset_from_string(s.at("preset"));
            if (s.contains("seed")) {
                cfg.synth.seed = s.at("seed").get<uint64_t>();
                cfg.synth_seed_set = true;
            }
        }
    }
    if (j.contains("encoder")) {
        const auto& e = j.at("encoder");
        auto gete = [&e](const char* key, auto& out) {
            if (e.contains(key)) out = e.at(key).get<std::decay_t<decltype(out)>>();
        };
        gete("height", cfg.encoder.height);
        gete("width", cfg.encoder.width);
        gete("patch", cfg.encoder.patch);
        gete("channels", cfg.encoder.channels);
        gete("token_dim", cfg.encoder.token_dim);
        gete("text_dim", cfg.encoder.text_dim);
        gete("vocab_size", cfg.encoder.vocab_size);
        gete("max_seq_len", cfg.encoder.max_seq_len);
        gete("heads", cfg.encoder.heads);
    }
    get("context_len", cfg.context_len);
    get("use_sse", cfg.use_sse);
    get("use_sim", cfg.use_sim);
    get("lambda1", cfg.sse_weights.lambda1);
    get("lambda2", cfg.sse_weights.lambda2);
    get("logit_scale_init", cfg.logit_scale_init);
    get("cal_tau", cfg.cal_tau);
    get("smoothing", cfg.smoothing);
    get("batch_p", cfg.batch_p);
    get("batch_k", cfg.batch_k);
    if (j.contains("stage1")) {
        const auto& s = j.at("stage1");
        if (s.contains("epochs")) cfg.stage1_epochs = s.at("epochs").get<int>();
        if (s.contains("lr")) cfg.stage1_lr = s.at("lr").get<float>();
    }
    if (j.contains("stage2")) {
        const auto& s = j.at("stage2");
        if (s.contains("epochs")) cfg.stage2_epochs = s.at("epochs").get<int>();
        if (s.contains("lr")) cfg.stage2_lr = s.at("lr").get<float>();
        if (s.contains("milestones")) cfg.stage2_milestones = s.at("milestones").get<std::vector<int>>();
        if (s.contains("decay")) cfg.stage2_decay = s.at("decay").get<float>();
    }
    if (j.contains("protocols")) {
        cfg.protocols.clear();
        for (const auto& p : j.at("protocols")) cfg.protocols.push_back(protocol_from_string(p));
    }
    get("k_max", cfg.k_max);
    // The encoder and the synthetic generator must agree on image geometry;
    // inherit when only one side was given.
    if (j.contains("dataset") && j.at("dataset").contains("synth") && !j.contains("encoder")) {
        cfg.encoder.height = cfg.synth.height;
        cfg.encoder.width = cfg.synth.width;
    } else if (j.contains("encoder") && cfg.dataset_path.empty() &&
               !(j.contains("dataset") && j.at("dataset").contains("synth"))) {
        cfg.synth.height = cfg.encoder.height;
        cfg.synth.width = cfg.encoder.width;
    }
    return cfg;
}

RunConfig RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("run config: cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("run config: malformed JSON in " + path.string() + ": " + e.what());
    }
    try {
        return from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("run config: bad field in " + path.string() + ": " + e.what());
    }
}

} // namespace sci
