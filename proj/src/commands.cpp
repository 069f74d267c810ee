#include "sci/commands.hpp"

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>

namespace sci {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

void refuse_existing(const fs::path& target, bool force) {
    if (!force && fs::exists(target))
        throw ContractError(target.string() + " exists; pass --force to overwrite");
}

std::ofstream open_out(const fs::path& target) {
    std::ofstream os(target);
    if (!os) throw IoError("cannot write " + target.string());
    return os;
}

ordered_json config_record(const RunConfig& cfg) {
    ordered_json j;
    j["record"] = "config";
    j["config"] = cfg.to_json();
    return j;
}

ordered_json metrics_record(const std::string& protocol, const EvalResult& result, int k_max) {
    auto rank_at = [&](int k) { return result.cmc[static_cast<size_t>(std::min(k, k_max) - 1)]; };
    ordered_json j;
    j["record"] = "metrics";
    j["protocol"] = protocol;
    j["rank1"] = rank_at(1);
    j["rank5"] = rank_at(5);
    j["rank10"] = rank_at(10);
    j["map"] = result.map;
    j["num_valid_queries"] = result.num_valid_queries;
    j["num_skipped_queries"] = result.num_skipped_queries;
    j["cmc"] = result.cmc;
    return j;
}

std::map<std::string, EvalResult> evaluate_model(const Model& model, const Dataset& dataset,
                                                 const std::vector<Protocol>& protocols, int k_max) {
    const std::vector<int> query = dataset.split_indices(Split::Query);
    const std::vector<int> gallery = dataset.split_indices(Split::Gallery);
    if (query.empty() || gallery.empty())
        throw DataError("dataset has no query/gallery split");
    Tensor q_emb = embed_rows(model, dataset, query);
    Tensor g_emb = embed_rows(model, dataset, gallery);
    std::vector<SampleMeta> q_meta, g_meta;
    for (int i : query) q_meta.push_back(dataset.meta[static_cast<size_t>(i)]);
    for (int i : gallery) g_meta.push_back(dataset.meta[static_cast<size_t>(i)]);

    std::map<std::string, EvalResult> results;
    for (Protocol p : protocols)
        results.emplace(to_string(p), evaluate(q_emb, q_meta, g_emb, g_meta, p, k_max));
    return results;
}

struct TrainedModel {
    Model model;
    Stage1Result stage1;
    Stage2Result stage2;
};

TrainedModel run_training(const RunConfig& cfg, const Dataset& dataset) {
    TrainedModel run{Model::build(cfg, dataset), {}, {}};
    Model& model = run.model;
    model.text_enc.set_frozen(true);
    model.visual_enc.set_frozen(true);
    run.stage1 = train_stage1(model.bank, model.text_enc, model.visual_enc, dataset, model.labels,
                              model.logit_scale, stage1_config_from(cfg));
    model.cache = run.stage1.cache;
    model.cache_ready = true;
    run.stage2 = train_stage2(model, dataset, stage2_config_from(cfg));
    return run;
}

} // namespace

Dataset acquire_dataset(const RunConfig& cfg) {
    if (!cfg.dataset_path.empty()) return load_dataset(cfg.dataset_path);
    SynthConfig synth = cfg.synth;
    return generate(synth);
}

void cmd_gen(RunConfig cfg, bool force, std::ostream& out) {
    cfg.apply_seed_inheritance();
    cfg.validate();
    if (!cfg.dataset_path.empty())
        throw ContractError("gen: config names an existing dataset path; use an inline synth config");
    const fs::path dir = cfg.out_dir;
    refuse_existing(dir / "manifest.json", force);

    Dataset ds = generate(cfg.synth);
    save_dataset(ds, dir);

    std::map<std::string, int> split_counts;
    for (const SampleMeta& m : ds.meta) ++split_counts[to_string(m.split)];
    out << "wrote " << ds.size() << " images to " << dir.string() << "\n";
    out << "  pids: " << cfg.synth.num_pids << ", clothes classes: " << ds.num_clothes()
        << ", cameras: " << cfg.synth.cams << "\n";
    for (const auto& [name, count] : split_counts) out << "  " << name << ": " << count << "\n";
}

void cmd_train(RunConfig cfg, bool force, std::ostream& out) {
    cfg.apply_seed_inheritance();
    cfg.validate();
    const fs::path dir = cfg.out_dir;
    const fs::path ckpt_path = dir / "checkpoint.bin";
    const fs::path log_path = dir / "train_log.jsonl";
    refuse_existing(ckpt_path, force);
    fs::create_directories(dir);

    Dataset dataset = acquire_dataset(cfg);
    TrainedModel run = run_training(cfg, dataset);

    std::ofstream log = open_out(log_path);
    log << config_record(cfg).dump() << "\n";
    for (const EpochLossRow& r : run.stage1.log) {
        ordered_json j;
        j["record"] = "stage1";
        j["epoch"] = r.epoch;
        j["i2t"] = r.i2t;
        j["t2i"] = r.t2i;
        j["sim"] = r.sim;
        j["total"] = r.total;
        log << j.dump() << "\n";
    }
    for (const Stage2LossRow& r : run.stage2.log) {
        ordered_json j;
        j["record"] = "stage2";
        j["epoch"] = r.epoch;
        j["id"] = r.id;
        j["cal"] = r.cal;
        j["i2tce"] = r.i2tce;
        j["total"] = r.total;
        j["clf"] = r.clf;
        log << j.dump() << "\n";
    }

    Checkpoint ckpt = checkpoint_from_model(run.model, &run.stage2.main_state, &run.stage2.clf_state);
    save_checkpoint(ckpt, ckpt_path);

    out << "stage 1: " << run.stage1.log.size() << " epochs";
    if (!run.stage1.log.empty())
        out << " (total " << run.stage1.log.front().total << " -> " << run.stage1.log.back().total << ")";
    out << "\n";
    out << "stage 2: " << run.stage2.log.size() << " epochs";
    if (!run.stage2.log.empty())
        out << " (total " << run.stage2.log.front().total << " -> " << run.stage2.log.back().total << ")";
    out << "\n";
    out << "checkpoint: " << ckpt_path.string() << "\n";
    out << "training log: " << log_path.string() << "\n";
}

void cmd_eval(const fs::path& checkpoint_path, const fs::path& dataset_dir,
              const std::vector<Protocol>& protocols, int k_max,
              const fs::path& out_dir, bool force, std::ostream& out) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    RunConfig cfg = RunConfig::from_json(nlohmann::json::parse(ckpt.config_json));
    if (!dataset_dir.empty()) cfg.dataset_path = dataset_dir.string();
    if (!protocols.empty()) cfg.protocols = protocols;
    if (k_max > 0) cfg.k_max = k_max;
    if (!out_dir.empty()) cfg.out_dir = out_dir.string();

    const fs::path metrics_path = fs::path(cfg.out_dir) / "metrics.jsonl";
    refuse_existing(metrics_path, force);
    fs::create_directories(cfg.out_dir);

    Dataset dataset = acquire_dataset(cfg);
    Model model = Model::build(cfg, dataset);
    load_model_params(model, ckpt);

    const auto results = evaluate_model(model, dataset, cfg.protocols, cfg.k_max);

    std::ofstream os = open_out(metrics_path);
    os << config_record(cfg).dump() << "\n";
    for (const auto& [name, result] : results) {
        const ordered_json j = metrics_record(name, result, cfg.k_max);
        os << j.dump() << "\n";
        out << std::fixed << std::setprecision(4) << name << ": rank1 " << j["rank1"].get<float>()
            << "  rank5 " << j["rank5"].get<float>() << "  map " << result.map << "  ("
            << result.num_valid_queries << " queries)\n";
    }
    out << "metrics: " << metrics_path.string() << "\n";
}

std::vector<AblationRow> cmd_ablate(RunConfig cfg, bool force, std::ostream& out) {
    cfg.apply_seed_inheritance();
    cfg.validate();
    const fs::path dir = cfg.out_dir;
    const fs::path table_path = dir / "ablation.jsonl";
    refuse_existing(table_path, force);
    fs::create_directories(dir);

    Dataset dataset = acquire_dataset(cfg);

    struct VariantSpec {
        const char* name;
        bool use_sse;
        bool use_sim;
    };
    const VariantSpec variants[] = {
        {"baseline", false, false}, {"sse", true, false}, {"sim", false, true}, {"full", true, true}};

    std::vector<AblationRow> rows;
    std::map<std::string, std::map<std::string, EvalResult>> all_results;
    for (const VariantSpec& v : variants) {
        RunConfig vcfg = cfg;
        vcfg.use_sse = v.use_sse;
        vcfg.use_sim = v.use_sim;
        TrainedModel run = run_training(vcfg, dataset);
        auto results = evaluate_model(run.model, dataset, cfg.protocols, cfg.k_max);
        for (const auto& [proto, result] : results) {
            AblationRow rowv;
            rowv.variant = v.name;
            rowv.protocol = proto;
            rowv.rank1 = result.rank(1);
            rowv.rank5 = result.rank(std::min(5, cfg.k_max));
            rowv.map = result.map;
            rows.push_back(rowv);
        }
        all_results[v.name] = std::move(results);
        out << "trained variant " << v.name << "\n";
    }

    std::ofstream os = open_out(table_path);
    os << config_record(cfg).dump() << "\n";
    for (const AblationRow& r : rows) {
        ordered_json j;
        j["record"] = "ablation";
        j["variant"] = r.variant;
        j["protocol"] = r.protocol;
        j["rank1"] = r.rank1;
        j["rank5"] = r.rank5;
        j["map"] = r.map;
        os << j.dump() << "\n";
    }

    out << std::fixed << std::setprecision(4);
    out << "\nvariant     protocol         rank1    rank5    mAP\n";
    for (const AblationRow& r : rows)
        out << std::left << std::setw(12) << r.variant << std::setw(16) << r.protocol << " "
            << std::setw(8) << r.rank1 << " " << std::setw(8) << r.rank5 << " " << r.map << "\n";

    const std::string cc = to_string(Protocol::ClothChanging);
    if (all_results.count("full") && all_results.count("baseline") &&
        all_results["full"].count(cc)) {
        const float margin = all_results["full"][cc].rank(1) - all_results["baseline"][cc].rank(1);
        out << "\nfull - baseline margin on " << cc << " rank1: " << margin << "\n";
    }
    out << "table: " << table_path.string() << "\n";
    return rows;
}

} // namespace sci
