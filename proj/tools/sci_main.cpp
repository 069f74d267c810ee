#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sci/commands.hpp"

namespace {

// Exit codes: 0 success, 1 usage error, 2 data/contract error.
constexpr int kUsageError = 1;
constexpr int kDataError = 2;

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_given = false;
    bool force = false;
};

sci::RunConfig resolve_config(const CommonArgs& args) {
    sci::RunConfig cfg;
    if (!args.config_path.empty()) cfg = sci::RunConfig::load_file(args.config_path);
    if (args.seed_given) {
        cfg.seed = args.seed;
        cfg.seed_set = true;
    }
    if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
    return cfg;
}

std::vector<sci::Protocol> parse_protocols(const std::vector<std::string>& names) {
    std::vector<sci::Protocol> out;
    for (const std::string& name : names) out.push_back(sci::protocol_from_string(name));
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sci: dual-prompt semantic separation and text-guided refinement for "
                 "cloth-changing re-identification, at desk scale"};
    app.require_subcommand(1);

    CommonArgs gen_args, train_args, ablate_args;
    std::string eval_checkpoint, eval_dataset, eval_out;
    std::vector<std::string> eval_protocols, ablate_protocols;
    int eval_kmax = 0;
    bool eval_force = false;

    auto add_common = [](CLI::App* cmd, CommonArgs& args) {
        cmd->add_option("--config", args.config_path, "JSON run config");
        cmd->add_option("--out", args.out_dir, "output directory");
        cmd->add_option("--seed", args.seed, "run seed (mandatory here or in the config)")
            ->each([&args](const std::string&) { args.seed_given = true; });
        cmd->add_flag("--force", args.force, "overwrite existing outputs");
    };

    CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
    add_common(gen, gen_args);

    CLI::App* train = app.add_subcommand("train", "two-stage training; writes a checkpoint");
    add_common(train, train_args);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    eval_cmd->add_option("--dataset", eval_dataset, "dataset directory (defaults to the checkpoint's)");
    eval_cmd->add_option("--protocol", eval_protocols,
                         "protocols: general, same_clothes, cloth_changing")
        ->delimiter(',');
    eval_cmd->add_option("--kmax", eval_kmax, "CMC depth");
    eval_cmd->add_option("--out", eval_out, "output directory");
    eval_cmd->add_flag("--force", eval_force, "overwrite existing outputs");

    CLI::App* ablate = app.add_subcommand("ablate", "train/evaluate baseline, +SSE, +SIM, full");
    add_common(ablate, ablate_args);
    ablate->add_option("--protocol", ablate_protocols,
                       "protocols: general, same_clothes, cloth_changing")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    // Protocol names are a usage concern: report bad ones with the valid list.
    std::vector<sci::Protocol> eval_protos, ablate_protos;
    try {
        eval_protos = parse_protocols(eval_protocols);
        ablate_protos = parse_protocols(ablate_protocols);
    } catch (const sci::ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsageError;
    }

    try {
        if (gen->parsed()) {
            sci::cmd_gen(resolve_config(gen_args), gen_args.force, std::cout);
        } else if (train->parsed()) {
            sci::cmd_train(resolve_config(train_args), train_args.force, std::cout);
        } else if (eval_cmd->parsed()) {
            sci::cmd_eval(eval_checkpoint, eval_dataset, eval_protos, eval_kmax, eval_out,
                          eval_force, std::cout);
        } else if (ablate->parsed()) {
            sci::RunConfig cfg = resolve_config(ablate_args);
            if (!ablate_protos.empty()) cfg.protocols = ablate_protos;
            sci::cmd_ablate(cfg, ablate_args.force, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDataError;
    }
    return 0;
}
