#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "recfill/pipeline.hpp"

using namespace recfill;

int main(int argc, char** argv) {
    CLI::App app{"entity-aware blank-infilling language model for recommendation"};
    app.set_version_flag("--version", "recfill 1.0.0");
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--set", overrides, "config override key=value (repeatable)");

    auto* gen_world = app.add_subcommand(
        "gen-world", "generate a planted-structure synthetic world + ground truth");
    WorldSpec spec;
    std::string truth_out;
    gen_world->add_option("--catalog", spec.catalog, "catalog size M");
    gen_world->add_option("--users", spec.users, "number of users");
    gen_world->add_option("--interactions-per-user", spec.interactions_per_user,
                          "sequence length per user");
    gen_world->add_option("--epsilon", spec.epsilon, "transition noise in [0,1)");
    auto* world_seed =
        gen_world->add_option("--world-seed", spec.seed, "world seed (default: config seed)");
    gen_world->add_option("--truth", truth_out,
                          "ground-truth sidecar path (default: <interactions>.truth.json)");

    auto* ingest_cmd =
        app.add_subcommand("ingest", "build vocabulary and entity pool from interactions");
    auto* build_corpus_cmd =
        app.add_subcommand("build-corpus", "sample and textualize the training/eval corpus");
    auto* pretrain_cmd = app.add_subcommand(
        "pretrain", "train the infilling model, write checkpoint + loss trace");

    auto* generate = app.add_subcommand("generate", "fill one document's answer blank");
    std::string doc_id;
    bool constrained = false;
    std::string gen_out;
    generate->add_option("--doc-id", doc_id, "corpus document id")->required();
    generate->add_flag("--constrained", constrained, "restrict generation to whole entities");
    generate->add_option("--out", gen_out, "write slot fills as JSON");

    auto* evaluate = app.add_subcommand("evaluate", "run the recommendation eval harness");
    std::string report_out;
    evaluate->add_option("--report", report_out,
                         "metrics TSV path (default: <out_dir>/eval_report.tsv)");

    auto* inspect = app.add_subcommand("inspect-example",
                                       "dump token/inter/intra/part/target for one example");
    std::string inspect_id;
    bool fixture = false;
    inspect->add_option("--doc-id", inspect_id, "corpus document id");
    inspect->add_flag("--fixture", fixture, "use the built-in worked example");

    auto* ablate = app.add_subcommand("ablate-rank", "sweep adapter rank over 2,4,8,16,32");
    std::string ablate_out;
    ablate->add_option("--report", ablate_out,
                       "HR@1-vs-rank TSV path (default: <out_dir>/rank_report.tsv)");

    // Global --config/--set may appear after the subcommand name.
    for (auto* sub : {gen_world, ingest_cmd, build_corpus_cmd, pretrain_cmd, generate, evaluate,
                      inspect, ablate})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
        for (const auto& o : overrides) apply_override(config, o);
        config.validate();

        std::string summary;
        if (gen_world->parsed()) {
            if (!world_seed->count()) spec.seed = config.seed;
            if (truth_out.empty()) truth_out = config.paths.interactions + ".truth.json";
            summary = cmd_gen_world(config, spec, truth_out);
        } else if (ingest_cmd->parsed()) {
            summary = cmd_ingest(config);
        } else if (build_corpus_cmd->parsed()) {
            summary = cmd_build_corpus(config);
        } else if (pretrain_cmd->parsed()) {
            summary = cmd_pretrain(config);
        } else if (generate->parsed()) {
            summary = cmd_generate(config, doc_id, constrained, gen_out);
        } else if (evaluate->parsed()) {
            if (report_out.empty()) report_out = config.paths.out_dir + "/eval_report.tsv";
            summary = cmd_evaluate(config, report_out);
        } else if (inspect->parsed()) {
            if (!fixture && inspect_id.empty())
                throw ConfigError("inspect-example needs --doc-id or --fixture");
            summary = cmd_inspect_example(config, inspect_id, fixture);
        } else if (ablate->parsed()) {
            if (ablate_out.empty()) ablate_out = config.paths.out_dir + "/rank_report.tsv";
            summary = cmd_ablate_rank(config, ablate_out);
        }
        std::cout << summary << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
