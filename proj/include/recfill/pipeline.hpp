#pragma once

#include <string>
#include <vector>

#include "recfill/config.hpp"
#include "recfill/eval.hpp"
#include "recfill/positions.hpp"
#include "recfill/synth.hpp"

namespace recfill {

// Aligned token/inter/intra/part/target table for one positioned example;
// `inspect-example` prints it and the golden tests pin it byte for byte.
std::string position_dump(const PositionedExample& ex, const Vocabulary& vocab);

// The built-in worked example: e1 = (x1,x2,x3), singles x4/x5, e2 = (x6,x7),
// masked spans e1 and x5 at entity level.
struct FixtureBundle {
    Vocabulary vocab;
    EntityPool pool;
    Document doc;
    PositionedExample positioned;
};
FixtureBundle position_fixture();

// Subcommand bodies. Each validates config, does the work, writes its
// artifacts plus `<out_dir>/<command>.manifest.json`, and returns a short
// human-readable summary for stdout.
std::string cmd_gen_world(const RunConfig& config, const WorldSpec& spec,
                          const std::string& truth_out);
std::string cmd_ingest(const RunConfig& config);
std::string cmd_build_corpus(const RunConfig& config);
std::string cmd_pretrain(const RunConfig& config);
std::string cmd_generate(const RunConfig& config, const std::string& doc_id, bool constrained,
                         const std::string& out_path);
std::string cmd_evaluate(const RunConfig& config, const std::string& report_out);
std::string cmd_inspect_example(const RunConfig& config, const std::string& doc_id, bool fixture);
std::string cmd_ablate_rank(const RunConfig& config, const std::string& report_out);

// Shared by pretrain and ablate-rank; appends one `step TAB epoch TAB loss
// TAB lr` line per optimizer step to `trace`.
Net<float> train_model(const RunConfig& config, const std::vector<Document>& train_docs,
                       const Vocabulary& vocab, const EntityPool& pool, std::string& trace);

// Constrained next-item HR@1 over the sequential eval docs (capped by
// eval.max_cases); exposed for the rank ablation report.
double sequential_hr1(const Net<float>& net, const std::vector<Document>& eval_docs,
                      const EntityPool& pool, const EvalKnobs& knobs);

}  // namespace recfill
