#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "recfill/corpus.hpp"
#include "recfill/decoder.hpp"
#include "recfill/glm.hpp"
#include "recfill/metrics.hpp"

namespace recfill {

struct EvalConfig {
    int beam = 10;       // next-item beam width (covers HR@10)
    int negatives = 99;  // sampled negatives per direct-recommendation case
    int max_steps = 72;
    std::uint64_t seed = 0;
};

// Model predictions for one eval document; which fields are meaningful
// depends on the document's task family.
struct CaseOutput {
    std::string doc_id;
    double predicted_rating = 0.0;
    bool rating_parse_failed = false;
    std::vector<EntityId> ranked;
    std::string generated_text;
};

struct MetricReport {
    TaskFamily family = TaskFamily::rating;
    std::string template_id;
    bool unseen = false;
    std::vector<std::pair<std::string, double>> values;
    std::size_t n = 0;
};

std::vector<CaseOutput> run_eval_model(const Net<float>& net, const std::vector<Document>& docs,
                                       const EntityPool& pool, const Vocabulary& vocab,
                                       const EvalConfig& config);

// Joins outputs to documents by doc_id and aggregates one report per
// (family, template, seen/unseen) group.
std::vector<MetricReport> evaluate(const std::vector<Document>& docs,
                                   const std::vector<CaseOutput>& outputs,
                                   const Vocabulary& vocab, const EntityPool& pool);

// Line format: family <TAB> template_id <TAB> seen|unseen <TAB> metric <TAB> value <TAB> n
std::string report_to_tsv(const std::vector<MetricReport>& reports);
std::string report_summary(const std::vector<MetricReport>& reports);

// Ground truth helpers shared by the harness and tests.
int rating_truth(const Document& doc, const Vocabulary& vocab);
EntityId target_entity(const Document& doc);
std::string target_text(const Document& doc, const Vocabulary& vocab);

}  // namespace recfill
