#pragma once

#include <string>
#include <vector>

#include "recfill/common.hpp"
#include "recfill/corpus.hpp"
#include "recfill/entity_pool.hpp"
#include "recfill/vocab.hpp"

namespace recfill {

enum class MaskLevel { entity, sentence, document };

const char* mask_level_name(MaskLevel level);
TokenId mask_token_for(MaskLevel level);

struct MaskSpan {
    std::size_t start = 0;  // token index in the source document
    std::size_t len = 0;
    MaskLevel level = MaskLevel::entity;
};

struct TargetSpan {
    std::size_t mask_pos = 0;    // index of the mask token in part_a
    std::size_t orig_start = 0;  // start in the source document
    std::vector<TokenId> tokens;
};

struct CorruptedExample {
    std::string doc_id;
    std::vector<TokenId> part_a;
    std::vector<TargetSpan> spans;  // ascending by orig_start
    MaskLevel level = MaskLevel::entity;
};

struct MaskConfig {
    double entity_budget = 0.15;   // fraction of tokens to cover at entity level
    double poisson_lambda = 3.0;   // span length in Units
    double sentence_budget = 0.25;
    std::vector<double> objective_mix = {0.5, 0.25, 0.25};  // entity, sentence, document
};

// Unit decomposition from the document's entity annotations: whole entities
// stay atomic, everything else is a single-token unit.
std::vector<Unit> units_of(const Document& doc);

std::vector<MaskSpan> sample_entity_spans(const Document& doc, double budget, double lambda,
                                          Rng& rng);
std::vector<MaskSpan> sample_sentence_spans(const Document& doc, const Vocabulary& vocab,
                                            double budget, Rng& rng);
std::vector<MaskSpan> sample_document_span(const Document& doc, Rng& rng);

MaskLevel choose_objective(Rng& rng, const std::vector<double>& mix);

CorruptedExample corrupt(const Document& doc, std::vector<MaskSpan> spans, MaskLevel level);

// Masks exactly the supervised answer region — used for task-style training
// examples and to build generation prompts.
CorruptedExample corrupt_target(const Document& doc);

// Full per-example pipeline: objective draw, span sampling, corruption. With
// probability `target_prob` the answer region is masked instead.
CorruptedExample mask_example(const Document& doc, const Vocabulary& vocab,
                              const MaskConfig& config, double target_prob, Rng& rng);

// Debug/golden dump: part_a ids | mask positions | span tokens | level.
std::string masked_example_to_line(const CorruptedExample& ex);

}  // namespace recfill
