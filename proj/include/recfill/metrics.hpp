#pragma once

#include <string>
#include <vector>

#include "recfill/entity_pool.hpp"

namespace recfill {

struct RankingCase {
    std::vector<EntityId> ranked;  // best first, no duplicates
    EntityId truth = -1;           // may be absent from the ranking
};

double hr_at_k(const std::vector<RankingCase>& cases, int k);
double ndcg_at_k(const std::vector<RankingCase>& cases, int k);

double rmse(const std::vector<double>& pred, const std::vector<double>& truth);
double mae(const std::vector<double>& pred, const std::vector<double>& truth);

// Sentence-level BLEU-n as a percentage: geometric mean of modified n-gram
// precisions times the brevity penalty, zero if any precision is zero.
double bleu_n(const std::vector<std::string>& candidate,
              const std::vector<std::vector<std::string>>& references, int n);
double bleu_n(const std::vector<std::string>& candidate,
              const std::vector<std::string>& reference, int n);

// F1 as a percentage.
double rouge_n(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, int n);
double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference);

}  // namespace recfill
