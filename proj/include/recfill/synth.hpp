#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recfill/corpus.hpp"

namespace recfill {

// Planted-structure world: the next item is sigma(current) with probability
// 1 - epsilon, uniform otherwise, so Bayes-optimal HR@1 = 1 - eps + eps/M.
struct WorldSpec {
    int catalog = 100;
    int users = 200;
    int interactions_per_user = 12;
    double epsilon = 0.1;
    std::uint64_t seed = 7;
};

struct WorldTruth {
    int catalog = 0;
    double epsilon = 0.0;
    std::vector<int> sigma;        // item index -> successor index
    std::vector<int> rating_base;  // deterministic rating per item, 1..5
    std::vector<std::string> titles;
};

WorldTruth generate_world(const WorldSpec& spec, const std::string& interactions_path,
                          const std::string& truth_path);
WorldTruth load_world_truth(const std::string& path);

// HR@1 of the ground-truth predictor (sigma of the last context item) under
// leave-one-out; calibrates the harness against the closed-form bound.
double oracle_hr1(const WorldTruth& truth, const std::vector<UserHistory>& histories);

}  // namespace recfill
