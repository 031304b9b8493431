#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recfill/corpus.hpp"
#include "recfill/glm.hpp"
#include "recfill/masking.hpp"

namespace recfill {

struct TrainConfig {
    double peak_lr = 1e-5;
    int warmup_steps = 100;
    int batch_size = 32;
    std::size_t max_len = 1024;
    int epochs = 8;
    double weight_decay = 0.01;
    // Probability that a training example masks its answer region instead of
    // drawing a random objective; keeps the infilling task aligned with eval.
    double target_mask_prob = 0.5;
};

struct LoraConfig {
    int rank = 8;
    double alpha = 16.0;
    bool enabled = true;
    bool only = false;  // freeze base projections, train adapters (+ everything else)
};

struct EvalKnobs {
    int beam = 10;
    int negatives = 99;
    int max_steps = 72;
    int max_cases = 0;  // 0 = no cap
};

struct Paths {
    std::string interactions;
    std::string vocab;
    std::string entities;
    std::string corpus;
    std::string model;
    std::string out_dir = ".";
};

// Whole-run configuration; every stochastic component derives its stream from
// `seed`. ModelConfig::vocab_size and max_len are filled in by the pipeline.
struct RunConfig {
    ModelConfig model;
    MaskConfig mask;
    SamplingConfig sample;
    TrainConfig train;
    LoraConfig lora;
    EvalKnobs eval;
    Paths paths;
    std::uint64_t seed = 1;

    // Rejects out-of-range values and mixes not summing to 1 +- 1e-9.
    void validate() const;
};

// key=value lines, '#' comments; unknown keys are errors naming the key.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Applies one "key=value" override (the --set flag).
void apply_override(RunConfig& config, const std::string& assignment);

// Canonical serialization: every key, sorted, one per line. Feeds the
// manifest's config hash and round-trips through parse_config.
std::string serialize_config(const RunConfig& config);

}  // namespace recfill
