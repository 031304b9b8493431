#include "recfill/config.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

namespace recfill {

namespace {

long long parse_int_value(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    long long parsed = 0;
    try {
        parsed = std::stoll(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size() || value.empty())
        throw ConfigError("config key " + key + ": not an integer: " + value);
    return parsed;
}

double parse_double_value(const std::string& key, const std::string& value) {
    std::size_t used = 0;
    double parsed = 0.0;
    try {
        parsed = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != value.size() || value.empty())
        throw ConfigError("config key " + key + ": not a number: " + value);
    return parsed;
}

bool parse_bool_value(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("config key " + key + ": not a boolean: " + value);
}

std::vector<double> parse_mix_value(const std::string& key, const std::string& value,
                                    std::size_t arity) {
    auto parts = split_char(value, ',');
    if (parts.size() != arity)
        throw ConfigError("config key " + key + ": expected " + std::to_string(arity) +
                          " comma-separated values, got " + std::to_string(parts.size()));
    std::vector<double> mix;
    for (const auto& p : parts) mix.push_back(parse_double_value(key, p));
    return mix;
}

std::string format_mix(const std::vector<double>& mix) {
    std::string out;
    for (std::size_t i = 0; i < mix.size(); ++i) {
        if (i) out += ',';
        out += format_double(mix[i]);
    }
    return out;
}

struct KeyBinding {
    std::string key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename Section, typename T>
KeyBinding member_key(const std::string& key, Section RunConfig::* section, T Section::* field) {
    return {key,
            [key, section, field](RunConfig& c, const std::string& v) {
                if constexpr (std::is_same_v<T, double>)
                    c.*section.*field = parse_double_value(key, v);
                else if constexpr (std::is_same_v<T, bool>)
                    c.*section.*field = parse_bool_value(key, v);
                else if constexpr (std::is_same_v<T, std::string>)
                    c.*section.*field = v;
                else if constexpr (std::is_same_v<T, std::vector<double>>)
                    c.*section.*field = parse_mix_value(key, v, (c.*section.*field).size());
                else {
                    long long parsed = parse_int_value(key, v);
                    if (std::is_unsigned_v<T> && parsed < 0)
                        throw ConfigError("config key " + key + ": must be non-negative");
                    c.*section.*field = T(parsed);
                }
            },
            [section, field](const RunConfig& c) -> std::string {
                if constexpr (std::is_same_v<T, double>)
                    return format_double(c.*section.*field);
                else if constexpr (std::is_same_v<T, bool>)
                    return c.*section.*field ? "true" : "false";
                else if constexpr (std::is_same_v<T, std::string>)
                    return c.*section.*field;
                else if constexpr (std::is_same_v<T, std::vector<double>>)
                    return format_mix(c.*section.*field);
                else
                    return std::to_string((long long)(c.*section.*field));
            }};
}

const std::vector<KeyBinding>& bindings() {
    static const std::vector<KeyBinding> kBindings = [] {
        std::vector<KeyBinding> b;
        b.push_back(member_key("model.d_model", &RunConfig::model, &ModelConfig::d_model));
        b.push_back(member_key("model.n_layers", &RunConfig::model, &ModelConfig::n_layers));
        b.push_back(member_key("model.n_heads", &RunConfig::model, &ModelConfig::n_heads));
        b.push_back(member_key("model.ffn_mult", &RunConfig::model, &ModelConfig::ffn_mult));
        b.push_back(member_key("model.dropout", &RunConfig::model, &ModelConfig::dropout));
        b.push_back(member_key("mask.entity_budget", &RunConfig::mask, &MaskConfig::entity_budget));
        b.push_back(
            member_key("mask.poisson_lambda", &RunConfig::mask, &MaskConfig::poisson_lambda));
        b.push_back(
            member_key("mask.sentence_budget", &RunConfig::mask, &MaskConfig::sentence_budget));
        b.push_back(member_key("mask.objective_mix", &RunConfig::mask, &MaskConfig::objective_mix));
        b.push_back(member_key("sample.short_horizon_days", &RunConfig::sample,
                               &SamplingConfig::short_horizon_days));
        b.push_back(member_key("sample.medium_horizon_days", &RunConfig::sample,
                               &SamplingConfig::medium_horizon_days));
        b.push_back(member_key("sample.window_mix", &RunConfig::sample,
                               &SamplingConfig::window_mix));
        b.push_back(member_key("sample.max_history_items", &RunConfig::sample,
                               &SamplingConfig::max_history_items));
        b.push_back(member_key("sample.examples_per_user", &RunConfig::sample,
                               &SamplingConfig::examples_per_user));
        b.push_back(member_key("sample.family_mix", &RunConfig::sample,
                               &SamplingConfig::family_mix));
        b.push_back(member_key("train.peak_lr", &RunConfig::train, &TrainConfig::peak_lr));
        b.push_back(member_key("train.warmup_steps", &RunConfig::train,
                               &TrainConfig::warmup_steps));
        b.push_back(member_key("train.batch_size", &RunConfig::train, &TrainConfig::batch_size));
        b.push_back(member_key("train.max_len", &RunConfig::train, &TrainConfig::max_len));
        b.push_back(member_key("train.epochs", &RunConfig::train, &TrainConfig::epochs));
        b.push_back(member_key("train.weight_decay", &RunConfig::train,
                               &TrainConfig::weight_decay));
        b.push_back(member_key("train.target_mask_prob", &RunConfig::train,
                               &TrainConfig::target_mask_prob));
        b.push_back(member_key("lora.rank", &RunConfig::lora, &LoraConfig::rank));
        b.push_back(member_key("lora.alpha", &RunConfig::lora, &LoraConfig::alpha));
        b.push_back(member_key("lora.enabled", &RunConfig::lora, &LoraConfig::enabled));
        b.push_back(member_key("lora.only", &RunConfig::lora, &LoraConfig::only));
        b.push_back(member_key("eval.beam", &RunConfig::eval, &EvalKnobs::beam));
        b.push_back(member_key("eval.negatives", &RunConfig::eval, &EvalKnobs::negatives));
        b.push_back(member_key("eval.max_steps", &RunConfig::eval, &EvalKnobs::max_steps));
        b.push_back(member_key("eval.max_cases", &RunConfig::eval, &EvalKnobs::max_cases));
        b.push_back(member_key("paths.interactions", &RunConfig::paths, &Paths::interactions));
        b.push_back(member_key("paths.vocab", &RunConfig::paths, &Paths::vocab));
        b.push_back(member_key("paths.entities", &RunConfig::paths, &Paths::entities));
        b.push_back(member_key("paths.corpus", &RunConfig::paths, &Paths::corpus));
        b.push_back(member_key("paths.model", &RunConfig::paths, &Paths::model));
        b.push_back(member_key("paths.out_dir", &RunConfig::paths, &Paths::out_dir));
        b.push_back({"seed",
                     [](RunConfig& c, const std::string& v) {
                         std::size_t used = 0;
                         unsigned long long parsed = 0;
                         try {
                             parsed = std::stoull(v, &used);
                         } catch (const std::exception&) {
                             used = 0;
                         }
                         if (used != v.size() || v.empty())
                             throw ConfigError("config key seed: not an integer: " + v);
                         c.seed = parsed;
                     },
                     [](const RunConfig& c) { return std::to_string(c.seed); }});
        std::sort(b.begin(), b.end(),
                  [](const KeyBinding& x, const KeyBinding& y) { return x.key < y.key; });
        return b;
    }();
    return kBindings;
}

const KeyBinding& find_binding(const std::string& key) {
    for (const auto& b : bindings())
        if (b.key == key) return b;
    throw ConfigError("unknown config key: " + key);
}

void check_mix(const std::string& key, const std::vector<double>& mix) {
    double sum = 0.0;
    for (double w : mix) {
        if (w < 0.0) throw ConfigError(key + ": negative weight");
        sum += w;
    }
    if (std::fabs(sum - 1.0) > 1e-9)
        throw ConfigError(key + ": weights sum to " + format_double(sum) + ", expected 1");
}

void check_range(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

}  // namespace

void RunConfig::validate() const {
    check_mix("mask.objective_mix", mask.objective_mix);
    check_mix("sample.window_mix", sample.window_mix);
    check_mix("sample.family_mix", sample.family_mix);
    check_range(model.d_model >= 1, "model.d_model must be >= 1");
    check_range(model.n_layers >= 1, "model.n_layers must be >= 1");
    check_range(model.n_heads >= 1, "model.n_heads must be >= 1");
    check_range(model.d_model % model.n_heads == 0,
                "model.d_model must be divisible by model.n_heads");
    check_range(model.ffn_mult >= 1, "model.ffn_mult must be >= 1");
    check_range(model.dropout >= 0.0 && model.dropout < 1.0, "model.dropout must be in [0,1)");
    check_range(mask.entity_budget >= 0.0 && mask.entity_budget <= 1.0,
                "mask.entity_budget must be in [0,1]");
    check_range(mask.sentence_budget >= 0.0 && mask.sentence_budget <= 1.0,
                "mask.sentence_budget must be in [0,1]");
    check_range(mask.poisson_lambda > 0.0, "mask.poisson_lambda must be > 0");
    check_range(sample.short_horizon_days > 0.0 &&
                    sample.medium_horizon_days > sample.short_horizon_days,
                "sample horizons must satisfy 0 < short < medium");
    check_range(sample.max_history_items >= 1, "sample.max_history_items must be >= 1");
    check_range(sample.examples_per_user >= 1, "sample.examples_per_user must be >= 1");
    check_range(train.peak_lr > 0.0, "train.peak_lr must be > 0");
    check_range(train.warmup_steps >= 1, "train.warmup_steps must be >= 1");
    check_range(train.batch_size >= 1, "train.batch_size must be >= 1");
    check_range(train.max_len >= 8, "train.max_len must be >= 8");
    check_range(train.epochs >= 1, "train.epochs must be >= 1");
    check_range(train.weight_decay >= 0.0, "train.weight_decay must be >= 0");
    check_range(train.target_mask_prob >= 0.0 && train.target_mask_prob <= 1.0,
                "train.target_mask_prob must be in [0,1]");
    check_range(lora.rank >= 0, "lora.rank must be >= 0");
    check_range(lora.alpha > 0.0, "lora.alpha must be > 0");
    check_range(!lora.only || lora.enabled, "lora.only requires lora.enabled");
    check_range(eval.beam >= 1, "eval.beam must be >= 1");
    check_range(eval.negatives >= 1, "eval.negatives must be >= 1");
    check_range(eval.max_steps >= 2, "eval.max_steps must be >= 2");
    check_range(eval.max_cases >= 0, "eval.max_cases must be >= 0");
}

RunConfig parse_config(const std::string& text) {
    RunConfig config;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string trimmed;
        for (char c : line)
            if (!std::isspace(static_cast<unsigned char>(c)) || !trimmed.empty()) trimmed += c;
        while (!trimmed.empty() && std::isspace(static_cast<unsigned char>(trimmed.back())))
            trimmed.pop_back();
        if (trimmed.empty()) continue;
        auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
        std::string key = trimmed.substr(0, eq);
        std::string value = trimmed.substr(eq + 1);
        while (!key.empty() && std::isspace(static_cast<unsigned char>(key.back())))
            key.pop_back();
        while (!value.empty() && std::isspace(static_cast<unsigned char>(value.front())))
            value.erase(value.begin());
        find_binding(key).set(config, value);
    }
    return config;
}

RunConfig load_config(const std::string& path) { return parse_config(read_file(path)); }

void apply_override(RunConfig& config, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value: " + assignment);
    find_binding(assignment.substr(0, eq)).set(config, assignment.substr(eq + 1));
}

std::string serialize_config(const RunConfig& config) {
    std::string out;
    for (const auto& b : bindings()) {
        out += b.key;
        out += '=';
        out += b.get(config);
        out += '\n';
    }
    return out;
}

}  // namespace recfill
