#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "recfill/common.hpp"
#include "recfill/entity_pool.hpp"
#include "recfill/vocab.hpp"

namespace recfill {

enum class TaskFamily { rating, sequential, explanation, review, direct };
enum class WindowClass { short_term, medium_term, long_term };

const char* task_family_name(TaskFamily f);
TaskFamily task_family_from_name(const std::string& s);
const char* window_class_name(WindowClass w);
WindowClass window_class_from_name(const std::string& s);
constexpr int kNumFamilies = 5;

struct InteractionRecord {
    std::string user_id;
    std::string item_id;
    std::string item_title;
    int rating = 0;  // 1..5
    std::int64_t timestamp = 0;
    std::string review;  // may be empty
};

struct UserHistory {
    std::string user_id;
    std::vector<EntityId> attributes;
    std::vector<InteractionRecord> interactions;  // ascending by timestamp
};

struct EntitySpan {
    std::size_t start = 0;  // token index
    std::size_t len = 0;
    EntityId entity = -1;
};

struct Document {
    std::string doc_id;
    std::string text;
    std::vector<TokenId> tokens;
    std::vector<EntitySpan> entity_spans;  // ascending, non-overlapping
    TaskFamily family = TaskFamily::sequential;
    WindowClass window = WindowClass::short_term;
    std::string split;  // "train" | "eval"
    std::string template_id;
    bool held_out_template = false;
    std::size_t target_start = 0;  // answer region, token indices
    std::size_t target_len = 0;
};

struct PromptTemplate {
    std::string template_id;
    TaskFamily family;
    std::string text;  // whitespace-delimited words and {placeholder} slots
    bool held_out = false;
};

// 3 training + 1 held-out template per family; the held-out ones only ever
// reach the eval split (unseen-prompt evaluation).
const std::vector<PromptTemplate>& builtin_templates();
std::vector<PromptTemplate> templates_for(TaskFamily family, bool held_out);
// Static template words, fed into vocabulary construction.
std::vector<std::string> template_word_lines();

struct SamplingConfig {
    double short_horizon_days = 7.0;
    double medium_horizon_days = 90.0;
    std::vector<double> window_mix = {0.6, 0.3, 0.1};  // short, medium, long
    std::size_t max_history_items = 8;
    std::size_t examples_per_user = 5;
    std::vector<double> family_mix = {0.2, 0.2, 0.2, 0.2, 0.2};
};

struct IngestResult {
    std::vector<UserHistory> histories;  // sorted by user_id
    std::size_t records = 0;
};

// Parses interaction lines `user<TAB>item_id<TAB>title<TAB>rating<TAB>ts[<TAB>review]`,
// groups per user sorted by timestamp and registers every distinct title in the pool.
IngestResult ingest(const std::string& path, const Vocabulary& vocab, EntityPool& pool);
std::vector<InteractionRecord> parse_interactions(const std::string& path);

WindowClass classify_window(const UserHistory& history, std::size_t cut,
                            const SamplingConfig& config);

struct Slice {
    WindowClass window;
    std::size_t begin = 0;  // history indices [begin, cut]; interactions before
    std::size_t cut = 0;    // `cut` are the context, `cut` itself is the target
};

// Draws the window class from the configured 60/30/10 mix, falling back to the
// nearest non-empty class, then picks a cut uniformly inside it. `exclude_last`
// enforces leave-one-out: the final interaction never becomes a training target.
std::optional<Slice> sample_slice(const UserHistory& history, Rng& rng,
                                  const SamplingConfig& config, bool exclude_last);

Document textualize(const UserHistory& history, const Slice& slice,
                    const PromptTemplate& tmpl, const Vocabulary& vocab,
                    const EntityPool& pool);

struct CorpusStats {
    std::size_t train_docs = 0;
    std::size_t eval_docs = 0;
    std::size_t skipped_users = 0;  // histories with < 2 interactions
    std::size_t family_substitutions = 0;  // review-less targets moved to sequential
};

CorpusStats build_corpus(const std::vector<UserHistory>& histories, const Vocabulary& vocab,
                         const EntityPool& pool, const SamplingConfig& config,
                         std::uint64_t seed, const std::string& out_path);

std::string document_to_json_line(const Document& doc);
Document document_from_json_line(const std::string& line, const Vocabulary& vocab);
std::vector<Document> load_corpus(const std::string& path, const Vocabulary& vocab);

}  // namespace recfill
