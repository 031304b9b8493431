#include "recfill/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

#include "json.hpp"

namespace recfill {

const char* task_family_name(TaskFamily f) {
    switch (f) {
        case TaskFamily::rating: return "rating";
        case TaskFamily::sequential: return "sequential";
        case TaskFamily::explanation: return "explanation";
        case TaskFamily::review: return "review";
        case TaskFamily::direct: return "direct";
    }
    throw ConfigError("unknown task family");
}

TaskFamily task_family_from_name(const std::string& s) {
    for (int i = 0; i < kNumFamilies; ++i) {
        auto f = static_cast<TaskFamily>(i);
        if (s == task_family_name(f)) return f;
    }
    throw ConfigError("unknown task family: " + s);
}

const char* window_class_name(WindowClass w) {
    switch (w) {
        case WindowClass::short_term: return "short";
        case WindowClass::medium_term: return "medium";
        case WindowClass::long_term: return "long";
    }
    throw ConfigError("unknown window class");
}

WindowClass window_class_from_name(const std::string& s) {
    if (s == "short") return WindowClass::short_term;
    if (s == "medium") return WindowClass::medium_term;
    if (s == "long") return WindowClass::long_term;
    throw ConfigError("unknown window class: " + s);
}

const std::vector<PromptTemplate>& builtin_templates() {
    static const std::vector<PromptTemplate> kTemplates = {
        {"rating-0", TaskFamily::rating,
         "user {user} bought {item} . the rating they gave is {rating}", false},
        {"rating-1", TaskFamily::rating,
         "how would {user} rate {item} ? the answer is {rating}", false},
        {"rating-2", TaskFamily::rating,
         "item {item} received a score of {rating} from user {user}", false},
        {"rating-3", TaskFamily::rating,
         "predict the star rating that {user} assigns to {item} : {rating}", true},

        {"sequential-0", TaskFamily::sequential,
         "user {user} bought {history} . next they will buy {item}", false},
        {"sequential-1", TaskFamily::sequential,
         "the purchase history of {user} is {history} . the following purchase will be {item}",
         false},
        {"sequential-2", TaskFamily::sequential,
         "after buying {history} , user {user} will buy {item}", false},
        {"sequential-3", TaskFamily::sequential,
         "given that {user} owns {history} , predict the next item : {item}", true},

        {"explanation-0", TaskFamily::explanation,
         "user {user} explains the purchase of {item} : {review}", false},
        {"explanation-1", TaskFamily::explanation,
         "why did {user} buy {item} ? because {review}", false},
        {"explanation-2", TaskFamily::explanation,
         "opinion of user {user} about {item} : {review}", false},
        {"explanation-3", TaskFamily::explanation,
         "write a short note from {user} about {item} : {review}", true},

        {"review-0", TaskFamily::review,
         "user {user} wrote the review {review} . this review is about {item}", false},
        {"review-1", TaskFamily::review,
         "reading the review {review} from {user} , the item must be {item}", false},
        {"review-2", TaskFamily::review,
         "{review} was said by user {user} about {item}", false},
        {"review-3", TaskFamily::review,
         "summarize the review {review} by {user} as an item name : {item}", true},

        {"direct-0", TaskFamily::direct,
         "from the catalog , the best next item for user {user} with history {history} is {item}",
         false},
        {"direct-1", TaskFamily::direct,
         "user {user} bought {history} . out of all candidates we recommend {item}", false},
        {"direct-2", TaskFamily::direct,
         "the top pick for {user} after {history} is {item}", false},
        {"direct-3", TaskFamily::direct,
         "choose the candidate that user {user} who bought {history} buys next : {item}", true},
    };
    return kTemplates;
}

std::vector<PromptTemplate> templates_for(TaskFamily family, bool held_out) {
    std::vector<PromptTemplate> out;
    for (const auto& t : builtin_templates())
        if (t.family == family && t.held_out == held_out) out.push_back(t);
    return out;
}

std::vector<std::string> template_word_lines() {
    std::vector<std::string> lines;
    for (const auto& t : builtin_templates()) {
        std::string stripped;
        for (const auto& w : split_ws(t.text)) {
            if (!w.empty() && w.front() == '{') continue;
            stripped += w;
            stripped += ' ';
        }
        lines.push_back(stripped);
    }
    lines.push_back("1 2 3 4 5 ,");
    return lines;
}

namespace {

// The placeholder whose rendering becomes the supervised answer region.
const char* answer_placeholder(TaskFamily f) {
    switch (f) {
        case TaskFamily::rating: return "{rating}";
        case TaskFamily::sequential: return "{item}";
        case TaskFamily::explanation: return "{review}";
        case TaskFamily::review: return "{item}";
        case TaskFamily::direct: return "{item}";
    }
    throw ConfigError("unknown task family");
}

int parse_int_field(const std::string& s, const char* what, std::size_t line_no) {
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("line " + std::to_string(line_no) + ": bad " + what + ": " + s);
    return value;
}

std::int64_t parse_i64_field(const std::string& s, const char* what, std::size_t line_no) {
    std::int64_t value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("line " + std::to_string(line_no) + ": bad " + what + ": " + s);
    return value;
}

}  // namespace

std::vector<InteractionRecord> parse_interactions(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<InteractionRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_char(line, '\t');
        if (fields.size() != 5 && fields.size() != 6)
            throw DataError("line " + std::to_string(line_no) + ": expected 5 or 6 fields, got " +
                            std::to_string(fields.size()));
        InteractionRecord rec;
        rec.user_id = fields[0];
        rec.item_id = fields[1];
        rec.item_title = fields[2];
        rec.rating = parse_int_field(fields[3], "rating", line_no);
        rec.timestamp = parse_i64_field(fields[4], "timestamp", line_no);
        if (fields.size() == 6) rec.review = fields[5];
        if (rec.user_id.empty() || rec.item_id.empty() || rec.item_title.empty())
            throw DataError("line " + std::to_string(line_no) + ": empty id field");
        if (rec.rating < 1 || rec.rating > 5)
            throw DataError("line " + std::to_string(line_no) + ": rating out of range: " +
                            std::to_string(rec.rating));
        records.push_back(std::move(rec));
    }
    return records;
}

IngestResult ingest(const std::string& path, const Vocabulary& vocab, EntityPool& pool) {
    auto records = parse_interactions(path);
    // Distinct titles become entities; two item ids sharing a title share one entity.
    std::map<std::string, EntityId> by_title;
    std::map<std::string, UserHistory> by_user;
    for (auto& rec : records) {
        std::string title = Vocabulary::normalize(rec.item_title);
        if (!by_title.count(title)) {
            auto existing = pool.find_by_surface(title);
            by_title[title] = existing ? *existing
                                       : pool.register_entity(vocab.encode(title), title,
                                                              EntityKind::item);
        }
        auto& hist = by_user[rec.user_id];
        hist.user_id = rec.user_id;
        hist.interactions.push_back(std::move(rec));
    }
    IngestResult out;
    out.records = records.size();
    for (auto& [user, hist] : by_user) {
        std::stable_sort(hist.interactions.begin(), hist.interactions.end(),
                         [](const InteractionRecord& a, const InteractionRecord& b) {
                             return a.timestamp < b.timestamp;
                         });
        out.histories.push_back(std::move(hist));
    }
    return out;
}

WindowClass classify_window(const UserHistory& history, std::size_t cut,
                            const SamplingConfig& config) {
    if (cut >= history.interactions.size()) throw DataError("cut outside history");
    double age_days = double(history.interactions.back().timestamp -
                             history.interactions[cut].timestamp) /
                      86400.0;
    if (age_days <= config.short_horizon_days) return WindowClass::short_term;
    if (age_days <= config.medium_horizon_days) return WindowClass::medium_term;
    return WindowClass::long_term;
}

std::optional<Slice> sample_slice(const UserHistory& history, Rng& rng,
                                  const SamplingConfig& config, bool exclude_last) {
    std::size_t n = history.interactions.size();
    if (n < 2) return std::nullopt;
    std::size_t last_cut = exclude_last ? n - 2 : n - 1;
    if (last_cut < 1) return std::nullopt;
    std::vector<std::vector<std::size_t>> cuts_by_class(3);
    for (std::size_t j = 1; j <= last_cut; ++j)
        cuts_by_class[static_cast<int>(classify_window(history, j, config))].push_back(j);
    int drawn = int(rng.next_categorical(config.window_mix));
    // Nearest non-empty class wins; distance ties resolve toward shorter windows.
    int best = -1;
    for (int c = 0; c < 3; ++c) {
        if (cuts_by_class[c].empty()) continue;
        if (best < 0 || std::abs(c - drawn) < std::abs(best - drawn)) best = c;
    }
    if (best < 0) return std::nullopt;
    const auto& cuts = cuts_by_class[best];
    std::size_t cut = cuts[rng.next_below(cuts.size())];
    Slice slice;
    slice.window = static_cast<WindowClass>(best);
    slice.cut = cut;
    slice.begin = cut > config.max_history_items ? cut - config.max_history_items : 0;
    return slice;
}

namespace {

struct Rendering {
    std::vector<std::string> words;
    std::vector<TokenId> tokens;
    std::vector<EntitySpan> spans;

    void push_word(const std::string& word, const Vocabulary& vocab) {
        for (TokenId id : vocab.encode(word)) tokens.push_back(id);
        words.push_back(word);
    }

    void push_entity(EntityId id, const EntityPool& pool) {
        const EntityInfo& info = pool.info(id);
        spans.push_back({tokens.size(), info.tokens.size(), id});
        tokens.insert(tokens.end(), info.tokens.begin(), info.tokens.end());
        words.push_back(info.surface);
    }
};

}  // namespace

Document textualize(const UserHistory& history, const Slice& slice,
                    const PromptTemplate& tmpl, const Vocabulary& vocab,
                    const EntityPool& pool) {
    const InteractionRecord& target = history.interactions[slice.cut];
    Document doc;
    doc.family = tmpl.family;
    doc.window = slice.window;
    doc.template_id = tmpl.template_id;
    doc.held_out_template = tmpl.held_out;

    Rendering r;
    for (const auto& piece : split_ws(tmpl.text)) {
        bool is_answer = piece == answer_placeholder(tmpl.family);
        std::size_t before = r.tokens.size();
        if (piece == "{user}") {
            r.push_word(history.user_id, vocab);
            for (EntityId attr : history.attributes) r.push_entity(attr, pool);
        } else if (piece == "{history}") {
            if (slice.begin >= slice.cut) throw DataError("unsatisfiable placeholder: {history}");
            for (std::size_t j = slice.begin; j < slice.cut; ++j) {
                if (j > slice.begin) r.push_word(",", vocab);
                std::string title = Vocabulary::normalize(history.interactions[j].item_title);
                auto id = pool.find_by_surface(title);
                if (!id) throw DataError("unregistered item: " + title);
                r.push_entity(*id, pool);
            }
        } else if (piece == "{item}") {
            std::string title = Vocabulary::normalize(target.item_title);
            auto id = pool.find_by_surface(title);
            if (!id) throw DataError("unregistered item: " + title);
            r.push_entity(*id, pool);
        } else if (piece == "{rating}") {
            r.push_word(std::to_string(target.rating), vocab);
        } else if (piece == "{review}") {
            if (target.review.empty()) throw DataError("unsatisfiable placeholder: {review}");
            r.push_word(Vocabulary::normalize(target.review), vocab);
        } else if (piece.front() == '{') {
            throw ConfigError("unknown placeholder: " + piece);
        } else {
            r.push_word(piece, vocab);
        }
        if (is_answer) {
            doc.target_start = before;
            doc.target_len = r.tokens.size() - before;
        }
    }

    doc.tokens = std::move(r.tokens);
    doc.entity_spans = std::move(r.spans);
    std::string text;
    for (std::size_t i = 0; i < r.words.size(); ++i) {
        if (i) text += ' ';
        text += r.words[i];
    }
    doc.text = std::move(text);
    if (doc.target_len == 0) throw DataError("template has no answer region: " + tmpl.template_id);
    return doc;
}

namespace {

// Deterministic largest-remainder cycling through the family mix: example k
// gets the family whose quota is furthest ahead of its realized count.
TaskFamily family_for_example(std::size_t k, const std::vector<double>& mix,
                              std::vector<std::size_t>& counts) {
    int best = 0;
    double best_gap = -1.0;
    for (int f = 0; f < kNumFamilies; ++f) {
        double gap = mix[f] * double(k + 1) - double(counts[f]);
        if (gap > best_gap + 1e-12) {
            best_gap = gap;
            best = f;
        }
    }
    ++counts[best];
    return static_cast<TaskFamily>(best);
}

bool family_needs_review(TaskFamily f) {
    return f == TaskFamily::explanation || f == TaskFamily::review;
}

PromptTemplate pick_template(TaskFamily family, bool held_out, Rng& rng) {
    auto pool = templates_for(family, held_out);
    if (pool.empty()) throw ConfigError("no templates for family");
    return pool[rng.next_below(pool.size())];
}

}  // namespace

CorpusStats build_corpus(const std::vector<UserHistory>& histories, const Vocabulary& vocab,
                         const EntityPool& pool, const SamplingConfig& config,
                         std::uint64_t seed, const std::string& out_path) {
    CorpusStats stats;
    std::map<std::string, std::string> lines_by_doc_id;
    auto emit = [&](Document doc, std::string doc_id, const std::string& split) {
        doc.doc_id = std::move(doc_id);
        doc.split = split;
        lines_by_doc_id[doc.doc_id] = document_to_json_line(doc);
    };

    for (const auto& hist : histories) {
        if (hist.interactions.size() < 2) {
            ++stats.skipped_users;
            continue;
        }
        std::uint64_t user_seed = derive_seed(seed, "corpus", fnv1a64(hist.user_id.c_str()));
        std::vector<std::size_t> family_counts(kNumFamilies, 0);
        for (std::size_t k = 0; k < config.examples_per_user; ++k) {
            Rng rng(derive_seed(user_seed, "example", k));
            auto slice = sample_slice(hist, rng, config, /*exclude_last=*/true);
            if (!slice) break;  // two interactions: the only cut is the held-out last one
            TaskFamily family = family_for_example(k, config.family_mix, family_counts);
            if (family_needs_review(family) &&
                hist.interactions[slice->cut].review.empty()) {
                family = TaskFamily::sequential;
                ++stats.family_substitutions;
            }
            PromptTemplate tmpl = pick_template(family, /*held_out=*/false, rng);
            char suffix[16];
            std::snprintf(suffix, sizeof suffix, "%04zu", k);
            emit(textualize(hist, *slice, tmpl, vocab, pool),
                 hist.user_id + "#train#" + suffix, "train");
            ++stats.train_docs;
        }

        // Eval slice: the user's final interaction, one seen and one unseen
        // template per family.
        Slice eval_slice;
        eval_slice.cut = hist.interactions.size() - 1;
        eval_slice.begin = eval_slice.cut > config.max_history_items
                               ? eval_slice.cut - config.max_history_items
                               : 0;
        eval_slice.window = classify_window(hist, eval_slice.cut, config);
        Rng eval_rng(derive_seed(user_seed, "eval", 0));
        for (int f = 0; f < kNumFamilies; ++f) {
            auto family = static_cast<TaskFamily>(f);
            if (family_needs_review(family) && hist.interactions[eval_slice.cut].review.empty())
                continue;
            PromptTemplate seen = pick_template(family, /*held_out=*/false, eval_rng);
            PromptTemplate unseen = pick_template(family, /*held_out=*/true, eval_rng);
            emit(textualize(hist, eval_slice, seen, vocab, pool),
                 hist.user_id + "#eval#" + task_family_name(family) + "#seen", "eval");
            emit(textualize(hist, eval_slice, unseen, vocab, pool),
                 hist.user_id + "#eval#" + task_family_name(family) + "#unseen", "eval");
            stats.eval_docs += 2;
        }
    }

    std::string out;
    for (const auto& [doc_id, line] : lines_by_doc_id) {
        out += line;
        out += '\n';
    }
    write_file_atomic(out_path, out);
    return stats;
}

std::string document_to_json_line(const Document& doc) {
    nlohmann::ordered_json j;
    j["doc_id"] = doc.doc_id;
    j["text"] = doc.text;
    auto spans = nlohmann::ordered_json::array();
    for (const auto& s : doc.entity_spans)
        spans.push_back({s.start, s.len, s.entity});
    j["entity_spans"] = spans;
    j["task_family"] = task_family_name(doc.family);
    j["window_class"] = window_class_name(doc.window);
    j["split"] = doc.split;
    j["template_id"] = doc.template_id;
    j["held_out_template"] = doc.held_out_template;
    j["target_start"] = doc.target_start;
    j["target_len"] = doc.target_len;
    return j.dump();
}

Document document_from_json_line(const std::string& line, const Vocabulary& vocab) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad corpus line: ") + e.what());
    }
    Document doc;
    doc.doc_id = j.at("doc_id").get<std::string>();
    doc.text = j.at("text").get<std::string>();
    doc.tokens = vocab.encode(doc.text);
    for (const auto& s : j.at("entity_spans")) {
        EntitySpan span;
        span.start = s.at(0).get<std::size_t>();
        span.len = s.at(1).get<std::size_t>();
        span.entity = s.at(2).get<EntityId>();
        if (span.start + span.len > doc.tokens.size())
            throw DataError("entity span outside document: " + doc.doc_id);
        doc.entity_spans.push_back(span);
    }
    doc.family = task_family_from_name(j.at("task_family").get<std::string>());
    doc.window = window_class_from_name(j.at("window_class").get<std::string>());
    doc.split = j.at("split").get<std::string>();
    doc.template_id = j.value("template_id", std::string());
    doc.held_out_template = j.value("held_out_template", false);
    doc.target_start = j.at("target_start").get<std::size_t>();
    doc.target_len = j.at("target_len").get<std::size_t>();
    if (doc.target_start + doc.target_len > doc.tokens.size())
        throw DataError("target region outside document: " + doc.doc_id);
    return doc;
}

std::vector<Document> load_corpus(const std::string& path, const Vocabulary& vocab) {
    std::istringstream in(read_file(path));
    std::vector<Document> docs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        docs.push_back(document_from_json_line(line, vocab));
    }
    return docs;
}

}  // namespace recfill
