#include "recfill/eval.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <sstream>

namespace recfill {

int rating_truth(const Document& doc, const Vocabulary& vocab) {
    std::string text = target_text(doc, vocab);
    int value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || value < 1 || value > 5)
        throw DataError("rating target is not a digit: " + doc.doc_id);
    return value;
}

EntityId target_entity(const Document& doc) {
    for (const auto& span : doc.entity_spans)
        if (span.start == doc.target_start && span.len == doc.target_len) return span.entity;
    throw DataError("target region is not a single entity: " + doc.doc_id);
}

std::string target_text(const Document& doc, const Vocabulary& vocab) {
    std::vector<TokenId> region(doc.tokens.begin() + long(doc.target_start),
                                doc.tokens.begin() + long(doc.target_start + doc.target_len));
    return vocab.decode(region);
}

namespace {

// Generated ratings are parsed from the first integer-like token; anything
// else falls back to the scale midpoint and is counted.
double parse_generated_rating(const std::string& text, bool& failed) {
    for (const auto& word : split_ws(text)) {
        int value = 0;
        auto [ptr, ec] = std::from_chars(word.data(), word.data() + word.size(), value);
        if (ec == std::errc() && ptr == word.data() + word.size() && value >= 1 && value <= 5) {
            failed = false;
            return double(value);
        }
    }
    failed = true;
    return 3.0;
}

std::vector<EntityId> item_catalog(const EntityPool& pool) {
    std::vector<EntityId> items;
    for (EntityId id = 0; id < EntityId(pool.size()); ++id)
        if (pool.info(id).kind == EntityKind::item) items.push_back(id);
    return items;
}

std::string generate_answer(const Net<float>& net, const Document& doc, const EntityPool& pool,
                            const Vocabulary& vocab, int max_steps) {
    CorruptedExample prompt = corrupt_target(doc);
    DecodeConfig cfg;
    cfg.max_steps = max_steps;
    DecodeResult result = infill(net, prompt.part_a, pool, cfg);
    return vocab.decode(result.slots.front().tokens);
}

}  // namespace

std::vector<CaseOutput> run_eval_model(const Net<float>& net, const std::vector<Document>& docs,
                                       const EntityPool& pool, const Vocabulary& vocab,
                                       const EvalConfig& config) {
    std::vector<EntityId> items = item_catalog(pool);
    std::vector<CaseOutput> outputs;
    outputs.reserve(docs.size());
    for (const Document& doc : docs) {
        CaseOutput out;
        out.doc_id = doc.doc_id;
        switch (doc.family) {
            case TaskFamily::rating: {
                std::string text = generate_answer(net, doc, pool, vocab, config.max_steps);
                out.predicted_rating = parse_generated_rating(text, out.rating_parse_failed);
                out.generated_text = text;
                break;
            }
            case TaskFamily::sequential: {
                auto ranked = next_item_predict(net, doc, pool, config.beam, config.max_steps);
                for (const auto& [id, score] : ranked) out.ranked.push_back(id);
                break;
            }
            case TaskFamily::direct: {
                EntityId positive = target_entity(doc);
                Rng rng(derive_seed(config.seed, "negatives", fnv1a64(doc.doc_id.c_str())));
                std::vector<EntityId> negatives;
                for (EntityId id : items)
                    if (id != positive) negatives.push_back(id);
                // Partial Fisher-Yates: the first `negatives` entries.
                std::size_t want = std::min(std::size_t(config.negatives), negatives.size());
                for (std::size_t i = 0; i < want; ++i) {
                    std::size_t j = i + rng.next_below(negatives.size() - i);
                    std::swap(negatives[i], negatives[j]);
                }
                negatives.resize(want);
                std::vector<EntityId> candidates = negatives;
                candidates.insert(candidates.begin() + long(rng.next_below(want + 1)), positive);
                auto ranked = candidate_rank(net, doc, pool, candidates);
                for (const auto& [id, score] : ranked) out.ranked.push_back(id);
                break;
            }
            case TaskFamily::explanation:
            case TaskFamily::review: {
                out.generated_text = generate_answer(net, doc, pool, vocab, config.max_steps);
                break;
            }
        }
        outputs.push_back(std::move(out));
    }
    return outputs;
}

namespace {

struct GroupData {
    TaskFamily family;
    std::string template_id;
    bool unseen;
    std::vector<double> pred_ratings, true_ratings;
    std::size_t parse_failures = 0;
    std::vector<RankingCase> ranking;
    std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> texts;
};

}  // namespace

std::vector<MetricReport> evaluate(const std::vector<Document>& docs,
                                   const std::vector<CaseOutput>& outputs,
                                   const Vocabulary& vocab, const EntityPool& pool) {
    (void)pool;
    std::map<std::string, const CaseOutput*> by_id;
    for (const auto& out : outputs) by_id[out.doc_id] = &out;
    std::vector<std::string> misaligned;
    for (const auto& doc : docs)
        if (!by_id.count(doc.doc_id)) misaligned.push_back(doc.doc_id);
    if (docs.size() != outputs.size() || !misaligned.empty()) {
        std::string msg = "outputs misaligned with documents:";
        for (std::size_t i = 0; i < misaligned.size() && i < 10; ++i) msg += " " + misaligned[i];
        if (misaligned.empty()) msg += " duplicate or extra outputs";
        throw DataError(msg);
    }

    std::map<std::string, GroupData> groups;
    for (const auto& doc : docs) {
        const CaseOutput& out = *by_id.at(doc.doc_id);
        std::string key = std::string(task_family_name(doc.family)) + "\t" + doc.template_id +
                          "\t" + (doc.held_out_template ? "unseen" : "seen");
        GroupData& g = groups[key];
        g.family = doc.family;
        g.template_id = doc.template_id;
        g.unseen = doc.held_out_template;
        switch (doc.family) {
            case TaskFamily::rating:
                g.pred_ratings.push_back(out.predicted_rating);
                g.true_ratings.push_back(double(rating_truth(doc, vocab)));
                if (out.rating_parse_failed) ++g.parse_failures;
                break;
            case TaskFamily::sequential:
            case TaskFamily::direct:
                g.ranking.push_back({out.ranked, target_entity(doc)});
                break;
            case TaskFamily::explanation:
            case TaskFamily::review:
                g.texts.emplace_back(split_ws(out.generated_text),
                                     split_ws(target_text(doc, vocab)));
                break;
        }
    }

    std::vector<MetricReport> reports;
    for (auto& [key, g] : groups) {
        MetricReport report;
        report.family = g.family;
        report.template_id = g.template_id;
        report.unseen = g.unseen;
        switch (g.family) {
            case TaskFamily::rating:
                report.n = g.pred_ratings.size();
                report.values = {
                    {"rmse", rmse(g.pred_ratings, g.true_ratings)},
                    {"mae", mae(g.pred_ratings, g.true_ratings)},
                    {"parse_fail_rate", double(g.parse_failures) / double(report.n)},
                };
                break;
            case TaskFamily::sequential:
            case TaskFamily::direct:
                report.n = g.ranking.size();
                report.values = {
                    {"hr@1", hr_at_k(g.ranking, 1)},   {"hr@5", hr_at_k(g.ranking, 5)},
                    {"hr@10", hr_at_k(g.ranking, 10)}, {"ndcg@5", ndcg_at_k(g.ranking, 5)},
                    {"ndcg@10", ndcg_at_k(g.ranking, 10)},
                };
                break;
            case TaskFamily::explanation:
            case TaskFamily::review: {
                report.n = g.texts.size();
                double b2 = 0, b4 = 0, r1 = 0, r2 = 0, rl = 0;
                for (const auto& [cand, ref] : g.texts) {
                    b2 += bleu_n(cand, ref, 2);
                    b4 += bleu_n(cand, ref, 4);
                    r1 += rouge_n(cand, ref, 1);
                    r2 += rouge_n(cand, ref, 2);
                    rl += rouge_l(cand, ref);
                }
                double n = double(report.n);
                report.values = {{"bleu2", b2 / n}, {"bleu4", b4 / n},   {"rouge1", r1 / n},
                                 {"rouge2", r2 / n}, {"rougeL", rl / n}};
                break;
            }
        }
        reports.push_back(std::move(report));
    }
    return reports;
}

std::string report_to_tsv(const std::vector<MetricReport>& reports) {
    std::string out;
    for (const auto& r : reports) {
        for (const auto& [metric, value] : r.values) {
            out += task_family_name(r.family);
            out += '\t';
            out += r.template_id;
            out += '\t';
            out += r.unseen ? "unseen" : "seen";
            out += '\t';
            out += metric;
            out += '\t';
            out += format_double(value);
            out += '\t';
            out += std::to_string(r.n);
            out += '\n';
        }
    }
    return out;
}

std::string report_summary(const std::vector<MetricReport>& reports) {
    std::ostringstream out;
    out << "family        template        split    n     metrics\n";
    for (const auto& r : reports) {
        std::string family = task_family_name(r.family);
        family.resize(14, ' ');
        std::string tmpl = r.template_id;
        tmpl.resize(16, ' ');
        std::string split = r.unseen ? "unseen" : "seen";
        split.resize(9, ' ');
        std::string n = std::to_string(r.n);
        n.resize(6, ' ');
        out << family << tmpl << split << n;
        for (std::size_t i = 0; i < r.values.size(); ++i) {
            if (i) out << "  ";
            char buf[64];
            std::snprintf(buf, sizeof buf, "%s=%.4f", r.values[i].first.c_str(),
                          r.values[i].second);
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace recfill
