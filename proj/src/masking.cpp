#include "recfill/masking.hpp"

#include <algorithm>
#include <cmath>

namespace recfill {

const char* mask_level_name(MaskLevel level) {
    switch (level) {
        case MaskLevel::entity: return "entity";
        case MaskLevel::sentence: return "sentence";
        case MaskLevel::document: return "document";
    }
    throw ConfigError("unknown mask level");
}

TokenId mask_token_for(MaskLevel level) {
    switch (level) {
        case MaskLevel::entity: return kMaskEntity;
        case MaskLevel::sentence: return kMaskSentence;
        case MaskLevel::document: return kMaskDocument;
    }
    throw ConfigError("unknown mask level");
}

std::vector<Unit> units_of(const Document& doc) {
    std::vector<Unit> units;
    std::size_t pos = 0;
    for (const auto& span : doc.entity_spans) {
        if (span.start < pos || span.start + span.len > doc.tokens.size())
            throw DataError("entity spans out of order: " + doc.doc_id);
        for (; pos < span.start; ++pos) units.push_back(Unit::single(pos));
        units.push_back(Unit::entity_unit(span.entity, span.start, span.len));
        pos = span.start + span.len;
    }
    for (; pos < doc.tokens.size(); ++pos) units.push_back(Unit::single(pos));
    return units;
}

namespace {

MaskSpan span_from_units(const std::vector<Unit>& units, std::size_t u0, std::size_t count,
                         MaskLevel level) {
    MaskSpan span;
    span.start = units[u0].start;
    span.len = units[u0 + count - 1].start + units[u0 + count - 1].len - span.start;
    span.level = level;
    return span;
}

}  // namespace

std::vector<MaskSpan> sample_entity_spans(const Document& doc, double budget, double lambda,
                                          Rng& rng) {
    if (budget <= 0.0 || budget >= 1.0) throw ConfigError("entity budget must be in (0,1)");
    auto units = units_of(doc);
    std::size_t n = doc.tokens.size();
    std::vector<bool> taken(units.size(), false);
    std::vector<MaskSpan> spans;
    std::size_t masked = 0;
    while (double(masked) < budget * double(n)) {
        std::size_t len = std::max<std::uint64_t>(1, rng.next_poisson(lambda));
        len = std::min(len, units.size());
        std::vector<std::size_t> starts;
        for (; len >= 1; --len) {
            starts.clear();
            for (std::size_t u = 0; u + len <= units.size(); ++u) {
                bool free = true;
                for (std::size_t k = u; k < u + len; ++k)
                    if (taken[k]) { free = false; break; }
                if (free) starts.push_back(u);
            }
            if (!starts.empty()) break;
        }
        if (starts.empty()) break;
        std::size_t u0 = starts[rng.next_below(starts.size())];
        for (std::size_t k = u0; k < u0 + len; ++k) taken[k] = true;
        MaskSpan span = span_from_units(units, u0, len, MaskLevel::entity);
        masked += span.len;
        spans.push_back(span);
    }
    std::sort(spans.begin(), spans.end(),
              [](const MaskSpan& a, const MaskSpan& b) { return a.start < b.start; });
    return spans;
}

namespace {

bool is_sentence_terminator(const std::string& tok) {
    return tok == "." || tok == "!" || tok == "?" || tok == ";";
}

}  // namespace

std::vector<MaskSpan> sample_sentence_spans(const Document& doc, const Vocabulary& vocab,
                                            double budget, Rng& rng) {
    std::size_t n = doc.tokens.size();
    if (n == 0) return {};
    auto units = units_of(doc);
    // Sentence ends after a terminator token; a terminator inside an entity is
    // snapped outward to the entity end.
    std::vector<std::size_t> unit_of_token(n);
    for (std::size_t u = 0; u < units.size(); ++u)
        for (std::size_t t = units[u].start; t < units[u].start + units[u].len; ++t)
            unit_of_token[t] = u;
    std::vector<std::pair<std::size_t, std::size_t>> sentences;  // [start, end)
    std::size_t start = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (!is_sentence_terminator(vocab.id_to_token(doc.tokens[t]))) continue;
        const Unit& u = units[unit_of_token[t]];
        std::size_t end = u.start + u.len;  // snap outward past the entity
        if (end > start) sentences.emplace_back(start, end);
        start = end;
        if (end > t + 1) t = end - 1;
    }
    if (start < n) sentences.emplace_back(start, n);

    std::vector<std::size_t> order(sentences.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<MaskSpan> spans;
    std::size_t masked = 0;
    while (!order.empty() && double(masked) < budget * double(n)) {
        std::size_t pick = rng.next_below(order.size());
        auto [s, e] = sentences[order[pick]];
        order.erase(order.begin() + long(pick));
        spans.push_back({s, e - s, MaskLevel::sentence});
        masked += e - s;
    }
    std::sort(spans.begin(), spans.end(),
              [](const MaskSpan& a, const MaskSpan& b) { return a.start < b.start; });
    return spans;
}

std::vector<MaskSpan> sample_document_span(const Document& doc, Rng& rng) {
    std::size_t n = doc.tokens.size();
    if (n < 2) throw DataError("document too short for document-level masking");
    auto units = units_of(doc);
    std::size_t min_len = (n + 1) / 2;
    std::size_t len = min_len + rng.next_below(n - min_len + 1);
    std::size_t start = rng.next_below(n - len + 1);
    std::size_t end = start + len;
    // Snap both ends outward to unit boundaries.
    for (const auto& u : units) {
        if (start > u.start && start < u.start + u.len) start = u.start;
        if (end > u.start && end < u.start + u.len) end = u.start + u.len;
    }
    return {MaskSpan{start, end - start, MaskLevel::document}};
}

MaskLevel choose_objective(Rng& rng, const std::vector<double>& mix) {
    if (mix.size() != 3) throw ConfigError("objective mix needs 3 entries");
    double sum = mix[0] + mix[1] + mix[2];
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("objective mix must sum to 1");
    return static_cast<MaskLevel>(rng.next_categorical(mix));
}

CorruptedExample corrupt(const Document& doc, std::vector<MaskSpan> spans, MaskLevel level) {
    std::sort(spans.begin(), spans.end(),
              [](const MaskSpan& a, const MaskSpan& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].start + spans[i].len > doc.tokens.size())
            throw DataError("span outside document");
        if (spans[i].len == 0) throw DataError("empty span");
        if (i > 0 && spans[i].start < spans[i - 1].start + spans[i - 1].len)
            throw DataError("overlapping spans");
    }
    CorruptedExample ex;
    ex.doc_id = doc.doc_id;
    ex.level = level;
    std::size_t next_span = 0;
    for (std::size_t t = 0; t < doc.tokens.size();) {
        if (next_span < spans.size() && spans[next_span].start == t) {
            TargetSpan target;
            target.mask_pos = ex.part_a.size();
            target.orig_start = t;
            target.tokens.assign(doc.tokens.begin() + long(t),
                                 doc.tokens.begin() + long(t + spans[next_span].len));
            ex.part_a.push_back(mask_token_for(level));
            t += spans[next_span].len;
            ++next_span;
            ex.spans.push_back(std::move(target));
        } else {
            ex.part_a.push_back(doc.tokens[t]);
            ++t;
        }
    }
    return ex;
}

CorruptedExample corrupt_target(const Document& doc) {
    if (doc.target_len == 0) throw DataError("document has no target region: " + doc.doc_id);
    return corrupt(doc, {MaskSpan{doc.target_start, doc.target_len, MaskLevel::entity}},
                   MaskLevel::entity);
}

CorruptedExample mask_example(const Document& doc, const Vocabulary& vocab,
                              const MaskConfig& config, double target_prob, Rng& rng) {
    if (target_prob > 0.0 && rng.next_double() < target_prob) return corrupt_target(doc);
    MaskLevel level = choose_objective(rng, config.objective_mix);
    std::vector<MaskSpan> spans;
    switch (level) {
        case MaskLevel::entity:
            spans = sample_entity_spans(doc, config.entity_budget, config.poisson_lambda, rng);
            break;
        case MaskLevel::sentence:
            spans = sample_sentence_spans(doc, vocab, config.sentence_budget, rng);
            break;
        case MaskLevel::document:
            spans = sample_document_span(doc, rng);
            break;
    }
    if (spans.empty()) return corrupt_target(doc);  // tiny doc: keep the example supervised
    return corrupt(doc, std::move(spans), level);
}

std::string masked_example_to_line(const CorruptedExample& ex) {
    std::string out = ex.doc_id;
    out += '\t';
    for (std::size_t i = 0; i < ex.part_a.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(ex.part_a[i]);
    }
    out += '\t';
    for (std::size_t i = 0; i < ex.spans.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(ex.spans[i].mask_pos);
    }
    out += '\t';
    for (std::size_t i = 0; i < ex.spans.size(); ++i) {
        if (i) out += " | ";
        for (std::size_t t = 0; t < ex.spans[i].tokens.size(); ++t) {
            if (t) out += ' ';
            out += std::to_string(ex.spans[i].tokens[t]);
        }
    }
    out += '\t';
    out += mask_level_name(ex.level);
    return out;
}

}  // namespace recfill
