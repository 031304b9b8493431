#include "recfill/positions.hpp"

#include "recfill/vocab.hpp"

namespace recfill {

std::vector<int> part_a_intra_ids(const std::vector<TokenId>& part_a, const EntityPool& pool) {
    std::vector<int> intra(part_a.size(), 0);
    for (const Unit& u : pool.segment(part_a)) {
        if (!u.is_entity) continue;
        for (std::size_t k = 0; k < u.len; ++k) intra[u.start + k] = int(k) + 1;
    }
    return intra;
}

PositionedExample assign_positions(const CorruptedExample& ex, const EntityPool& pool,
                                   std::size_t max_len) {
    PositionedExample out;
    out.doc_id = ex.doc_id;
    out.part_a_len = ex.part_a.size();

    std::size_t total = ex.part_a.size();
    for (const auto& span : ex.spans) total += 1 + span.tokens.size();
    if (total > max_len)
        throw DataError("sequence too long: " + ex.doc_id + " (" + std::to_string(total) + " > " +
                        std::to_string(max_len) + ")");
    out.tokens.reserve(total);
    out.targets.assign(total, -1);
    out.inter_ids.reserve(total);
    out.intra_ids.reserve(total);

    // Part A: inter 1..n; intra 0 except inside segmented entities (1..L).
    out.tokens = ex.part_a;
    for (std::size_t t = 0; t < ex.part_a.size(); ++t) out.inter_ids.push_back(int(t) + 1);
    out.intra_ids = part_a_intra_ids(ex.part_a, pool);

    // Part B: spans in chronological order, every token pinned to its mask's
    // inter position; intra replays the entity-boundary continue/reset rule.
    for (const auto& span : ex.spans) {
        int inter = int(span.mask_pos) + 1;
        SpanBlock block;
        block.begin = out.tokens.size();
        block.len = 1 + span.tokens.size();
        block.mask_pos = span.mask_pos;
        out.spans.push_back(block);

        out.tokens.push_back(kStart);
        out.inter_ids.push_back(inter);
        out.intra_ids.push_back(1);
        out.targets[block.begin] = span.tokens.empty() ? kEnd : span.tokens.front();

        auto units = pool.segment(span.tokens);
        std::size_t unit_idx = 0;
        int intra = 1;
        for (std::size_t k = 0; k < span.tokens.size(); ++k) {
            while (unit_idx + 1 < units.size() && units[unit_idx + 1].start <= k) ++unit_idx;
            bool opens_unit = units[unit_idx].start == k;
            if (k == 0)
                intra = 2;  // first generated token always continues from [S]
            else if (opens_unit || !units[unit_idx].is_entity)
                intra = 1;
            else
                intra += 1;
            out.tokens.push_back(span.tokens[k]);
            out.inter_ids.push_back(inter);
            out.intra_ids.push_back(intra);
            std::size_t pos = out.tokens.size() - 1;
            out.targets[pos] = k + 1 < span.tokens.size() ? span.tokens[k + 1] : kEnd;
        }
    }
    return out;
}

std::vector<std::uint8_t> build_visibility(const PositionedExample& ex) {
    std::size_t n = ex.tokens.size();
    std::vector<std::uint8_t> vis(n * n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            vis[i * n + j] = (j < ex.part_a_len || (j >= ex.part_a_len && j <= i)) ? 1 : 0;
    return vis;
}

}  // namespace recfill
