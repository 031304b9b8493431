#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "recfill/entity_pool.hpp"
#include "recfill/masking.hpp"

namespace recfill {

constexpr std::size_t kDefaultMaxLen = 1024;
// Intra ids: 0 for Part A standalone/mask tokens, up to 1 + max entity length
// inside Part B spans ([S] plus a full-length entity).
constexpr int kIntraTableSize = int(kMaxEntityTokens) + 2;

struct SpanBlock {
    std::size_t begin = 0;  // index of [S] in the full sequence
    std::size_t len = 0;    // [S] + span tokens
    std::size_t mask_pos = 0;
};

struct PositionedExample {
    std::string doc_id;
    std::vector<TokenId> tokens;    // part_a ++ per span ([S] ++ span tokens)
    std::vector<TokenId> targets;   // -1 where no loss; Part B predicts next token / [E]
    std::vector<int> inter_ids;     // 1-based; Part B rows repeat their mask position
    std::vector<int> intra_ids;
    std::size_t part_a_len = 0;
    std::vector<SpanBlock> spans;
};

// Part A intra ids: 0 for standalone and mask tokens, 1..L inside segmented
// entities.
std::vector<int> part_a_intra_ids(const std::vector<TokenId>& part_a, const EntityPool& pool);

// Static (training-time) position assignment. Part A entity structure comes
// from trie segmentation of part_a; Part B intra ids follow [S]=1, first
// token 2, then +1 inside an entity and reset to 1 at entity boundaries.
PositionedExample assign_positions(const CorruptedExample& ex, const EntityPool& pool,
                                   std::size_t max_len = kDefaultMaxLen);

// Row-major n*n; row i sees col j iff j < part_a_len or (j in Part B and j <= i).
std::vector<std::uint8_t> build_visibility(const PositionedExample& ex);

}  // namespace recfill
