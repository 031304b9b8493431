#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "recfill/common.hpp"
#include "recfill/vocab.hpp"

namespace recfill {

enum class EntityKind { item, user_attribute, other };

const char* entity_kind_name(EntityKind k);
EntityKind entity_kind_from_name(const std::string& name);

struct EntityInfo {
    std::vector<TokenId> tokens;
    std::string surface;
    EntityKind kind = EntityKind::other;
};

// One atom of the masking lattice: a whole entity or a single free token.
struct Unit {
    bool is_entity = false;
    EntityId entity = -1;
    std::size_t start = 0;  // token index in the source sequence
    std::size_t len = 1;

    static Unit single(std::size_t pos) { return {false, -1, pos, 1}; }
    static Unit entity_unit(EntityId id, std::size_t pos, std::size_t len) {
        return {true, id, pos, len};
    }
};

class EntityPool;

// Streaming match cursor for the dynamic position mechanism. Depth equals the
// matched-prefix length; depth 0 means no live match.
struct MatchState {
    const void* node = nullptr;
    std::size_t depth = 0;
};

enum class StepVerdict { CONTINUE, RESTART };

constexpr std::size_t kMaxEntityTokens = 64;

class EntityPool {
public:
    EntityPool() = default;

    EntityId register_entity(std::vector<TokenId> tokens, std::string surface, EntityKind kind);

    std::size_t size() const { return entities_.size(); }
    const EntityInfo& info(EntityId id) const;

    // Exact-sequence lookup; empty when the sequence is not a registered entity.
    std::optional<EntityId> exact_lookup(const std::vector<TokenId>& tokens) const;
    bool is_prefix(const std::vector<TokenId>& tokens) const;
    std::optional<EntityId> find_by_surface(const std::string& surface) const;

    // Greedy leftmost-longest segmentation. Total: the concatenated units
    // always reproduce the input exactly.
    std::vector<Unit> segment(const std::vector<TokenId>& tokens) const;

    // One token of the Figure-2 judgment. CONTINUE extends a live match
    // (depth >= 1); RESTART re-roots and re-attempts `next` from the root so
    // a new entity may begin right after another ends.
    StepVerdict step(MatchState& state, TokenId next) const;

    // Constrained-decoding feasibility at the current match state.
    std::vector<TokenId> continuations(const MatchState& state) const;
    bool at_complete_entity(const MatchState& state) const;
    std::optional<EntityId> entity_at(const MatchState& state) const;
    MatchState root_state() const;

    void save(const std::string& path) const;
    static EntityPool load(const std::string& path, const Vocabulary& vocab);

private:
    struct Node {
        std::map<TokenId, std::unique_ptr<Node>> children;  // ordered for determinism
        EntityId terminal = -1;
    };

    const Node* as_node(const MatchState& s) const {
        return s.node ? static_cast<const Node*>(s.node) : &root_;
    }

    Node root_;
    std::vector<EntityInfo> entities_;
};

}  // namespace recfill
