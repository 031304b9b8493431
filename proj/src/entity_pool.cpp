#include "recfill/entity_pool.hpp"

#include <fstream>
#include <sstream>

namespace recfill {

const char* entity_kind_name(EntityKind k) {
    switch (k) {
        case EntityKind::item: return "item";
        case EntityKind::user_attribute: return "user_attribute";
        default: return "other";
    }
}

EntityKind entity_kind_from_name(const std::string& name) {
    if (name == "item") return EntityKind::item;
    if (name == "user_attribute") return EntityKind::user_attribute;
    if (name == "other") return EntityKind::other;
    throw DataError("unknown entity kind: " + name);
}

EntityId EntityPool::register_entity(std::vector<TokenId> tokens, std::string surface,
                                     EntityKind kind) {
    if (tokens.empty()) throw DataError("empty entity sequence");
    if (tokens.size() > kMaxEntityTokens)
        throw DataError("entity longer than " + std::to_string(kMaxEntityTokens) + " tokens: " +
                        surface);
    Node* node = &root_;
    for (TokenId t : tokens) {
        auto& child = node->children[t];
        if (!child) child = std::make_unique<Node>();
        node = child.get();
    }
    if (node->terminal >= 0) throw DataError("duplicate entity: " + surface);
    EntityId id = static_cast<EntityId>(entities_.size());
    node->terminal = id;
    entities_.push_back({std::move(tokens), std::move(surface), kind});
    return id;
}

const EntityInfo& EntityPool::info(EntityId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= entities_.size())
        throw DataError("entity id out of range: " + std::to_string(id));
    return entities_[id];
}

std::optional<EntityId> EntityPool::exact_lookup(const std::vector<TokenId>& tokens) const {
    const Node* node = &root_;
    for (TokenId t : tokens) {
        auto it = node->children.find(t);
        if (it == node->children.end()) return std::nullopt;
        node = it->second.get();
    }
    if (node->terminal < 0) return std::nullopt;
    return node->terminal;
}

bool EntityPool::is_prefix(const std::vector<TokenId>& tokens) const {
    const Node* node = &root_;
    for (TokenId t : tokens) {
        auto it = node->children.find(t);
        if (it == node->children.end()) return false;
        node = it->second.get();
    }
    return true;
}

std::optional<EntityId> EntityPool::find_by_surface(const std::string& surface) const {
    for (std::size_t i = 0; i < entities_.size(); ++i)
        if (entities_[i].surface == surface) return static_cast<EntityId>(i);
    return std::nullopt;
}

std::vector<Unit> EntityPool::segment(const std::vector<TokenId>& tokens) const {
    std::vector<Unit> units;
    std::size_t i = 0;
    while (i < tokens.size()) {
        // walk as deep as the trie allows, remember the longest terminal seen
        const Node* node = &root_;
        std::size_t best_len = 0;
        EntityId best_id = -1;
        std::size_t j = i;
        while (j < tokens.size()) {
            auto it = node->children.find(tokens[j]);
            if (it == node->children.end()) break;
            node = it->second.get();
            ++j;
            if (node->terminal >= 0) {
                best_len = j - i;
                best_id = node->terminal;
            }
        }
        if (best_len > 0) {
            units.push_back({true, best_id, i, best_len});
            i += best_len;
        } else {
            units.push_back({false, -1, i, 1});
            ++i;
        }
    }
    return units;
}

StepVerdict EntityPool::step(MatchState& state, TokenId next) const {
    if (state.depth >= 1) {
        const Node* node = as_node(state);
        auto it = node->children.find(next);
        if (it != node->children.end()) {
            state.node = it->second.get();
            ++state.depth;
            return StepVerdict::CONTINUE;
        }
    }
    // re-root and try to open a fresh match with `next`
    auto it = root_.children.find(next);
    if (it != root_.children.end()) {
        state.node = it->second.get();
        state.depth = 1;
    } else {
        state.node = &root_;
        state.depth = 0;
    }
    return StepVerdict::RESTART;
}

std::vector<TokenId> EntityPool::continuations(const MatchState& state) const {
    const Node* node = as_node(state);
    std::vector<TokenId> out;
    out.reserve(node->children.size());
    for (const auto& [tok, child] : node->children) out.push_back(tok);
    return out;
}

bool EntityPool::at_complete_entity(const MatchState& state) const {
    return state.depth >= 1 && as_node(state)->terminal >= 0;
}

std::optional<EntityId> EntityPool::entity_at(const MatchState& state) const {
    const Node* node = as_node(state);
    if (state.depth == 0 || node->terminal < 0) return std::nullopt;
    return node->terminal;
}

MatchState EntityPool::root_state() const { return MatchState{&root_, 0}; }

void EntityPool::save(const std::string& path) const {
    std::ostringstream out;
    for (std::size_t i = 0; i < entities_.size(); ++i)
        out << i << '\t' << entity_kind_name(entities_[i].kind) << '\t' << entities_[i].surface
            << '\n';
    write_file_atomic(path, out.str());
}

EntityPool EntityPool::load(const std::string& path, const Vocabulary& vocab) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open entity pool file: " + path);
    EntityPool pool;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_char(line, '\t');
        if (fields.size() != 3)
            throw DataError("entity file line " + std::to_string(line_no) + ": expected 3 fields");
        EntityId id = static_cast<EntityId>(std::stol(fields[0]));
        if (id != static_cast<EntityId>(pool.entities_.size()))
            throw DataError("entity file line " + std::to_string(line_no) + ": ids not ascending");
        pool.register_entity(vocab.encode(fields[2]), fields[2], entity_kind_from_name(fields[1]));
    }
    return pool;
}

}  // namespace recfill
