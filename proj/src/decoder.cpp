#include "recfill/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace recfill {

int next_intra(DecodeState& state, TokenId token, const EntityPool& pool) {
    StepVerdict verdict = pool.step(state.match, token);
    if (state.emitted == 0)
        state.intra = 2;
    else
        state.intra = verdict == StepVerdict::CONTINUE ? state.intra + 1 : 1;
    ++state.emitted;
    return state.intra;
}

namespace {

PositionedExample base_example(const std::vector<TokenId>& prompt, const EntityPool& pool) {
    PositionedExample ex;
    ex.doc_id = "decode";
    ex.tokens = prompt;
    ex.part_a_len = prompt.size();
    ex.inter_ids.resize(prompt.size());
    for (std::size_t t = 0; t < prompt.size(); ++t) ex.inter_ids[t] = int(t) + 1;
    ex.intra_ids = part_a_intra_ids(prompt, pool);
    ex.targets.assign(prompt.size(), -1);
    return ex;
}

void append_token(PositionedExample& ex, TokenId token, int inter, int intra) {
    ex.tokens.push_back(token);
    ex.inter_ids.push_back(inter);
    ex.intra_ids.push_back(intra);
    ex.targets.push_back(-1);
}

Eigen::RowVectorXd log_softmax_row(const Mat<float>& logits) {
    Eigen::RowVectorXd row = logits.row(logits.rows() - 1).cast<double>();
    double row_max = row.maxCoeff();
    double lse = std::log((row.array() - row_max).exp().sum()) + row_max;
    return (row.array() - lse).matrix();
}

std::vector<TokenId> feasible_tokens(const DecodeState& state, const EntityPool& pool,
                                     bool single_entity) {
    std::vector<TokenId> f = pool.continuations(state.match);
    if (pool.at_complete_entity(state.match)) {
        f.push_back(kEnd);
        if (!single_entity) {
            auto starts = pool.continuations(pool.root_state());
            f.insert(f.end(), starts.begin(), starts.end());
        }
    }
    std::sort(f.begin(), f.end());
    f.erase(std::unique(f.begin(), f.end()), f.end());
    return f;
}

// Control tokens are never emitted by free-form decoding; [E] stays eligible
// as the stop signal and [UNK] is ordinary sequence material.
bool selectable(TokenId id) {
    return id == kEnd || id == kUnk || id >= kNumSpecials;
}

TokenId select_token(const Eigen::RowVectorXd& logp, const std::vector<TokenId>& allowed,
                     int top_k, Rng& rng) {
    if (allowed.empty()) throw DataError("no feasible token");
    if (top_k <= 0 || allowed.size() == 1) {
        TokenId best = allowed[0];
        for (TokenId id : allowed)
            if (logp(id) > logp(best)) best = id;
        return best;
    }
    std::vector<TokenId> pool_ids = allowed;
    std::sort(pool_ids.begin(), pool_ids.end(), [&](TokenId a, TokenId b) {
        if (logp(a) != logp(b)) return logp(a) > logp(b);
        return a < b;
    });
    if (pool_ids.size() > std::size_t(top_k)) pool_ids.resize(std::size_t(top_k));
    std::vector<double> weights;
    weights.reserve(pool_ids.size());
    double max_lp = logp(pool_ids[0]);
    for (TokenId id : pool_ids) weights.push_back(std::exp(logp(id) - max_lp));
    return pool_ids[rng.next_categorical(weights)];
}

}  // namespace

DecodeResult infill(const Net<float>& net, const std::vector<TokenId>& prompt,
                    const EntityPool& pool, const DecodeConfig& config) {
    std::vector<std::size_t> mask_positions;
    for (std::size_t t = 0; t < prompt.size(); ++t)
        if (is_mask_token(prompt[t])) mask_positions.push_back(t);
    if (mask_positions.empty()) throw DataError("no mask token");
    if (config.force_tokens && config.force_tokens->size() != mask_positions.size())
        throw DataError("forced spans do not match mask count");

    std::vector<TokenId> all_tokens;
    if (!config.constrain_entities)
        for (TokenId id = 0; id < TokenId(net.config().vocab_size); ++id)
            if (selectable(id)) all_tokens.push_back(id);

    PositionedExample ex = base_example(prompt, pool);
    DecodeResult result;
    for (std::size_t s = 0; s < mask_positions.size(); ++s) {
        int inter = int(mask_positions[s]) + 1;
        SlotResult slot;
        slot.mask_pos = mask_positions[s];
        append_token(ex, kStart, inter, 1);
        slot.inter_ids.push_back(inter);
        slot.intra_ids.push_back(1);

        DecodeState state{pool.root_state(), 1, 0};
        Rng rng(derive_seed(config.seed, "decode-slot", s));
        bool ended = false;
        for (int step = 0; step < config.max_steps; ++step) {
            Eigen::RowVectorXd logp = log_softmax_row(net.forward(ex));
            TokenId chosen;
            if (config.force_tokens) {
                const auto& forced = (*config.force_tokens)[s];
                chosen = std::size_t(step) < forced.size() ? forced[std::size_t(step)] : kEnd;
            } else if (config.constrain_entities) {
                chosen = select_token(logp, feasible_tokens(state, pool, config.single_entity),
                                      config.top_k, rng);
            } else {
                chosen = select_token(logp, all_tokens, config.top_k, rng);
            }
            slot.logps.push_back(logp(chosen));
            slot.total_logp += logp(chosen);
            if (chosen == kEnd) {
                ended = true;
                break;
            }
            int intra = next_intra(state, chosen, pool);
            append_token(ex, chosen, inter, intra);
            slot.tokens.push_back(chosen);
            slot.inter_ids.push_back(inter);
            slot.intra_ids.push_back(intra);
        }
        slot.truncated = !ended;
        result.slots.push_back(std::move(slot));
    }
    return result;
}

double span_logprob(const Net<float>& net, const std::vector<TokenId>& prompt,
                    const std::vector<TokenId>& span, const EntityPool& pool, bool normalize) {
    std::vector<std::vector<TokenId>> forced = {span};
    DecodeConfig config;
    config.force_tokens = &forced;
    config.max_steps = int(span.size()) + 1;
    DecodeResult result = infill(net, prompt, pool, config);
    double total = result.slots[0].total_logp;
    return normalize ? total / double(span.size() + 1) : total;
}

std::vector<std::pair<EntityId, double>> next_item_predict(const Net<float>& net,
                                                           const Document& doc,
                                                           const EntityPool& pool, int k,
                                                           int max_steps) {
    if (k < 1) throw ConfigError("beam width must be >= 1");
    CorruptedExample prompt = corrupt_target(doc);

    struct Beam {
        PositionedExample ex;
        DecodeState state;
        double logp = 0.0;
        std::vector<TokenId> tokens;
    };
    PositionedExample base = base_example(prompt.part_a, pool);
    int inter = int(prompt.spans[0].mask_pos) + 1;
    append_token(base, kStart, inter, 1);

    std::vector<Beam> live = {{base, DecodeState{pool.root_state(), 1, 0}, 0.0, {}}};
    std::vector<std::pair<EntityId, double>> done;

    for (int step = 0; step < max_steps && !live.empty(); ++step) {
        struct Cand {
            std::size_t beam;
            TokenId token;
            double logp;
        };
        std::vector<Cand> cands;
        for (std::size_t b = 0; b < live.size(); ++b) {
            Eigen::RowVectorXd logp = log_softmax_row(net.forward(live[b].ex));
            for (TokenId tok : feasible_tokens(live[b].state, pool, /*single_entity=*/true))
                cands.push_back({b, tok, live[b].logp + logp(tok)});
        }
        std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            return a.logp > b.logp;
        });
        if (cands.size() > std::size_t(k)) cands.resize(std::size_t(k));
        std::vector<Beam> next;
        for (const Cand& c : cands) {
            if (c.token == kEnd) {
                auto id = pool.entity_at(live[c.beam].state.match);
                if (!id) throw DataError("terminated outside a complete entity");
                done.emplace_back(*id, c.logp);
                continue;
            }
            Beam nb = live[c.beam];
            int intra = next_intra(nb.state, c.token, pool);
            append_token(nb.ex, c.token, inter, intra);
            nb.tokens.push_back(c.token);
            nb.logp = c.logp;
            next.push_back(std::move(nb));
        }
        live = std::move(next);
        // Extending a beam only lowers its total, so once the k-th best
        // completion beats every live prefix the search is exact.
        if (done.size() >= std::size_t(k)) {
            std::vector<double> scores;
            for (const auto& d : done) scores.push_back(d.second);
            std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end(),
                             std::greater<>());
            double kth = scores[std::size_t(k - 1)];
            double best_live = -std::numeric_limits<double>::infinity();
            for (const auto& b : live) best_live = std::max(best_live, b.logp);
            if (best_live <= kth) break;
        }
    }
    std::stable_sort(done.begin(), done.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    if (done.size() > std::size_t(k)) done.resize(std::size_t(k));
    return done;
}

std::vector<std::pair<EntityId, double>> candidate_rank(const Net<float>& net,
                                                        const Document& doc,
                                                        const EntityPool& pool,
                                                        const std::vector<EntityId>& candidates) {
    if (candidates.empty()) throw DataError("empty candidate list");
    CorruptedExample prompt = corrupt_target(doc);
    std::vector<std::pair<EntityId, double>> scored;
    scored.reserve(candidates.size());
    for (EntityId id : candidates) {
        const EntityInfo& info = pool.info(id);  // throws, naming the id
        scored.emplace_back(id,
                            span_logprob(net, prompt.part_a, info.tokens, pool, true));
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return scored;
}

}  // namespace recfill
