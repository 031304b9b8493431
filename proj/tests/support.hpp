#pragma once

// Fixtures and oracles shared by the unit and acceptance binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "recfill/entity_pool.hpp"
#include "recfill/glm.hpp"
#include "recfill/masking.hpp"
#include "recfill/positions.hpp"
#include "recfill/vocab.hpp"

namespace testsupport {

using namespace recfill;

// Tiny vocabulary/pool/documents over words w0..w{V-1} with a couple of
// registered 2-3 token entities; documents carry the entity annotations the
// masker needs.
struct TinyWorld {
    Vocabulary vocab;
    EntityPool pool;
    std::vector<Document> docs;
};

inline TinyWorld tiny_world(std::size_t n_docs, std::uint64_t seed) {
    // 4 words + the 7 specials = vocabulary of 11.
    TinyWorld w{Vocabulary::build({"w0 w1 w2 w3"}), EntityPool{}, {}};
    w.pool.register_entity(w.vocab.encode("w0 w1"), "w0 w1", EntityKind::item);
    w.pool.register_entity(w.vocab.encode("w1 w2 w3"), "w1 w2 w3", EntityKind::item);
    Rng rng(derive_seed(seed, "tiny-world", 0));
    for (std::size_t d = 0; d < n_docs; ++d) {
        Document doc;
        doc.doc_id = "tiny#" + std::to_string(d);
        std::string text;
        std::size_t units = 3 + rng.next_below(4);
        for (std::size_t u = 0; u < units; ++u) {
            const char* piece;
            switch (rng.next_below(3)) {
                case 0: piece = "w0 w1"; break;
                case 1: piece = "w1 w2 w3"; break;
                default: piece = "w3"; break;  // w3 never starts an entity
            }
            if (!text.empty()) text += ' ';
            text += piece;
        }
        doc.tokens = w.vocab.encode(text);
        for (const auto& unit : w.pool.segment(doc.tokens))
            if (unit.is_entity) doc.entity_spans.push_back({unit.start, unit.len, unit.entity});
        doc.target_start = doc.tokens.size() - 1;
        doc.target_len = 1;
        w.docs.push_back(std::move(doc));
    }
    return w;
}

inline std::vector<PositionedExample> positioned_batch(const TinyWorld& w, std::size_t n,
                                                       std::uint64_t seed) {
    MaskConfig config;
    Rng rng(derive_seed(seed, "batch-mask", 0));
    std::vector<PositionedExample> batch;
    for (std::size_t i = 0; i < n; ++i) {
        const Document& doc = w.docs[i % w.docs.size()];
        batch.push_back(assign_positions(mask_example(doc, w.vocab, config, 0.3, rng), w.pool));
    }
    return batch;
}

struct FiniteDiffReport {
    double max_rel_err = 0.0;
    std::size_t coords_checked = 0;
    std::string worst_tensor;
};

// Central finite differences against the analytic gradient, sampling
// `per_tensor` coordinates from every trainable tensor. The 1e-6 floor on the
// relative-error denominator keeps cancellation noise (≈1e-11 absolute at
// h=1e-5 on an O(1) loss) from swamping coordinates whose true gradient is
// smaller than the method can resolve.
inline FiniteDiffReport finite_diff_check(Net<double>& net,
                                          const std::vector<PositionedExample>& batch,
                                          std::size_t per_tensor, std::uint64_t seed) {
    auto grads = net.zero_grads();
    net.loss_and_grads(batch, grads);
    const double h = 1e-5;
    Rng rng(derive_seed(seed, "fd-coords", 0));
    FiniteDiffReport report;
    for (std::size_t ti = 0; ti < net.tensor_count(); ++ti) {
        auto& tensor = net.tensor_at(ti);
        if (!tensor.trainable) continue;
        std::size_t size = std::size_t(tensor.value.size());
        for (std::size_t k = 0; k < per_tensor && k < size; ++k) {
            std::size_t c = rng.next_below(size);
            double saved = tensor.value.data()[c];
            tensor.value.data()[c] = saved + h;
            auto dummy = net.zero_grads();
            double lp = net.loss_and_grads(batch, dummy);
            tensor.value.data()[c] = saved - h;
            dummy = net.zero_grads();
            double lm = net.loss_and_grads(batch, dummy);
            tensor.value.data()[c] = saved;
            double fd = (lp - lm) / (2.0 * h);
            double an = grads.g[ti].data()[c];
            double rel = std::fabs(fd - an) / std::max({1e-6, std::fabs(fd), std::fabs(an)});
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_tensor = tensor.name;
            }
            ++report.coords_checked;
        }
    }
    return report;
}

// Zeroes every non-embedding tensor so the tied head sees hf = 0 and emits
// uniform logits.
template <typename T>
void zero_non_embedding(Net<T>& net) {
    for (std::size_t i = 0; i < net.tensor_count(); ++i) {
        auto& t = net.tensor_at(i);
        if (t.name.rfind("embedding.", 0) != 0) t.value.setZero();
    }
}

}  // namespace testsupport
