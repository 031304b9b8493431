#include <cmath>
#include <set>

#include "doctest.h"
#include "recfill/glm.hpp"
#include "recfill/optim.hpp"
#include "support.hpp"

using namespace recfill;
using testsupport::tiny_world;
using testsupport::positioned_batch;

namespace {

ModelConfig small_config(int vocab_size) {
    ModelConfig cfg;
    cfg.vocab_size = vocab_size;
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_len = 64;
    cfg.seed = 5;
    return cfg;
}

bool tensors_equal(const Net<float>& a, const Net<float>& b) {
    if (a.tensor_count() != b.tensor_count()) return false;
    for (std::size_t i = 0; i < a.tensor_count(); ++i) {
        if (a.tensor_at(i).name != b.tensor_at(i).name) return false;
        if (a.tensor_at(i).value != b.tensor_at(i).value) return false;
    }
    return true;
}

}  // namespace

TEST_CASE("init: deterministic, validated, closed-form parameter count") {
    ModelConfig cfg;
    cfg.vocab_size = 100;
    cfg.d_model = 32;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.max_len = 64;
    cfg.seed = 9;
    Net<float> a(cfg), b(cfg);
    CHECK(tensors_equal(a, b));

    ModelConfig bad = cfg;
    bad.d_model = 8;
    bad.n_heads = 3;
    CHECK_THROWS_AS(Net<float>{bad}, ConfigError);

    const std::size_t d = 32, V = 100, L = 2, ffn = 4, max_len = 64;
    std::size_t expected = V * d                              // token table (tied head)
                           + (max_len + 1) * d                // inter, row 0 = padding
                           + std::size_t(kIntraTableSize) * d // intra
                           + L * (2 * d                       // input norm gain+bias
                                  + d * 3 * d                 // query_key_value
                                  + d * d                     // dense
                                  + 2 * d                     // post-attention norm
                                  + d * ffn * d               // dense_h_to_4h
                                  + ffn * d * d)              // dense_4h_to_h
                           + 2 * d;                           // final norm
    CHECK(a.parameter_count() == expected);
}

TEST_CASE("zeroed non-embedding weights give uniform logits and ln V loss") {
    auto w = tiny_world(4, 2);
    ModelConfig cfg = small_config(int(w.vocab.size()));
    Net<double> net(cfg);
    testsupport::zero_non_embedding(net);
    auto batch = positioned_batch(w, 3, 7);
    for (const auto& ex : batch) {
        auto logits = net.forward(ex);
        CHECK(logits.cwiseAbs().maxCoeff() == 0.0);  // hf = 0 through the tied head
        double loss = Net<double>::infill_loss(logits, ex);
        CHECK(std::fabs(loss - std::log(double(w.vocab.size()))) < 1e-12);
    }
}

TEST_CASE("infill_loss matches a hand-computed cross entropy") {
    // V=5, two spans: target positions 2,3 (tokens 3 and kEnd=1 say) with
    // fixed logits; expected value computed with explicit scalar arithmetic.
    PositionedExample ex;
    ex.tokens = {7, 7, 7, 7};
    ex.targets = {TokenId(-1), TokenId(-1), 3, 1};
    ex.inter_ids = {1, 2, 1, 1};
    ex.intra_ids = {0, 0, 1, 2};
    ex.part_a_len = 2;
    Mat<double> logits(4, 5);
    logits << 0, 0, 0, 0, 0,
              1, 2, 3, 4, 5,
              0.5, -1.0, 2.0, 0.25, -0.75,
              -2.0, 1.5, 0.0, 3.0, 0.5;
    double expected = 0.0;
    {
        double row2[5] = {0.5, -1.0, 2.0, 0.25, -0.75};
        double row3[5] = {-2.0, 1.5, 0.0, 3.0, 0.5};
        double s2 = 0.0, s3 = 0.0;
        for (double v : row2) s2 += std::exp(v);
        for (double v : row3) s3 += std::exp(v);
        expected = ((std::log(s2) - row2[3]) + (std::log(s3) - row3[1])) / 2.0;
    }
    CHECK(std::fabs(Net<double>::infill_loss(logits, ex) - expected) < 1e-10);

    // dominant logit at the target drives the loss to zero
    Mat<double> sharp = Mat<double>::Zero(4, 5);
    sharp(2, 3) = 100.0;
    sharp(3, 1) = 100.0;
    CHECK(Net<double>::infill_loss(sharp, ex) < 1e-8);

    PositionedExample silent = ex;
    silent.targets = {TokenId(-1), TokenId(-1), TokenId(-1), TokenId(-1)};
    CHECK_THROWS_WITH_AS(Net<double>::infill_loss(logits, silent),
                         doctest::Contains("empty spans batch"), DataError);
}

TEST_CASE("attention rows are normalized and masked entries are exactly zero") {
    auto w = tiny_world(2, 3);
    Net<double> net(small_config(int(w.vocab.size())));
    auto batch = positioned_batch(w, 1, 9);
    typename Net<double>::Cache cache;
    net.forward_cached(batch[0], cache, nullptr);
    std::size_t n = cache.n;
    for (const auto& layer : cache.layers) {
        for (const auto& p : layer.probs) {
            for (std::size_t i = 0; i < n; ++i) {
                CHECK(std::fabs(p.row(long(i)).sum() - 1.0) < 1e-6);
                for (std::size_t j = 0; j < n; ++j)
                    if (!cache.vis[i * n + j]) CHECK(p(long(i), long(j)) == 0.0);
            }
        }
    }
}

TEST_CASE("perturbing a token changes logits only where it is visible") {
    auto w = tiny_world(3, 4);
    Net<float> net(small_config(int(w.vocab.size())));
    auto batch = positioned_batch(w, 4, 11);
    for (const auto& ex : batch) {
        std::size_t n = ex.tokens.size();
        if (n > 12) continue;
        auto vis = build_visibility(ex);
        auto base = net.forward(ex);
        for (std::size_t j = 0; j < n; ++j) {
            PositionedExample mod = ex;
            mod.tokens[j] = TokenId((mod.tokens[j] + 1) % int(w.vocab.size()));
            if (mod.tokens[j] == ex.tokens[j]) continue;
            auto out = net.forward(mod);
            for (std::size_t i = 0; i < n; ++i) {
                bool may_change = vis[i * n + j] != 0;
                if (!may_change)
                    CHECK(out.row(long(i)) == base.row(long(i)));  // bit-exact
            }
        }
    }
}

TEST_CASE("forward rejects out-of-range ids and overlong input") {
    auto w = tiny_world(1, 5);
    Net<float> net(small_config(int(w.vocab.size())));
    auto batch = positioned_batch(w, 1, 3);
    PositionedExample bad = batch[0];
    bad.tokens[0] = TokenId(w.vocab.size());
    CHECK_THROWS_AS(net.forward(bad), DataError);
    PositionedExample long_ex = batch[0];
    while (long_ex.tokens.size() <= 64) {
        long_ex.tokens.push_back(long_ex.tokens[0]);
        long_ex.targets.push_back(TokenId(-1));
        long_ex.inter_ids.push_back(1);
        long_ex.intra_ids.push_back(0);
    }
    CHECK_THROWS_WITH_AS(net.forward(long_ex), doctest::Contains("sequence too long"), DataError);
}

TEST_CASE("finite differences validate every trainable parameter class") {
    auto w = tiny_world(4, 6);
    ModelConfig cfg;
    cfg.vocab_size = int(w.vocab.size());  // 11 with specials
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_len = 48;
    cfg.seed = 13;
    REQUIRE(cfg.vocab_size == 11);
    Net<double> net(cfg);
    net.attach_lora(2, 4.0);
    // perturb B away from zero so its gradient path is exercised non-trivially
    Rng rng(17);
    for (std::size_t i = 0; i < net.tensor_count(); ++i) {
        auto& t = net.tensor_at(i);
        if (t.name.rfind("lora.", 0) == 0 && t.name.back() == 'B')
            for (long k = 0; k < t.value.size(); ++k)
                t.value.data()[k] = rng.next_normal() * 0.02;
    }
    auto batch = positioned_batch(w, 3, 21);
    auto report = testsupport::finite_diff_check(net, batch, 12, 31);
    CHECK(report.coords_checked >= 200);
    CHECK_MESSAGE(report.max_rel_err < 1e-4, report.worst_tensor);
}

TEST_CASE("unused position-table rows receive exactly zero gradient") {
    auto w = tiny_world(2, 8);
    Net<double> net(small_config(int(w.vocab.size())));
    auto batch = positioned_batch(w, 2, 5);
    std::set<int> used_inter, used_intra;
    for (const auto& ex : batch) {
        used_inter.insert(ex.inter_ids.begin(), ex.inter_ids.end());
        used_intra.insert(ex.intra_ids.begin(), ex.intra_ids.end());
    }
    auto grads = net.zero_grads();
    net.loss_and_grads(batch, grads);
    const auto& g_inter = grads.g[net.index_of("embedding.inter")];
    for (long r = 0; r < g_inter.rows(); ++r)
        if (!used_inter.count(int(r))) CHECK(g_inter.row(r).cwiseAbs().maxCoeff() == 0.0);
    const auto& g_intra = grads.g[net.index_of("embedding.intra")];
    for (long r = 0; r < g_intra.rows(); ++r)
        if (!used_intra.count(int(r))) CHECK(g_intra.row(r).cwiseAbs().maxCoeff() == 0.0);
    // the tied head touches every token row, so no such claim holds there
    CHECK(grads.g[net.index_of("embedding.token")].cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("batch order does not change per-example logits or the mean loss") {
    auto w = tiny_world(3, 9);
    Net<double> net(small_config(int(w.vocab.size())));
    auto batch = positioned_batch(w, 3, 15);
    auto l0 = net.forward(batch[0]);
    auto g1 = net.zero_grads();
    double loss_fwd = net.loss_and_grads(batch, g1);
    std::vector<PositionedExample> rev(batch.rbegin(), batch.rend());
    auto g2 = net.zero_grads();
    double loss_rev = net.loss_and_grads(rev, g2);
    CHECK(std::fabs(loss_fwd - loss_rev) < 1e-12);
    CHECK(net.forward(batch[0]) == l0);
}

TEST_CASE("lora attach is a no-op at attach time and merge folds it in") {
    auto w = tiny_world(3, 10);
    ModelConfig cfg = small_config(int(w.vocab.size()));
    Net<float> net(cfg);
    auto batch = positioned_batch(w, 2, 19);
    auto before = net.forward(batch[0]);
    std::size_t base_params = net.parameter_count();

    net.attach_lora(2, 4.0);
    CHECK(net.forward(batch[0]) == before);  // B = 0 ⇒ bit-identical
    CHECK_THROWS_AS(net.attach_lora(2, 4.0), ConfigError);

    // adapter parameter count: r·(d_in+d_out) per adapted matrix
    const std::size_t d = 8, r = 2, ffn = 4;
    std::size_t per_layer = r * (d + 3 * d)      // query_key_value
                            + r * (d + d)        // dense
                            + r * (d + ffn * d)  // dense_h_to_4h
                            + r * (ffn * d + d); // dense_4h_to_h
    CHECK(net.parameter_count() == base_params + per_layer * 1);

    // push adapters off zero, then merging must preserve the function
    Rng rng(23);
    for (std::size_t i = 0; i < net.tensor_count(); ++i) {
        auto& t = net.tensor_at(i);
        if (t.name.rfind("lora.", 0) == 0)
            for (long k = 0; k < t.value.size(); ++k)
                t.value.data()[k] = float(rng.next_normal() * 0.05);
    }
    auto adapted = net.forward(batch[1]);
    net.merge_lora();
    CHECK_FALSE(net.lora_attached());
    CHECK(net.parameter_count() == base_params);
    auto merged = net.forward(batch[1]);
    double scale = std::max(1.0f, adapted.cwiseAbs().maxCoeff());
    CHECK((merged - adapted).cwiseAbs().maxCoeff() / scale <= 1e-6);
    CHECK_THROWS_AS(net.merge_lora(), ConfigError);
}

TEST_CASE("lora-only training freezes exactly the four base projections") {
    auto w = tiny_world(3, 11);
    ModelConfig cfg = small_config(int(w.vocab.size()));
    cfg.n_layers = 2;
    Net<double> net(cfg);
    net.attach_lora(2, 4.0);
    net.set_lora_only(true);
    std::size_t frozen = 0;
    for (std::size_t i = 0; i < net.tensor_count(); ++i)
        if (!net.tensor_at(i).trainable) ++frozen;
    CHECK(frozen == 4 * 2);  // four roles per layer

    auto batch = positioned_batch(w, 2, 25);
    auto grads = net.zero_grads();
    net.loss_and_grads(batch, grads);
    for (std::size_t i = 0; i < net.tensor_count(); ++i) {
        const auto& t = net.tensor_at(i);
        double gmax = grads.g[i].cwiseAbs().maxCoeff();
        if (!t.trainable) {
            CHECK(gmax == 0.0);
        } else if (t.name.rfind("lora.", 0) == 0) {
            // with B = 0 the A-gradient path (through B) is exactly zero; B
            // itself sees a gradient because A is random at attach time
            if (t.name.back() == 'B')
                CHECK(gmax > 0.0);
            else
                CHECK(gmax == 0.0);
        } else if (t.name == "embedding.token") {
            CHECK(gmax > 0.0);
        }
    }
    net.set_lora_only(false);
    for (std::size_t i = 0; i < net.tensor_count(); ++i) CHECK(net.tensor_at(i).trainable);
}

TEST_CASE("loss falls over 200 steps on a fixed tiny corpus") {
    auto w = tiny_world(6, 12);
    ModelConfig cfg;
    cfg.vocab_size = int(w.vocab.size());
    cfg.d_model = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_len = 48;
    cfg.seed = 3;
    Net<float> net(cfg);
    auto batch = positioned_batch(w, 4, 33);
    auto state = OptimState<float>::init(net, 1e-2, 20, 0.0);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 200; ++step) {
        auto grads = net.zero_grads();
        double loss = net.loss_and_grads(batch, grads);
        if (step == 0) first = loss;
        last = loss;
        adamw_step(net, grads, state);
    }
    CHECK(last < first * 0.5);
}
