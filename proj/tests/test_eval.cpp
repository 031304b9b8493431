#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "recfill/common.hpp"
#include "recfill/eval.hpp"

using namespace recfill;

namespace {

struct EvalWorld {
    Vocabulary vocab;
    EntityPool pool;
    std::vector<EntityId> items;
};

// Six single- and multi-token items plus digit and filler words, enough for
// negative sampling to have real choices.
EvalWorld eval_world() {
    EvalWorld w{Vocabulary::build({"alpha beta gamma delta omega kappa 1 2 3 4 5 nice bought"}),
                EntityPool{},
                {}};
    auto add = [&](const std::string& surface) {
        w.items.push_back(w.pool.register_entity(w.vocab.encode(surface), surface, EntityKind::item));
    };
    add("alpha beta");
    add("gamma");
    add("delta omega");
    add("kappa");
    add("beta gamma delta");
    add("omega");
    return w;
}

Document make_doc(const EvalWorld& w, const std::string& id, TaskFamily family,
                  const std::string& text, std::size_t target_start, std::size_t target_len,
                  std::vector<EntitySpan> spans, const std::string& template_id = "t0",
                  bool held_out = false) {
    Document d;
    d.doc_id = id;
    d.text = text;
    d.tokens = w.vocab.encode(text);
    d.entity_spans = std::move(spans);
    d.family = family;
    d.template_id = template_id;
    d.held_out_template = held_out;
    d.target_start = target_start;
    d.target_len = target_len;
    return d;
}

CaseOutput rating_output(const std::string& id, double rating, bool failed = false) {
    CaseOutput o;
    o.doc_id = id;
    o.predicted_rating = rating;
    o.rating_parse_failed = failed;
    return o;
}

CaseOutput ranked_output(const std::string& id, std::vector<EntityId> ranked) {
    CaseOutput o;
    o.doc_id = id;
    o.ranked = std::move(ranked);
    return o;
}

CaseOutput text_output(const std::string& id, const std::string& text) {
    CaseOutput o;
    o.doc_id = id;
    o.generated_text = text;
    return o;
}

const std::vector<std::pair<std::string, double>>& report_values(
    const std::vector<MetricReport>& reports, TaskFamily family, const std::string& template_id,
    bool unseen) {
    for (const auto& r : reports)
        if (r.family == family && r.template_id == template_id && r.unseen == unseen)
            return r.values;
    throw std::runtime_error("report group not found");
}

double metric(const std::vector<std::pair<std::string, double>>& values, const std::string& name) {
    for (const auto& [k, v] : values)
        if (k == name) return v;
    throw std::runtime_error("metric not found: " + name);
}

}  // namespace

TEST_CASE("ground truth helpers read the target region") {
    auto w = eval_world();
    Document rating = make_doc(w, "r1", TaskFamily::rating, "alpha beta nice 4", 3, 1,
                               {{0, 2, w.items[0]}});
    CHECK(rating_truth(rating, w.vocab) == 4);
    CHECK(target_text(rating, w.vocab) == "4");

    Document item = make_doc(w, "s1", TaskFamily::sequential, "bought alpha beta", 1, 2,
                             {{1, 2, w.items[0]}});
    CHECK(target_entity(item) == w.items[0]);
    CHECK(target_text(item, w.vocab) == "alpha beta");

    Document bad_rating = make_doc(w, "r2", TaskFamily::rating, "alpha beta nice 4", 2, 1,
                                   {{0, 2, w.items[0]}});
    CHECK_THROWS_WITH_AS(rating_truth(bad_rating, w.vocab),
                         doctest::Contains("rating target is not a digit"), DataError);

    // target region covering filler tokens is not an entity
    Document no_entity = make_doc(w, "s2", TaskFamily::sequential, "bought alpha beta", 0, 1,
                                  {{1, 2, w.items[0]}});
    CHECK_THROWS_WITH_AS(target_entity(no_entity),
                         doctest::Contains("target region is not a single entity"), DataError);
}

TEST_CASE("evaluate groups by family, template, and split") {
    auto w = eval_world();
    std::vector<Document> docs{
        make_doc(w, "r1", TaskFamily::rating, "alpha beta nice 4", 3, 1, {{0, 2, w.items[0]}}, "r-t0"),
        make_doc(w, "r2", TaskFamily::rating, "gamma nice 4", 2, 1, {{0, 1, w.items[1]}}, "r-t0"),
        make_doc(w, "s1", TaskFamily::sequential, "bought gamma", 1, 1, {{1, 1, w.items[1]}}, "s-t0"),
        make_doc(w, "s2", TaskFamily::sequential, "bought kappa", 1, 1, {{1, 1, w.items[3]}}, "s-t0",
                 true),
        make_doc(w, "v1", TaskFamily::review, "nice nice bought omega", 0, 2, {{3, 1, w.items[5]}},
                 "v-t0"),
    };
    std::vector<CaseOutput> outputs{
        rating_output("r1", 3.0),
        rating_output("r2", 5.0, true),
        ranked_output("s1", {w.items[1], w.items[0]}),
        ranked_output("s2", {w.items[1], w.items[3], w.items[0]}),
        text_output("v1", "nice nice"),
    };
    auto reports = evaluate(docs, outputs, w.vocab, w.pool);
    REQUIRE(reports.size() == 4);

    std::size_t total = 0;
    for (const auto& r : reports) {
        CHECK(r.n > 0);
        total += r.n;
        for (const auto& [name, value] : r.values) CHECK(std::isfinite(value));
    }
    CHECK(total == docs.size());

    // ratings: errors are -1 and +1 → rmse = mae = 1, one parse failure of two
    const auto& rating = report_values(reports, TaskFamily::rating, "r-t0", false);
    CHECK(metric(rating, "rmse") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metric(rating, "mae") == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metric(rating, "parse_fail_rate") == doctest::Approx(0.5).epsilon(1e-12));

    // seen sequential: truth ranked first
    const auto& seen = report_values(reports, TaskFamily::sequential, "s-t0", false);
    CHECK(metric(seen, "hr@1") == 1.0);
    CHECK(metric(seen, "ndcg@10") == 1.0);

    // unseen sequential: truth at rank 2 — and never mixed into the seen group
    const auto& unseen = report_values(reports, TaskFamily::sequential, "s-t0", true);
    CHECK(metric(unseen, "hr@1") == 0.0);
    CHECK(metric(unseen, "hr@5") == 1.0);
    CHECK(metric(unseen, "ndcg@5") == doctest::Approx(1.0 / std::log2(3.0)).epsilon(1e-12));

    // review: generated text equals the two-token target
    const auto& review = report_values(reports, TaskFamily::review, "v-t0", false);
    CHECK(metric(review, "rouge1") == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(metric(review, "rougeL") == doctest::Approx(100.0).epsilon(1e-9));
    CHECK(metric(review, "bleu2") == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("evaluate rejects misaligned outputs") {
    auto w = eval_world();
    std::vector<Document> docs{
        make_doc(w, "r1", TaskFamily::rating, "gamma nice 4", 2, 1, {{0, 1, w.items[1]}}),
        make_doc(w, "r2", TaskFamily::rating, "kappa nice 2", 2, 1, {{0, 1, w.items[3]}}),
    };
    std::vector<CaseOutput> missing{rating_output("r1", 4.0), rating_output("zzz", 4.0)};
    CHECK_THROWS_WITH_AS(evaluate(docs, missing, w.vocab, w.pool), doctest::Contains("r2"),
                         DataError);
    std::vector<CaseOutput> duplicated{rating_output("r1", 4.0), rating_output("r1", 4.0),
                                       rating_output("r2", 4.0)};
    CHECK_THROWS_WITH_AS(evaluate(docs, duplicated, w.vocab, w.pool),
                         doctest::Contains("duplicate or extra"), DataError);
}

TEST_CASE("tsv report lines carry six tab-separated fields") {
    auto w = eval_world();
    std::vector<Document> docs{
        make_doc(w, "r1", TaskFamily::rating, "gamma nice 4", 2, 1, {{0, 1, w.items[1]}}, "r-t0"),
        make_doc(w, "r2", TaskFamily::rating, "kappa nice 4", 2, 1, {{0, 1, w.items[3]}}, "r-t0"),
    };
    std::vector<CaseOutput> outputs{rating_output("r1", 3.0), rating_output("r2", 5.0)};
    auto reports = evaluate(docs, outputs, w.vocab, w.pool);
    REQUIRE(reports.size() == 1);
    std::string tsv = report_to_tsv(reports);
    CHECK(tsv ==
          "rating\tr-t0\tseen\trmse\t1\t2\n"
          "rating\tr-t0\tseen\tmae\t1\t2\n"
          "rating\tr-t0\tseen\tparse_fail_rate\t0\t2\n");
    std::string summary = report_summary(reports);
    CHECK(summary.find("family") != std::string::npos);
    CHECK(summary.find("rating") != std::string::npos);
    CHECK(summary.find("rmse=1.0000") != std::string::npos);
}

TEST_CASE("model harness outputs are deterministic and well-formed") {
    auto w = eval_world();
    ModelConfig cfg;
    cfg.vocab_size = w.vocab.size();
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_len = 128;
    cfg.seed = 77;
    Net<float> net(cfg);

    std::vector<Document> docs{
        make_doc(w, "rate-1", TaskFamily::rating, "alpha beta nice 4", 3, 1, {{0, 2, w.items[0]}}),
        make_doc(w, "seq-1", TaskFamily::sequential, "bought gamma", 1, 1, {{1, 1, w.items[1]}}),
        make_doc(w, "dir-1", TaskFamily::direct, "bought delta omega", 1, 2,
                 {{1, 2, w.items[2]}}),
        make_doc(w, "rev-1", TaskFamily::review, "nice bought kappa", 0, 1, {{2, 1, w.items[3]}}),
    };
    EvalConfig ec;
    ec.beam = 4;
    ec.max_steps = 16;
    ec.negatives = 3;
    ec.seed = 9;
    auto out1 = run_eval_model(net, docs, w.pool, w.vocab, ec);
    auto out2 = run_eval_model(net, docs, w.pool, w.vocab, ec);
    REQUIRE(out1.size() == docs.size());
    for (std::size_t i = 0; i < out1.size(); ++i) {
        CHECK(out1[i].doc_id == docs[i].doc_id);
        CHECK(out1[i].predicted_rating == out2[i].predicted_rating);
        CHECK(out1[i].ranked == out2[i].ranked);
        CHECK(out1[i].generated_text == out2[i].generated_text);
    }

    // rating: parsed value agrees with an external scan of the generated text
    const CaseOutput& rated = out1[0];
    CHECK(rated.predicted_rating >= 1.0);
    CHECK(rated.predicted_rating <= 5.0);
    bool found = false;
    double first = 3.0;
    for (const auto& word : split_ws(rated.generated_text)) {
        if (word.size() == 1 && word[0] >= '1' && word[0] <= '5') {
            first = double(word[0] - '0');
            found = true;
            break;
        }
    }
    CHECK(rated.rating_parse_failed == !found);
    CHECK(rated.predicted_rating == first);

    // sequential: beam-many distinct items
    const CaseOutput& seq = out1[1];
    CHECK(seq.ranked.size() == 4);
    CHECK(std::set<EntityId>(seq.ranked.begin(), seq.ranked.end()).size() == seq.ranked.size());

    // direct: candidate set replayed from the documented sampling scheme
    const CaseOutput& dir = out1[2];
    REQUIRE(dir.ranked.size() == 4);  // 3 negatives + positive
    Rng rng(derive_seed(ec.seed, "negatives", fnv1a64("dir-1")));
    std::vector<EntityId> negs;
    for (EntityId id : w.items)
        if (id != w.items[2]) negs.push_back(id);
    for (std::size_t i = 0; i < 3; ++i) {
        std::size_t j = i + rng.next_below(negs.size() - i);
        std::swap(negs[i], negs[j]);
    }
    negs.resize(3);
    std::set<EntityId> expect(negs.begin(), negs.end());
    expect.insert(w.items[2]);
    CHECK(std::set<EntityId>(dir.ranked.begin(), dir.ranked.end()) == expect);

    // review: some text was generated
    CHECK_FALSE(out1[3].generated_text.empty());
}

TEST_CASE("negative sampling varies with seed but never drops the positive") {
    auto w = eval_world();
    ModelConfig cfg;
    cfg.vocab_size = w.vocab.size();
    cfg.d_model = 8;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_len = 128;
    cfg.seed = 78;
    Net<float> net(cfg);
    std::vector<Document> docs{make_doc(w, "dir-2", TaskFamily::direct, "bought gamma", 1, 1,
                                        {{1, 1, w.items[1]}})};
    EvalConfig ec;
    ec.negatives = 2;
    std::set<std::set<EntityId>> candidate_sets;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        ec.seed = seed;
        auto out = run_eval_model(net, docs, w.pool, w.vocab, ec);
        REQUIRE(out[0].ranked.size() == 3);
        std::set<EntityId> ids(out[0].ranked.begin(), out[0].ranked.end());
        CHECK(ids.count(w.items[1]) == 1);
        candidate_sets.insert(ids);
    }
    // 5 choose 2 = 10 possible negative pairs; eight seeds should not all agree
    CHECK(candidate_sets.size() > 1);
}
