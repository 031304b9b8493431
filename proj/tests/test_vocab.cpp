#include <filesystem>

#include "doctest.h"
#include "recfill/vocab.hpp"

using namespace recfill;

TEST_CASE("special ids are fixed and in order") {
    CHECK(kPad == 0);
    CHECK(kUnk == 1);
    CHECK(kMaskEntity == 2);
    CHECK(kMaskSentence == 3);
    CHECK(kMaskDocument == 4);
    CHECK(kStart == 5);
    CHECK(kEnd == 6);
    CHECK(std::string(special_name(kMaskEntity)) == "[M]");
    CHECK(std::string(special_name(kMaskSentence)) == "[sM]");
    CHECK(std::string(special_name(kMaskDocument)) == "[gM]");
    CHECK(is_mask_token(kMaskEntity));
    CHECK(is_mask_token(kMaskSentence));
    CHECK(is_mask_token(kMaskDocument));
    CHECK_FALSE(is_mask_token(kStart));
    CHECK_FALSE(is_mask_token(kPad));
}

TEST_CASE("normalize lowercases and collapses whitespace") {
    CHECK(Vocabulary::normalize("  The   Blue\tBox \n") == "the blue box");
    CHECK(Vocabulary::normalize("") == "");
    CHECK(Vocabulary::normalize("A") == "a");
}

TEST_CASE("build assigns ids by count desc then lexicographic") {
    auto v = Vocabulary::build({"b b b a a c", "a"});
    // a: 3, b: 3, c: 1; tie a/b broken lexicographically
    CHECK(v.token_to_id("a") == kNumSpecials + 0);
    CHECK(v.token_to_id("b") == kNumSpecials + 1);
    CHECK(v.token_to_id("c") == kNumSpecials + 2);
    CHECK(v.size() == std::size_t(kNumSpecials) + 3);
}

TEST_CASE("min_count drops rare tokens to [UNK]") {
    auto v = Vocabulary::build({"x x y"}, 2);
    CHECK(v.contains("x"));
    CHECK_FALSE(v.contains("y"));
    CHECK(v.encode("y") == std::vector<TokenId>{kUnk});
}

TEST_CASE("build on empty corpus fails and literal specials never get ids") {
    CHECK_THROWS_AS(Vocabulary::build({"", "  "}), DataError);
    auto v = Vocabulary::build({"[m] real words"});
    CHECK(v.token_to_id("[m]") == kUnk);  // reserved surface form dropped
    CHECK(v.contains("real"));
}

TEST_CASE("encode rejects reserved strings, encode_prompt admits masks only") {
    auto v = Vocabulary::build({"alpha beta"});
    CHECK_THROWS_AS(v.encode("alpha [M]"), DataError);
    CHECK_THROWS_AS(v.encode("[s]"), DataError);
    auto ids = v.encode_prompt("alpha [M] beta [sM] [gM]");
    CHECK(ids == std::vector<TokenId>{v.token_to_id("alpha"), kMaskEntity,
                                      v.token_to_id("beta"), kMaskSentence, kMaskDocument});
    CHECK_THROWS_AS(v.encode_prompt("[S]"), DataError);
    CHECK_THROWS_AS(v.encode_prompt("[E]"), DataError);
    CHECK_THROWS_AS(v.encode_prompt("[PAD]"), DataError);
}

TEST_CASE("encode is case-insensitive and falls back to [UNK]") {
    auto v = Vocabulary::build({"alpha beta"});
    CHECK(v.encode("ALPHA Beta") ==
          std::vector<TokenId>{v.token_to_id("alpha"), v.token_to_id("beta")});
    CHECK(v.encode("gamma") == std::vector<TokenId>{kUnk});
}

TEST_CASE("decode inverts encode for in-vocabulary text") {
    auto v = Vocabulary::build({"the blue box arrived"});
    CHECK(v.decode(v.encode("blue box")) == "blue box");
    CHECK_THROWS_AS(v.decode({TokenId(9999)}), DataError);
    CHECK(v.decode({}) == "");
}

TEST_CASE("save/load round-trips ids and counts") {
    auto v = Vocabulary::build({"b b b a a c", "a"});
    auto path = (std::filesystem::temp_directory_path() / "recfill_vocab_rt.txt").string();
    v.save(path);
    auto loaded = Vocabulary::load(path);
    CHECK(loaded.size() == v.size());
    for (TokenId id = 0; id < TokenId(v.size()); ++id)
        CHECK(loaded.id_to_token(id) == v.id_to_token(id));
    CHECK(loaded.token_to_id("a") == v.token_to_id("a"));
    std::filesystem::remove(path);
}
