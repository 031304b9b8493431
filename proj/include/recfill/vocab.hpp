#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "recfill/common.hpp"

namespace recfill {

// Reserved ids, in the documented fixed order. [PAD] is always 0.
enum SpecialToken : TokenId {
    kPad = 0,
    kUnk = 1,
    kMaskEntity = 2,    // [M]
    kMaskSentence = 3,  // [sM]
    kMaskDocument = 4,  // [gM]
    kStart = 5,         // [S]
    kEnd = 6,           // [E]
};
constexpr int kNumSpecials = 7;

const char* special_name(TokenId id);
bool is_mask_token(TokenId id);

// Whitespace vocabulary with [UNK] fallback. Text is normalized by
// lowercasing and collapsing whitespace runs; ids are assigned by
// (count desc, token lexicographic) so builds are reproducible bit for bit.
class Vocabulary {
public:
    // `lines` is the raw text stream; tokens with count < min_count fall to [UNK].
    static Vocabulary build(const std::vector<std::string>& lines, int min_count = 1);

    static Vocabulary load(const std::string& path);
    void save(const std::string& path) const;

    // Rejects raw text containing a literal special-token string.
    std::vector<TokenId> encode(const std::string& text) const;
    // Same as encode but mask-token strings ([M]/[sM]/[gM]) map to their ids;
    // this is the prompt pathway used by the infilling decoder.
    std::vector<TokenId> encode_prompt(const std::string& text) const;

    std::string decode(const std::vector<TokenId>& ids) const;

    TokenId token_to_id(const std::string& token) const;  // [UNK] when absent
    const std::string& id_to_token(TokenId id) const;
    bool contains(const std::string& token) const;

    std::size_t size() const { return tokens_.size(); }

    static std::string normalize(std::string_view text);

private:
    Vocabulary() = default;
    void add_specials();

    std::vector<std::string> tokens_;
    std::vector<std::int64_t> counts_;
    std::unordered_map<std::string, TokenId> ids_;
};

}  // namespace recfill
