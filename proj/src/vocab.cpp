#include "recfill/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

namespace recfill {

namespace {
const char* kSpecialNames[kNumSpecials] = {"[PAD]", "[UNK]", "[M]", "[sM]", "[gM]", "[S]", "[E]"};

bool equals_special_ci(const std::string& token, int special) {
    const char* name = kSpecialNames[special];
    if (token.size() != std::char_traits<char>::length(name)) return false;
    for (std::size_t i = 0; i < token.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(token[i])) !=
            std::tolower(static_cast<unsigned char>(name[i])))
            return false;
    }
    return true;
}

int match_special_ci(const std::string& token) {
    for (int s = 0; s < kNumSpecials; ++s) {
        if (equals_special_ci(token, s)) return s;
    }
    return -1;
}
}  // namespace

const char* special_name(TokenId id) { return kSpecialNames[id]; }

bool is_mask_token(TokenId id) {
    return id == kMaskEntity || id == kMaskSentence || id == kMaskDocument;
}

std::string Vocabulary::normalize(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    bool pending_space = false;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

void Vocabulary::add_specials() {
    for (int s = 0; s < kNumSpecials; ++s) {
        tokens_.emplace_back(kSpecialNames[s]);
        counts_.push_back(0);
        ids_.emplace(kSpecialNames[s], static_cast<TokenId>(s));
    }
}

Vocabulary Vocabulary::build(const std::vector<std::string>& lines, int min_count) {
    if (min_count < 1) throw ConfigError("min_count must be >= 1");
    std::map<std::string, std::int64_t> counts;  // ordered map keeps ties deterministic
    bool any = false;
    for (const auto& line : lines) {
        for (auto& tok : split_ws(normalize(line))) {
            any = true;
            ++counts[tok];
        }
    }
    if (!any) throw DataError("empty corpus");

    std::vector<std::pair<std::string, std::int64_t>> order(counts.begin(), counts.end());
    std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    v.add_specials();
    for (auto& [tok, count] : order) {
        if (count < min_count) continue;
        if (match_special_ci(tok) >= 0) continue;  // surface forms never shadow reserved ids
        v.ids_.emplace(tok, static_cast<TokenId>(v.tokens_.size()));
        v.tokens_.push_back(tok);
        v.counts_.push_back(count);
    }
    return v;
}

std::vector<TokenId> Vocabulary::encode(const std::string& text) const {
    std::vector<TokenId> out;
    for (auto& tok : split_ws(text)) {
        if (match_special_ci(tok) >= 0) throw DataError("reserved token in input: " + tok);
        auto it = ids_.find(to_lower(tok));
        out.push_back(it == ids_.end() ? kUnk : it->second);
    }
    return out;
}

std::vector<TokenId> Vocabulary::encode_prompt(const std::string& text) const {
    std::vector<TokenId> out;
    for (auto& tok : split_ws(text)) {
        int s = match_special_ci(tok);
        if (s >= 0) {
            if (!is_mask_token(static_cast<TokenId>(s)))
                throw DataError("reserved token in input: " + tok);
            out.push_back(static_cast<TokenId>(s));
            continue;
        }
        auto it = ids_.find(to_lower(tok));
        out.push_back(it == ids_.end() ? kUnk : it->second);
    }
    return out;
}

std::string Vocabulary::decode(const std::vector<TokenId>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tokens_.size())
            throw DataError("id out of range: " + std::to_string(ids[i]));
        if (i) out.push_back(' ');
        out += tokens_[ids[i]];
    }
    return out;
}

TokenId Vocabulary::token_to_id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::id_to_token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
        throw DataError("id out of range: " + std::to_string(id));
    return tokens_[id];
}

bool Vocabulary::contains(const std::string& token) const { return ids_.count(token) > 0; }

void Vocabulary::save(const std::string& path) const {
    std::ostringstream out;
    for (std::size_t i = 0; i < tokens_.size(); ++i)
        out << i << '\t' << tokens_[i] << '\t' << counts_[i] << '\n';
    write_file_atomic(path, out.str());
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open vocabulary file: " + path);
    Vocabulary v;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto fields = split_char(line, '\t');
        if (fields.size() != 3)
            throw DataError("vocabulary file line " + std::to_string(line_no) + ": expected 3 fields");
        TokenId id = static_cast<TokenId>(std::stol(fields[0]));
        if (id != static_cast<TokenId>(v.tokens_.size()))
            throw DataError("vocabulary file line " + std::to_string(line_no) + ": ids not ascending");
        v.tokens_.push_back(fields[1]);
        v.counts_.push_back(std::stoll(fields[2]));
        v.ids_.emplace(fields[1], id);
    }
    if (v.tokens_.size() < kNumSpecials) throw DataError("vocabulary file missing special tokens");
    for (int s = 0; s < kNumSpecials; ++s) {
        if (v.tokens_[s] != kSpecialNames[s])
            throw DataError("vocabulary file: reserved id " + std::to_string(s) + " must be " +
                            kSpecialNames[s]);
    }
    return v;
}

}  // namespace recfill
