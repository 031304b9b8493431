#include "recfill/synth.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"

namespace recfill {

namespace {

// Shared-word titles exercise the trie's shared-prefix paths.
const std::vector<std::string>& themed_words() {
    static const std::vector<std::string> kWords = {
        "amber", "ashen", "bone",   "briar",  "cinder", "dagger", "dragon", "dusk",
        "ember", "fang",  "gloom",  "helm",   "iron",   "ivory",  "moss",   "onyx",
        "raven", "rune",  "shadow", "silver", "thorn",  "torch",  "veil",   "wisp"};
    return kWords;
}

std::vector<std::string> make_titles(int catalog, Rng& rng) {
    const auto& words = themed_words();
    std::set<std::string> used;
    std::vector<std::string> titles;
    for (int i = 0; i < catalog; ++i) {
        for (int attempt = 0;; ++attempt) {
            // Even indices are forced multi-token, keeping >= 50% of the
            // catalog multi-token
            std::size_t len = i % 2 == 0 ? 2 + rng.next_below(3) : 1 + rng.next_below(4);
            if (attempt > 8) len = 3 + rng.next_below(2);
            std::string title;
            for (std::size_t w = 0; w < len; ++w) {
                if (w) title += ' ';
                title += words[rng.next_below(words.size())];
            }
            if (used.insert(title).second) {
                titles.push_back(title);
                break;
            }
        }
    }
    return titles;
}

std::string review_for(const std::string& title, int rating) {
    std::string last = title.substr(title.rfind(' ') + 1);
    if (rating >= 4) return "i love this " + last + " . works great .";
    if (rating == 3) return "this " + last + " is okay . nothing special .";
    return "this " + last + " disappointed me . bad quality .";
}

}  // namespace

WorldTruth generate_world(const WorldSpec& spec, const std::string& interactions_path,
                          const std::string& truth_path) {
    if (spec.catalog < 2) throw ConfigError("catalog must have at least 2 items");
    if (spec.epsilon < 0.0 || spec.epsilon >= 1.0) throw ConfigError("epsilon must be in [0,1)");
    if (spec.users < 1 || spec.interactions_per_user < 2)
        throw ConfigError("world needs >= 1 user and >= 2 interactions each");

    WorldTruth truth;
    truth.catalog = spec.catalog;
    truth.epsilon = spec.epsilon;
    Rng world_rng(derive_seed(spec.seed, "world", 0));
    truth.titles = make_titles(spec.catalog, world_rng);
    truth.sigma.resize(std::size_t(spec.catalog));
    for (int i = 0; i < spec.catalog; ++i) truth.sigma[std::size_t(i)] = i;
    for (int i = spec.catalog - 1; i > 0; --i)
        std::swap(truth.sigma[std::size_t(i)],
                  truth.sigma[world_rng.next_below(std::size_t(i) + 1)]);
    truth.rating_base.resize(std::size_t(spec.catalog));
    for (int i = 0; i < spec.catalog; ++i) truth.rating_base[std::size_t(i)] = i % 5 + 1;

    // Gap mixture gives every window class support when slicing histories.
    const double gap_days[5] = {0.2, 1.0, 5.0, 30.0, 80.0};
    const std::vector<double> gap_weights = {0.4, 0.25, 0.15, 0.12, 0.08};
    const std::int64_t epoch = 1600000000;

    std::string out;
    int user_digits = 1;
    for (int u = spec.users; u >= 10; u /= 10) ++user_digits;
    for (int u = 0; u < spec.users; ++u) {
        Rng rng(derive_seed(spec.seed, "user", std::uint64_t(u)));
        char uid[32];
        std::snprintf(uid, sizeof uid, "u%0*d", user_digits, u);
        int item = int(rng.next_below(std::size_t(spec.catalog)));
        std::int64_t ts = epoch + std::int64_t(u);
        for (int t = 0; t < spec.interactions_per_user; ++t) {
            int rating = truth.rating_base[std::size_t(item)];
            if (rng.next_double() < 0.15) {
                rating += rng.next_double() < 0.5 ? -1 : 1;
                rating = std::clamp(rating, 1, 5);
            }
            out += uid;
            out += "\ti" + std::to_string(item);
            out += '\t';
            out += truth.titles[std::size_t(item)];
            out += '\t' + std::to_string(rating);
            out += '\t' + std::to_string(ts);
            out += '\t';
            out += review_for(truth.titles[std::size_t(item)], rating);
            out += '\n';
            ts += std::int64_t(gap_days[rng.next_categorical(gap_weights)] * 86400.0);
            item = rng.next_double() < spec.epsilon
                       ? int(rng.next_below(std::size_t(spec.catalog)))
                       : truth.sigma[std::size_t(item)];
        }
    }
    write_file_atomic(interactions_path, out);

    nlohmann::ordered_json j;
    j["catalog"] = truth.catalog;
    j["epsilon"] = truth.epsilon;
    j["sigma"] = truth.sigma;
    j["rating_base"] = truth.rating_base;
    j["titles"] = truth.titles;
    write_file_atomic(truth_path, j.dump(2) + "\n");
    return truth;
}

WorldTruth load_world_truth(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad world truth file: ") + e.what());
    }
    WorldTruth truth;
    truth.catalog = j.at("catalog").get<int>();
    truth.epsilon = j.at("epsilon").get<double>();
    truth.sigma = j.at("sigma").get<std::vector<int>>();
    truth.rating_base = j.at("rating_base").get<std::vector<int>>();
    truth.titles = j.at("titles").get<std::vector<std::string>>();
    return truth;
}

double oracle_hr1(const WorldTruth& truth, const std::vector<UserHistory>& histories) {
    std::map<std::string, int> by_title;
    for (int i = 0; i < truth.catalog; ++i)
        by_title[Vocabulary::normalize(truth.titles[std::size_t(i)])] = i;
    // Every consecutive pair is an i.i.d. draw from the transition rule, so
    // scoring them all gives the tightest Monte Carlo estimate of 1-eps+eps/M.
    std::size_t cases = 0, hits = 0;
    for (const auto& hist : histories) {
        for (std::size_t t = 0; t + 1 < hist.interactions.size(); ++t) {
            auto ctx = by_title.find(Vocabulary::normalize(hist.interactions[t].item_title));
            auto tgt = by_title.find(Vocabulary::normalize(hist.interactions[t + 1].item_title));
            if (ctx == by_title.end() || tgt == by_title.end())
                throw DataError("history item not in world catalog");
            ++cases;
            if (truth.sigma[std::size_t(ctx->second)] == tgt->second) ++hits;
        }
    }
    if (cases == 0) throw DataError("no evaluable histories");
    return double(hits) / double(cases);
}

}  // namespace recfill
