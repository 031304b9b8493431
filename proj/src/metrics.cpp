#include "recfill/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>

#include "recfill/common.hpp"

namespace recfill {

namespace {

// Rank of the truth in the list, 1-based; 0 when absent.
std::size_t truth_rank(const RankingCase& c) {
    for (std::size_t i = 0; i < c.ranked.size(); ++i)
        if (c.ranked[i] == c.truth) return i + 1;
    return 0;
}

}  // namespace

double hr_at_k(const std::vector<RankingCase>& cases, int k) {
    if (cases.empty()) throw DataError("empty cases");
    if (k < 1) throw ConfigError("k must be >= 1");
    std::size_t hits = 0;
    for (const auto& c : cases) {
        std::size_t r = truth_rank(c);
        if (r >= 1 && r <= std::size_t(k)) ++hits;
    }
    return double(hits) / double(cases.size());
}

double ndcg_at_k(const std::vector<RankingCase>& cases, int k) {
    if (cases.empty()) throw DataError("empty cases");
    if (k < 1) throw ConfigError("k must be >= 1");
    double total = 0.0;
    for (const auto& c : cases) {
        std::size_t r = truth_rank(c);
        if (r >= 1 && r <= std::size_t(k)) total += 1.0 / std::log2(double(r) + 1.0);
    }
    return total / double(cases.size());
}

double rmse(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.empty() || pred.size() != truth.size()) throw DataError("length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        sum += (pred[i] - truth[i]) * (pred[i] - truth[i]);
    return std::sqrt(sum / double(pred.size()));
}

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
    if (pred.empty() || pred.size() != truth.size()) throw DataError("length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::abs(pred[i] - truth[i]);
    return sum / double(pred.size());
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& tokens, int n) {
    NgramCounts counts;
    if (tokens.size() < std::size_t(n)) return counts;
    for (std::size_t i = 0; i + std::size_t(n) <= tokens.size(); ++i)
        ++counts[std::vector<std::string>(tokens.begin() + long(i), tokens.begin() + long(i + std::size_t(n)))];
    return counts;
}

}  // namespace

double bleu_n(const std::vector<std::string>& candidate,
              const std::vector<std::vector<std::string>>& references, int n) {
    if (n < 1 || n > 4) throw ConfigError("bleu order must be in 1..4");
    if (references.empty()) throw DataError("no references");
    if (candidate.empty()) {
        std::cerr << "warning: empty candidate in bleu\n";
        return 0.0;
    }
    double log_precision_sum = 0.0;
    for (int order = 1; order <= n; ++order) {
        NgramCounts cand = count_ngrams(candidate, order);
        std::vector<NgramCounts> ref_counts;
        ref_counts.reserve(references.size());
        for (const auto& ref : references) ref_counts.push_back(count_ngrams(ref, order));
        std::size_t total = 0, clipped = 0;
        for (const auto& [gram, count] : cand) {
            total += count;
            std::size_t best_ref = 0;
            for (const auto& rc : ref_counts) {
                auto it = rc.find(gram);
                if (it != rc.end()) best_ref = std::max(best_ref, it->second);
            }
            clipped += std::min(count, best_ref);
        }
        if (total == 0 || clipped == 0) return 0.0;  // no smoothing
        log_precision_sum += std::log(double(clipped) / double(total));
    }
    // Brevity penalty against the reference closest in length (ties: shorter).
    std::size_t cand_len = candidate.size();
    std::size_t ref_len = references[0].size();
    for (const auto& ref : references) {
        auto diff = [&](std::size_t len) {
            return len > cand_len ? len - cand_len : cand_len - len;
        };
        if (diff(ref.size()) < diff(ref_len) || (diff(ref.size()) == diff(ref_len) && ref.size() < ref_len))
            ref_len = ref.size();
    }
    double bp = cand_len >= ref_len ? 1.0 : std::exp(1.0 - double(ref_len) / double(cand_len));
    return 100.0 * bp * std::exp(log_precision_sum / double(n));
}

double bleu_n(const std::vector<std::string>& candidate,
              const std::vector<std::string>& reference, int n) {
    return bleu_n(candidate, std::vector<std::vector<std::string>>{reference}, n);
}

namespace {

double f1_percent(double overlap, double cand_total, double ref_total) {
    if (overlap <= 0.0 || cand_total <= 0.0 || ref_total <= 0.0) return 0.0;
    double p = overlap / cand_total;
    double r = overlap / ref_total;
    return 100.0 * 2.0 * p * r / (p + r);
}

}  // namespace

double rouge_n(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference, int n) {
    if (n < 1) throw ConfigError("rouge order must be >= 1");
    if (candidate.empty() && reference.empty()) {
        std::cerr << "warning: empty texts in rouge\n";
        return 0.0;
    }
    NgramCounts cand = count_ngrams(candidate, n);
    NgramCounts ref = count_ngrams(reference, n);
    double cand_total = 0.0, ref_total = 0.0, overlap = 0.0;
    for (const auto& [gram, count] : cand) cand_total += double(count);
    for (const auto& [gram, count] : ref) ref_total += double(count);
    for (const auto& [gram, count] : cand) {
        auto it = ref.find(gram);
        if (it != ref.end()) overlap += double(std::min(count, it->second));
    }
    return f1_percent(overlap, cand_total, ref_total);
}

double rouge_l(const std::vector<std::string>& candidate,
               const std::vector<std::string>& reference) {
    if (candidate.empty() && reference.empty()) {
        std::cerr << "warning: empty texts in rouge\n";
        return 0.0;
    }
    const std::size_t nc = candidate.size(), nr = reference.size();
    std::vector<std::size_t> prev(nr + 1, 0), cur(nr + 1, 0);
    for (std::size_t i = 1; i <= nc; ++i) {
        for (std::size_t j = 1; j <= nr; ++j) {
            if (candidate[i - 1] == reference[j - 1])
                cur[j] = prev[j - 1] + 1;
            else
                cur[j] = std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    double lcs = double(prev[nr]);
    return f1_percent(lcs, double(nc), double(nr));
}

}  // namespace recfill
