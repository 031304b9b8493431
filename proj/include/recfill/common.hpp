#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace recfill {

using TokenId = std::int32_t;
using EntityId = std::int32_t;

// Exit-code contract: usage/config -> 1, data -> 2, numeric -> 3.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- hashing --------------------------------------------------------------

constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Stream seed for a named component: hash(global seed, component name, unit id).
// Every stochastic consumer derives its own stream so parallel order cannot
// change results.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view component,
                                 std::uint64_t unit = 0) {
    std::uint64_t h = splitmix64(global_seed ^ fnv1a64(component));
    return splitmix64(h ^ (0x9e3779b97f4a7c15ull * (unit + 1)));
}

// ---- deterministic rng ----------------------------------------------------

// splitmix64 generator with explicit distributions. std::mt19937 +
// std::*_distribution are avoided: their output is not pinned by the
// standard, and byte-identical replays are part of the contract.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n);

    double next_normal();
    int next_poisson(double lambda);

    // categorical draw over weights (need not be normalized)
    std::size_t next_categorical(const std::vector<double>& weights);

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// ---- small string/file helpers ---------------------------------------------

inline std::string to_hex(std::uint64_t v) {
    const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[std::size_t(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::string to_lower(std::string_view s);
std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split_char(std::string_view s, char sep);

std::string read_file(const std::string& path);
// write via temp file + rename so partial artifacts never appear
void write_file_atomic(const std::string& path, const std::string& content);
std::string file_digest_hex(const std::string& path);  // fnv1a64 of the bytes

std::string format_double(double v);  // shortest round-trip decimal

}  // namespace recfill
