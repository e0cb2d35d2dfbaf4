#pragma once
// Small shared helpers: stable hashing, portable seeded randomness, JSONL io.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace crux {

using json = nlohmann::json;

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// First 8 bytes of SHA-256 as an integer; stable across platforms and runs.
std::uint64_t stable_hash64(std::string_view data);

/// Derive an independent child seed from a parent seed and a label.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view label);

// std::*_distribution output is implementation-defined, so draws are built
// directly from mt19937_64 bits to keep outputs byte-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();
    bool bernoulli(double p) { return uniform() < p; }
    /// Uniform index in [0, n); n must be positive.
    std::size_t index(std::size_t n);
    double normal();

private:
    std::mt19937_64 engine_;
};

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

/// Parse a JSONL file; blank lines are skipped. Throws Error(ParseError) with line number.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

} // namespace crux
