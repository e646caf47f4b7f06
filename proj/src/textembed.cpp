#include "ssrmap/textembed.hpp"

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/rng.hpp"

#include <cmath>

namespace ssrmap {

namespace {

bool is_token_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

} // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_token_byte(c)) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) {
        tokens.push_back(std::move(current));
    }
    return tokens;
}

HashedBowEmbedder::HashedBowEmbedder(std::size_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    require(dim > 0, ErrorKind::InvalidArgument, "text embedding dim must be positive");
}

TextEmbedding HashedBowEmbedder::embed(std::string_view caption) const {
    std::vector<double> values(dim_, 0.0);
    for (const auto& token : tokenize(caption)) {
        const std::uint64_t h = fnv1a64(token);
        const std::uint64_t index_hash = splitmix64(h ^ seed_);
        const std::uint64_t sign_hash = splitmix64(h ^ (seed_ + 0x9e3779b97f4a7c15ULL));
        const double sign = (sign_hash >> 63) != 0 ? -1.0 : 1.0;
        values[index_hash % dim_] += sign;
    }
    double norm2 = 0.0;
    for (double v : values) {
        norm2 += v * v;
    }
    if (norm2 == 0.0) {
        return {EmbeddingVector(std::move(values)), true};
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (double& v : values) {
        v *= inv;
    }
    return {EmbeddingVector(std::move(values)), false};
}

} // namespace ssrmap
