#pragma once

#include "ssrmap/linalg.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ssrmap {

struct TextEmbedding {
    EmbeddingVector vector;
    // Set when the caption produced no usable signal (no tokens, or all
    // hashed contributions cancelled). `vector` is then all zeros.
    bool degenerate = false;
};

// Lowercases ASCII letters and splits on anything that is not an ASCII
// letter or digit. Bytes >= 0x80 are kept inside tokens.
std::vector<std::string> tokenize(std::string_view text);

// Signed feature hashing of bag-of-words term counts, L2-normalized.
class HashedBowEmbedder {
public:
    static constexpr std::size_t kDefaultDim = 256;

    explicit HashedBowEmbedder(std::size_t dim = kDefaultDim, std::uint64_t seed = 0);

    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t seed() const noexcept { return seed_; }

    TextEmbedding embed(std::string_view caption) const;

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

inline TextEmbedding embed_text(const HashedBowEmbedder& e, std::string_view caption) {
    return e.embed(caption);
}

} // namespace ssrmap
