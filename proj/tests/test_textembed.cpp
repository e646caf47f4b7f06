#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/rng.hpp"
#include "ssrmap/textembed.hpp"

#include <doctest.h>

#include <cmath>

using namespace ssrmap;

TEST_CASE("tokenizer lowercases and splits on punctuation") {
    CHECK(tokenize("Park with Lawn, oaks!") ==
          std::vector<std::string>{"park", "with", "lawn", "oaks"});
    CHECK(tokenize("  ,,  ").empty());
    CHECK(tokenize("a1b2-C3") == std::vector<std::string>{"a1b2", "c3"});
    CHECK(tokenize("caf\xc3\xa9 bar") == std::vector<std::string>{"caf\xc3\xa9", "bar"});
}

TEST_CASE("hashed bag of words matches a direct hashing loop") {
    const HashedBowEmbedder e(64, 7);
    const std::string caption = "park with oaks and oaks near tolvan";
    std::vector<double> want(64, 0.0);
    for (const auto& t : tokenize(caption)) {
        const auto h = fnv1a64(t);
        const auto slot = splitmix64(h ^ 7) % 64;
        const double sign = (splitmix64(h ^ (7 + 0x9e3779b97f4a7c15ULL)) >> 63) ? -1.0 : 1.0;
        want[slot] += sign;
    }
    double n = 0.0;
    for (double v : want) {
        n += v * v;
    }
    const auto got = e.embed(caption);
    CHECK_FALSE(got.degenerate);
    for (std::size_t i = 0; i < 64; ++i) {
        CHECK(got.vector[i] == doctest::Approx(want[i] / std::sqrt(n)).epsilon(1e-15));
    }
    CHECK(got.vector.norm() == doctest::Approx(1.0));
}

TEST_CASE("token order and case do not matter") {
    const HashedBowEmbedder e;
    CHECK(e.embed("Oaks lawn park").vector == e.embed("park LAWN oaks").vector);
    CHECK(e.embed("a b").vector.dim() == 256);
}

TEST_CASE("captions without tokens embed to a flagged zero vector") {
    const HashedBowEmbedder e(16);
    const auto empty = e.embed("");
    CHECK(empty.degenerate);
    CHECK(empty.vector.is_zero());
    CHECK(e.embed("!!! ...").degenerate);
    CHECK_THROWS_AS(HashedBowEmbedder(0), Error);
}

TEST_CASE("different seeds give different embeddings") {
    const HashedBowEmbedder a(256, 1);
    const HashedBowEmbedder b(256, 2);
    CHECK_FALSE(a.embed("street with asphalt").vector == b.embed("street with asphalt").vector);
}
