#include "oracles.hpp"

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/linalg.hpp"
#include "ssrmap/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>

using namespace ssrmap;

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    auto rng = make_rng(seed, 77);
    GaussianSource g(rng);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = g();
        }
    }
    return m;
}

oracle::Mat to_rows(const Matrix& m) {
    oracle::Mat out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
    }
    return out;
}

} // namespace

TEST_CASE("embedding vectors reject non-finite entries") {
    CHECK_THROWS_AS(EmbeddingVector({1.0, std::numeric_limits<double>::quiet_NaN()}), Error);
    CHECK_THROWS_AS(EmbeddingVector({std::numeric_limits<double>::infinity()}), Error);
    const EmbeddingVector v{3.0, 4.0};
    CHECK(v.norm() == doctest::Approx(5.0));
    CHECK(v.prefix(1) == EmbeddingVector{3.0});
    CHECK(EmbeddingVector::zeros(3).is_zero());
}

TEST_CASE("cosine similarity basics") {
    CHECK(cosine_similarity({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(cosine_similarity({1, 2}, {2, 4}) == doctest::Approx(1.0));
    CHECK(cosine_similarity({1, 2}, {-1, -2}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), Error);
    CHECK_THROWS_AS(cosine_similarity({1, 0, 0}, {1, 0}), Error);
}

TEST_CASE("cosine matrix matches a per-pair loop and is exactly symmetric") {
    const Matrix m = random_matrix(9, 5, 1);
    const Matrix s = cosine_matrix(m);
    const auto rows = to_rows(m);
    for (Eigen::Index i = 0; i < 9; ++i) {
        CHECK(s(i, i) == 1.0);
        for (Eigen::Index j = 0; j < 9; ++j) {
            CHECK(s(i, j) == s(j, i));
            CHECK(s(i, j) == doctest::Approx(oracle::cosine(rows[i], rows[j])).epsilon(1e-12));
        }
    }
}

TEST_CASE("row softmax excludes the diagonal and sums to one") {
    const Matrix m = random_matrix(6, 3, 2);
    const Matrix s = cosine_matrix(m);
    const Matrix p = row_softmax(s, 0.1, true);
    const auto rows = to_rows(s);
    for (Eigen::Index i = 0; i < 6; ++i) {
        const auto expect = oracle::softmax_off_diagonal(rows[i], static_cast<std::size_t>(i), 0.1);
        CHECK(p(i, i) == 0.0);
        CHECK(p.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
        for (Eigen::Index j = 0; j < 6; ++j) {
            CHECK(p(i, j) == doctest::Approx(expect[j]).epsilon(1e-12));
        }
    }
    const Matrix full = row_softmax(s, 0.5, false);
    CHECK(full(0, 0) > 0.0);
}

TEST_CASE("KL divergence conventions") {
    CHECK(kl_divergence_row(std::vector<double>{0.5, 0.5}, std::vector<double>{0.5, 0.5}) == 0.0);
    // 0 * ln(0 / q) contributes nothing.
    CHECK(kl_divergence_row(std::vector<double>{1.0, 0.0}, std::vector<double>{0.5, 0.5}) ==
          doctest::Approx(std::log(2.0)));
    // q is floored before the log.
    CHECK(kl_divergence_row(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 0.0}) ==
          doctest::Approx(0.5 * std::log(0.5 / 1e-12) + 0.5 * std::log(0.5)));
    CHECK_THROWS_AS(kl_divergence_row(std::vector<double>{0.7, 0.7}, std::vector<double>{0.5, 0.5}),
                    Error);
}

TEST_CASE("similarity space KL sums rows in the requested direction") {
    const Matrix a = random_matrix(5, 4, 3);
    const Matrix b = random_matrix(5, 4, 4);
    const auto sa = build_similarity_space(a, {0.2, true});
    const auto sb = build_similarity_space(b, {0.2, true});
    double st = 0.0;
    double ts = 0.0;
    for (Eigen::Index i = 0; i < 5; ++i) {
        const oracle::Vec pa(sa.rows.row(i).data(), sa.rows.row(i).data() + 5);
        const oracle::Vec pb(sb.rows.row(i).data(), sb.rows.row(i).data() + 5);
        st += oracle::kl(pa, pb);
        ts += oracle::kl(pb, pa);
    }
    CHECK(kl_divergence_space(sa, sb) == doctest::Approx(st).epsilon(1e-12));
    CHECK(kl_divergence_space(sa, sb, KlDirection::TeacherStudent) ==
          doctest::Approx(ts).epsilon(1e-12));
    CHECK(kl_divergence_space(sa, sa) == doctest::Approx(0.0));
}

TEST_CASE("seeded generators are reproducible and independent per salt") {
    auto a = make_rng(5, 1);
    auto b = make_rng(5, 1);
    auto c = make_rng(5, 2);
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
    std::vector<int> items = {0, 1, 2, 3, 4, 5, 6, 7};
    auto r = make_rng(9);
    deterministic_shuffle(std::span<int>(items), r);
    std::vector<int> sorted = items;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
}

TEST_CASE("gaussian source has unit moments") {
    auto rng = make_rng(11);
    GaussianSource g(rng);
    double s = 0.0;
    double s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = g();
        s += v;
        s2 += v * v;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("byte writer and reader round trip little-endian values") {
    ByteWriter w;
    w.u8(7);
    w.u16(0xBEEF);
    w.u32(0xDEADBEEF);
    w.u64(0x0123456789ABCDEFULL);
    w.f32(1.5f);
    w.f64(-2.25);
    w.raw(std::string_view("xy"));
    CHECK(w.bytes()[1] == 0xEF);
    CHECK(w.bytes()[2] == 0xBE);
    ByteReader r(w.bytes());
    CHECK(r.u8("a") == 7);
    CHECK(r.u16("b") == 0xBEEF);
    CHECK(r.u32("c") == 0xDEADBEEF);
    CHECK(r.u64("d") == 0x0123456789ABCDEFULL);
    CHECK(r.f32("e") == 1.5f);
    CHECK(r.f64("f") == -2.25);
    CHECK(r.string(2, "g") == "xy");
    CHECK(r.at_end());
    try {
        r.u8("tail");
        FAIL("expected a truncation error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
        CHECK(std::string(e.what()).find("offset 29") != std::string::npos);
    }
}

TEST_CASE("atomic writes replace files and report missing paths") {
    const auto dir = std::filesystem::temp_directory_path() / "ssrmap_core_test";
    std::filesystem::create_directories(dir);
    const auto path = (dir / "f.bin").string();
    write_file_atomic(path, std::string_view("first"));
    write_file_atomic(path, std::string_view("second"));
    const auto bytes = read_file_bytes(path);
    CHECK(std::string(bytes.begin(), bytes.end()) == "second");
    try {
        read_file_bytes((dir / "missing.bin").string());
        FAIL("expected an io error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("fnv1a64 matches the published test vector") {
    CHECK(fnv1a64(std::string_view("")) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64(std::string_view("a")) == 0xaf63dc4c8601ec8cULL);
}
