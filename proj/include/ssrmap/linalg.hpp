#pragma once

// Dense vectors, cosine-similarity spaces, row softmax and KL divergence.
// All arithmetic is double precision. Nothing here keeps shared state, so
// every function is safe to call concurrently.

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace ssrmap {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// A finite real-valued feature vector (image, text or complementary embedding).
class EmbeddingVector {
public:
    EmbeddingVector() = default;
    explicit EmbeddingVector(std::vector<double> values);
    EmbeddingVector(std::initializer_list<double> values);

    static EmbeddingVector zeros(std::size_t dim);
    static EmbeddingVector from_row(const Matrix& m, Eigen::Index row);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double operator[](std::size_t i) const { return values_[i]; }
    double norm() const noexcept;
    bool is_zero() const noexcept;

    // Leading `count` entries as a new vector.
    EmbeddingVector prefix(std::size_t count) const;

    Eigen::Map<const Vector> view() const noexcept {
        return {values_.data(), static_cast<Eigen::Index>(values_.size())};
    }

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    std::vector<double> values_;
};

// Stacks equal-length vectors as matrix rows.
Matrix stack_rows(std::span<const EmbeddingVector> vectors);

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

// Pairwise cosines of the rows. Every row must have nonzero norm. The
// result is exactly symmetric with a unit diagonal and entries clamped to [-1, 1].
Matrix cosine_matrix(const Matrix& rows);

// Row-wise softmax of sims / temperature. With exclude_diagonal the
// diagonal entry is left out of the normalization and set to 0.
Matrix row_softmax(const Matrix& sims, double temperature, bool exclude_diagonal);

struct SimilarityOptions {
    double temperature = 0.1;
    bool exclude_diagonal = true;
};

// Cosine similarity matrix plus its row-stochastic form.
struct SimilaritySpace {
    Matrix sims;
    Matrix rows;
    double temperature = 0.1;
    bool exclude_diagonal = true;

    std::size_t size() const noexcept { return static_cast<std::size_t>(sims.rows()); }
};

SimilaritySpace build_similarity_space(const Matrix& vectors, const SimilarityOptions& options);
SimilaritySpace build_similarity_space(std::span<const EmbeddingVector> vectors,
                                       const SimilarityOptions& options);

// Floor applied to the second argument of the KL divergence before the log.
inline constexpr double kProbabilityFloor = 1e-12;

// D_KL(p || q) in nats, with 0 * ln(0 / q) = 0 and q floored at kProbabilityFloor.
double kl_divergence_row(std::span<const double> p, std::span<const double> q);

// Which similarity space goes first in the KL divergence. StudentTeacher
// is D_KL(student || teacher), the default.
enum class KlDirection { StudentTeacher, TeacherStudent };

double kl_divergence_space(const SimilaritySpace& student, const SimilaritySpace& teacher,
                           KlDirection direction = KlDirection::StudentTeacher);

inline std::span<const double> row_span(const Matrix& m, Eigen::Index row) {
    return {m.data() + row * m.cols(), static_cast<std::size_t>(m.cols())};
}

} // namespace ssrmap
