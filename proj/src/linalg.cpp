#include "ssrmap/linalg.hpp"

#include "ssrmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace ssrmap {

namespace {

constexpr double kRowSumTolerance = 1e-9;

void check_finite(std::span<const double> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            fail(ErrorKind::InvalidArgument,
                 "embedding entry " + std::to_string(i) + " is not finite");
        }
    }
}

void check_distribution(std::span<const double> p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
        if (!(v >= 0.0)) {
            fail(ErrorKind::InvalidArgument, std::string(name) + " has a negative or NaN entry");
        }
        sum += v;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
        fail(ErrorKind::InvalidArgument,
             std::string(name) + " does not sum to 1 (sum = " + std::to_string(sum) + ")");
    }
}

} // namespace

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    check_finite(values_);
}

EmbeddingVector::EmbeddingVector(std::initializer_list<double> values)
    : EmbeddingVector(std::vector<double>(values)) {}

EmbeddingVector EmbeddingVector::zeros(std::size_t dim) {
    return EmbeddingVector(std::vector<double>(dim, 0.0));
}

EmbeddingVector EmbeddingVector::from_row(const Matrix& m, Eigen::Index row) {
    auto r = row_span(m, row);
    return EmbeddingVector(std::vector<double>(r.begin(), r.end()));
}

double EmbeddingVector::norm() const noexcept { return view().norm(); }

bool EmbeddingVector::is_zero() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
}

EmbeddingVector EmbeddingVector::prefix(std::size_t count) const {
    require(count <= values_.size(), ErrorKind::DimensionMismatch,
            "prefix length " + std::to_string(count) + " exceeds dimension " +
                std::to_string(values_.size()));
    return EmbeddingVector(std::vector<double>(values_.begin(), values_.begin() + count));
}

Matrix stack_rows(std::span<const EmbeddingVector> vectors) {
    if (vectors.empty()) {
        return Matrix(0, 0);
    }
    const std::size_t dim = vectors.front().dim();
    Matrix out(static_cast<Eigen::Index>(vectors.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        require(vectors[i].dim() == dim, ErrorKind::DimensionMismatch,
                "vector " + std::to_string(i) + " has dim " + std::to_string(vectors[i].dim()) +
                    ", expected " + std::to_string(dim));
        out.row(static_cast<Eigen::Index>(i)) = vectors[i].view().transpose();
    }
    return out;
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    require(a.dim() == b.dim(), ErrorKind::DimensionMismatch,
            "cosine_similarity: dims " + std::to_string(a.dim()) + " and " +
                std::to_string(b.dim()) + " differ");
    const double na = a.norm();
    const double nb = b.norm();
    require(na > 0.0, ErrorKind::InvalidArgument, "cosine_similarity: first argument has zero norm");
    require(nb > 0.0, ErrorKind::InvalidArgument,
            "cosine_similarity: second argument has zero norm");
    const double c = a.view().dot(b.view()) / (na * nb);
    return std::clamp(c, -1.0, 1.0);
}

Matrix cosine_matrix(const Matrix& rows) {
    const Eigen::Index n = rows.rows();
    Vector norms = rows.rowwise().norm();
    for (Eigen::Index i = 0; i < n; ++i) {
        require(norms[i] > 0.0, ErrorKind::InvalidArgument,
                "vector " + std::to_string(i) + " has zero norm");
    }
    Matrix unit = norms.cwiseInverse().asDiagonal() * rows;
    Matrix sims = unit * unit.transpose();
    for (Eigen::Index i = 0; i < n; ++i) {
        sims(i, i) = 1.0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = std::clamp(sims(i, j), -1.0, 1.0);
            sims(i, j) = v;
            sims(j, i) = v;
        }
    }
    return sims;
}

Matrix row_softmax(const Matrix& sims, double temperature, bool exclude_diagonal) {
    require(temperature > 0.0, ErrorKind::InvalidArgument, "temperature must be positive");
    const Eigen::Index n = sims.rows();
    const Eigen::Index m = sims.cols();
    Matrix out(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        double max_logit = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < m; ++j) {
            if (exclude_diagonal && i == j) {
                continue;
            }
            max_logit = std::max(max_logit, sims(i, j) / temperature);
        }
        double sum = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            if (exclude_diagonal && i == j) {
                out(i, j) = 0.0;
                continue;
            }
            const double e = std::exp(sims(i, j) / temperature - max_logit);
            out(i, j) = e;
            sum += e;
        }
        out.row(i) /= sum;
    }
    return out;
}

SimilaritySpace build_similarity_space(const Matrix& vectors, const SimilarityOptions& options) {
    require(vectors.rows() >= 2, ErrorKind::InvalidArgument,
            "a similarity space needs at least 2 vectors, got " + std::to_string(vectors.rows()));
    require(options.temperature > 0.0, ErrorKind::InvalidArgument,
            "temperature must be positive");
    SimilaritySpace space;
    space.sims = cosine_matrix(vectors);
    space.rows = row_softmax(space.sims, options.temperature, options.exclude_diagonal);
    space.temperature = options.temperature;
    space.exclude_diagonal = options.exclude_diagonal;
    return space;
}

SimilaritySpace build_similarity_space(std::span<const EmbeddingVector> vectors,
                                       const SimilarityOptions& options) {
    require(vectors.size() >= 2, ErrorKind::InvalidArgument,
            "a similarity space needs at least 2 vectors, got " + std::to_string(vectors.size()));
    return build_similarity_space(stack_rows(vectors), options);
}

double kl_divergence_row(std::span<const double> p, std::span<const double> q) {
    require(p.size() == q.size(), ErrorKind::DimensionMismatch,
            "kl_divergence_row: lengths " + std::to_string(p.size()) + " and " +
                std::to_string(q.size()) + " differ");
    check_distribution(p, "p");
    check_distribution(q, "q");
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) {
            sum += p[i] * (std::log(p[i]) - std::log(std::max(q[i], kProbabilityFloor)));
        }
    }
    return std::max(sum, 0.0);
}

double kl_divergence_space(const SimilaritySpace& student, const SimilaritySpace& teacher,
                           KlDirection direction) {
    require(student.size() == teacher.size(), ErrorKind::DimensionMismatch,
            "kl_divergence_space: sizes " + std::to_string(student.size()) + " and " +
                std::to_string(teacher.size()) + " differ");
    require(student.exclude_diagonal == teacher.exclude_diagonal, ErrorKind::InvalidArgument,
            "kl_divergence_space: spaces disagree on diagonal exclusion");
    double total = 0.0;
    for (Eigen::Index j = 0; j < student.rows.rows(); ++j) {
        const auto s = row_span(student.rows, j);
        const auto t = row_span(teacher.rows, j);
        total += direction == KlDirection::StudentTeacher ? kl_divergence_row(s, t)
                                                          : kl_divergence_row(t, s);
    }
    return total;
}

} // namespace ssrmap
