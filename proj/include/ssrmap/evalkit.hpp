#pragma once

// Cosine retrieval, mAP@k / Recall@k, and the method-by-budget sweep that
// produces the CSV comparison table.

#include "ssrmap/baselines.hpp"
#include "ssrmap/federated.hpp"
#include "ssrmap/mapstore.hpp"
#include "ssrmap/ssr.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ssrmap {

struct RetrievalResult {
    // Per query: reference indices in rank order (truncated to the retrieval depth).
    std::vector<std::vector<std::size_t>> ranked;
    // Per query: relevance flag of each ranked entry.
    std::vector<std::vector<bool>> relevant;
    // Per query: number of relevant references in the whole database.
    std::vector<std::size_t> positives;
};

// Ranks every reference by cosine similarity to each query; zero vectors
// have similarity 0 to everything. Equal similarities rank the lower index first.
std::vector<std::vector<std::size_t>> rank_by_cosine(const Matrix& queries, const Matrix& references,
                                                     std::size_t depth);

RetrievalResult retrieve(const Matrix& queries, const Matrix& references,
                         std::span<const std::int64_t> query_labels,
                         std::span<const std::int64_t> reference_labels, std::size_t depth);

// AP@k is normalized by min(R, k).
double map_at_k(const RetrievalResult& results, std::size_t k);
double recall_at_k(const RetrievalResult& results, std::size_t k);

struct SweepRow {
    std::string method;
    std::size_t dims = 0;
    double bytes_per_element = 0.0;
    double map_at_k = 0.0;
    double recall_at_k = 0.0;
    std::uint64_t seed = 0;
};

const std::vector<std::string>& sweep_methods();

struct SweepOptions {
    std::vector<std::string> methods = {"ssr", "pca-image", "pca-text", "ae-image",
                                        "pca-image+zip-text", "text-only"};
    std::vector<std::size_t> dims = {16, 32, 64, 128};
    std::size_t k = 5;
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    SsrConfig ssr;   // seed overridden per sweep seed
    FedConfig fed;   // seed overridden per sweep seed
    AeConfig ae;     // seed overridden per sweep seed
    MapEncoding encoding;
    double fraction = 1.0;
    int codec_order = 3;
};

// Trains and evaluates every (method, dims, seed) cell on the reference
// split, querying with the query split. Rows come back sorted by method,
// dims and seed.
std::vector<SweepRow> run_sweep(std::span<const DatasetRecord> records, const SweepOptions& options);

// Header `method,dims,bytes_per_element,map_at_k,recall_at_k,seed`.
std::string format_csv(std::span<const SweepRow> rows);

// Applies a value encoding to reference and query vectors alike; quantizer
// ranges are fit on the references. Returns the stored bytes per vector.
std::size_t apply_encoding(const MapEncoding& encoding, Matrix& references, Matrix& queries);

} // namespace ssrmap
