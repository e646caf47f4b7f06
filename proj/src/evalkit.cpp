#include "ssrmap/evalkit.hpp"

#include "ssrmap/error.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <tuple>

namespace ssrmap {

namespace {

Matrix unit_rows(const Matrix& m) {
    Matrix out = m;
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const double n = out.row(i).norm();
        if (n > 0.0) {
            out.row(i) /= n;
        }
    }
    return out;
}

void check_results(const RetrievalResult& results, std::size_t k) {
    require(k >= 1, ErrorKind::InvalidArgument, "k must be at least 1");
    for (std::size_t q = 0; q < results.ranked.size(); ++q) {
        require(results.positives[q] > 0, ErrorKind::InvalidArgument,
                "query " + std::to_string(q) + " has no relevant references");
        require(results.ranked[q].size() >= k || results.ranked[q].size() == results.relevant[q].size(),
                ErrorKind::InvalidArgument, "retrieval depth is smaller than k");
    }
}

} // namespace

std::vector<std::vector<std::size_t>> rank_by_cosine(const Matrix& queries, const Matrix& references,
                                                     std::size_t depth) {
    require(queries.cols() == references.cols(), ErrorKind::DimensionMismatch,
            "query dim " + std::to_string(queries.cols()) + " does not match reference dim " +
                std::to_string(references.cols()));
    const Matrix sims = unit_rows(queries) * unit_rows(references).transpose();
    const auto n_ref = static_cast<std::size_t>(references.rows());
    const std::size_t keep = std::min(depth, n_ref);
    std::vector<std::vector<std::size_t>> ranked(static_cast<std::size_t>(queries.rows()));
    std::vector<std::size_t> order(n_ref);
    for (Eigen::Index q = 0; q < queries.rows(); ++q) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        const auto row = sims.row(q);
        auto before = [&](std::size_t a, std::size_t b) {
            const double sa = row(static_cast<Eigen::Index>(a));
            const double sb = row(static_cast<Eigen::Index>(b));
            return sa != sb ? sa > sb : a < b;
        };
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep),
                          order.end(), before);
        ranked[static_cast<std::size_t>(q)].assign(order.begin(),
                                                   order.begin() + static_cast<std::ptrdiff_t>(keep));
    }
    return ranked;
}

RetrievalResult retrieve(const Matrix& queries, const Matrix& references,
                         std::span<const std::int64_t> query_labels,
                         std::span<const std::int64_t> reference_labels, std::size_t depth) {
    require(static_cast<std::size_t>(queries.rows()) == query_labels.size() &&
                static_cast<std::size_t>(references.rows()) == reference_labels.size(),
            ErrorKind::DimensionMismatch, "label counts do not match the vectors");
    RetrievalResult out;
    out.ranked = rank_by_cosine(queries, references, depth);
    for (std::size_t q = 0; q < out.ranked.size(); ++q) {
        std::vector<bool> rel;
        for (std::size_t r : out.ranked[q]) {
            rel.push_back(reference_labels[r] == query_labels[q]);
        }
        out.relevant.push_back(std::move(rel));
        out.positives.push_back(static_cast<std::size_t>(
            std::count(reference_labels.begin(), reference_labels.end(), query_labels[q])));
    }
    return out;
}

double map_at_k(const RetrievalResult& results, std::size_t k) {
    check_results(results, k);
    require(!results.ranked.empty(), ErrorKind::InvalidArgument, "no queries");
    double total = 0.0;
    for (std::size_t q = 0; q < results.ranked.size(); ++q) {
        const auto& rel = results.relevant[q];
        const std::size_t depth = std::min(k, rel.size());
        double hits = 0.0;
        double ap = 0.0;
        for (std::size_t i = 0; i < depth; ++i) {
            if (rel[i]) {
                hits += 1.0;
                ap += hits / static_cast<double>(i + 1);
            }
        }
        total += ap / static_cast<double>(std::min(results.positives[q], k));
    }
    return total / static_cast<double>(results.ranked.size());
}

double recall_at_k(const RetrievalResult& results, std::size_t k) {
    check_results(results, k);
    require(!results.ranked.empty(), ErrorKind::InvalidArgument, "no queries");
    std::size_t found = 0;
    for (const auto& rel : results.relevant) {
        const std::size_t depth = std::min(k, rel.size());
        if (std::any_of(rel.begin(), rel.begin() + static_cast<std::ptrdiff_t>(depth),
                        [](bool b) { return b; })) {
            ++found;
        }
    }
    return static_cast<double>(found) / static_cast<double>(results.relevant.size());
}

const std::vector<std::string>& sweep_methods() {
    static const std::vector<std::string> methods = {
        "ssr", "ssr-fl", "pca-image", "pca-text", "ae-image", "pca-image+zip-text", "text-only"};
    return methods;
}

std::size_t apply_encoding(const MapEncoding& encoding, Matrix& references, Matrix& queries) {
    const auto c = static_cast<std::size_t>(references.cols());
    switch (encoding.encoding) {
    case ValueEncoding::Fp32:
        references = references.cast<float>().cast<double>();
        queries = queries.cast<float>().cast<double>();
        return 4 * c;
    case ValueEncoding::Fp16:
        for (Matrix* m : {&references, &queries}) {
            for (Eigen::Index i = 0; i < m->size(); ++i) {
                m->data()[i] = half_to_float(float_to_half(static_cast<float>(m->data()[i])));
            }
        }
        return 2 * c;
    case ValueEncoding::Quantized: {
        const Quantizer q = fit_quantizer(references, encoding.bits);
        references = quantize_round_trip(q, references);
        queries = quantize_round_trip(q, queries);
        return (c * static_cast<std::size_t>(encoding.bits) + 7) / 8;
    }
    }
    return 0;
}

namespace {

struct Split2 {
    DatasetView ref;
    DatasetView query;
};

struct Evaluator {
    const Split2& data;
    std::size_t k;

    std::pair<double, double> score(const Matrix& refs, const Matrix& queries) const {
        const auto res = retrieve(queries, refs, data.query.places, data.ref.places, k);
        return {map_at_k(res, k), recall_at_k(res, k)};
    }
};

// Mean caption payload bytes of the references under the shared codec.
double mean_payload_bytes(const CompressedMap& map) {
    double sum = 0.0;
    for (const auto& e : map.elements) {
        sum += static_cast<double>(e.caption.payload_bytes());
    }
    return map.elements.empty() ? 0.0 : sum / static_cast<double>(map.elements.size());
}

} // namespace

std::vector<SweepRow> run_sweep(std::span<const DatasetRecord> records, const SweepOptions& options) {
    const auto& valid = sweep_methods();
    for (const auto& m : options.methods) {
        if (std::find(valid.begin(), valid.end(), m) == valid.end()) {
            std::string list;
            for (const auto& v : valid) {
                list += (list.empty() ? "" : ", ") + v;
            }
            fail(ErrorKind::InvalidArgument, "unknown method '" + m + "'; valid methods: " + list);
        }
    }
    require(options.k >= 1, ErrorKind::InvalidArgument, "k must be at least 1");

    Split2 data{select_split(records, Split::Reference), select_split(records, Split::Query)};
    require(data.ref.rows.size() >= 2 && !data.query.rows.empty(), ErrorKind::InvalidArgument,
            "sweep needs at least 2 reference and 1 query records");
    const Evaluator eval{data, options.k};
    const auto d = static_cast<std::size_t>(data.ref.images.cols());
    const auto dt = static_cast<std::size_t>(data.ref.texts.cols());

    const ContextModel codec = ContextModel::fit(data.ref.captions, options.codec_order);
    // A text-only map gives the exact caption accounting shared by all text-bearing methods.
    const CompressedMap text_map = build_map(data.ref.ids, Matrix(data.ref.images.rows(), 0),
                                             data.ref.captions, codec, options.encoding, "text-only");
    const double payload = mean_payload_bytes(text_map);

    auto uses = [&](const char* name) {
        return std::find(options.methods.begin(), options.methods.end(), name) != options.methods.end();
    };

    std::vector<SweepRow> rows;
    auto add = [&](const std::string& method, std::size_t dims, double bytes,
                   std::pair<double, double> metrics, std::uint64_t seed) {
        rows.push_back({method, dims, bytes, metrics.first, metrics.second, seed});
    };

    // Seed-independent PCA fits are shared across seeds.
    std::map<std::size_t, PcaModel> pca_image;
    std::map<std::size_t, PcaModel> pca_text;

    for (std::uint64_t seed : options.seeds) {
        if (uses("text-only")) {
            add("text-only", 0, bytes_per_element(text_map, false),
                eval.score(data.ref.texts, data.query.texts), seed);
        }

        auto ssr_rows = [&](const std::string& method, const SsrModel& model) {
            for (std::size_t c : options.dims) {
                if (c > model.output_dim()) {
                    continue;
                }
                Matrix ref = project_rows(model, data.ref.images, c);
                Matrix qry = project_rows(model, data.query.images, c);
                const CompressedMap map = build_map(data.ref.ids, ref, data.ref.captions, codec,
                                                    options.encoding, describe_config(model.config()));
                apply_encoding(options.encoding, ref, qry);
                add(method, c, bytes_per_element(map, false),
                    eval.score(fuse_rows(ref, data.ref.texts, model.config().text_weight),
                               fuse_rows(qry, data.query.texts, model.config().text_weight)),
                    seed);
            }
        };

        SsrConfig ssr_config = options.ssr;
        ssr_config.seed = seed;
        if (uses("ssr")) {
            SsrModel model = SsrModel::create(d, d, ssr_config);
            train(model, data.ref.images, data.ref.texts, options.fraction);
            ssr_rows("ssr", model);
        }
        if (uses("ssr-fl")) {
            SsrModel model = SsrModel::create(d, d, ssr_config);
            FedConfig fed = options.fed;
            fed.seed = seed;
            if (options.fraction < 1.0) {
                const auto subset = training_subset(data.ref.rows.size(), options.fraction, seed);
                Matrix imgs(static_cast<Eigen::Index>(subset.size()), data.ref.images.cols());
                Matrix txts(static_cast<Eigen::Index>(subset.size()), data.ref.texts.cols());
                for (std::size_t i = 0; i < subset.size(); ++i) {
                    imgs.row(static_cast<Eigen::Index>(i)) = data.ref.images.row(static_cast<Eigen::Index>(subset[i]));
                    txts.row(static_cast<Eigen::Index>(i)) = data.ref.texts.row(static_cast<Eigen::Index>(subset[i]));
                }
                fed_train(model, imgs, txts, fed);
            } else {
                fed_train(model, data.ref.images, data.ref.texts, fed);
            }
            ssr_rows("ssr-fl", model);
        }

        for (std::size_t c : options.dims) {
            if (uses("pca-image") || uses("pca-image+zip-text")) {
                if (c <= d && pca_image.find(c) == pca_image.end()) {
                    pca_image.emplace(c, pca_fit(data.ref.images, c));
                }
            }
            if (uses("pca-image") && c <= d) {
                Matrix ref = pca_project_rows(pca_image.at(c), data.ref.images);
                Matrix qry = pca_project_rows(pca_image.at(c), data.query.images);
                const std::size_t bytes = apply_encoding(options.encoding, ref, qry);
                add("pca-image", c, static_cast<double>(bytes), eval.score(ref, qry), seed);
            }
            if (uses("pca-image+zip-text") && c <= d) {
                Matrix ref = pca_project_rows(pca_image.at(c), data.ref.images);
                Matrix qry = pca_project_rows(pca_image.at(c), data.query.images);
                const std::size_t bytes = apply_encoding(options.encoding, ref, qry);
                const double alpha = options.ssr.text_weight;
                add("pca-image+zip-text", c, static_cast<double>(bytes) + payload,
                    eval.score(fuse_rows(ref, data.ref.texts, alpha),
                               fuse_rows(qry, data.query.texts, alpha)),
                    seed);
            }
            if (uses("pca-text") && c <= dt) {
                if (pca_text.find(c) == pca_text.end()) {
                    pca_text.emplace(c, pca_fit(data.ref.texts, c));
                }
                Matrix ref = pca_project_rows(pca_text.at(c), data.ref.texts);
                Matrix qry = pca_project_rows(pca_text.at(c), data.query.texts);
                const std::size_t bytes = apply_encoding(options.encoding, ref, qry);
                add("pca-text", c, static_cast<double>(bytes), eval.score(ref, qry), seed);
            }
            if (uses("ae-image") && c <= d) {
                AeConfig ae = options.ae;
                ae.seed = seed;
                AutoencoderModel model = ae_create(d, c, ae);
                ae_train(model, data.ref.images, ae, options.fraction);
                Matrix ref = ae_encode_rows(model, data.ref.images);
                Matrix qry = ae_encode_rows(model, data.query.images);
                const std::size_t bytes = apply_encoding(options.encoding, ref, qry);
                add("ae-image", c, static_cast<double>(bytes), eval.score(ref, qry), seed);
            }
        }
    }

    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return std::tie(a.method, a.dims, a.seed) < std::tie(b.method, b.dims, b.seed);
    });
    return rows;
}

std::string format_csv(std::span<const SweepRow> rows) {
    std::string out = "method,dims,bytes_per_element,map_at_k,recall_at_k,seed\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%zu,%.4f,%.6f,%.6f,%llu\n", r.method.c_str(), r.dims,
                      r.bytes_per_element, r.map_at_k, r.recall_at_k,
                      static_cast<unsigned long long>(r.seed));
        out += buf;
    }
    return out;
}

} // namespace ssrmap
