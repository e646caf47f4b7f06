// Acceptance harness: one PASS/FAIL line per criterion. Run a single
// criterion with --criterion N, or all of them without arguments.

#include "oracles.hpp"

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/evalkit.hpp"
#include "ssrmap/rng.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

using namespace ssrmap;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double elapsed(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::vector<std::string> bundled_captions() {
    std::ifstream in(SSRMAP_DATA_DIR "/captions.txt");
    require(in.good(), ErrorKind::Io, "cannot open " SSRMAP_DATA_DIR "/captions.txt");
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        lines.push_back(line);
    }
    return lines;
}

const std::vector<DatasetRecord>& default_dataset() {
    static const std::vector<DatasetRecord> records = generate_synthetic(SyntheticSpec{});
    return records;
}

const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

SweepOptions default_sweep() {
    SweepOptions o;
    o.seeds = kSeeds;
    return o;
}

// (method, dims, seed) -> row
using RowIndex = std::map<std::tuple<std::string, std::size_t, std::uint64_t>, SweepRow>;

RowIndex index_rows(const std::vector<SweepRow>& rows) {
    RowIndex out;
    for (const auto& r : rows) {
        out[{r.method, r.dims, r.seed}] = r;
    }
    return out;
}

// Random byte strings (odd i) and random UTF-8 text (even i).
std::string fuzz_string(std::mt19937_64& rng, std::size_t i) {
    const std::size_t n = rng() % 10001;
    std::string s;
    s.reserve(n);
    if (i % 2 == 1) {
        for (std::size_t j = 0; j < n; ++j) {
            s.push_back(static_cast<char>(rng() & 0xFF));
        }
        return s;
    }
    while (s.size() < n) {
        const std::uint32_t cp = static_cast<std::uint32_t>(rng() % 0x3000);
        if (cp < 0x80) {
            s.push_back(static_cast<char>(cp));
        } else if (cp < 0x800) {
            s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        } else {
            s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
            s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
            s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
        }
    }
    s.resize(n);
    return s;
}

Outcome criterion1() {
    const auto start = std::chrono::steady_clock::now();
    const auto corpus = bundled_captions();
    const auto model = ContextModel::fit(corpus, 3);
    std::vector<std::string> inputs;
    auto rng = make_rng(2024, 1);
    for (std::size_t i = 0; i < 1000; ++i) {
        inputs.push_back(fuzz_string(rng, i));
    }
    inputs.insert(inputs.end(), corpus.begin(), corpus.end());
    std::string whole;
    for (const auto& c : corpus) {
        whole += c + "\n";
    }
    inputs.push_back(whole);

    std::size_t failures = 0;
    double worst_slack = 1e300;
    for (const auto& s : inputs) {
        EncodeStats stats;
        const auto blob = encode(model, s, &stats);
        if (decode(model, blob) != s) {
            ++failures;
            continue;
        }
        const double slack = stats.ideal_bits + 64.0 - static_cast<double>(blob.payload_bits);
        worst_slack = std::min(worst_slack, slack);
        if (slack < 0.0) {
            ++failures;
        }
    }
    const double seconds = elapsed(start);
    Outcome o;
    o.pass = failures == 0 && seconds < 60.0;
    o.detail = std::to_string(inputs.size()) + " strings, " + std::to_string(failures) +
               " failures, min bound slack " + fmt("%.1f", worst_slack) + " bits, " +
               fmt("%.1f", seconds) + " s (limit 60)";
    return o;
}

Outcome criterion2() {
    // Fit on alternate captions, measure on the held-out ones: the model
    // never sees the text it codes.
    const auto corpus = bundled_captions();
    std::vector<std::string> fit_set;
    std::vector<std::string> test_set;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        (i % 2 == 0 ? fit_set : test_set).push_back(corpus[i]);
    }
    const auto model = ContextModel::fit(fit_set, 3);
    std::size_t raw = 0;
    std::size_t coded = 0;
    for (const auto& s : test_set) {
        raw += s.size();
        coded += encode(model, s).payload_bytes();
    }
    const double ratio = static_cast<double>(raw) / static_cast<double>(coded);
    Outcome o;
    o.pass = ratio >= 3.0;
    o.detail = "held-out per-caption ratio " + fmt("%.3f", ratio) + " (" + std::to_string(raw) + " -> " +
               std::to_string(coded) + " bytes), need >= 3.0";
    return o;
}

Outcome criterion3() {
    const auto start = std::chrono::steady_clock::now();
    auto rng = make_rng(33, 3);
    GaussianSource g(rng);
    const std::size_t n = 16;
    const std::size_t d = 8;
    Matrix images(n, d);
    Matrix texts(n, 6);
    for (Eigen::Index i = 0; i < images.size(); ++i) {
        images.data()[i] = g() + ((i % n) % 4 == 0 ? 1.5 : 0.0);
    }
    for (Eigen::Index i = 0; i < texts.size(); ++i) {
        texts.data()[i] = g();
    }
    auto to_vec = [](const ParamVector& p) { return oracle::Vec(p.values().begin(), p.values().end()); };

    double worst_ssr = 0.0;
    for (auto direction : {KlDirection::StudentTeacher, KlDirection::TeacherStudent}) {
        SsrConfig c;
        c.nested_dims = {2, 4};
        c.direction = direction;
        c.init_noise = 0.3;
        const SsrModel model = SsrModel::create(d, d, c);
        const auto teacher = teacher_space(c, images);
        ParamVector grad;
        ssr_loss(model, images, texts, teacher, &grad);
        auto f = [&](const oracle::Vec& p) {
            SsrModel m = model;
            m.net().unflatten(ParamVector(p));
            return ssr_loss(m, images, texts, teacher).total;
        };
        const auto numeric = oracle::numeric_gradient(f, to_vec(model.net().flatten()), 1e-5);
        worst_ssr = std::max(worst_ssr, oracle::max_relative_error(to_vec(grad), numeric, 1e-4));
    }

    double worst_ae = 0.0;
    for (std::size_t hidden : {0u, 5u}) {
        AeConfig cfg;
        cfg.hidden_dim = hidden;
        const auto model = ae_create(d, 3, cfg);
        const Matrix data = images * 0.3;
        ParamVector grad;
        ae_mse(model, data, &grad);
        auto f = [&](const oracle::Vec& p) {
            auto m = model;
            ae_unflatten(m, ParamVector(p));
            return ae_mse(m, data);
        };
        const auto numeric = oracle::numeric_gradient(f, to_vec(ae_flatten(model)), 1e-5);
        worst_ae = std::max(worst_ae, oracle::max_relative_error(to_vec(grad), numeric, 1e-4));
    }
    const double seconds = elapsed(start);
    Outcome o;
    o.pass = worst_ssr <= 1e-4 && worst_ae <= 1e-4 && seconds < 10.0;
    o.detail = "max rel err ssr " + fmt("%.2e", worst_ssr) + ", autoencoder " + fmt("%.2e", worst_ae) +
               " (limit 1e-4), " + fmt("%.2f", seconds) + " s";
    return o;
}

Outcome criterion4() {
    const auto start = std::chrono::steady_clock::now();
    const auto refs = select_split(default_dataset(), Split::Reference);
    Outcome o;
    o.pass = true;
    for (auto seed : kSeeds) {
        SsrConfig c;
        c.seed = seed;
        SsrModel model = SsrModel::create(256, 256, c);
        const auto report = train(model, refs.images, refs.texts);
        const double ratio = report.final_loss / report.initial_loss;
        const bool epochs_ok = report.epoch_losses.back() <= report.epoch_losses.front();
        o.pass = o.pass && ratio < 0.5 && epochs_ok;
        o.detail += "seed " + std::to_string(seed) + " ratio " + fmt("%.3f", ratio) +
                    (epochs_ok ? "" : " (last epoch above first)") + "; ";
    }
    const double seconds = elapsed(start);
    o.pass = o.pass && seconds < 300.0;
    o.detail += "need < 0.5, " + fmt("%.1f", seconds) + " s (limit 300)";
    return o;
}

Outcome criterion5() {
    const auto start = std::chrono::steady_clock::now();
    SweepOptions opts = default_sweep();
    opts.methods = {"ssr", "pca-image", "ae-image", "pca-image+zip-text", "pca-text"};
    const auto rows = run_sweep(default_dataset(), opts);
    const std::vector<std::string> baselines = {"pca-image", "ae-image", "pca-image+zip-text", "pca-text"};

    std::size_t passing = 0;
    std::string detail;
    for (auto seed : kSeeds) {
        std::vector<SweepRow> ssr;
        for (const auto& r : rows) {
            if (r.method == "ssr" && r.seed == seed) {
                ssr.push_back(r);
            }
        }
        std::sort(ssr.begin(), ssr.end(),
                  [](const SweepRow& a, const SweepRow& b) { return a.bytes_per_element < b.bytes_per_element; });
        bool ok = ssr.size() >= 2;
        detail += "seed " + std::to_string(seed) + ":";
        for (std::size_t b = 0; b < 2 && b < ssr.size(); ++b) {
            detail += " ssr@" + std::to_string(ssr[b].dims) + " " + fmt("%.3f", ssr[b].map_at_k) + " (" +
                      fmt("%.1f", ssr[b].bytes_per_element) + " B) vs";
            for (const auto& m : baselines) {
                // The cheapest row of this baseline that spends at least as many bytes.
                const SweepRow* match = nullptr;
                for (const auto& r : rows) {
                    if (r.method == m && r.seed == seed && r.bytes_per_element >= ssr[b].bytes_per_element &&
                        (match == nullptr || r.bytes_per_element < match->bytes_per_element)) {
                        match = &r;
                    }
                }
                if (match == nullptr) {
                    continue;
                }
                detail += " " + m + "@" + std::to_string(match->dims) + " " + fmt("%.3f", match->map_at_k);
                ok = ok && ssr[b].map_at_k >= match->map_at_k;
            }
            detail += ";";
        }
        detail += ok ? " pass. " : " fail. ";
        passing += ok ? 1 : 0;
    }
    const double seconds = elapsed(start);
    Outcome o;
    o.pass = passing >= 2 && seconds < 900.0;
    o.detail = detail + std::to_string(passing) + "/3 seeds pass (need 2), " + fmt("%.1f", seconds) +
               " s (limit 900)";
    return o;
}

Outcome criterion6() {
    SweepOptions opts = default_sweep();
    opts.methods = {"ssr"};
    opts.dims = default_nested_dims(256);
    const auto rows = index_rows(run_sweep(default_dataset(), opts));
    Outcome o;
    o.pass = true;
    for (auto seed : kSeeds) {
        o.detail += "seed " + std::to_string(seed) + ":";
        for (std::size_t i = 0; i < opts.dims.size(); ++i) {
            const double v = rows.at({"ssr", opts.dims[i], seed}).map_at_k;
            o.detail += " " + fmt("%.3f", v);
            if (i > 0) {
                const double prev = rows.at({"ssr", opts.dims[i - 1], seed}).map_at_k;
                o.pass = o.pass && v >= prev - 0.01;
            }
        }
        o.detail += "; ";
    }
    std::string dims;
    for (auto c : opts.dims) {
        dims += (dims.empty() ? "" : ",") + std::to_string(c);
    }
    o.detail += "over C={" + dims + "}, slack 0.01";
    return o;
}

Outcome criterion7() {
    const auto refs = select_split(default_dataset(), Split::Reference);
    SsrConfig c;
    c.seed = 7;
    SsrModel central = SsrModel::create(256, 256, c);
    SsrModel federated = central;
    train(central, refs.images, refs.texts);
    FedConfig one;
    one.nodes = 1;
    one.rounds = 1;
    one.local_epochs = c.epochs;
    one.seed = c.seed;
    fed_train(federated, refs.images, refs.texts, one);
    const bool bitwise = federated.net().flatten() == central.net().flatten();

    SweepOptions opts = default_sweep();
    opts.methods = {"ssr", "ssr-fl"};
    const auto rows = index_rows(run_sweep(default_dataset(), opts));
    double worst = 0.0;
    std::string detail;
    for (auto seed : kSeeds) {
        for (auto dims : opts.dims) {
            const double gap = std::abs(rows.at({"ssr-fl", dims, seed}).map_at_k - rows.at({"ssr", dims, seed}).map_at_k);
            worst = std::max(worst, gap);
        }
        detail += "seed " + std::to_string(seed) + " c=16 ssr " +
                  fmt("%.3f", rows.at({"ssr", 16, seed}).map_at_k) + " fl " +
                  fmt("%.3f", rows.at({"ssr-fl", 16, seed}).map_at_k) + "; ";
    }
    Outcome o;
    o.pass = bitwise && worst <= 0.03;
    o.detail = std::string("(a) A=1 R=1 bitwise ") + (bitwise ? "identical" : "DIFFERENT") + "; (b) A=" +
               std::to_string(opts.fed.nodes) + " rounds=" + std::to_string(opts.fed.rounds) + " " + detail +
               "max gap " + fmt("%.4f", worst) + " over all c (limit 0.03)";
    return o;
}

Outcome criterion8() {
    // SSR at its smallest prefix against the autoencoder at the code size
    // that stores the same bytes per element.
    SweepOptions ssr = default_sweep();
    ssr.methods = {"ssr"};
    ssr.dims = {16};
    SweepOptions ae = default_sweep();
    ae.methods = {"ae-image"};

    std::map<double, RowIndex> by_fraction;
    std::size_t ae_dims = 0;
    for (double fraction : {1.0, 0.25}) {
        ssr.fraction = fraction;
        auto rows = run_sweep(default_dataset(), ssr);
        if (ae_dims == 0) {
            double bytes = 0.0;
            for (const auto& r : rows) {
                bytes = std::max(bytes, r.bytes_per_element);
            }
            ae_dims = static_cast<std::size_t>(std::ceil(bytes / 4.0));
            ae.dims = {ae_dims};
        }
        ae.fraction = fraction;
        const auto ae_rows = run_sweep(default_dataset(), ae);
        rows.insert(rows.end(), ae_rows.begin(), ae_rows.end());
        by_fraction[fraction] = index_rows(rows);
    }
    Outcome o;
    o.pass = true;
    for (auto seed : kSeeds) {
        const double ssr_full = by_fraction[1.0].at({"ssr", 16, seed}).map_at_k;
        const double ssr_part = by_fraction[0.25].at({"ssr", 16, seed}).map_at_k;
        const double ae_full = by_fraction[1.0].at({"ae-image", ae_dims, seed}).map_at_k;
        const double ae_part = by_fraction[0.25].at({"ae-image", ae_dims, seed}).map_at_k;
        const bool ok = ssr_full - ssr_part < ae_full - ae_part;
        o.pass = o.pass && ok;
        o.detail += "seed " + std::to_string(seed) + " ssr " + fmt("%.3f", ssr_full) + "->" +
                    fmt("%.3f", ssr_part) + " drop " + fmt("%.3f", ssr_full - ssr_part) + ", ae " +
                    fmt("%.3f", ae_full) + "->" + fmt("%.3f", ae_part) + " drop " +
                    fmt("%.3f", ae_full - ae_part) + (ok ? "; " : " FAIL; ");
    }
    o.detail += "ssr c=16 vs ae c=" + std::to_string(ae_dims) + " (equal bytes), fractions 1.0 vs 0.25";
    return o;
}

Matrix random_rows(GaussianSource& g, std::size_t n, std::size_t d) {
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = g() * (1.0 + static_cast<double>(j));
        }
    }
    Matrix mix(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < mix.size(); ++i) {
        mix.data()[i] = g();
    }
    return m * mix;
}

oracle::Mat rows_of(const Matrix& m) {
    oracle::Mat out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
    }
    return out;
}

Outcome criterion9() {
    auto rng = make_rng(99, 9);
    GaussianSource g(rng);
    double pca_err = 0.0;
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t d = 3 + static_cast<std::size_t>(inst % 6);
        const std::size_t n = d + 5 + static_cast<std::size_t>(inst);
        const Matrix data = random_rows(g, n, d);
        const auto p = pca_fit(data, d);
        const auto [values, vectors] = oracle::jacobi_eigen(oracle::covariance(rows_of(data)));
        for (std::size_t k = 0; k < d; ++k) {
            const auto ki = static_cast<Eigen::Index>(k);
            pca_err = std::max(pca_err, std::abs(p.eigenvalues(ki) - values[k]) / std::max(1.0, values[k]));
            double dotv = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                dotv += p.components(ki, static_cast<Eigen::Index>(j)) * vectors[k][j];
            }
            const double sign = dotv < 0.0 ? -1.0 : 1.0;
            for (std::size_t j = 0; j < d; ++j) {
                pca_err = std::max(pca_err, std::abs(p.components(ki, static_cast<Eigen::Index>(j)) -
                                                     sign * vectors[k][j]));
            }
        }
    }

    // Every relevance labeling of 8 ranked references, every k.
    std::size_t metric_mismatches = 0;
    const std::size_t n = 8;
    Matrix refs(static_cast<Eigen::Index>(n), 2);
    for (std::size_t r = 0; r < n; ++r) {
        refs(static_cast<Eigen::Index>(r), 0) = std::cos(0.1 * static_cast<double>(r));
        refs(static_cast<Eigen::Index>(r), 1) = std::sin(0.1 * static_cast<double>(r));
    }
    Matrix queries(2, 2);
    queries << 1.0, 0.0, 1.0, 0.0;
    for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        // The second query is relevant to the complementary set; both need a positive.
        if (mask == 0 || mask == (1u << n) - 1) {
            continue;
        }
        const std::vector<std::int64_t> ql = {1, 0};
        std::vector<std::int64_t> labels(n);
        std::vector<std::vector<bool>> rel(2, std::vector<bool>(n));
        std::vector<std::size_t> totals(2, 0);
        for (std::size_t r = 0; r < n; ++r) {
            labels[r] = (mask >> r) & 1u;
            rel[0][r] = labels[r] == 1;
            rel[1][r] = labels[r] == 0;
            totals[0] += rel[0][r] ? 1 : 0;
            totals[1] += rel[1][r] ? 1 : 0;
        }
        const auto res = retrieve(queries, refs, ql, labels, n);
        for (std::size_t k = 1; k <= n; ++k) {
            double want_map = 0.0;
            double want_recall = 0.0;
            for (std::size_t q = 0; q < 2; ++q) {
                want_map += oracle::average_precision(rel[q], totals[q], k) / 2.0;
                bool any = false;
                for (std::size_t r = 0; r < k; ++r) {
                    any = any || rel[q][r];
                }
                want_recall += any ? 0.5 : 0.0;
            }
            metric_mismatches += std::abs(map_at_k(res, k) - want_map) > 1e-14 ? 1 : 0;
            metric_mismatches += recall_at_k(res, k) != want_recall ? 1 : 0;
        }
    }

    // Loss against the scalar-loop oracle.
    double loss_err = 0.0;
    const Matrix images = random_rows(g, 16, 8);
    const Matrix texts = random_rows(g, 16, 5);
    for (auto direction : {KlDirection::StudentTeacher, KlDirection::TeacherStudent}) {
        SsrConfig c;
        c.nested_dims = {2, 4, 8};
        c.direction = direction;
        c.init_noise = 0.2;
        const SsrModel model = SsrModel::create(8, 8, c);
        const auto& layer = model.net().layers()[0];
        const oracle::Vec bias(layer.bias.data(), layer.bias.data() + layer.bias.size());
        const double want = oracle::ssr_loss(rows_of(layer.weight), bias, rows_of(images), rows_of(texts),
                                             c.nested_dims, c.text_weight, c.temperature,
                                             direction == KlDirection::StudentTeacher);
        const double got = ssr_loss(model, images, texts, teacher_space(c, images)).total;
        loss_err = std::max(loss_err, std::abs(got - want));
    }
    Outcome o;
    o.pass = pca_err <= 1e-6 && metric_mismatches == 0 && loss_err <= 1e-10;
    o.detail = "pca max err " + fmt("%.2e", pca_err) + " over 20 instances (limit 1e-6); " +
               std::to_string(metric_mismatches) + " metric mismatches over 254 labelings x 8 k; loss err " +
               fmt("%.2e", loss_err) + " (limit 1e-10)";
    return o;
}

double ssr_map_at(const SsrModel& model, const DatasetView& refs, const DatasetView& queries, std::size_t c,
                  const MapEncoding& encoding) {
    Matrix r = project_rows(model, refs.images, c);
    Matrix q = project_rows(model, queries.images, c);
    apply_encoding(encoding, r, q);
    const double alpha = model.config().text_weight;
    const auto res = retrieve(fuse_rows(q, queries.texts, alpha), fuse_rows(r, refs.texts, alpha),
                              queries.places, refs.places, 5);
    return map_at_k(res, 5);
}

Outcome criterion10() {
    const auto refs = select_split(default_dataset(), Split::Reference);
    const auto queries = select_split(default_dataset(), Split::Query);
    Outcome o;
    o.pass = true;
    std::string info;
    for (auto seed : kSeeds) {
        SsrConfig c;
        c.seed = seed;
        SsrModel model = SsrModel::create(256, 256, c);
        train(model, refs.images, refs.texts);
        const double fp32 = ssr_map_at(model, refs, queries, 64, parse_encoding("fp32"));
        const double q8 = ssr_map_at(model, refs, queries, 64, parse_encoding("q8"));
        const double q6 = ssr_map_at(model, refs, queries, 64, parse_encoding("q6"));
        o.pass = o.pass && fp32 - q8 <= 0.02 && fp32 - q6 <= 0.05;
        o.detail += "seed " + std::to_string(seed) + " fp32 " + fmt("%.4f", fp32) + " q8 " + fmt("%.4f", q8) +
                    " q6 " + fmt("%.4f", q6) + "; ";
        // Not part of the criterion: the same comparison where c=64 saturates.
        info += " seed " + std::to_string(seed) + " " +
                fmt("%.3f", ssr_map_at(model, refs, queries, 16, parse_encoding("fp32"))) + "/" +
                fmt("%.3f", ssr_map_at(model, refs, queries, 16, parse_encoding("q8"))) + "/" +
                fmt("%.3f", ssr_map_at(model, refs, queries, 16, parse_encoding("q6")));
    }
    o.detail += "c=64, loss limits q8 0.02, q6 0.05; info c=16 fp32/q8/q6:" + info;
    return o;
}

// Walks the map layout with its own reader and returns (stored element
// bytes, file bytes).
std::pair<std::size_t, std::size_t> recount(const std::vector<std::uint8_t>& bytes) {
    std::size_t pos = 0;
    auto take = [&](std::size_t n) {
        require(pos + n <= bytes.size(), ErrorKind::Format, "recount ran past the end");
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < n && i < 8; ++i) {
            v |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        }
        pos += n;
        return v;
    };
    take(4);
    take(2);
    const auto n = take(4);
    const auto c = take(4);
    const auto enc = take(1);
    const auto bits = take(1);
    if (enc == 2) {
        take(16 * c);
    }
    take(take(4));
    take(take(4));
    const std::size_t prefix = enc == 0 ? 4 * c : enc == 1 ? 2 * c : (c * bits + 7) / 8;
    std::size_t stored = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        take(take(2));
        take(prefix);
        take(4);
        const auto payload = (take(4) + 7) / 8;
        take(payload);
        stored += prefix + payload;
    }
    return {stored, pos};
}

Outcome criterion11() {
    const auto refs = select_split(default_dataset(), Split::Reference);
    const auto codec = ContextModel::fit(refs.captions, 3);
    SsrConfig c;
    c.epochs = 1;
    SsrModel model = SsrModel::create(256, 256, c);
    train(model, refs.images, refs.texts, 0.25);
    const Matrix exact = project_rows(model, refs.images, 32);

    bool fp32_bitwise = true;
    double worst_q = 0.0;
    bool counts_match = true;
    for (const char* name : {"fp32", "q8", "fp16", "q5"}) {
        const auto encoding = parse_encoding(name);
        const auto map = write_map_elements(refs.ids, refs.images, refs.captions, &model, 32, codec, encoding);
        const auto bytes = serialize_map(map);
        const auto back = parse_map(bytes);
        fp32_bitwise = fp32_bitwise && serialize_map(back) == bytes;
        for (std::size_t i = 0; i < back.size(); ++i) {
            for (std::size_t k = 0; k < 32; ++k) {
                const double want = exact(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                const double got = back.elements[i].prefix[k];
                if (encoding.encoding == ValueEncoding::Fp32) {
                    fp32_bitwise = fp32_bitwise && got == static_cast<double>(static_cast<float>(want));
                } else if (encoding.encoding == ValueEncoding::Quantized) {
                    const double bound = back.quantizer.step_bound(k);
                    const double err = std::abs(got - want);
                    worst_q = std::max(worst_q, bound > 0.0 ? err / bound : (err > 0.0 ? 1e9 : 0.0));
                }
            }
        }
        const auto [stored, file] = recount(bytes);
        const double per = static_cast<double>(stored) / static_cast<double>(map.size());
        counts_match = counts_match && file == bytes.size() && bytes_per_element(map, false) == per &&
                       std::abs(bytes_per_element(map, true) * static_cast<double>(map.size()) -
                                static_cast<double>(file)) < 1e-6;
    }

    SyntheticSpec spec;
    spec.num_places = 12;
    spec.items_per_place = 10;
    spec.seed = 11;
    const auto small = generate_synthetic(spec);
    SweepOptions opts;
    opts.methods = sweep_methods();
    opts.seeds = {0, 1};
    opts.dims = {16, 32};
    opts.ssr.epochs = 2;
    opts.fed.rounds = 2;
    opts.ae.epochs = 1;
    const auto a = format_csv(run_sweep(small, opts));
    const auto b = format_csv(run_sweep(small, opts));
    const bool same_csv = a == b;

    Outcome o;
    o.pass = fp32_bitwise && worst_q <= 1.0 + 1e-9 && counts_match && same_csv;
    o.detail = std::string("fp32 round trip ") + (fp32_bitwise ? "bitwise" : "DIFFERS") +
               ", quantized error / bound max " + fmt("%.4f", worst_q) + ", byte recount " +
               (counts_match ? "exact" : "MISMATCH") + ", repeated sweep CSV " +
               (same_csv ? "byte-identical" : "DIFFERS") + " (" + std::to_string(a.size()) + " bytes)";
    return o;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    int only = 0;
    app.add_option("--criterion", only, "Run only this criterion (1-11)")->check(CLI::Range(1, 11));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::function<Outcome()>> criteria = {
        criterion1, criterion2, criterion3, criterion4, criterion5, criterion6,
        criterion7, criterion8, criterion9, criterion10, criterion11};
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only != 0 && static_cast<std::size_t>(only) != i + 1) {
            continue;
        }
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("criterion %zu %s %s [%.1f s]\n", i + 1, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    elapsed(start));
        std::fflush(stdout);
        all = all && o.pass;
    }
    return all ? 0 : 1;
}
