#include "ssrmap/baselines.hpp"

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/rng.hpp"
#include "ssrmap/ssr.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>

namespace ssrmap {

namespace {

constexpr std::uint16_t kPcaVersion = 1;
constexpr std::uint64_t kAeInitSalt = 0x4004;
constexpr std::uint64_t kAeEpochSalt = 0x5005;

Matrix gather(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

void set_identity(DenseLayer& layer) {
    layer.weight.setZero();
    const auto n = std::min(layer.weight.rows(), layer.weight.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        layer.weight(i, i) = 1.0;
    }
    layer.bias.setZero();
}

} // namespace

PcaModel pca_fit(const Matrix& data, std::size_t c) {
    const auto n = static_cast<std::size_t>(data.rows());
    const auto d = static_cast<std::size_t>(data.cols());
    require(c >= 1 && c <= d, ErrorKind::InvalidArgument,
            "PCA target dim " + std::to_string(c) + " outside [1, " + std::to_string(d) + "]");
    require(n >= c + 1, ErrorKind::InvalidArgument,
            "PCA to " + std::to_string(c) + " dims needs at least " + std::to_string(c + 1) +
                " samples, got " + std::to_string(n));

    PcaModel m;
    m.mean = data.colwise().mean().transpose();
    const Matrix centered = data.rowwise() - m.mean.transpose();
    const Eigen::MatrixXd cov =
        (centered.transpose() * centered) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    require(solver.info() == Eigen::Success, ErrorKind::InvalidArgument,
            "eigen decomposition did not converge");

    // Eigen returns ascending order.
    const auto dd = static_cast<Eigen::Index>(d);
    m.spectrum.resize(dd);
    for (Eigen::Index i = 0; i < dd; ++i) {
        m.spectrum(i) = solver.eigenvalues()(dd - 1 - i);
    }
    const auto cc = static_cast<Eigen::Index>(c);
    m.eigenvalues = m.spectrum.head(cc);
    m.components.resize(cc, dd);
    for (Eigen::Index k = 0; k < cc; ++k) {
        Vector v = solver.eigenvectors().col(dd - 1 - k);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0.0) {
            v = -v;
        }
        m.components.row(k) = v.transpose();
    }
    return m;
}

Matrix pca_project_rows(const PcaModel& m, const Matrix& data) {
    require(static_cast<std::size_t>(data.cols()) == m.input_dim(), ErrorKind::DimensionMismatch,
            "PCA expects dim " + std::to_string(m.input_dim()) + ", got " +
                std::to_string(data.cols()));
    return (data.rowwise() - m.mean.transpose()) * m.components.transpose();
}

Matrix pca_reconstruct_rows(const PcaModel& m, const Matrix& coords) {
    require(static_cast<std::size_t>(coords.cols()) == m.output_dim(),
            ErrorKind::DimensionMismatch,
            "PCA coordinates must have dim " + std::to_string(m.output_dim()) + ", got " +
                std::to_string(coords.cols()));
    Matrix out = coords * m.components;
    out.rowwise() += m.mean.transpose();
    return out;
}

EmbeddingVector pca_project(const PcaModel& m, const EmbeddingVector& v) {
    const Matrix row = v.view().transpose();
    return EmbeddingVector::from_row(pca_project_rows(m, row), 0);
}

EmbeddingVector pca_reconstruct(const PcaModel& m, const EmbeddingVector& coords) {
    const Matrix row = coords.view().transpose();
    return EmbeddingVector::from_row(pca_reconstruct_rows(m, row), 0);
}

std::vector<std::uint8_t> serialize_pca(const PcaModel& m) {
    ByteWriter out;
    out.raw(std::string_view("SSRP"));
    out.u16(kPcaVersion);
    out.u32(static_cast<std::uint32_t>(m.input_dim()));
    out.u32(static_cast<std::uint32_t>(m.output_dim()));
    for (Eigen::Index i = 0; i < m.mean.size(); ++i) {
        out.f64(m.mean(i));
    }
    for (Eigen::Index i = 0; i < m.spectrum.size(); ++i) {
        out.f64(m.spectrum(i));
    }
    for (Eigen::Index i = 0; i < m.components.size(); ++i) {
        out.f64(m.components.data()[i]);
    }
    return out.take();
}

PcaModel deserialize_pca(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("SSRP", "PCA model");
    const auto version = in.u16("PCA version");
    require(version == kPcaVersion, ErrorKind::Format,
            "unsupported PCA version " + std::to_string(version));
    const auto d = static_cast<Eigen::Index>(in.u32("input dim"));
    const auto c = static_cast<Eigen::Index>(in.u32("output dim"));
    require(c >= 1 && c <= d, ErrorKind::Format, "PCA dims are inconsistent");
    require(in.remaining() == static_cast<std::size_t>(8 * (2 * d + c * d)), ErrorKind::Format,
            "PCA payload size does not match its dims");
    PcaModel m;
    m.mean.resize(d);
    m.spectrum.resize(d);
    m.components.resize(c, d);
    for (Eigen::Index i = 0; i < d; ++i) {
        m.mean(i) = in.f64("mean");
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        m.spectrum(i) = in.f64("eigenvalue");
    }
    for (Eigen::Index i = 0; i < c * d; ++i) {
        m.components.data()[i] = in.f64("component");
    }
    m.eigenvalues = m.spectrum.head(c);
    return m;
}

AutoencoderModel ae_create(std::size_t d, std::size_t c, const AeConfig& config) {
    // c == d is accepted so the identity-initialized autoencoder can be built.
    require(c >= 1 && c <= d, ErrorKind::InvalidArgument,
            "autoencoder code dim " + std::to_string(c) + " outside [1, " + std::to_string(d) +
                "]");
    auto rng = make_rng(config.seed, kAeInitSalt);
    AutoencoderModel m;
    if (config.hidden_dim == 0) {
        const std::size_t enc[] = {d, c};
        const std::size_t dec[] = {c, d};
        m.encoder = DenseNet::zeros(enc);
        m.decoder = DenseNet::zeros(dec);
    } else {
        const std::size_t enc[] = {d, config.hidden_dim, c};
        const std::size_t dec[] = {c, config.hidden_dim, d};
        m.encoder = DenseNet::zeros(enc, Activation::Tanh);
        m.decoder = DenseNet::zeros(dec, Activation::Tanh);
    }
    for (DenseNet* net : {&m.encoder, &m.decoder}) {
        for (auto& layer : net->layers()) {
            if (config.init == AeInit::Identity) {
                set_identity(layer);
            } else {
                init_gaussian(layer, rng);
            }
        }
    }
    return m;
}

ParamVector ae_flatten(const AutoencoderModel& model) {
    auto enc = model.encoder.flatten();
    auto dec = model.decoder.flatten();
    std::vector<double> all(enc.values().begin(), enc.values().end());
    all.insert(all.end(), dec.values().begin(), dec.values().end());
    return ParamVector(std::move(all));
}

void ae_unflatten(AutoencoderModel& model, const ParamVector& params) {
    const std::size_t ne = model.encoder.parameter_count();
    const std::size_t nd = model.decoder.parameter_count();
    require(params.size() == ne + nd, ErrorKind::DimensionMismatch,
            "autoencoder parameter vector has the wrong length");
    const auto v = params.values();
    model.encoder.unflatten(ParamVector(std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(ne))));
    model.decoder.unflatten(ParamVector(std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(ne), v.end())));
}

double ae_mse(const AutoencoderModel& model, const Matrix& data, ParamVector* grad) {
    require(data.rows() > 0, ErrorKind::InvalidArgument, "autoencoder data is empty");
    ForwardCache enc_cache;
    ForwardCache dec_cache;
    const bool want = grad != nullptr;
    const Matrix code = forward_batch(model.encoder, data, want ? &enc_cache : nullptr);
    const Matrix recon = forward_batch(model.decoder, code, want ? &dec_cache : nullptr);
    const Matrix diff = recon - data;
    const double count = static_cast<double>(data.rows() * data.cols());
    const double mse = diff.squaredNorm() / count;
    if (want) {
        const Matrix dout = diff * (2.0 / count);
        Matrix dcode;
        const ParamVector gdec = backward(model.decoder, dec_cache, dout, &dcode);
        const ParamVector genc = backward(model.encoder, enc_cache, dcode);
        std::vector<double> all(genc.values().begin(), genc.values().end());
        all.insert(all.end(), gdec.values().begin(), gdec.values().end());
        *grad = ParamVector(std::move(all));
    }
    return mse;
}

AeReport ae_train(AutoencoderModel& model, const Matrix& data, const AeConfig& config,
                  double fraction) {
    require(data.rows() > 0, ErrorKind::InvalidArgument, "autoencoder training data is empty");
    require(static_cast<std::size_t>(data.cols()) == model.input_dim(),
            ErrorKind::DimensionMismatch, "autoencoder input dim does not match the data");
    require(config.batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be positive");
    require(config.learning_rate >= 0.0, ErrorKind::InvalidArgument,
            "learning rate must be non-negative");
    const auto subset = training_subset(static_cast<std::size_t>(data.rows()), fraction, config.seed);
    require(!subset.empty(), ErrorKind::InvalidArgument, "training fraction selects no elements");
    const Matrix train = gather(data, subset);

    AeReport report;
    report.elements_used = subset.size();
    report.initial_mse = ae_mse(model, train);
    ParamVector params = ae_flatten(model);
    AdamState adam = AdamState::for_size(params.size());
    std::vector<std::size_t> order(subset.size());
    for (std::size_t e = 0; e < config.epochs; ++e) {
        for (std::size_t i = 0; i < order.size(); ++i) {
            order[i] = i;
        }
        auto rng = make_rng(config.seed, kAeEpochSalt + e);
        deterministic_shuffle(std::span<std::size_t>(order), rng);
        double sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            const Matrix x = gather(train, std::span<const std::size_t>(order).subspan(start, end - start));
            ParamVector grad;
            sum += ae_mse(model, x, &grad);
            adam_step(params, grad, adam, config.learning_rate);
            ae_unflatten(model, params);
            ++batches;
        }
        report.epoch_losses.push_back(sum / static_cast<double>(batches));
    }
    report.final_mse = ae_mse(model, train);
    return report;
}

Matrix ae_encode_rows(const AutoencoderModel& model, const Matrix& data) {
    return forward_batch(model.encoder, data);
}

std::vector<std::uint8_t> serialize_autoencoder(const AutoencoderModel& model) {
    ByteWriter out;
    write_net(out, model.encoder, "SSRE");
    write_net(out, model.decoder, "SSRD");
    return out.take();
}

AutoencoderModel deserialize_autoencoder(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    AutoencoderModel m;
    m.encoder = read_net(in, "SSRE");
    m.decoder = read_net(in, "SSRD");
    require(in.at_end(), ErrorKind::Format, "trailing bytes after autoencoder checkpoint");
    require(m.encoder.output_dim() == m.decoder.input_dim() &&
                m.decoder.output_dim() == m.encoder.input_dim(),
            ErrorKind::Format, "autoencoder encoder and decoder dims disagree");
    return m;
}

double Quantizer::step_bound(std::size_t i) const {
    const auto k = static_cast<Eigen::Index>(i);
    return (max(k) - min(k)) / (2.0 * static_cast<double>(levels()));
}

Quantizer fit_quantizer(const Matrix& data, int bits) {
    require(bits >= 1 && bits <= 16, ErrorKind::InvalidArgument,
            "quantizer bits must be in [1, 16], got " + std::to_string(bits));
    require(data.rows() > 0, ErrorKind::InvalidArgument, "quantizer fit data is empty");
    Quantizer q;
    q.bits = bits;
    q.min = data.colwise().minCoeff().transpose();
    q.max = data.colwise().maxCoeff().transpose();
    return q;
}

std::vector<std::uint32_t> quantize(const Quantizer& q, const EmbeddingVector& v) {
    require(q.bits >= 1 && q.bits <= 16, ErrorKind::InvalidArgument,
            "quantizer bits must be in [1, 16]");
    require(v.dim() == q.dim(), ErrorKind::DimensionMismatch,
            "quantizer fit on dim " + std::to_string(q.dim()) + ", got " + std::to_string(v.dim()));
    const double levels = static_cast<double>(q.levels());
    std::vector<std::uint32_t> codes(v.dim());
    for (std::size_t i = 0; i < v.dim(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const double lo = q.min(k);
        const double span = q.max(k) - lo;
        if (span <= 0.0) {
            codes[i] = 0;
            continue;
        }
        const double x = std::clamp(v[i], lo, q.max(k));
        const double level = std::floor((x - lo) / span * levels + 0.5);
        codes[i] = static_cast<std::uint32_t>(std::clamp(level, 0.0, levels));
    }
    return codes;
}

EmbeddingVector dequantize(const Quantizer& q, std::span<const std::uint32_t> codes) {
    require(codes.size() == q.dim(), ErrorKind::DimensionMismatch,
            "code count does not match quantizer dim");
    const double levels = static_cast<double>(q.levels());
    std::vector<double> out(codes.size());
    for (std::size_t i = 0; i < codes.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        require(codes[i] <= q.levels(), ErrorKind::InvalidArgument,
                "code " + std::to_string(codes[i]) + " exceeds the quantizer range");
        const double span = q.max(k) - q.min(k);
        out[i] = span <= 0.0 ? q.min(k) : q.min(k) + static_cast<double>(codes[i]) * span / levels;
    }
    return EmbeddingVector(std::move(out));
}

Matrix quantize_round_trip(const Quantizer& q, const Matrix& rows) {
    Matrix out(rows.rows(), rows.cols());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const auto codes = quantize(q, EmbeddingVector::from_row(rows, i));
        out.row(i) = dequantize(q, codes).view().transpose();
    }
    return out;
}

std::vector<HybridElement> hybrid_pca_plus_text(const PcaModel& pca, const ProbabilityModel& codec,
                                                const Matrix& images,
                                                std::span<const std::string> captions) {
    require(static_cast<std::size_t>(images.rows()) == captions.size(),
            ErrorKind::DimensionMismatch, "image and caption counts differ");
    const Matrix coords = pca_project_rows(pca, images);
    std::vector<HybridElement> out(captions.size());
    for (std::size_t i = 0; i < captions.size(); ++i) {
        const auto row = coords.row(static_cast<Eigen::Index>(i));
        out[i].coords.assign(row.begin(), row.end());
        out[i].caption = encode(codec, captions[i]);
    }
    return out;
}

Matrix hybrid_fused_rows(std::span<const HybridElement> elements, const ProbabilityModel& codec,
                         const HashedBowEmbedder& embedder, double alpha) {
    if (elements.empty()) {
        return Matrix(0, 0);
    }
    const auto c = static_cast<Eigen::Index>(elements.front().coords.size());
    Matrix coords(static_cast<Eigen::Index>(elements.size()), c);
    Matrix texts(static_cast<Eigen::Index>(elements.size()),
                 static_cast<Eigen::Index>(embedder.dim()));
    for (std::size_t i = 0; i < elements.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        require(static_cast<Eigen::Index>(elements[i].coords.size()) == c,
                ErrorKind::DimensionMismatch, "hybrid elements have different coordinate counts");
        for (Eigen::Index k = 0; k < c; ++k) {
            coords(r, k) = elements[i].coords[static_cast<std::size_t>(k)];
        }
        const auto text = embedder.embed(decode(codec, elements[i].caption));
        texts.row(r) = text.vector.view().transpose();
    }
    return fuse_rows(coords, texts, alpha);
}

} // namespace ssrmap
