#include "ssrmap/ssr.hpp"

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/rng.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace ssrmap {

namespace {

constexpr std::uint64_t kInitSalt = 0x1001;
constexpr std::uint64_t kSubsetSalt = 0x2002;
constexpr std::uint64_t kEpochSalt = 0x3003;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string join_dims(std::span<const std::size_t> dims) {
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += std::to_string(dims[i]);
    }
    return out;
}

const char* direction_name(KlDirection d) {
    return d == KlDirection::StudentTeacher ? "student-teacher" : "teacher-student";
}

std::vector<std::size_t> resolved_dims(const SsrConfig& config, std::size_t d_max) {
    return config.nested_dims.empty() ? default_nested_dims(d_max) : config.nested_dims;
}

std::size_t effective_batch(const SsrConfig& config, std::size_t n) {
    if (config.full_batch) {
        require(n <= kMaxFullBatch, ErrorKind::InvalidArgument,
                "full-batch mode supports at most " + std::to_string(kMaxFullBatch) +
                    " elements, got " + std::to_string(n));
        return n;
    }
    return std::min(config.batch_size, n);
}

// Per-row unit text vectors (zero rows stay zero) and the mask of nonzero rows.
void normalize_texts(const Matrix& texts, Matrix& unit, std::vector<double>& present) {
    unit = texts;
    present.assign(static_cast<std::size_t>(texts.rows()), 0.0);
    for (Eigen::Index i = 0; i < texts.rows(); ++i) {
        const double n = texts.row(i).norm();
        if (n > 0.0) {
            unit.row(i) /= n;
            present[static_cast<std::size_t>(i)] = 1.0;
        }
    }
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
    }
    return out;
}

} // namespace

std::vector<std::size_t> default_nested_dims(std::size_t d_max) {
    std::vector<std::size_t> dims;
    for (std::size_t c : {16u, 32u, 64u, 128u}) {
        if (c < d_max) {
            dims.push_back(c);
        }
    }
    if (d_max >= 1) {
        dims.push_back(d_max);
    }
    return dims;
}

void validate_config(const SsrConfig& config, std::size_t d_max) {
    const auto dims = resolved_dims(config, d_max);
    require(!dims.empty(), ErrorKind::InvalidArgument, "nested dims must not be empty");
    for (std::size_t i = 0; i < dims.size(); ++i) {
        require(dims[i] >= 1, ErrorKind::InvalidArgument, "nested dims must be positive");
        require(i == 0 || dims[i] > dims[i - 1], ErrorKind::InvalidArgument,
                "nested dims must be strictly increasing");
    }
    require(dims.back() <= d_max, ErrorKind::InvalidArgument,
            "nested dim " + std::to_string(dims.back()) + " exceeds output dim " +
                std::to_string(d_max));
    require(config.temperature > 0.0, ErrorKind::InvalidArgument, "temperature must be positive");
    require(config.text_weight >= 0.0 && config.text_weight <= 1.0, ErrorKind::InvalidArgument,
            "text weight alpha must be in [0, 1]");
    require(config.learning_rate >= 0.0, ErrorKind::InvalidArgument,
            "learning rate must be non-negative");
    require(config.batch_size >= 2 || config.full_batch, ErrorKind::InvalidArgument,
            "batch size must be at least 2");
}

FusedVector fuse(const EmbeddingVector& prefix, const EmbeddingVector& text, double alpha) {
    require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::InvalidArgument, "alpha must be in [0, 1]");
    const double pn = prefix.norm();
    require(pn > 0.0, ErrorKind::InvalidArgument, "cannot fuse a zero-norm prefix");
    const double tn = text.norm();
    std::vector<double> out;
    out.reserve(prefix.dim() + text.dim());
    for (double v : prefix.values()) {
        out.push_back(alpha * v / pn);
    }
    for (double v : text.values()) {
        out.push_back(tn > 0.0 ? (1.0 - alpha) * v / tn : 0.0);
    }
    return {EmbeddingVector(std::move(out)), tn == 0.0};
}

Matrix fuse_rows(const Matrix& prefixes, const Matrix& texts, double alpha) {
    require(prefixes.rows() == texts.rows(), ErrorKind::DimensionMismatch,
            "prefix and text row counts differ");
    Matrix out(prefixes.rows(), prefixes.cols() + texts.cols());
    for (Eigen::Index i = 0; i < prefixes.rows(); ++i) {
        const double pn = prefixes.row(i).norm();
        require(pn > 0.0, ErrorKind::InvalidArgument,
                "cannot fuse a zero-norm prefix at row " + std::to_string(i));
        const double tn = texts.row(i).norm();
        out.row(i).head(prefixes.cols()) = prefixes.row(i) * (alpha / pn);
        if (tn > 0.0) {
            out.row(i).tail(texts.cols()) = texts.row(i) * ((1.0 - alpha) / tn);
        } else {
            out.row(i).tail(texts.cols()).setZero();
        }
    }
    return out;
}

SsrModel::SsrModel(DenseNet net, SsrConfig config) : net_(std::move(net)), config_(std::move(config)) {
    validate_config(config_, net_.output_dim());
}

SsrModel SsrModel::create(std::size_t input_dim, std::size_t output_dim, SsrConfig config) {
    require(input_dim >= 1 && output_dim >= 1, ErrorKind::InvalidArgument,
            "model dims must be positive");
    validate_config(config, output_dim);
    auto rng = make_rng(config.seed, kInitSalt);
    DenseNet net;
    if (config.hidden_dim == 0) {
        const std::size_t sizes[] = {input_dim, output_dim};
        net = DenseNet::zeros(sizes);
        init_identity(net.layers()[0], config.init_noise, rng);
    } else {
        const std::size_t sizes[] = {input_dim, config.hidden_dim, output_dim};
        net = DenseNet::zeros(sizes, Activation::Tanh);
        init_gaussian(net.layers()[0], rng);
        init_gaussian(net.layers()[1], rng);
    }
    return SsrModel(std::move(net), std::move(config));
}

EmbeddingVector project(const SsrModel& model, const EmbeddingVector& image, std::size_t c) {
    require(c >= 1 && c <= model.output_dim(), ErrorKind::InvalidArgument,
            "projection dim " + std::to_string(c) + " outside [1, " +
                std::to_string(model.output_dim()) + "]");
    return forward(model.net(), image).prefix(c);
}

Matrix project_rows(const SsrModel& model, const Matrix& images, std::size_t c) {
    require(c >= 1 && c <= model.output_dim(), ErrorKind::InvalidArgument,
            "projection dim " + std::to_string(c) + " outside [1, " +
                std::to_string(model.output_dim()) + "]");
    Matrix out = forward_batch(model.net(), images);
    return out.leftCols(static_cast<Eigen::Index>(c));
}

SimilaritySpace teacher_space(const SsrConfig& config, const Matrix& images) {
    return build_similarity_space(images, SimilarityOptions{config.temperature, true});
}

SsrLoss ssr_loss(const SsrModel& model, const Matrix& images, const Matrix& texts,
                 const SimilaritySpace& teacher, ParamVector* grad) {
    const auto& config = model.config();
    const Eigen::Index b = images.rows();
    require(texts.rows() == b, ErrorKind::DimensionMismatch,
            "batch has " + std::to_string(b) + " images but " + std::to_string(texts.rows()) +
                " texts");
    require(static_cast<Eigen::Index>(teacher.size()) == b, ErrorKind::DimensionMismatch,
            "teacher space size does not match the batch");
    require(b >= 2, ErrorKind::InvalidArgument, "a batch needs at least 2 elements");
    const auto dims = resolved_dims(config, model.output_dim());
    for (std::size_t c : dims) {
        require(c <= model.output_dim(), ErrorKind::InvalidArgument,
                "nested dim " + std::to_string(c) + " exceeds output dim");
    }

    ForwardCache cache;
    const Matrix y = forward_batch(model.net(), images, grad != nullptr ? &cache : nullptr);

    Matrix t_unit;
    std::vector<double> present;
    normalize_texts(texts, t_unit, present);
    const Matrix text_cos = t_unit * t_unit.transpose();

    const double alpha = config.text_weight;
    const double beta = 1.0 - alpha;
    const double tau = config.temperature;
    std::vector<double> fused_norm(static_cast<std::size_t>(b));
    for (Eigen::Index i = 0; i < b; ++i) {
        const double n2 = alpha * alpha + beta * beta * present[static_cast<std::size_t>(i)];
        require(n2 > 0.0, ErrorKind::InvalidArgument,
                "fused vector is zero at batch row " + std::to_string(i) +
                    " (alpha = 0 and empty text)");
        fused_norm[static_cast<std::size_t>(i)] = std::sqrt(n2);
    }

    // ln of the floored teacher, used by the student-first direction.
    Matrix log_teacher(b, b);
    for (Eigen::Index i = 0; i < b; ++i) {
        for (Eigen::Index j = 0; j < b; ++j) {
            log_teacher(i, j) = std::log(std::max(teacher.rows(i, j), kProbabilityFloor));
        }
    }

    Matrix dy;
    if (grad != nullptr) {
        dy = Matrix::Zero(y.rows(), y.cols());
    }

    SsrLoss result;
    Matrix logits(b, b);
    Matrix log_q(b, b);
    Matrix dlogit(b, b);
    for (std::size_t c : dims) {
        const auto cc = static_cast<Eigen::Index>(c);
        Matrix u = y.leftCols(cc);
        Vector radius(b);
        for (Eigen::Index i = 0; i < b; ++i) {
            radius(i) = u.row(i).norm();
            require(radius(i) > 0.0, ErrorKind::InvalidArgument,
                    "projected prefix of length " + std::to_string(c) + " is zero at batch row " +
                        std::to_string(i));
            u.row(i) /= radius(i);
        }
        const Matrix prefix_cos = u * u.transpose();

        double level = 0.0;
        for (Eigen::Index i = 0; i < b; ++i) {
            const double ni = fused_norm[static_cast<std::size_t>(i)];
            double row_max = -std::numeric_limits<double>::infinity();
            for (Eigen::Index j = 0; j < b; ++j) {
                if (j == i) {
                    continue;
                }
                const double nj = fused_norm[static_cast<std::size_t>(j)];
                double cosv = (alpha * alpha * prefix_cos(i, j) + beta * beta * text_cos(i, j)) /
                              (ni * nj);
                cosv = std::clamp(cosv, -1.0, 1.0);
                logits(i, j) = cosv / tau;
                row_max = std::max(row_max, logits(i, j));
            }
            double sum = 0.0;
            for (Eigen::Index j = 0; j < b; ++j) {
                if (j != i) {
                    sum += std::exp(logits(i, j) - row_max);
                }
            }
            const double log_z = row_max + std::log(sum);

            double row_loss = 0.0;
            double weighted = 0.0; // sum_k q_ik g_ik (student-first) or sum_k masked p_ik
            for (Eigen::Index j = 0; j < b; ++j) {
                if (j == i) {
                    log_q(i, j) = 0.0;
                    continue;
                }
                log_q(i, j) = logits(i, j) - log_z;
                const double q = std::exp(log_q(i, j));
                if (config.direction == KlDirection::StudentTeacher) {
                    const double g = log_q(i, j) - log_teacher(i, j);
                    if (q > 0.0) {
                        row_loss += q * g;
                    }
                    weighted += q * g;
                } else {
                    const double p = teacher.rows(i, j);
                    const double lq = std::max(log_q(i, j), std::log(kProbabilityFloor));
                    if (p > 0.0) {
                        row_loss += p * (std::log(p) - lq);
                    }
                    if (q > kProbabilityFloor) {
                        weighted += p;
                    }
                }
            }
            level += std::max(row_loss, 0.0);

            if (grad == nullptr) {
                continue;
            }
            for (Eigen::Index j = 0; j < b; ++j) {
                if (j == i) {
                    dlogit(i, j) = 0.0;
                    continue;
                }
                const double q = std::exp(log_q(i, j));
                if (config.direction == KlDirection::StudentTeacher) {
                    dlogit(i, j) = q * (log_q(i, j) - log_teacher(i, j)) - q * weighted;
                } else {
                    const double p = q > kProbabilityFloor ? teacher.rows(i, j) : 0.0;
                    dlogit(i, j) = -p + q * weighted;
                }
            }
        }
        result.per_dim.push_back(level);
        result.total += level;

        if (grad == nullptr) {
            continue;
        }
        // logits -> prefix cosines -> unit prefixes -> raw prefixes.
        Matrix dcos(b, b);
        for (Eigen::Index i = 0; i < b; ++i) {
            for (Eigen::Index j = 0; j < b; ++j) {
                dcos(i, j) = dlogit(i, j) * alpha * alpha /
                             (tau * fused_norm[static_cast<std::size_t>(i)] *
                              fused_norm[static_cast<std::size_t>(j)]);
            }
        }
        const Matrix du = (dcos + dcos.transpose()) * u;
        for (Eigen::Index i = 0; i < b; ++i) {
            const double radial = du.row(i).dot(u.row(i));
            dy.row(i).head(cc) += (du.row(i) - radial * u.row(i)) / radius(i);
        }
    }

    if (grad != nullptr) {
        *grad = backward(model.net(), cache, dy);
    }
    return result;
}

SsrLoss ssr_loss(const SsrModel& model, std::span<const EmbeddingVector> images,
                 std::span<const EmbeddingVector> texts, const SimilaritySpace& teacher) {
    return ssr_loss(model, stack_rows(images), stack_rows(texts), teacher);
}

std::vector<std::size_t> training_subset(std::size_t n, double fraction, std::uint64_t seed) {
    require(fraction > 0.0 && fraction <= 1.0, ErrorKind::InvalidArgument,
            "training fraction must be in (0, 1], got " + format_double(fraction));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
        idx[i] = i;
    }
    if (fraction == 1.0) {
        return idx;
    }
    auto rng = make_rng(seed, kSubsetSalt);
    deterministic_shuffle(std::span<std::size_t>(idx), rng);
    const auto keep = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    idx.resize(keep);
    return idx;
}

std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order,
                                                   std::size_t batch_size) {
    require(batch_size >= 1, ErrorKind::InvalidArgument, "batch size must be positive");
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
        const std::size_t end = std::min(order.size(), start + batch_size);
        if (end - start == 1 && !batches.empty()) {
            batches.back().push_back(order[start]);
        } else {
            batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                                 order.begin() + static_cast<std::ptrdiff_t>(end));
        }
    }
    return batches;
}

SsrLoss evaluate_loss(const SsrModel& model, const Matrix& images, const Matrix& texts,
                      std::span<const std::size_t> indices) {
    require(indices.size() >= 2, ErrorKind::InvalidArgument,
            "loss evaluation needs at least 2 elements");
    const auto batches = make_batches(indices, effective_batch(model.config(), indices.size()));
    SsrLoss mean;
    for (const auto& batch : batches) {
        const Matrix x = gather_rows(images, batch);
        const Matrix t = gather_rows(texts, batch);
        const SsrLoss l = ssr_loss(model, x, t, teacher_space(model.config(), x));
        if (mean.per_dim.empty()) {
            mean.per_dim.assign(l.per_dim.size(), 0.0);
        }
        mean.total += l.total;
        for (std::size_t k = 0; k < l.per_dim.size(); ++k) {
            mean.per_dim[k] += l.per_dim[k];
        }
    }
    const auto count = static_cast<double>(batches.size());
    mean.total /= count;
    for (double& v : mean.per_dim) {
        v /= count;
    }
    return mean;
}

std::vector<double> train_epochs(SsrModel& model, const Matrix& images, const Matrix& texts,
                                 std::span<const std::size_t> indices, std::size_t epochs,
                                 std::uint64_t seed) {
    require(images.rows() == texts.rows(), ErrorKind::DimensionMismatch,
            "image and text counts differ");
    require(static_cast<std::size_t>(images.cols()) == model.input_dim(),
            ErrorKind::DimensionMismatch,
            "image dim " + std::to_string(images.cols()) + " does not match model input dim " +
                std::to_string(model.input_dim()));
    require(indices.size() >= 2, ErrorKind::InvalidArgument,
            "training needs at least 2 elements, got " + std::to_string(indices.size()));
    const auto& config = model.config();
    const std::size_t batch = effective_batch(config, indices.size());

    ParamVector params = model.net().flatten();
    AdamState adam = AdamState::for_size(params.size());
    std::vector<double> losses;
    std::vector<std::size_t> order(indices.begin(), indices.end());
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        std::copy(indices.begin(), indices.end(), order.begin());
        auto rng = make_rng(seed, kEpochSalt + epoch);
        deterministic_shuffle(std::span<std::size_t>(order), rng);
        double sum = 0.0;
        const auto batches = make_batches(order, batch);
        for (const auto& rows : batches) {
            const Matrix x = gather_rows(images, rows);
            const Matrix t = gather_rows(texts, rows);
            ParamVector grad;
            const SsrLoss l = ssr_loss(model, x, t, teacher_space(config, x), &grad);
            sum += l.total;
            adam_step(params, grad, adam, config.learning_rate);
            model.net().unflatten(params);
        }
        losses.push_back(sum / static_cast<double>(batches.size()));
    }
    return losses;
}

TrainReport train(SsrModel& model, const Matrix& images, const Matrix& texts, double fraction) {
    require(images.rows() > 0, ErrorKind::InvalidArgument, "training dataset is empty");
    const auto start = std::chrono::steady_clock::now();
    const auto subset =
        training_subset(static_cast<std::size_t>(images.rows()), fraction, model.config().seed);
    TrainReport report;
    report.elements_used = subset.size();
    report.initial_loss = evaluate_loss(model, images, texts, subset).total;
    report.epoch_losses =
        train_epochs(model, images, texts, subset, model.config().epochs, model.config().seed);
    const SsrLoss final_loss = evaluate_loss(model, images, texts, subset);
    report.final_loss = final_loss.total;
    report.final_dim_losses = final_loss.per_dim;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::string describe_config(const SsrConfig& config) {
    std::ostringstream out;
    out << "nested_dims=" << (config.nested_dims.empty() ? "default" : join_dims(config.nested_dims))
        << " temperature=" << format_double(config.temperature)
        << " alpha=" << format_double(config.text_weight) << " epochs=" << config.epochs
        << " lr=" << format_double(config.learning_rate) << " batch=" << config.batch_size
        << " seed=" << config.seed << " kl=" << direction_name(config.direction)
        << " full_batch=" << (config.full_batch ? 1 : 0) << " hidden=" << config.hidden_dim;
    return out.str();
}

namespace {

constexpr std::string_view kModelHeader = "ssrmap-model 1\n";

template <typename T>
T parse_number(const std::string& text, const std::string& key) {
    T value{};
    const auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    require(res.ec == std::errc() && res.ptr == text.data() + text.size(), ErrorKind::Format,
            "model header: bad value '" + text + "' for " + key);
    return value;
}

std::vector<std::size_t> parse_dims(const std::string& text) {
    std::vector<std::size_t> dims;
    if (text == "default") {
        return dims;
    }
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        dims.push_back(parse_number<std::size_t>(part, "nested_dims"));
    }
    return dims;
}

} // namespace

std::vector<std::uint8_t> serialize_model(const SsrModel& model) {
    const auto& c = model.config();
    std::ostringstream header;
    header << kModelHeader;
    header << "input_dim " << model.input_dim() << '\n';
    header << "output_dim " << model.output_dim() << '\n';
    header << "nested_dims " << (c.nested_dims.empty() ? "default" : join_dims(c.nested_dims))
           << '\n';
    header << "temperature " << format_double(c.temperature) << '\n';
    header << "alpha " << format_double(c.text_weight) << '\n';
    header << "epochs " << c.epochs << '\n';
    header << "learning_rate " << format_double(c.learning_rate) << '\n';
    header << "batch_size " << c.batch_size << '\n';
    header << "seed " << c.seed << '\n';
    header << "kl_direction " << direction_name(c.direction) << '\n';
    header << "full_batch " << (c.full_batch ? 1 : 0) << '\n';
    header << "hidden_dim " << c.hidden_dim << '\n';
    header << "init_noise " << format_double(c.init_noise) << '\n';
    header << "end\n";
    ByteWriter out;
    out.raw(header.str());
    write_net(out, model.net());
    return out.take();
}

SsrModel deserialize_model(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic(kModelHeader, "SSR model");
    std::map<std::string, std::string> fields;
    for (;;) {
        std::string line;
        for (;;) {
            const char ch = static_cast<char>(in.u8("model header"));
            if (ch == '\n') {
                break;
            }
            line.push_back(ch);
            require(line.size() < 4096, ErrorKind::Format, "model header line too long");
        }
        if (line == "end") {
            break;
        }
        const auto space = line.find(' ');
        require(space != std::string::npos, ErrorKind::Format,
                "model header: malformed line '" + line + "'");
        fields[line.substr(0, space)] = line.substr(space + 1);
    }
    auto field = [&](const std::string& key) -> const std::string& {
        const auto it = fields.find(key);
        require(it != fields.end(), ErrorKind::Format, "model header: missing " + key);
        return it->second;
    };

    SsrConfig c;
    c.nested_dims = parse_dims(field("nested_dims"));
    c.temperature = parse_number<double>(field("temperature"), "temperature");
    c.text_weight = parse_number<double>(field("alpha"), "alpha");
    c.epochs = parse_number<std::size_t>(field("epochs"), "epochs");
    c.learning_rate = parse_number<double>(field("learning_rate"), "learning_rate");
    c.batch_size = parse_number<std::size_t>(field("batch_size"), "batch_size");
    c.seed = parse_number<std::uint64_t>(field("seed"), "seed");
    const auto& dir = field("kl_direction");
    require(dir == "student-teacher" || dir == "teacher-student", ErrorKind::Format,
            "model header: unknown kl_direction " + dir);
    c.direction = dir == "student-teacher" ? KlDirection::StudentTeacher
                                           : KlDirection::TeacherStudent;
    c.full_batch = field("full_batch") == "1";
    c.hidden_dim = parse_number<std::size_t>(field("hidden_dim"), "hidden_dim");
    c.init_noise = parse_number<double>(field("init_noise"), "init_noise");

    DenseNet net = read_net(in);
    require(in.at_end(), ErrorKind::Format,
            "trailing bytes after model at offset " + std::to_string(in.offset()));
    require(net.input_dim() == parse_number<std::size_t>(field("input_dim"), "input_dim") &&
                net.output_dim() == parse_number<std::size_t>(field("output_dim"), "output_dim"),
            ErrorKind::Format, "model header dims disagree with the stored network");
    try {
        return SsrModel(std::move(net), std::move(c));
    } catch (const Error& e) {
        fail(ErrorKind::Format, std::string("model header: ") + e.what());
    }
}

void save_model(const std::string& path, const SsrModel& model) {
    write_file_atomic(path, serialize_model(model));
}

SsrModel load_model(const std::string& path) { return deserialize_model(read_file_bytes(path)); }

} // namespace ssrmap
