#include "ssrmap/nnkit.hpp"

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/rng.hpp"

#include <cmath>
#include <string>

namespace ssrmap {

namespace {

constexpr std::uint16_t kNetVersion = 1;

void check_layer_chain(std::span<const DenseLayer> layers) {
    require(!layers.empty(), ErrorKind::InvalidArgument, "a network needs at least one layer");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        require(layer.weight.rows() > 0 && layer.weight.cols() > 0, ErrorKind::InvalidArgument,
                "layer " + std::to_string(l) + " has an empty weight matrix");
        require(layer.bias.size() == layer.weight.rows(), ErrorKind::DimensionMismatch,
                "layer " + std::to_string(l) + " bias length does not match its output size");
        if (l > 0) {
            require(layers[l - 1].out_dim() == layer.in_dim(), ErrorKind::DimensionMismatch,
                    "layer " + std::to_string(l) + " input size " +
                        std::to_string(layer.in_dim()) + " does not match previous output " +
                        std::to_string(layers[l - 1].out_dim()));
        }
    }
}

} // namespace

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
    check_layer_chain(layers_);
}

DenseNet DenseNet::zeros(std::span<const std::size_t> layer_sizes, Activation hidden_activation) {
    require(layer_sizes.size() >= 2, ErrorKind::InvalidArgument,
            "layer sizes need an input and an output size");
    std::vector<DenseLayer> layers;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        require(layer_sizes[l] > 0 && layer_sizes[l + 1] > 0, ErrorKind::InvalidArgument,
                "layer sizes must be positive");
        DenseLayer layer;
        layer.weight = Matrix::Zero(static_cast<Eigen::Index>(layer_sizes[l + 1]),
                                    static_cast<Eigen::Index>(layer_sizes[l]));
        layer.bias = Vector::Zero(static_cast<Eigen::Index>(layer_sizes[l + 1]));
        const bool is_output = l + 2 == layer_sizes.size();
        layer.activation = is_output ? Activation::Identity : hidden_activation;
        layers.push_back(std::move(layer));
    }
    return DenseNet(std::move(layers));
}

std::size_t DenseNet::input_dim() const {
    require(!layers_.empty(), ErrorKind::InvalidArgument, "empty network");
    return layers_.front().in_dim();
}

std::size_t DenseNet::output_dim() const {
    require(!layers_.empty(), ErrorKind::InvalidArgument, "empty network");
    return layers_.back().out_dim();
}

std::vector<std::size_t> DenseNet::layer_sizes() const {
    std::vector<std::size_t> sizes;
    if (layers_.empty()) {
        return sizes;
    }
    sizes.push_back(layers_.front().in_dim());
    for (const auto& layer : layers_) {
        sizes.push_back(layer.out_dim());
    }
    return sizes;
}

std::size_t DenseNet::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& layer : layers_) {
        n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
    }
    return n;
}

ParamVector DenseNet::flatten() const {
    std::vector<double> values;
    values.reserve(parameter_count());
    for (const auto& layer : layers_) {
        values.insert(values.end(), layer.weight.data(), layer.weight.data() + layer.weight.size());
    }
    for (const auto& layer : layers_) {
        values.insert(values.end(), layer.bias.data(), layer.bias.data() + layer.bias.size());
    }
    return ParamVector(std::move(values));
}

void DenseNet::unflatten(const ParamVector& params) {
    require(params.size() == parameter_count(), ErrorKind::DimensionMismatch,
            "parameter vector has " + std::to_string(params.size()) + " entries, network has " +
                std::to_string(parameter_count()));
    const double* src = params.values().data();
    for (auto& layer : layers_) {
        std::copy(src, src + layer.weight.size(), layer.weight.data());
        src += layer.weight.size();
    }
    for (auto& layer : layers_) {
        std::copy(src, src + layer.bias.size(), layer.bias.data());
        src += layer.bias.size();
    }
}

void init_identity(DenseLayer& layer, double noise_sigma, std::mt19937_64& rng) {
    GaussianSource noise(rng);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
            const double base = i == j ? 1.0 : 0.0;
            layer.weight(i, j) = base + noise_sigma * noise();
        }
    }
    layer.bias.setZero();
}

void init_gaussian(DenseLayer& layer, std::mt19937_64& rng) {
    GaussianSource noise(rng);
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
        for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
            layer.weight(i, j) = scale * noise();
        }
    }
    layer.bias.setZero();
}

Matrix forward_batch(const DenseNet& net, const Matrix& input, ForwardCache* cache) {
    require(static_cast<std::size_t>(input.cols()) == net.input_dim(),
            ErrorKind::DimensionMismatch,
            "network expects input dim " + std::to_string(net.input_dim()) + ", got " +
                std::to_string(input.cols()));
    if (cache != nullptr) {
        cache->inputs.clear();
        cache->outputs.clear();
    }
    Matrix x = input;
    for (const auto& layer : net.layers()) {
        Matrix y = x * layer.weight.transpose();
        y.rowwise() += layer.bias.transpose();
        if (layer.activation == Activation::Tanh) {
            y = y.array().tanh().matrix();
        }
        if (cache != nullptr) {
            cache->inputs.push_back(std::move(x));
            cache->outputs.push_back(y);
        }
        x = std::move(y);
    }
    return x;
}

EmbeddingVector forward(const DenseNet& net, const EmbeddingVector& input) {
    Matrix row = input.view().transpose();
    Matrix out = forward_batch(net, row);
    return EmbeddingVector::from_row(out, 0);
}

ParamVector backward(const DenseNet& net, const ForwardCache& cache, const Matrix& output_grad,
                     Matrix* input_grad) {
    const auto layers = net.layers();
    require(cache.inputs.size() == layers.size() && cache.outputs.size() == layers.size(),
            ErrorKind::DimensionMismatch, "forward cache does not match the network depth");
    require(output_grad.rows() == cache.outputs.back().rows() &&
                output_grad.cols() == cache.outputs.back().cols(),
            ErrorKind::DimensionMismatch, "output gradient shape does not match the cached output");

    std::vector<Matrix> weight_grads(layers.size());
    std::vector<Vector> bias_grads(layers.size());
    Matrix upstream = output_grad;
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& layer = layers[l];
        if (layer.activation == Activation::Tanh) {
            const auto& y = cache.outputs[l];
            upstream = upstream.cwiseProduct((1.0 - y.array().square()).matrix());
        }
        weight_grads[l] = upstream.transpose() * cache.inputs[l];
        bias_grads[l] = upstream.colwise().sum().transpose();
        if (l > 0 || input_grad != nullptr) {
            upstream = upstream * layer.weight;
        }
    }
    if (input_grad != nullptr) {
        *input_grad = std::move(upstream);
    }

    std::vector<double> flat;
    flat.reserve(net.parameter_count());
    for (const auto& g : weight_grads) {
        flat.insert(flat.end(), g.data(), g.data() + g.size());
    }
    for (const auto& g : bias_grads) {
        flat.insert(flat.end(), g.data(), g.data() + g.size());
    }
    return ParamVector(std::move(flat));
}

AdamState AdamState::for_size(std::size_t n) {
    AdamState state;
    state.first_moment.assign(n, 0.0);
    state.second_moment.assign(n, 0.0);
    return state;
}

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state, double lr) {
    require(params.size() == grads.size(), ErrorKind::DimensionMismatch,
            "adam_step: params and grads have different lengths");
    require(state.first_moment.size() == params.size() &&
                state.second_moment.size() == params.size(),
            ErrorKind::DimensionMismatch, "adam_step: optimizer state does not match params");
    require(lr >= 0.0, ErrorKind::InvalidArgument, "learning rate must be non-negative");

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g * g;
        const double m_hat = m / correction1;
        const double v_hat = v / correction2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

void write_net(ByteWriter& out, const DenseNet& net, std::string_view magic) {
    out.raw(magic);
    out.u16(kNetVersion);
    out.u32(static_cast<std::uint32_t>(net.layers().size()));
    for (std::size_t size : net.layer_sizes()) {
        out.u32(static_cast<std::uint32_t>(size));
    }
    for (const auto& layer : net.layers()) {
        out.u8(static_cast<std::uint8_t>(layer.activation));
    }
    const ParamVector params = net.flatten();
    for (double v : params.values()) {
        out.f64(v);
    }
}

DenseNet read_net(ByteReader& in, std::string_view magic) {
    in.expect_magic(magic, "network checkpoint");
    const auto version = in.u16("checkpoint version");
    require(version == kNetVersion, ErrorKind::Format,
            "unsupported checkpoint version " + std::to_string(version));
    const auto layer_count = in.u32("layer count");
    require(layer_count >= 1 && layer_count <= 64, ErrorKind::Format,
            "implausible layer count " + std::to_string(layer_count));
    std::vector<std::size_t> sizes;
    for (std::uint32_t i = 0; i <= layer_count; ++i) {
        sizes.push_back(in.u32("layer size"));
    }
    std::vector<Activation> activations;
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        const auto a = in.u8("activation");
        require(a <= 1, ErrorKind::Format, "unknown activation code " + std::to_string(a));
        activations.push_back(static_cast<Activation>(a));
    }
    DenseNet net = DenseNet::zeros(sizes);
    for (std::size_t l = 0; l < activations.size(); ++l) {
        net.layers()[l].activation = activations[l];
    }
    std::vector<double> values(net.parameter_count());
    for (double& v : values) {
        v = in.f64("parameter");
    }
    net.unflatten(ParamVector(std::move(values)));
    return net;
}

std::vector<std::uint8_t> serialize_net(const DenseNet& net, std::string_view magic) {
    ByteWriter out;
    write_net(out, net, magic);
    return out.take();
}

DenseNet deserialize_net(std::span<const std::uint8_t> bytes, std::string_view magic) {
    ByteReader in(bytes);
    DenseNet net = read_net(in, magic);
    require(in.at_end(), ErrorKind::Format,
            "trailing bytes after checkpoint at offset " + std::to_string(in.offset()));
    return net;
}

} // namespace ssrmap
