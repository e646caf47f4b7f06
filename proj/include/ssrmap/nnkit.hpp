#pragma once

// A small trainable network kit: dense layers, parameter flattening,
// reverse-mode gradients and Adam. Just enough for the SSR projection and
// the autoencoder baseline.

#include "ssrmap/linalg.hpp"

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace ssrmap {

enum class Activation : std::uint8_t { Identity = 0, Tanh = 1 };

struct DenseLayer {
    Matrix weight; // out x in
    Vector bias;   // out
    Activation activation = Activation::Identity;

    std::size_t in_dim() const noexcept { return static_cast<std::size_t>(weight.cols()); }
    std::size_t out_dim() const noexcept { return static_cast<std::size_t>(weight.rows()); }
};

// Flat parameter array. Layout: every layer's weight matrix in layer order
// (row-major, out x in), followed by every layer's bias in layer order.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::vector<double> values) : values_(std::move(values)) {}
    static ParamVector zeros(std::size_t n) { return ParamVector(std::vector<double>(n, 0.0)); }

    std::size_t size() const noexcept { return values_.size(); }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    friend bool operator==(const ParamVector&, const ParamVector&) = default;

private:
    std::vector<double> values_;
};

class DenseNet {
public:
    DenseNet() = default;
    explicit DenseNet(std::vector<DenseLayer> layers);

    // Zero-initialized net with the given sizes (input first). Hidden layers
    // use `hidden_activation`; the output layer is always linear.
    static DenseNet zeros(std::span<const std::size_t> layer_sizes,
                          Activation hidden_activation = Activation::Identity);

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::vector<std::size_t> layer_sizes() const;
    std::span<const DenseLayer> layers() const noexcept { return layers_; }
    std::span<DenseLayer> layers() noexcept { return layers_; }
    std::size_t parameter_count() const noexcept;

    ParamVector flatten() const;
    void unflatten(const ParamVector& params);

private:
    std::vector<DenseLayer> layers_;
};

// Initializers. All randomness comes from the caller's generator.
// Square-or-rectangular identity (ones on the leading diagonal) plus N(0, sigma^2) noise.
void init_identity(DenseLayer& layer, double noise_sigma, std::mt19937_64& rng);
// Gaussian with variance 1 / fan_in, zero bias.
void init_gaussian(DenseLayer& layer, std::mt19937_64& rng);

// Per-layer inputs and activated outputs of one batched forward pass.
struct ForwardCache {
    std::vector<Matrix> inputs;
    std::vector<Matrix> outputs;
};

// Rows of `input` are samples. Fills `cache` when given.
Matrix forward_batch(const DenseNet& net, const Matrix& input, ForwardCache* cache = nullptr);
EmbeddingVector forward(const DenseNet& net, const EmbeddingVector& input);

// Gradient of a scalar loss with respect to every parameter, given the
// loss gradient with respect to the net outputs (same shape as the
// forward output). Optionally also returns the gradient w.r.t. the input.
ParamVector backward(const DenseNet& net, const ForwardCache& cache, const Matrix& output_grad,
                     Matrix* input_grad = nullptr);

struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_size(std::size_t n);
};

void adam_step(ParamVector& params, const ParamVector& grads, AdamState& state, double lr);

// Checkpoint layout (little-endian): 4-byte magic, u16 version, u32 layer
// count, (count + 1) u32 layer sizes, one u8 activation per layer, then
// every parameter as f64 in flatten order.
inline constexpr std::string_view kNetMagic = "SSRN";

std::vector<std::uint8_t> serialize_net(const DenseNet& net, std::string_view magic = kNetMagic);
DenseNet deserialize_net(std::span<const std::uint8_t> bytes, std::string_view magic = kNetMagic);

class ByteWriter;
class ByteReader;
void write_net(ByteWriter& out, const DenseNet& net, std::string_view magic = kNetMagic);
DenseNet read_net(ByteReader& in, std::string_view magic = kNetMagic);

} // namespace ssrmap
