#pragma once

// Comparison methods: PCA, a linear autoencoder, per-dimension scalar
// quantization, and PCA coordinates paired with an arithmetic-coded caption.

#include "ssrmap/linalg.hpp"
#include "ssrmap/nnkit.hpp"
#include "ssrmap/textcodec.hpp"
#include "ssrmap/textembed.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ssrmap {

struct PcaModel {
    Vector mean;
    Matrix components;   // c x d, rows orthonormal, descending eigenvalue order
    Vector eigenvalues;  // c leading eigenvalues of the population covariance
    Vector spectrum;     // all d eigenvalues, descending

    std::size_t input_dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
    std::size_t output_dim() const noexcept { return static_cast<std::size_t>(components.rows()); }
};

// Covariance is normalized by the sample count, so the mean squared
// reconstruction error over the fit data equals the sum of the dropped
// eigenvalues. Each component's largest-magnitude entry is made positive.
PcaModel pca_fit(const Matrix& data, std::size_t c);
EmbeddingVector pca_project(const PcaModel& m, const EmbeddingVector& v);
EmbeddingVector pca_reconstruct(const PcaModel& m, const EmbeddingVector& coords);
Matrix pca_project_rows(const PcaModel& m, const Matrix& data);
Matrix pca_reconstruct_rows(const PcaModel& m, const Matrix& coords);

std::vector<std::uint8_t> serialize_pca(const PcaModel& m);
PcaModel deserialize_pca(std::span<const std::uint8_t> bytes);

enum class AeInit { Gaussian, Identity };

struct AeConfig {
    std::size_t epochs = 5;
    double learning_rate = 1e-4;
    std::size_t batch_size = 1;
    std::uint64_t seed = 0;
    std::size_t hidden_dim = 0; // 0: linear encoder and decoder
    AeInit init = AeInit::Gaussian;
};

struct AutoencoderModel {
    DenseNet encoder; // d -> c
    DenseNet decoder; // c -> d

    std::size_t input_dim() const { return encoder.input_dim(); }
    std::size_t code_dim() const { return encoder.output_dim(); }
};

AutoencoderModel ae_create(std::size_t d, std::size_t c, const AeConfig& config);

// Mean over samples and dimensions of the squared reconstruction error.
// `grad` receives encoder parameters followed by decoder parameters.
double ae_mse(const AutoencoderModel& model, const Matrix& data, ParamVector* grad = nullptr);

ParamVector ae_flatten(const AutoencoderModel& model);
void ae_unflatten(AutoencoderModel& model, const ParamVector& params);

struct AeReport {
    std::vector<double> epoch_losses;
    double initial_mse = 0.0;
    double final_mse = 0.0;
    std::size_t elements_used = 0;
};

// Trains on the same seeded subset rule as SSR training.
AeReport ae_train(AutoencoderModel& model, const Matrix& data, const AeConfig& config,
                  double fraction = 1.0);
Matrix ae_encode_rows(const AutoencoderModel& model, const Matrix& data);

std::vector<std::uint8_t> serialize_autoencoder(const AutoencoderModel& model);
AutoencoderModel deserialize_autoencoder(std::span<const std::uint8_t> bytes);

struct Quantizer {
    int bits = 8;
    Vector min;
    Vector max;

    std::size_t dim() const noexcept { return static_cast<std::size_t>(min.size()); }
    std::uint32_t levels() const noexcept { return (1u << bits) - 1u; }
    // Largest dequantization error for dimension i.
    double step_bound(std::size_t i) const;
};

Quantizer fit_quantizer(const Matrix& data, int bits);
// Uniform levels over [min, max], rounding half up; values outside clamp.
std::vector<std::uint32_t> quantize(const Quantizer& q, const EmbeddingVector& v);
EmbeddingVector dequantize(const Quantizer& q, std::span<const std::uint32_t> codes);
Matrix quantize_round_trip(const Quantizer& q, const Matrix& rows);

// PCA coordinates plus a coded caption for one element.
struct HybridElement {
    std::vector<float> coords;
    CodedBlob caption;

    // fp32 coordinates plus caption payload bytes.
    std::size_t bytes() const noexcept { return coords.size() * sizeof(float) + caption.payload_bytes(); }
};

std::vector<HybridElement> hybrid_pca_plus_text(const PcaModel& pca, const ProbabilityModel& codec,
                                                const Matrix& images,
                                                std::span<const std::string> captions);

// Decodes captions, embeds them and fuses with the stored coordinates.
Matrix hybrid_fused_rows(std::span<const HybridElement> elements, const ProbabilityModel& codec,
                         const HashedBowEmbedder& embedder, double alpha);

} // namespace ssrmap
