#pragma once

// Similarity Space Replication. A projection G maps full image embeddings
// to a nested "complementary" embedding; for every prefix length c in the
// nested set, the prefix is fused with the caption's text embedding and the
// similarity structure of the fused vectors is pulled toward that of the
// full image embeddings by a row-wise KL loss.

#include "ssrmap/linalg.hpp"
#include "ssrmap/nnkit.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ssrmap {

struct SsrConfig {
    // Empty means default_nested_dims(d_max).
    std::vector<std::size_t> nested_dims;
    double temperature = 0.1;
    double text_weight = 0.5; // alpha: weight of the image prefix half
    std::size_t epochs = 5;
    double learning_rate = 1e-4;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    KlDirection direction = KlDirection::StudentTeacher;
    // Use the whole training set as one batch (allowed up to kMaxFullBatch elements).
    bool full_batch = false;
    // 0 gives a single linear layer; otherwise one tanh hidden layer of this width.
    std::size_t hidden_dim = 0;
    double init_noise = 0.01;
};

inline constexpr std::size_t kMaxFullBatch = 2048;

// {16, 32, 64, 128, d_max} restricted to [1, d_max].
std::vector<std::size_t> default_nested_dims(std::size_t d_max);

// Throws InvalidArgument describing the first problem found.
void validate_config(const SsrConfig& config, std::size_t d_max);

struct FusedVector {
    EmbeddingVector vector;
    // The text half is zero because the text embedding had zero norm.
    bool degenerate_text = false;
};

// [alpha * prefix / |prefix| ; (1 - alpha) * text / |text|].
FusedVector fuse(const EmbeddingVector& prefix, const EmbeddingVector& text, double alpha);

// Row-wise fuse. Rows of `texts` with zero norm contribute a zero half.
Matrix fuse_rows(const Matrix& prefixes, const Matrix& texts, double alpha);

class SsrModel {
public:
    SsrModel() = default;
    SsrModel(DenseNet net, SsrConfig config);

    // Identity-plus-noise initialization from config.seed (Gaussian init for
    // the hidden layer when one is configured).
    static SsrModel create(std::size_t input_dim, std::size_t output_dim, SsrConfig config);

    const DenseNet& net() const noexcept { return net_; }
    DenseNet& net() noexcept { return net_; }
    const SsrConfig& config() const noexcept { return config_; }
    SsrConfig& config() noexcept { return config_; }
    std::size_t input_dim() const { return net_.input_dim(); }
    std::size_t output_dim() const { return net_.output_dim(); }

private:
    DenseNet net_;
    SsrConfig config_;
};

// First c entries of G(z).
EmbeddingVector project(const SsrModel& model, const EmbeddingVector& image, std::size_t c);
Matrix project_rows(const SsrModel& model, const Matrix& images, std::size_t c);

struct SsrLoss {
    double total = 0.0;
    std::vector<double> per_dim; // l^c in nested_dims order
};

// Loss of one batch against its teacher space. `images` and `texts` hold one
// element per row. When `grad` is given it receives dL/dphi in flatten order.
SsrLoss ssr_loss(const SsrModel& model, const Matrix& images, const Matrix& texts,
                 const SimilaritySpace& teacher, ParamVector* grad = nullptr);

SsrLoss ssr_loss(const SsrModel& model, std::span<const EmbeddingVector> images,
                 std::span<const EmbeddingVector> texts, const SimilaritySpace& teacher);

// Teacher space for a batch of full image embeddings under the model's settings.
SimilaritySpace teacher_space(const SsrConfig& config, const Matrix& images);

struct TrainReport {
    std::vector<double> epoch_losses; // mean batch loss per epoch
    double initial_loss = 0.0;        // evaluate_loss on the training subset before training
    double final_loss = 0.0;          // same, after training
    std::vector<double> final_dim_losses;
    double seconds = 0.0;
    std::size_t elements_used = 0;
};

// Mean batch loss over `indices` taken in order, in chunks of the batch size.
SsrLoss evaluate_loss(const SsrModel& model, const Matrix& images, const Matrix& texts,
                      std::span<const std::size_t> indices);

// Training subset for `fraction`: the first floor(fraction * N) entries of a
// seeded permutation, or every index in order when fraction == 1.
std::vector<std::size_t> training_subset(std::size_t n, double fraction, std::uint64_t seed);

// Splits a shuffled index list into batches of `batch_size`; a trailing
// single leftover joins the previous batch.
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> order,
                                                   std::size_t batch_size);

// Runs `epochs` epochs over `indices` with a fresh Adam state. Epoch e is
// shuffled by a generator derived from (seed, e). Returns the per-epoch losses.
std::vector<double> train_epochs(SsrModel& model, const Matrix& images, const Matrix& texts,
                                 std::span<const std::size_t> indices, std::size_t epochs,
                                 std::uint64_t seed);

TrainReport train(SsrModel& model, const Matrix& images, const Matrix& texts,
                  double fraction = 1.0);

// Checkpoint: a plain-text header of key/value lines ending in "end", then
// the nnkit binary network.
std::vector<std::uint8_t> serialize_model(const SsrModel& model);
SsrModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const std::string& path, const SsrModel& model);
SsrModel load_model(const std::string& path);

std::string describe_config(const SsrConfig& config);

} // namespace ssrmap
