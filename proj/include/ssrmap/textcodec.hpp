#pragma once

// Model-driven lossless text compression. A ProbabilityModel supplies an
// integer frequency table over 256 byte values plus an end-of-text symbol;
// a 32-bit integer arithmetic coder turns the symbol sequence into bits.
// Any predictor with this interface can drive the coder; the bundled one is
// an adaptive byte-level context model.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace ssrmap {

inline constexpr std::size_t kAlphabetSize = 257;
inline constexpr std::uint16_t kEofSymbol = 256;

using FrequencyTable = std::array<std::uint32_t, kAlphabetSize>;

// Frequencies must be >= 1 for every symbol and sum to at most kMaxTotalFrequency.
inline constexpr std::uint32_t kMaxTotalFrequency = 1u << 16;

// Per-text model state. Encoder and decoder each open their own session and
// feed it the same symbols, so both see identical tables at every step.
class CodingSession {
public:
    virtual ~CodingSession() = default;
    virtual void frequencies(FrequencyTable& out) = 0;
    virtual void advance(std::uint16_t symbol) = 0;
};

class ProbabilityModel {
public:
    virtual ~ProbabilityModel() = default;
    virtual std::uint64_t model_id() const = 0;
    virtual std::unique_ptr<CodingSession> start_session() const = 0;
};

// Every symbol equally likely. Used as a reference for the coder's overhead.
class UniformModel final : public ProbabilityModel {
public:
    std::uint64_t model_id() const override;
    std::unique_ptr<CodingSession> start_session() const override;
};

// Order-k byte context model. Symbol counts are kept for every context of
// order 0..k seen in the fitting corpus. A table is built by giving every
// symbol a count of 1 and adding each seen order's distribution scaled to
// kOrderScale << order, so the weight halves per order dropped. Sessions
// keep adapting with the symbols they code, in a private overlay.
class ContextModel final : public ProbabilityModel {
public:
    static constexpr int kMaxOrder = 4;
    static constexpr std::uint32_t kOrderScale = 1u << 10;

    struct Counts {
        std::vector<std::pair<std::uint16_t, std::uint32_t>> entries; // sorted by symbol
        std::uint64_t total = 0;

        void add(std::uint16_t symbol);
    };

    explicit ContextModel(int order = 3);

    int order() const noexcept { return order_; }
    std::size_t context_count() const noexcept { return tables_.size(); }

    std::uint64_t model_id() const override { return id_; }
    std::unique_ptr<CodingSession> start_session() const override;

    // Frequency table after seeing `history` (most recent symbol last) with
    // no session adaptation. Exposed for inspection and tests.
    FrequencyTable frequencies_for(std::span<const std::uint16_t> history) const;

    std::vector<std::uint8_t> serialize() const;
    static ContextModel deserialize(std::span<const std::uint8_t> bytes);

    // Builds count tables from the corpus. Each string is followed by an
    // end-of-text symbol; history before the first byte is a sentinel.
    static ContextModel fit(std::span<const std::string> corpus, int order);

    const Counts* find(std::uint64_t key) const;

private:
    void refresh_id();

    int order_;
    std::unordered_map<std::uint64_t, Counts> tables_;
    std::uint64_t id_ = 0;
};

inline ContextModel fit_context_model(std::span<const std::string> corpus, int order) {
    return ContextModel::fit(corpus, order);
}

struct CodedBlob {
    std::uint64_t model_id = 0;
    std::uint32_t original_length = 0;
    std::uint32_t payload_bits = 0;
    std::vector<std::uint8_t> payload;

    std::size_t payload_bytes() const noexcept { return (payload_bits + 7u) / 8u; }

    friend bool operator==(const CodedBlob&, const CodedBlob&) = default;
};

struct EncodeStats {
    // Sum of -log2 p(symbol) along the coded path, EOF included.
    double ideal_bits = 0.0;
    std::size_t symbols = 0;
};

CodedBlob encode(const ProbabilityModel& model, std::string_view text,
                 EncodeStats* stats = nullptr);
std::string decode(const ProbabilityModel& model, const CodedBlob& blob);

// Standalone blob layout (little-endian): "SSRZ", u16 version, 8-byte model
// id, u32 original length, u32 payload bit length, payload bytes.
inline constexpr std::uint16_t kBlobVersion = 1;
std::vector<std::uint8_t> serialize_blob(const CodedBlob& blob);
CodedBlob parse_blob(std::span<const std::uint8_t> bytes);

// Per-element storage cost of a caption: payload bytes, plus an amortized
// share of the shared model when requested. Blob headers are not counted.
double compressed_size_bytes(const CodedBlob& blob, bool amortize_model, std::size_t model_bytes,
                             std::size_t map_size);

} // namespace ssrmap
