#include "ssrmap/textcodec.hpp"

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ssrmap {

namespace {

// 32-bit coder registers.
constexpr std::uint64_t kTop = 0xFFFFFFFFull;
constexpr std::uint64_t kHalf = 0x80000000ull;
constexpr std::uint64_t kQuarter = 0x40000000ull;
constexpr std::uint64_t kThreeQuarters = 0xC0000000ull;

constexpr std::uint16_t kHistorySentinel = 256;
constexpr std::uint16_t kModelVersion = 1;

class BitWriter {
public:
    void put(bool bit) {
        if (bits_ % 8 == 0) {
            bytes_.push_back(0);
        }
        if (bit) {
            bytes_.back() |= static_cast<std::uint8_t>(0x80u >> (bits_ % 8));
        }
        ++bits_;
    }

    std::uint32_t bit_count() const noexcept { return bits_; }
    std::vector<std::uint8_t> take() { return std::move(bytes_); }

private:
    std::vector<std::uint8_t> bytes_;
    std::uint32_t bits_ = 0;
};

// Reads bits MSB-first; positions past the payload read as zero.
class BitReader {
public:
    BitReader(std::span<const std::uint8_t> bytes, std::uint32_t bits) : bytes_(bytes), bits_(bits) {}

    std::uint64_t get() {
        std::uint64_t bit = 0;
        if (pos_ < bits_) {
            bit = (bytes_[pos_ / 8] >> (7 - pos_ % 8)) & 1u;
        }
        ++pos_;
        return bit;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::uint32_t bits_;
    std::uint64_t pos_ = 0;
};

struct Cumulative {
    std::array<std::uint32_t, kAlphabetSize + 1> bounds{};

    std::uint32_t total() const { return bounds[kAlphabetSize]; }
};

void accumulate(const FrequencyTable& freq, Cumulative& cum) {
    cum.bounds[0] = 0;
    for (std::size_t s = 0; s < kAlphabetSize; ++s) {
        if (freq[s] == 0) {
            fail(ErrorKind::InvalidArgument,
                 "probability model assigned zero frequency to symbol " + std::to_string(s));
        }
        cum.bounds[s + 1] = cum.bounds[s] + freq[s];
    }
    if (cum.total() > kMaxTotalFrequency) {
        fail(ErrorKind::InvalidArgument, "probability model total frequency " +
                                             std::to_string(cum.total()) + " exceeds coder limit");
    }
}

class UniformSession final : public CodingSession {
public:
    void frequencies(FrequencyTable& out) override { out.fill(1); }
    void advance(std::uint16_t) override {}
};

std::uint64_t context_key(const std::array<std::uint16_t, ContextModel::kMaxOrder>& history, int k) {
    // history[0] is the most recent symbol.
    std::uint64_t key = static_cast<std::uint64_t>(k) << 40;
    for (int i = 0; i < k; ++i) {
        key |= static_cast<std::uint64_t>(history[static_cast<std::size_t>(i)]) << (9 * i);
    }
    return key;
}

void push_history(std::array<std::uint16_t, ContextModel::kMaxOrder>& history, std::uint16_t symbol) {
    for (std::size_t i = history.size() - 1; i > 0; --i) {
        history[i] = history[i - 1];
    }
    history[0] = symbol;
}

std::array<std::uint16_t, ContextModel::kMaxOrder> fresh_history() {
    std::array<std::uint16_t, ContextModel::kMaxOrder> h{};
    h.fill(kHistorySentinel);
    return h;
}

class ContextSession final : public CodingSession {
public:
    explicit ContextSession(const ContextModel& model) : model_(model), history_(fresh_history()) {}

    void frequencies(FrequencyTable& out) override {
        out.fill(1);
        for (int k = 0; k <= model_.order(); ++k) {
            const std::uint64_t key = context_key(history_, k);
            const auto* base = model_.find(key);
            const auto it = overlay_.find(key);
            const auto* delta = it == overlay_.end() ? nullptr : &it->second;
            const std::uint64_t total = (base ? base->total : 0) + (delta ? delta->total : 0);
            if (total == 0) {
                continue;
            }
            const std::uint64_t weight = static_cast<std::uint64_t>(ContextModel::kOrderScale) << k;
            if (delta == nullptr) {
                for (const auto& [symbol, count] : base->entries) {
                    out[symbol] += static_cast<std::uint32_t>(count * weight / total);
                }
                continue;
            }
            merged_.fill(0);
            touched_.clear();
            auto gather = [&](const ContextModel::Counts* counts) {
                if (counts == nullptr) {
                    return;
                }
                for (const auto& [symbol, count] : counts->entries) {
                    if (merged_[symbol] == 0) {
                        touched_.push_back(symbol);
                    }
                    merged_[symbol] += count;
                }
            };
            gather(base);
            gather(delta);
            for (std::uint16_t symbol : touched_) {
                out[symbol] += static_cast<std::uint32_t>(merged_[symbol] * weight / total);
            }
        }
    }

    void advance(std::uint16_t symbol) override {
        for (int k = 0; k <= model_.order(); ++k) {
            overlay_[context_key(history_, k)].add(symbol);
        }
        push_history(history_, symbol);
    }

private:
    const ContextModel& model_;
    std::array<std::uint16_t, ContextModel::kMaxOrder> history_;
    std::unordered_map<std::uint64_t, ContextModel::Counts> overlay_;
    std::array<std::uint64_t, kAlphabetSize> merged_{};
    std::vector<std::uint16_t> touched_;
};

} // namespace

std::uint64_t UniformModel::model_id() const { return fnv1a64("uniform-257-v1"); }

std::unique_ptr<CodingSession> UniformModel::start_session() const {
    return std::make_unique<UniformSession>();
}

void ContextModel::Counts::add(std::uint16_t symbol) {
    auto it = std::lower_bound(entries.begin(), entries.end(), symbol,
                               [](const auto& e, std::uint16_t s) { return e.first < s; });
    if (it != entries.end() && it->first == symbol) {
        ++it->second;
    } else {
        entries.insert(it, {symbol, 1u});
    }
    ++total;
}

ContextModel::ContextModel(int order) : order_(order) {
    require(order >= 0 && order <= kMaxOrder, ErrorKind::InvalidArgument,
            "context order must be in [0, " + std::to_string(kMaxOrder) + "], got " +
                std::to_string(order));
    refresh_id();
}

const ContextModel::Counts* ContextModel::find(std::uint64_t key) const {
    const auto it = tables_.find(key);
    return it == tables_.end() ? nullptr : &it->second;
}

std::unique_ptr<CodingSession> ContextModel::start_session() const {
    return std::make_unique<ContextSession>(*this);
}

FrequencyTable ContextModel::frequencies_for(std::span<const std::uint16_t> history) const {
    ContextSession session(*this);
    // Replaying through a session would adapt the overlay; build the
    // history directly instead.
    auto h = fresh_history();
    for (std::uint16_t s : history) {
        push_history(h, s);
    }
    FrequencyTable out;
    out.fill(1);
    for (int k = 0; k <= order_; ++k) {
        const auto* counts = find(context_key(h, k));
        if (counts == nullptr || counts->total == 0) {
            continue;
        }
        const std::uint64_t weight = static_cast<std::uint64_t>(kOrderScale) << k;
        for (const auto& [symbol, count] : counts->entries) {
            out[symbol] += static_cast<std::uint32_t>(count * weight / counts->total);
        }
    }
    return out;
}

ContextModel ContextModel::fit(std::span<const std::string> corpus, int order) {
    ContextModel model(order);
    for (const auto& text : corpus) {
        auto history = fresh_history();
        auto feed = [&](std::uint16_t symbol) {
            for (int k = 0; k <= order; ++k) {
                model.tables_[context_key(history, k)].add(symbol);
            }
            push_history(history, symbol);
        };
        for (char ch : text) {
            feed(static_cast<unsigned char>(ch));
        }
        feed(kEofSymbol);
    }
    model.refresh_id();
    return model;
}

std::vector<std::uint8_t> ContextModel::serialize() const {
    std::vector<std::uint64_t> keys;
    keys.reserve(tables_.size());
    for (const auto& [key, counts] : tables_) {
        keys.push_back(key);
    }
    std::sort(keys.begin(), keys.end());

    ByteWriter out;
    out.raw(std::string_view("SSRC"));
    out.u16(kModelVersion);
    out.u8(static_cast<std::uint8_t>(order_));
    out.u32(static_cast<std::uint32_t>(keys.size()));
    for (std::uint64_t key : keys) {
        const auto& counts = tables_.at(key);
        out.u64(key);
        out.u16(static_cast<std::uint16_t>(counts.entries.size()));
        for (const auto& [symbol, count] : counts.entries) {
            out.u16(symbol);
            out.u32(count);
        }
    }
    return out.take();
}

ContextModel ContextModel::deserialize(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("SSRC", "context model");
    const auto version = in.u16("model version");
    require(version == kModelVersion, ErrorKind::Format,
            "unsupported context model version " + std::to_string(version));
    const int order = in.u8("model order");
    require(order <= kMaxOrder, ErrorKind::Format, "context model order out of range");
    ContextModel model(order);
    const auto count = in.u32("context count");
    for (std::uint32_t c = 0; c < count; ++c) {
        const auto key = in.u64("context key");
        const auto entries = in.u16("entry count");
        Counts counts;
        counts.entries.reserve(entries);
        for (std::uint16_t e = 0; e < entries; ++e) {
            const auto symbol = in.u16("symbol");
            const auto n = in.u32("symbol count");
            require(symbol < kAlphabetSize, ErrorKind::Format, "symbol out of range in model");
            require(counts.entries.empty() || counts.entries.back().first < symbol,
                    ErrorKind::Format, "context model entries are not sorted");
            counts.entries.emplace_back(symbol, n);
            counts.total += n;
        }
        model.tables_.emplace(key, std::move(counts));
    }
    require(in.at_end(), ErrorKind::Format,
            "trailing bytes after context model at offset " + std::to_string(in.offset()));
    model.refresh_id();
    return model;
}

void ContextModel::refresh_id() {
    if (tables_.empty()) {
        // Avoid recursion through serialize() on an empty model.
        id_ = fnv1a64("SSRC-empty-order-" + std::to_string(order_));
        return;
    }
    id_ = fnv1a64(serialize());
}

CodedBlob encode(const ProbabilityModel& model, std::string_view text, EncodeStats* stats) {
    require(text.size() <= 0xFFFFFFFFull, ErrorKind::InvalidArgument, "text too long to encode");
    auto session = model.start_session();
    FrequencyTable freq;
    Cumulative cum;
    BitWriter out;
    std::uint64_t low = 0;
    std::uint64_t high = kTop;
    std::uint64_t pending = 0;
    double ideal_bits = 0.0;

    auto emit = [&](bool bit) {
        out.put(bit);
        for (; pending > 0; --pending) {
            out.put(!bit);
        }
    };

    auto code_symbol = [&](std::uint16_t symbol) {
        session->frequencies(freq);
        accumulate(freq, cum);
        const std::uint64_t total = cum.total();
        const std::uint64_t range = high - low + 1;
        high = low + range * cum.bounds[symbol + 1] / total - 1;
        low = low + range * cum.bounds[symbol] / total;
        ideal_bits -= std::log2(static_cast<double>(freq[symbol]) / static_cast<double>(total));
        for (;;) {
            if (high < kHalf) {
                emit(false);
            } else if (low >= kHalf) {
                emit(true);
                low -= kHalf;
                high -= kHalf;
            } else if (low >= kQuarter && high < kThreeQuarters) {
                ++pending;
                low -= kQuarter;
                high -= kQuarter;
            } else {
                break;
            }
            low = 2 * low;
            high = 2 * high + 1;
        }
        session->advance(symbol);
    };

    for (char ch : text) {
        code_symbol(static_cast<unsigned char>(ch));
    }
    code_symbol(kEofSymbol);

    // Two more bits pin a value inside [low, high] once zero-padded.
    ++pending;
    emit(low >= kQuarter);

    if (stats != nullptr) {
        stats->ideal_bits = ideal_bits;
        stats->symbols = text.size() + 1;
    }
    CodedBlob blob;
    blob.model_id = model.model_id();
    blob.original_length = static_cast<std::uint32_t>(text.size());
    blob.payload_bits = out.bit_count();
    blob.payload = out.take();
    return blob;
}

std::string decode(const ProbabilityModel& model, const CodedBlob& blob) {
    require(blob.model_id == model.model_id(), ErrorKind::ModelMismatch,
            "blob was encoded with a different model");
    require(blob.payload.size() >= blob.payload_bytes(), ErrorKind::Format,
            "truncated payload at byte offset " + std::to_string(blob.payload.size()) + ": need " +
                std::to_string(blob.payload_bytes()) + " bytes");

    auto session = model.start_session();
    FrequencyTable freq;
    Cumulative cum;
    BitReader in(blob.payload, blob.payload_bits);
    std::uint64_t low = 0;
    std::uint64_t high = kTop;
    std::uint64_t value = 0;
    for (int i = 0; i < 32; ++i) {
        value = (value << 1) | in.get();
    }

    std::string text;
    text.reserve(blob.original_length);
    for (;;) {
        session->frequencies(freq);
        accumulate(freq, cum);
        const std::uint64_t total = cum.total();
        const std::uint64_t range = high - low + 1;
        const std::uint64_t target = ((value - low + 1) * total - 1) / range;
        const auto it = std::upper_bound(cum.bounds.begin(), cum.bounds.end(), target);
        const auto symbol = static_cast<std::uint16_t>(std::distance(cum.bounds.begin(), it) - 1);

        high = low + range * cum.bounds[symbol + 1] / total - 1;
        low = low + range * cum.bounds[symbol] / total;
        for (;;) {
            if (high < kHalf) {
                // nothing to subtract
            } else if (low >= kHalf) {
                low -= kHalf;
                high -= kHalf;
                value -= kHalf;
            } else if (low >= kQuarter && high < kThreeQuarters) {
                low -= kQuarter;
                high -= kQuarter;
                value -= kQuarter;
            } else {
                break;
            }
            low = 2 * low;
            high = 2 * high + 1;
            value = 2 * value + in.get();
        }

        if (symbol == kEofSymbol) {
            require(text.size() == blob.original_length, ErrorKind::Format,
                    "corrupt payload: end of text after " + std::to_string(text.size()) +
                        " bytes, header says " + std::to_string(blob.original_length));
            break;
        }
        require(text.size() < blob.original_length, ErrorKind::Format,
                "corrupt payload: no end of text after " + std::to_string(text.size()) + " bytes");
        text.push_back(static_cast<char>(symbol));
        session->advance(symbol);
    }
    return text;
}

std::vector<std::uint8_t> serialize_blob(const CodedBlob& blob) {
    ByteWriter out;
    out.raw(std::string_view("SSRZ"));
    out.u16(kBlobVersion);
    out.u64(blob.model_id);
    out.u32(blob.original_length);
    out.u32(blob.payload_bits);
    out.raw(std::span<const std::uint8_t>(blob.payload.data(), blob.payload_bytes()));
    return out.take();
}

CodedBlob parse_blob(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("SSRZ", "coded blob");
    const auto version = in.u16("blob version");
    require(version == kBlobVersion, ErrorKind::Format,
            "unsupported blob version " + std::to_string(version));
    CodedBlob blob;
    blob.model_id = in.u64("model id");
    blob.original_length = in.u32("original length");
    blob.payload_bits = in.u32("payload bit length");
    const auto payload = in.raw(blob.payload_bytes(), "payload");
    blob.payload.assign(payload.begin(), payload.end());
    require(in.at_end(), ErrorKind::Format,
            "trailing bytes after blob payload at offset " + std::to_string(in.offset()));
    return blob;
}

double compressed_size_bytes(const CodedBlob& blob, bool amortize_model, std::size_t model_bytes,
                             std::size_t map_size) {
    double bytes = static_cast<double>(blob.payload_bytes());
    if (amortize_model) {
        require(map_size >= 1, ErrorKind::InvalidArgument,
                "map size must be at least 1 to amortize the model");
        bytes += static_cast<double>(model_bytes) / static_cast<double>(map_size);
    }
    return bytes;
}

} // namespace ssrmap
