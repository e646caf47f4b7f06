#pragma once

// Datasets (line-delimited JSON records), the synthetic place-recognition
// generator, and the compressed map file with its per-element byte accounting.

#include "ssrmap/baselines.hpp"
#include "ssrmap/linalg.hpp"
#include "ssrmap/ssr.hpp"
#include "ssrmap/textcodec.hpp"
#include "ssrmap/textembed.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ssrmap {

enum class Split { Reference, Query };

const char* to_string(Split split) noexcept;

struct DatasetRecord {
    std::string id;
    std::int64_t place_id = 0;
    Split split = Split::Reference;
    std::string caption;
    EmbeddingVector image_embedding;
    // Present when the file carried one; otherwise derived from the caption on load.
    std::optional<EmbeddingVector> text_embedding;
    bool text_from_file = false;
};

// One JSON object per line, keys in this order:
//   id, place_id, split ("reference" | "query"), caption, embedding, [text_embedding]
// Missing text embeddings are computed with `embedder`.
std::vector<DatasetRecord> load_dataset(const std::string& path,
                                        const HashedBowEmbedder& embedder = HashedBowEmbedder());
std::vector<DatasetRecord> parse_dataset(std::string_view text,
                                         const HashedBowEmbedder& embedder = HashedBowEmbedder());
std::string format_dataset(std::span<const DatasetRecord> records);
void save_dataset(const std::string& path, std::span<const DatasetRecord> records);

// Column views over a record list.
struct DatasetView {
    std::vector<std::size_t> rows; // indices into the record list
    Matrix images;
    Matrix texts;
    std::vector<std::string> captions;
    std::vector<std::int64_t> places;
    std::vector<std::string> ids;
};

DatasetView select_split(std::span<const DatasetRecord> records, Split split);

struct SyntheticSpec {
    std::size_t num_places = 50;
    std::size_t items_per_place = 40;
    std::size_t dim = 256;
    std::size_t num_groups = 10;     // places sharing a scene type and caption vocabulary
    double group_scale = 0.8;        // weight of the shared scene-type direction
    double place_scale = 1.0;        // weight of the per-place direction
    std::size_t fine_dims = 32;      // rank of the per-item nuisance subspace
    double fine_scale = 1.2;         // per-item nuisance magnitude
    double noise = 0.6;              // isotropic noise magnitude (whole vector)
    std::size_t quiet_channels = 128; // leading channels with near-constant values
    double quiet_scale = 1e-3;
    double quiet_offset = 0.02;
    double place_word_keep = 0.5;    // chance each landmark word appears in a caption
    std::size_t attribute_vocab = 500;
    std::uint64_t seed = 0;
};

void validate_spec(const SyntheticSpec& spec);

// Item 0 of every place is a query; the rest are references. Captions name
// the scene type, its four scene words in random order, a random subset of
// the place's landmark words and one random attribute word.
std::vector<DatasetRecord> generate_synthetic(const SyntheticSpec& spec,
                                              const HashedBowEmbedder& embedder = HashedBowEmbedder());

enum class ValueEncoding : std::uint8_t { Fp32 = 0, Fp16 = 1, Quantized = 2 };

// IEEE binary16 conversion with round-to-nearest-even.
std::uint16_t float_to_half(float value) noexcept;
float half_to_float(std::uint16_t half) noexcept;

struct MapElement {
    std::string id;
    std::vector<double> prefix; // values as decoded from storage
    CodedBlob caption;
};

struct CompressedMap {
    std::uint32_t dims = 0;
    ValueEncoding encoding = ValueEncoding::Fp32;
    int bits = 0; // quantized encoding only
    Quantizer quantizer;
    std::vector<std::uint8_t> codec_model;
    std::string config_summary;
    std::vector<MapElement> elements;

    std::size_t size() const noexcept { return elements.size(); }
    // Stored bytes of one element's prefix.
    std::size_t prefix_bytes() const;
};

struct MapEncoding {
    ValueEncoding encoding = ValueEncoding::Fp32;
    int bits = 8;
};

// Parses "fp32", "fp16" or "q<bits>".
MapEncoding parse_encoding(std::string_view name);
std::string encoding_name(const MapEncoding& e);

// Builds a map from already computed prefixes (rows) and captions. For the
// quantized encoding, per-dimension ranges are fit on these prefixes unless
// `quantizer` is given.
CompressedMap build_map(std::span<const std::string> ids, const Matrix& prefixes,
                        std::span<const std::string> captions, const ContextModel& codec,
                        const MapEncoding& encoding, const std::string& config_summary,
                        const Quantizer* quantizer = nullptr);

// Projects images through the SSR model (c may be 0 for a text-only map).
CompressedMap write_map_elements(std::span<const std::string> ids, const Matrix& images,
                                 std::span<const std::string> captions, const SsrModel* model,
                                 std::size_t c, const ContextModel& codec,
                                 const MapEncoding& encoding);

// Layout (little-endian): "SSRM", u16 version, u32 N, u32 c, u8 encoding,
// u8 bits, [quantized: c x (f64 min, f64 max)], u32 model length + codec
// model, u32 length + config summary, then per element: u16 id length + id,
// prefix (c x f32 | c x f16 | ceil(c * bits / 8) packed codes), u32 caption
// length, u32 payload bit length, payload bytes.
inline constexpr std::uint16_t kMapVersion = 1;
std::vector<std::uint8_t> serialize_map(const CompressedMap& map);
CompressedMap parse_map(std::span<const std::uint8_t> bytes);
void write_map(const std::string& path, const CompressedMap& map);
CompressedMap read_map(const std::string& path);

// Mean of prefix bytes plus caption payload bytes; with `amortize_header`
// the remaining file bytes (header, ids, per-element length fields) are
// spread evenly, so the result times N equals the file size.
double bytes_per_element(const CompressedMap& map, bool amortize_header);

Matrix map_prefixes(const CompressedMap& map);

} // namespace ssrmap
