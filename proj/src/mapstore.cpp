#include "ssrmap/mapstore.hpp"

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"

#include <nlohmann/json.hpp>

#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

namespace ssrmap {

using nlohmann::ordered_json;

const char* to_string(Split split) noexcept {
    return split == Split::Reference ? "reference" : "query";
}

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

EmbeddingVector parse_vector(const ordered_json& value, const char* key, std::size_t line) {
    require(value.is_array(), ErrorKind::Format, at_line(line) + key + " must be an array");
    std::vector<double> out;
    out.reserve(value.size());
    for (const auto& v : value) {
        require(v.is_number(), ErrorKind::Format, at_line(line) + key + " has a non-number entry");
        out.push_back(v.get<double>());
    }
    try {
        return EmbeddingVector(std::move(out));
    } catch (const Error& e) {
        fail(ErrorKind::Format, at_line(line) + key + ": " + e.what());
    }
}

} // namespace

std::vector<DatasetRecord> parse_dataset(std::string_view text, const HashedBowEmbedder& embedder) {
    std::vector<DatasetRecord> records;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto end = text.find('\n', pos);
        const auto stop = end == std::string_view::npos ? text.size() : end;
        std::string_view line = text.substr(pos, stop - pos);
        pos = stop + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (line.find_first_not_of(" \t") == std::string_view::npos) {
            continue;
        }
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::Format, at_line(line_no) + "malformed record: " + e.what());
        }
        require(j.is_object(), ErrorKind::Format, at_line(line_no) + "record must be an object");
        for (const char* key : {"id", "place_id", "split", "caption", "embedding"}) {
            require(j.contains(key), ErrorKind::Format,
                    at_line(line_no) + "missing field '" + key + "'");
        }
        DatasetRecord r;
        require(j["id"].is_string(), ErrorKind::Format, at_line(line_no) + "id must be a string");
        r.id = j["id"].get<std::string>();
        require(j["place_id"].is_number_integer() && j["place_id"].get<std::int64_t>() >= 0,
                ErrorKind::Format, at_line(line_no) + "place_id must be a non-negative integer");
        r.place_id = j["place_id"].get<std::int64_t>();
        const auto split = j["split"].is_string() ? j["split"].get<std::string>() : std::string();
        require(split == "reference" || split == "query", ErrorKind::Format,
                at_line(line_no) + "split must be \"reference\" or \"query\"");
        r.split = split == "reference" ? Split::Reference : Split::Query;
        require(j["caption"].is_string(), ErrorKind::Format,
                at_line(line_no) + "caption must be a string");
        r.caption = j["caption"].get<std::string>();
        r.image_embedding = parse_vector(j["embedding"], "embedding", line_no);
        require(r.image_embedding.dim() > 0, ErrorKind::Format,
                at_line(line_no) + "embedding is empty");
        if (j.contains("text_embedding")) {
            r.text_embedding = parse_vector(j["text_embedding"], "text_embedding", line_no);
            r.text_from_file = true;
        } else {
            r.text_embedding = embedder.embed(r.caption).vector;
        }

        if (!records.empty()) {
            const auto& first = records.front();
            require(r.image_embedding.dim() == first.image_embedding.dim(),
                    ErrorKind::DimensionMismatch,
                    at_line(line_no) + "embedding has dim " +
                        std::to_string(r.image_embedding.dim()) + ", dataset uses " +
                        std::to_string(first.image_embedding.dim()));
            require(r.text_embedding->dim() == first.text_embedding->dim(),
                    ErrorKind::DimensionMismatch,
                    at_line(line_no) + "text embedding has dim " +
                        std::to_string(r.text_embedding->dim()) + ", dataset uses " +
                        std::to_string(first.text_embedding->dim()));
        }
        records.push_back(std::move(r));
    }
    require(!records.empty(), ErrorKind::Format, "no records");
    return records;
}

std::vector<DatasetRecord> load_dataset(const std::string& path, const HashedBowEmbedder& embedder) {
    const auto bytes = read_file_bytes(path);
    return parse_dataset(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                         embedder);
}

std::string format_dataset(std::span<const DatasetRecord> records) {
    std::string out;
    for (const auto& r : records) {
        ordered_json j;
        j["id"] = r.id;
        j["place_id"] = r.place_id;
        j["split"] = to_string(r.split);
        j["caption"] = r.caption;
        j["embedding"] = std::vector<double>(r.image_embedding.values().begin(),
                                             r.image_embedding.values().end());
        if (r.text_from_file && r.text_embedding) {
            j["text_embedding"] = std::vector<double>(r.text_embedding->values().begin(),
                                                      r.text_embedding->values().end());
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const std::string& path, std::span<const DatasetRecord> records) {
    write_file_atomic(path, format_dataset(records));
}

DatasetView select_split(std::span<const DatasetRecord> records, Split split) {
    DatasetView view;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].split == split) {
            view.rows.push_back(i);
        }
    }
    if (view.rows.empty()) {
        return view;
    }
    const auto& first = records[view.rows.front()];
    const auto n = static_cast<Eigen::Index>(view.rows.size());
    view.images.resize(n, static_cast<Eigen::Index>(first.image_embedding.dim()));
    view.texts.resize(n, static_cast<Eigen::Index>(first.text_embedding->dim()));
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& r = records[view.rows[static_cast<std::size_t>(k)]];
        view.images.row(k) = r.image_embedding.view().transpose();
        view.texts.row(k) = r.text_embedding->view().transpose();
        view.captions.push_back(r.caption);
        view.places.push_back(r.place_id);
        view.ids.push_back(r.id);
    }
    return view;
}

std::uint16_t float_to_half(float value) noexcept {
    const auto bits = std::bit_cast<std::uint32_t>(value);
    const std::uint32_t sign = (bits >> 16) & 0x8000u;
    const std::uint32_t exp = (bits >> 23) & 0xFFu;
    std::uint32_t mant = bits & 0x7FFFFFu;

    if (exp == 0xFFu) { // inf or nan
        return static_cast<std::uint16_t>(sign | 0x7C00u | (mant != 0 ? 0x200u : 0u));
    }
    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 31) {
        return static_cast<std::uint16_t>(sign | 0x7C00u);
    }
    if (e <= 0) {
        // Subnormal half (or zero): shift the full significand into place.
        if (e < -10) {
            return static_cast<std::uint16_t>(sign);
        }
        mant |= 0x800000u;
        const int shift = 14 - e;
        std::uint32_t half_mant = mant >> shift;
        const std::uint32_t rem = mant & ((1u << shift) - 1u);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half_mant & 1u) != 0)) {
            ++half_mant;
        }
        return static_cast<std::uint16_t>(sign | half_mant);
    }
    std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
    const std::uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (half & 1u) != 0)) {
        ++half; // may carry into the exponent, which also rounds to inf correctly
    }
    return static_cast<std::uint16_t>(sign | half);
}

float half_to_float(std::uint16_t half) noexcept {
    const std::uint32_t sign = (static_cast<std::uint32_t>(half) & 0x8000u) << 16;
    const std::uint32_t exp = (half >> 10) & 0x1Fu;
    std::uint32_t mant = half & 0x3FFu;
    std::uint32_t bits = 0;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            int e = -1;
            do {
                ++e;
                mant <<= 1;
            } while ((mant & 0x400u) == 0);
            bits = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3FFu) << 13);
        }
    } else if (exp == 0x1Fu) {
        bits = sign | 0x7F800000u | (mant << 13);
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

std::size_t CompressedMap::prefix_bytes() const {
    switch (encoding) {
    case ValueEncoding::Fp32:
        return 4u * dims;
    case ValueEncoding::Fp16:
        return 2u * dims;
    case ValueEncoding::Quantized:
        return (static_cast<std::size_t>(dims) * static_cast<std::size_t>(bits) + 7u) / 8u;
    }
    return 0;
}

MapEncoding parse_encoding(std::string_view name) {
    if (name == "fp32") {
        return {ValueEncoding::Fp32, 0};
    }
    if (name == "fp16") {
        return {ValueEncoding::Fp16, 0};
    }
    if (name.size() >= 2 && name.front() == 'q') {
        int bits = 0;
        for (char ch : name.substr(1)) {
            require(ch >= '0' && ch <= '9' && bits < 100, ErrorKind::InvalidArgument,
                    "unknown encoding '" + std::string(name) + "'");
            bits = bits * 10 + (ch - '0');
        }
        require(bits >= 1 && bits <= 16, ErrorKind::InvalidArgument,
                "quantized encoding bits must be in [1, 16]");
        return {ValueEncoding::Quantized, bits};
    }
    fail(ErrorKind::InvalidArgument,
         "unknown encoding '" + std::string(name) + "' (expected fp32, fp16 or q<bits>)");
}

std::string encoding_name(const MapEncoding& e) {
    switch (e.encoding) {
    case ValueEncoding::Fp32:
        return "fp32";
    case ValueEncoding::Fp16:
        return "fp16";
    case ValueEncoding::Quantized:
        return "q" + std::to_string(e.bits);
    }
    return "?";
}

namespace {

// Encodes one prefix into its storage bytes and returns the decoded values.
std::vector<double> store_prefix(const CompressedMap& map, std::span<const double> values,
                                 ByteWriter* out) {
    std::vector<double> decoded(values.size());
    switch (map.encoding) {
    case ValueEncoding::Fp32:
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto f = static_cast<float>(values[i]);
            decoded[i] = f;
            if (out) {
                out->f32(f);
            }
        }
        break;
    case ValueEncoding::Fp16:
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto h = float_to_half(static_cast<float>(values[i]));
            decoded[i] = half_to_float(h);
            if (out) {
                out->u16(h);
            }
        }
        break;
    case ValueEncoding::Quantized: {
        const auto codes = quantize(map.quantizer, EmbeddingVector(std::vector<double>(values.begin(), values.end())));
        const auto back = dequantize(map.quantizer, codes);
        std::copy(back.values().begin(), back.values().end(), decoded.begin());
        if (out) {
            // Codes packed LSB-first, `bits` bits each.
            std::vector<std::uint8_t> packed(map.prefix_bytes(), 0);
            std::size_t bit = 0;
            for (std::uint32_t code : codes) {
                for (int b = 0; b < map.bits; ++b, ++bit) {
                    if ((code >> b) & 1u) {
                        packed[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
                    }
                }
            }
            out->raw(packed);
        }
        break;
    }
    }
    return decoded;
}

std::vector<double> load_prefix(const CompressedMap& map, ByteReader& in) {
    std::vector<double> values(map.dims);
    switch (map.encoding) {
    case ValueEncoding::Fp32:
        for (auto& v : values) {
            v = in.f32("prefix value");
        }
        break;
    case ValueEncoding::Fp16:
        for (auto& v : values) {
            v = half_to_float(in.u16("prefix value"));
        }
        break;
    case ValueEncoding::Quantized: {
        const auto packed = in.raw(map.prefix_bytes(), "packed prefix");
        std::vector<std::uint32_t> codes(map.dims, 0);
        std::size_t bit = 0;
        for (auto& code : codes) {
            for (int b = 0; b < map.bits; ++b, ++bit) {
                if ((packed[bit / 8] >> (bit % 8)) & 1u) {
                    code |= 1u << b;
                }
            }
        }
        const auto back = dequantize(map.quantizer, codes);
        values.assign(back.values().begin(), back.values().end());
        break;
    }
    }
    return values;
}

} // namespace

CompressedMap build_map(std::span<const std::string> ids, const Matrix& prefixes,
                        std::span<const std::string> captions, const ContextModel& codec,
                        const MapEncoding& encoding, const std::string& config_summary,
                        const Quantizer* quantizer) {
    const auto n = ids.size();
    require(captions.size() == n && static_cast<std::size_t>(prefixes.rows()) == n,
            ErrorKind::DimensionMismatch, "ids, prefixes and captions must have equal counts");
    CompressedMap map;
    map.dims = static_cast<std::uint32_t>(prefixes.cols());
    map.encoding = encoding.encoding;
    map.codec_model = codec.serialize();
    map.config_summary = config_summary;
    if (encoding.encoding == ValueEncoding::Quantized) {
        map.bits = encoding.bits;
        if (quantizer != nullptr) {
            require(quantizer->dim() == map.dims && quantizer->bits == encoding.bits,
                    ErrorKind::DimensionMismatch, "quantizer does not match the map encoding");
            map.quantizer = *quantizer;
        } else if (map.dims > 0 && n > 0) {
            map.quantizer = fit_quantizer(prefixes, encoding.bits);
        } else {
            map.quantizer.bits = encoding.bits;
            map.quantizer.min = Vector::Zero(map.dims);
            map.quantizer.max = Vector::Zero(map.dims);
        }
    }
    map.elements.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        require(ids[i].size() <= 0xFFFF, ErrorKind::InvalidArgument, "element id too long");
        auto& e = map.elements[i];
        e.id = ids[i];
        e.prefix = store_prefix(map, row_span(prefixes, static_cast<Eigen::Index>(i)), nullptr);
        e.caption = encode(codec, captions[i]);
    }
    return map;
}

CompressedMap write_map_elements(std::span<const std::string> ids, const Matrix& images,
                                 std::span<const std::string> captions, const SsrModel* model,
                                 std::size_t c, const ContextModel& codec,
                                 const MapEncoding& encoding) {
    Matrix prefixes(images.rows(), 0);
    std::string summary = "text-only";
    if (c > 0) {
        require(model != nullptr, ErrorKind::InvalidArgument, "a model is required when c > 0");
        require(c <= model->output_dim(), ErrorKind::InvalidArgument,
                "map dims " + std::to_string(c) + " exceed model output dim " +
                    std::to_string(model->output_dim()));
        prefixes = project_rows(*model, images, c);
        summary = describe_config(model->config());
    }
    return build_map(ids, prefixes, captions, codec, encoding, summary);
}

std::vector<std::uint8_t> serialize_map(const CompressedMap& map) {
    ByteWriter out;
    out.raw(std::string_view("SSRM"));
    out.u16(kMapVersion);
    out.u32(static_cast<std::uint32_t>(map.elements.size()));
    out.u32(map.dims);
    out.u8(static_cast<std::uint8_t>(map.encoding));
    out.u8(static_cast<std::uint8_t>(map.encoding == ValueEncoding::Quantized ? map.bits : 0));
    if (map.encoding == ValueEncoding::Quantized) {
        require(map.quantizer.dim() == map.dims, ErrorKind::DimensionMismatch,
                "quantizer dim does not match map dims");
        for (std::size_t i = 0; i < map.dims; ++i) {
            out.f64(map.quantizer.min(static_cast<Eigen::Index>(i)));
            out.f64(map.quantizer.max(static_cast<Eigen::Index>(i)));
        }
    }
    out.u32(static_cast<std::uint32_t>(map.codec_model.size()));
    out.raw(map.codec_model);
    out.u32(static_cast<std::uint32_t>(map.config_summary.size()));
    out.raw(map.config_summary);
    for (const auto& e : map.elements) {
        require(e.prefix.size() == map.dims, ErrorKind::DimensionMismatch,
                "element " + e.id + " prefix length does not match map dims");
        out.u16(static_cast<std::uint16_t>(e.id.size()));
        out.raw(e.id);
        store_prefix(map, e.prefix, &out);
        out.u32(e.caption.original_length);
        out.u32(e.caption.payload_bits);
        out.raw(std::span<const std::uint8_t>(e.caption.payload.data(), e.caption.payload_bytes()));
    }
    return out.take();
}

CompressedMap parse_map(std::span<const std::uint8_t> bytes) {
    ByteReader in(bytes);
    in.expect_magic("SSRM", "compressed map");
    const auto version = in.u16("map version");
    require(version == kMapVersion, ErrorKind::Format,
            "unsupported map version " + std::to_string(version));
    CompressedMap map;
    const auto n = in.u32("element count");
    map.dims = in.u32("prefix dims");
    const auto enc = in.u8("value encoding");
    require(enc <= 2, ErrorKind::Format, "unknown value encoding " + std::to_string(enc));
    map.encoding = static_cast<ValueEncoding>(enc);
    map.bits = in.u8("quantizer bits");
    if (map.encoding == ValueEncoding::Quantized) {
        require(map.bits >= 1 && map.bits <= 16, ErrorKind::Format, "quantizer bits out of range");
        map.quantizer.bits = map.bits;
        map.quantizer.min.resize(map.dims);
        map.quantizer.max.resize(map.dims);
        for (std::size_t i = 0; i < map.dims; ++i) {
            map.quantizer.min(static_cast<Eigen::Index>(i)) = in.f64("quantizer min");
            map.quantizer.max(static_cast<Eigen::Index>(i)) = in.f64("quantizer max");
        }
    } else {
        map.bits = 0;
    }
    const auto model_len = in.u32("codec model length");
    const auto model = in.raw(model_len, "codec model");
    map.codec_model.assign(model.begin(), model.end());
    const auto model_id = ContextModel::deserialize(map.codec_model).model_id();
    map.config_summary = in.string(in.u32("config summary length"), "config summary");
    map.elements.resize(n);
    for (auto& e : map.elements) {
        e.id = in.string(in.u16("id length"), "element id");
        e.prefix = load_prefix(map, in);
        e.caption.model_id = model_id;
        e.caption.original_length = in.u32("caption length");
        e.caption.payload_bits = in.u32("payload bit length");
        const auto payload = in.raw(e.caption.payload_bytes(), "caption payload");
        e.caption.payload.assign(payload.begin(), payload.end());
    }
    require(in.at_end(), ErrorKind::Format,
            "trailing bytes after map at offset " + std::to_string(in.offset()));
    return map;
}

void write_map(const std::string& path, const CompressedMap& map) {
    write_file_atomic(path, serialize_map(map));
}

CompressedMap read_map(const std::string& path) { return parse_map(read_file_bytes(path)); }

double bytes_per_element(const CompressedMap& map, bool amortize_header) {
    require(!map.elements.empty(), ErrorKind::InvalidArgument,
            "bytes per element is undefined for an empty map");
    std::size_t body = 0;
    for (const auto& e : map.elements) {
        body += map.prefix_bytes() + e.caption.payload_bytes();
    }
    const auto n = static_cast<double>(map.elements.size());
    double per = static_cast<double>(body) / n;
    if (amortize_header) {
        const std::size_t file = serialize_map(map).size();
        per += static_cast<double>(file - body) / n;
    }
    return per;
}

Matrix map_prefixes(const CompressedMap& map) {
    Matrix out(static_cast<Eigen::Index>(map.elements.size()), static_cast<Eigen::Index>(map.dims));
    for (std::size_t i = 0; i < map.elements.size(); ++i) {
        for (std::size_t k = 0; k < map.dims; ++k) {
            out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = map.elements[i].prefix[k];
        }
    }
    return out;
}

} // namespace ssrmap
