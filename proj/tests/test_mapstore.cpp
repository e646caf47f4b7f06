#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/evalkit.hpp"
#include "ssrmap/mapstore.hpp"

#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>

using namespace ssrmap;

namespace {

std::string error_text(const std::string& jsonl) {
    try {
        parse_dataset(jsonl);
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

std::optional<ErrorKind> error_kind(const std::string& jsonl) {
    try {
        parse_dataset(jsonl);
    } catch (const Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

SyntheticSpec tiny_spec() {
    SyntheticSpec s;
    s.num_places = 6;
    s.items_per_place = 5;
    s.dim = 24;
    s.num_groups = 3;
    s.fine_dims = 4;
    s.quiet_channels = 8;
    s.attribute_vocab = 20;
    s.seed = 4;
    return s;
}

float bits_to_float(std::uint32_t u) { return std::bit_cast<float>(u); }

} // namespace

TEST_CASE("dataset parse errors name the line") {
    const std::string good =
        R"({"id":"a","place_id":0,"split":"reference","caption":"park","embedding":[1,2]})";
    CHECK(parse_dataset(good + "\n\n" + good).size() == 2);
    CHECK(error_text(good + "\n{oops").find("line 2: malformed record") != std::string::npos);
    CHECK(error_text(R"({"id":"a","place_id":0,"split":"reference","embedding":[1]})")
              .find("line 1: missing field 'caption'") != std::string::npos);
    CHECK(error_text(R"({"id":"a","place_id":-1,"split":"query","caption":"","embedding":[1]})")
              .find("line 1: place_id") != std::string::npos);
    CHECK(error_text(R"({"id":"a","place_id":1,"split":"test","caption":"","embedding":[1]})")
              .find("line 1: split") != std::string::npos);
    CHECK(error_text(R"({"id":"a","place_id":1,"split":"query","caption":"","embedding":[1,"x"]})")
              .find("line 1: embedding has a non-number") != std::string::npos);
    const std::string short_row =
        R"({"id":"b","place_id":0,"split":"query","caption":"park","embedding":[1]})";
    CHECK(error_text(good + "\n" + short_row).find("line 2: embedding has dim 1") != std::string::npos);
    CHECK(error_kind(good + "\n" + short_row) == ErrorKind::DimensionMismatch);
    CHECK(error_text("\n  \n") == "no records");
    CHECK(error_kind("[1,2]") == ErrorKind::Format);
}

TEST_CASE("text embeddings from the file override the hasher") {
    const std::string row =
        R"({"id":"a","place_id":3,"split":"query","caption":"park","embedding":[1.0,2.0],"text_embedding":[0.0,0.5]})";
    const auto records = parse_dataset(row);
    REQUIRE(records[0].text_embedding.has_value());
    CHECK(*records[0].text_embedding == EmbeddingVector{0.0, 0.5});
    CHECK(records[0].text_from_file);
    CHECK(format_dataset(records) == row + "\n");
    const auto derived = parse_dataset(
        R"({"id":"a","place_id":3,"split":"query","caption":"park","embedding":[1,2]})");
    CHECK(*derived[0].text_embedding == HashedBowEmbedder().embed("park").vector);
}

TEST_CASE("format and parse round trip exactly") {
    const auto records = generate_synthetic(tiny_spec());
    const auto text = format_dataset(records);
    const auto back = parse_dataset(text);
    REQUIRE(back.size() == records.size());
    for (std::size_t i = 0; i < back.size(); ++i) {
        CHECK(back[i].id == records[i].id);
        CHECK(back[i].place_id == records[i].place_id);
        CHECK(back[i].split == records[i].split);
        CHECK(back[i].caption == records[i].caption);
        CHECK(back[i].image_embedding == records[i].image_embedding);
        CHECK(*back[i].text_embedding == *records[i].text_embedding);
    }
    CHECK(format_dataset(back) == text);
}

TEST_CASE("synthetic generator is deterministic and shaped as specified") {
    const auto spec = tiny_spec();
    const auto a = generate_synthetic(spec);
    const auto b = generate_synthetic(spec);
    CHECK(format_dataset(a) == format_dataset(b));
    auto other = spec;
    other.seed = 5;
    CHECK(format_dataset(generate_synthetic(other)) != format_dataset(a));
    REQUIRE(a.size() == 30);
    std::size_t queries = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image_embedding.dim() == 24);
        CHECK(a[i].place_id == static_cast<std::int64_t>(i / 5));
        CHECK((a[i].split == Split::Query) == (i % 5 == 0));
        queries += a[i].split == Split::Query ? 1 : 0;
    }
    CHECK(queries == 6);
    const auto refs = select_split(a, Split::Reference);
    CHECK(refs.images.rows() == 24);
    CHECK(refs.rows[0] == 1);
    // Quiet channels sit near plus or minus their offset.
    for (Eigen::Index i = 0; i < refs.images.rows(); ++i) {
        for (Eigen::Index j = 0; j < 8; ++j) {
            CHECK(std::abs(std::abs(refs.images(i, j)) - spec.quiet_offset) < 0.01);
        }
    }
    auto bad = spec;
    bad.fine_dims = 30;
    CHECK_THROWS_AS(validate_spec(bad), Error);
    bad = spec;
    bad.items_per_place = 1;
    CHECK_THROWS_AS(validate_spec(bad), Error);
}

TEST_CASE("default synthetic data: images retrieve well, captions only partly") {
    const auto records = generate_synthetic(SyntheticSpec{});
    const auto refs = select_split(records, Split::Reference);
    const auto queries = select_split(records, Split::Query);
    const auto image = retrieve(queries.images, refs.images, queries.places, refs.places, 5);
    const auto text = retrieve(queries.texts, refs.texts, queries.places, refs.places, 5);
    const double image_map = map_at_k(image, 5);
    const double text_map = map_at_k(text, 5);
    CHECK(image_map >= 0.9);
    CHECK(text_map > 0.2);
    CHECK(text_map < 0.9);
}

TEST_CASE("bundled caption corpus is the default synthetic corpus") {
    std::ifstream in(SSRMAP_DATA_DIR "/captions.txt");
    REQUIRE(in.good());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        lines.push_back(line);
    }
    const auto records = generate_synthetic(SyntheticSpec{});
    REQUIRE(lines.size() == records.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
        CHECK(lines[i] == records[i].caption);
    }
}

TEST_CASE("half precision conversion rounds to nearest even") {
    CHECK(float_to_half(0.0f) == 0x0000);
    CHECK(float_to_half(-0.0f) == 0x8000);
    CHECK(float_to_half(1.0f) == 0x3C00);
    CHECK(float_to_half(-2.0f) == 0xC000);
    CHECK(float_to_half(65504.0f) == 0x7BFF);
    CHECK(float_to_half(65520.0f) == 0x7C00); // rounds up to infinity
    CHECK(float_to_half(1e-8f) == 0x0000);
    CHECK(float_to_half(std::ldexp(1.0f, -24)) == 0x0001); // smallest subnormal
    // 1 + 2^-11 is halfway between 1 and 1 + 2^-10: ties to the even 1.0.
    CHECK(float_to_half(1.0f + std::ldexp(1.0f, -11)) == 0x3C00);
    // 1 + 3 * 2^-11 is halfway between odd 0x3C01 and even 0x3C02.
    CHECK(float_to_half(1.0f + 3.0f * std::ldexp(1.0f, -11)) == 0x3C02);
    CHECK(float_to_half(bits_to_float(0x7FC00000u)) >= 0x7E00);
    for (std::uint32_t h = 0; h < 0x7C00; h += 7) {
        CHECK(float_to_half(half_to_float(static_cast<std::uint16_t>(h))) == h);
    }
    CHECK(half_to_float(0x3555) == doctest::Approx(0.33325195).epsilon(1e-7));
}

TEST_CASE("encoding names") {
    CHECK(parse_encoding("fp32").encoding == ValueEncoding::Fp32);
    CHECK(parse_encoding("fp16").encoding == ValueEncoding::Fp16);
    const auto q = parse_encoding("q6");
    CHECK(q.encoding == ValueEncoding::Quantized);
    CHECK(q.bits == 6);
    CHECK(encoding_name(q) == "q6");
    CHECK_THROWS_AS(parse_encoding("q0"), Error);
    CHECK_THROWS_AS(parse_encoding("q17"), Error);
    CHECK_THROWS_AS(parse_encoding("q8x"), Error);
    CHECK_THROWS_AS(parse_encoding("int8"), Error);
}

TEST_CASE("map files round trip for every encoding") {
    const auto records = generate_synthetic(tiny_spec());
    const auto view = select_split(records, Split::Reference);
    const auto codec = ContextModel::fit(view.captions, 3);
    SsrConfig cfg;
    cfg.nested_dims = {2, 4, 8};
    const auto model = SsrModel::create(24, 8, cfg);
    const Matrix exact = project_rows(model, view.images, 4);
    for (const char* name : {"fp32", "fp16", "q8", "q5"}) {
        const auto encoding = parse_encoding(name);
        const auto map = write_map_elements(view.ids, view.images, view.captions, &model, 4, codec, encoding);
        const auto bytes = serialize_map(map);
        const auto back = parse_map(bytes);
        CHECK(serialize_map(back) == bytes);
        REQUIRE(back.size() == view.ids.size());
        for (std::size_t i = 0; i < back.size(); ++i) {
            CHECK(back.elements[i].id == view.ids[i]);
            CHECK(decode(codec, back.elements[i].caption) == view.captions[i]);
            for (std::size_t k = 0; k < 4; ++k) {
                const double want = exact(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
                const double got = back.elements[i].prefix[k];
                if (encoding.encoding == ValueEncoding::Fp32) {
                    CHECK(got == static_cast<double>(static_cast<float>(want)));
                } else if (encoding.encoding == ValueEncoding::Fp16) {
                    CHECK(got == half_to_float(float_to_half(static_cast<float>(want))));
                } else {
                    const double span = back.quantizer.max(static_cast<Eigen::Index>(k)) -
                                        back.quantizer.min(static_cast<Eigen::Index>(k));
                    const double bound = span / (2.0 * (std::pow(2.0, encoding.bits) - 1.0));
                    CHECK(std::abs(got - want) <= bound * (1.0 + 1e-9) + 1e-7);
                }
            }
        }

        // Independent recount from the layout: header, codec model, summary,
        // then id, prefix, caption lengths and payload for each element.
        std::size_t header = 4 + 2 + 4 + 4 + 1 + 1 + 4 + map.codec_model.size() + 4 +
                             map.config_summary.size();
        if (encoding.encoding == ValueEncoding::Quantized) {
            header += 4 * 16;
        }
        std::size_t body = 0;
        std::size_t framing = 0;
        const std::size_t prefix = encoding.encoding == ValueEncoding::Fp32   ? 16
                                   : encoding.encoding == ValueEncoding::Fp16 ? 8
                                                                              : (4 * encoding.bits + 7) / 8;
        for (const auto& e : map.elements) {
            body += prefix + (e.caption.payload_bits + 7) / 8;
            framing += 2 + e.id.size() + 4 + 4;
        }
        CHECK(bytes.size() == header + body + framing);
        const double n = static_cast<double>(map.size());
        CHECK(bytes_per_element(map, false) == doctest::Approx(static_cast<double>(body) / n));
        CHECK(bytes_per_element(map, true) * n == doctest::Approx(static_cast<double>(bytes.size())));
    }
}

TEST_CASE("map files reject damage and text-only maps work") {
    const auto records = generate_synthetic(tiny_spec());
    const auto view = select_split(records, Split::Reference);
    const auto codec = ContextModel::fit(view.captions, 2);
    const auto map = write_map_elements(view.ids, view.images, view.captions, nullptr, 0, codec, MapEncoding{});
    CHECK(map.dims == 0);
    CHECK(map.prefix_bytes() == 0);
    auto bytes = serialize_map(map);
    const auto back = parse_map(bytes);
    CHECK(map_prefixes(back).cols() == 0);
    CHECK(bytes_per_element(back, false) > 0.0);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(parse_map(bad_magic), Error);
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    try {
        parse_map(cut);
        FAIL("expected a format error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
        CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
    auto extra = bytes;
    extra.push_back(0);
    CHECK_THROWS_AS(parse_map(extra), Error);
    CHECK_THROWS_AS(write_map_elements(view.ids, view.images, view.captions, nullptr, 4, codec,
                                       MapEncoding{}),
                    Error);
}
