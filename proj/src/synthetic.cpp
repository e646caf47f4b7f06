#include "ssrmap/error.hpp"
#include "ssrmap/mapstore.hpp"
#include "ssrmap/rng.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <array>
#include <cmath>

namespace ssrmap {

namespace {

struct SceneType {
    const char* name;
    std::array<const char*, 4> words;
};

constexpr std::array<SceneType, 12> kScenes = {{
    {"street", {"asphalt", "crosswalk", "storefronts", "lampposts"}},
    {"park", {"lawn", "oaks", "benches", "footpath"}},
    {"harbor", {"piers", "cranes", "containers", "seawall"}},
    {"market", {"stalls", "awnings", "crates", "vendors"}},
    {"campus", {"lecture", "courtyard", "bicycles", "ivy"}},
    {"station", {"platform", "rails", "canopy", "timetable"}},
    {"bridge", {"girders", "railing", "river", "cables"}},
    {"plaza", {"fountain", "paving", "statue", "pigeons"}},
    {"garden", {"hedges", "roses", "trellis", "gravel"}},
    {"tunnel", {"tiles", "ceiling", "lights", "arches"}},
    {"alley", {"bins", "graffiti", "fire", "escape"}},
    {"parking", {"lot", "barrier", "stripes", "kiosk"}},
}};

constexpr std::array<const char*, 16> kOnsets = {"b", "d", "f", "g", "k", "l", "m", "n",
                                                 "p", "r", "s", "t", "v", "z", "br", "st"};
constexpr std::array<const char*, 6> kVowels = {"a", "e", "i", "o", "u", "ai"};
constexpr std::array<const char*, 6> kCodas = {"", "n", "r", "l", "s", "m"};

std::string pseudo_word(std::mt19937_64& rng, std::size_t syllables) {
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
        w += kOnsets[rng() % kOnsets.size()];
        w += kVowels[rng() % kVowels.size()];
        w += kCodas[rng() % kCodas.size()];
    }
    return w;
}

// Distinct pseudo-words that do not collide with the fixed scene vocabulary.
std::vector<std::string> make_vocabulary(std::mt19937_64& rng, std::size_t count,
                                         std::size_t syllables, std::vector<std::string>& taken) {
    std::vector<std::string> out;
    while (out.size() < count) {
        std::string w = pseudo_word(rng, syllables);
        if (std::find(taken.begin(), taken.end(), w) != taken.end()) {
            continue;
        }
        taken.push_back(w);
        out.push_back(std::move(w));
    }
    return out;
}

Vector unit_gaussian(GaussianSource& g, std::size_t d) {
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v(i) = g();
    }
    return v / v.norm();
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace

void validate_spec(const SyntheticSpec& spec) {
    require(spec.num_places >= 2, ErrorKind::InvalidArgument, "need at least 2 places");
    require(spec.items_per_place >= 2, ErrorKind::InvalidArgument,
            "need at least 2 items per place (one query, one reference)");
    require(spec.dim >= 1, ErrorKind::InvalidArgument, "embedding dim must be positive");
    require(spec.num_groups >= 1 && spec.num_groups <= kScenes.size(), ErrorKind::InvalidArgument,
            "scene group count must be in [1, " + std::to_string(kScenes.size()) + "]");
    require(spec.fine_dims <= spec.dim, ErrorKind::InvalidArgument,
            "fine subspace rank exceeds the embedding dim");
    require(spec.quiet_channels <= spec.dim, ErrorKind::InvalidArgument,
            "quiet channel count exceeds the embedding dim");
    for (double v : {spec.group_scale, spec.place_scale, spec.fine_scale, spec.noise,
                     spec.quiet_scale, spec.quiet_offset}) {
        require(std::isfinite(v) && v >= 0.0, ErrorKind::InvalidArgument,
                "synthetic scales must be finite and non-negative");
    }
    require(spec.place_scale > 0.0, ErrorKind::InvalidArgument, "place scale must be positive");
    require(spec.place_word_keep >= 0.0 && spec.place_word_keep <= 1.0,
            ErrorKind::InvalidArgument, "landmark keep probability must be in [0, 1]");
    require(spec.attribute_vocab >= 1, ErrorKind::InvalidArgument,
            "attribute vocabulary must be nonempty");
}

std::vector<DatasetRecord> generate_synthetic(const SyntheticSpec& spec,
                                              const HashedBowEmbedder& embedder) {
    validate_spec(spec);
    auto rng = make_rng(spec.seed, 0x5157);
    GaussianSource gauss(rng);
    const std::size_t d = spec.dim;
    const auto dd = static_cast<Eigen::Index>(d);

    std::vector<Vector> group_dirs;
    for (std::size_t g = 0; g < spec.num_groups; ++g) {
        group_dirs.push_back(unit_gaussian(gauss, d));
    }
    std::vector<Vector> place_dirs;
    for (std::size_t p = 0; p < spec.num_places; ++p) {
        place_dirs.push_back(unit_gaussian(gauss, d));
    }
    Matrix fine_basis(static_cast<Eigen::Index>(spec.fine_dims), dd);
    if (spec.fine_dims > 0) {
        Eigen::MatrixXd raw(dd, static_cast<Eigen::Index>(spec.fine_dims));
        for (Eigen::Index j = 0; j < raw.cols(); ++j) {
            for (Eigen::Index i = 0; i < dd; ++i) {
                raw(i, j) = gauss();
            }
        }
        const Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
        const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(dd, raw.cols());
        fine_basis = q.transpose();
    }
    Vector quiet_sign(static_cast<Eigen::Index>(spec.quiet_channels));
    for (Eigen::Index k = 0; k < quiet_sign.size(); ++k) {
        quiet_sign(k) = gauss() < 0.0 ? -1.0 : 1.0;
    }

    std::vector<std::string> taken;
    for (const auto& s : kScenes) {
        taken.emplace_back(s.name);
        for (const char* w : s.words) {
            taken.emplace_back(w);
        }
    }
    const auto landmarks = make_vocabulary(rng, 3 * spec.num_places, 3, taken);
    const auto attributes = make_vocabulary(rng, spec.attribute_vocab, 2, taken);

    std::vector<DatasetRecord> records;
    records.reserve(spec.num_places * spec.items_per_place);
    const double fine_norm = spec.fine_dims > 0 ? 1.0 / std::sqrt(static_cast<double>(spec.fine_dims)) : 0.0;
    const double noise_norm = 1.0 / std::sqrt(static_cast<double>(d));
    for (std::size_t p = 0; p < spec.num_places; ++p) {
        const std::size_t g = p % spec.num_groups;
        const auto& scene = kScenes[g];
        for (std::size_t item = 0; item < spec.items_per_place; ++item) {
            Vector z = spec.group_scale * group_dirs[g] + spec.place_scale * place_dirs[p];
            for (Eigen::Index k = 0; k < fine_basis.rows(); ++k) {
                z += (spec.fine_scale * fine_norm * gauss()) * fine_basis.row(k).transpose();
            }
            for (Eigen::Index i = 0; i < dd; ++i) {
                z(i) += spec.noise * noise_norm * gauss();
            }
            for (Eigen::Index k = 0; k < quiet_sign.size(); ++k) {
                z(k) = z(k) * spec.quiet_scale + spec.quiet_offset * quiet_sign(k);
            }

            std::array<std::size_t, 4> order = {0, 1, 2, 3};
            deterministic_shuffle(std::span<std::size_t>(order), rng);
            std::string caption = std::string(scene.name) + " with " + scene.words[order[0]] +
                                  ", " + scene.words[order[1]] + ", " + scene.words[order[2]] +
                                  " and " + scene.words[order[3]];
            std::vector<std::string> kept;
            for (std::size_t w = 0; w < 3; ++w) {
                if (uniform01(rng) < spec.place_word_keep) {
                    kept.push_back(landmarks[3 * p + w]);
                }
            }
            if (!kept.empty()) {
                caption += " near";
                for (const auto& w : kept) {
                    caption += " " + w;
                }
            }
            caption += ", " + attributes[rng() % attributes.size()] + " in view";

            DatasetRecord r;
            r.id = "p" + std::to_string(p) + "-i" + std::to_string(item);
            r.place_id = static_cast<std::int64_t>(p);
            r.split = item == 0 ? Split::Query : Split::Reference;
            r.caption = std::move(caption);
            r.image_embedding = EmbeddingVector(std::vector<double>(z.data(), z.data() + z.size()));
            r.text_embedding = embedder.embed(r.caption).vector;
            records.push_back(std::move(r));
        }
    }
    return records;
}

} // namespace ssrmap
