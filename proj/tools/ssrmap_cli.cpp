// ssrmap command-line front end. Every subcommand reads and writes plain
// files; outputs are replaced atomically and depend only on inputs and --seed.

#include "ssrmap/binary_io.hpp"
#include "ssrmap/error.hpp"
#include "ssrmap/evalkit.hpp"
#include "ssrmap/federated.hpp"
#include "ssrmap/mapstore.hpp"
#include "ssrmap/ssr.hpp"
#include "ssrmap/textcodec.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>

using namespace ssrmap;

namespace {

enum ExitCode : int {
    kOk = 0,
    kOther = 1,
    kUsage = 2,
    kInvalidArgument = 3,
    kDimensionMismatch = 4,
    kFormat = 5,
    kIo = 6,
    kModelMismatch = 7,
};

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::InvalidArgument:
        return kInvalidArgument;
    case ErrorKind::DimensionMismatch:
        return kDimensionMismatch;
    case ErrorKind::Format:
        return kFormat;
    case ErrorKind::Io:
        return kIo;
    case ErrorKind::ModelMismatch:
        return kModelMismatch;
    }
    return kOther;
}

constexpr const char* kExitCodeHelp =
    "Exit codes:\n"
    "  0  success\n"
    "  1  unexpected failure\n"
    "  2  usage error (unknown flag, missing argument)\n"
    "  3  invalid argument\n"
    "  4  dimension mismatch\n"
    "  5  malformed or corrupt file\n"
    "  6  file I/O failure\n"
    "  7  codec model mismatch\n"
    "Errors are printed to stderr as one line: error <code> <kind>: <message>";

// Resolved settings of a run, echoed to stderr as one line.
class ConfigLog {
public:
    template <typename T>
    ConfigLog& add(const std::string& key, const T& value) {
        std::ostringstream v;
        v << value;
        entries_.emplace_back(key, v.str());
        return *this;
    }

    void emit(const std::string& command) const {
        std::cerr << "config " << command;
        for (const auto& [k, v] : entries_) {
            std::cerr << ' ' << k << '=' << v;
        }
        std::cerr << '\n';
    }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

struct SsrFlags {
    SsrConfig config;
    std::vector<std::size_t> dims;
    std::string direction = "student-teacher";
    std::size_t output_dim = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--nested-dims", dims,
                        "Nested prefix lengths C (default: 16,32,64,128,d_max within d_max)")
            ->delimiter(',');
        cmd->add_option("--temperature", config.temperature, "Softmax temperature");
        cmd->add_option("--alpha", config.text_weight, "Weight of the image prefix in fusion");
        cmd->add_option("--epochs", config.epochs, "Training epochs");
        cmd->add_option("--lr", config.learning_rate, "Adam learning rate");
        cmd->add_option("--batch-size", config.batch_size, "Minibatch size");
        cmd->add_flag("--full-batch", config.full_batch, "Train on the whole set as one batch");
        cmd->add_option("--hidden-dim", config.hidden_dim,
                        "Width of an optional tanh hidden layer (0: linear)");
        cmd->add_option("--init-noise", config.init_noise, "Std-dev of identity-init noise");
        cmd->add_option("--kl-direction", direction, "student-teacher or teacher-student")
            ->check(CLI::IsMember({"student-teacher", "teacher-student"}));
        cmd->add_option("--output-dim", output_dim, "Output dim d_max of G (0: input dim)");
    }

    SsrConfig resolve(std::uint64_t seed) const {
        SsrConfig c = config;
        c.nested_dims = dims;
        c.seed = seed;
        c.direction = direction == "student-teacher" ? KlDirection::StudentTeacher
                                                     : KlDirection::TeacherStudent;
        return c;
    }
};

std::string join(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + std::to_string(v[i]);
    }
    return out.empty() ? "default" : out;
}

ContextModel load_codec(const std::string& path) {
    return ContextModel::deserialize(read_file_bytes(path));
}

std::string read_text(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    return std::string(bytes.begin(), bytes.end());
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string line;
    std::istringstream in(text);
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        lines.push_back(line);
    }
    return lines;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Text-enhanced compressed maps for place recognition: SSR training, caption "
                 "coding, map compression and retrieval evaluation."};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.footer(kExitCodeHelp);
    app.set_version_flag("--version", "ssrmap 1.0");

    std::uint64_t seed = 0;
    app.add_option("--seed", seed, "Seed for every random choice");

    // gen-synthetic
    auto* gen = app.add_subcommand("gen-synthetic", "Generate the synthetic place dataset");
    SyntheticSpec spec;
    std::string gen_out;
    std::string gen_captions;
    gen->add_option("--out", gen_out, "Dataset output path (JSON lines)")->required();
    gen->add_option("--captions-out", gen_captions, "Also write the captions, one per line");
    gen->add_option("--places", spec.num_places, "Number of places");
    gen->add_option("--items", spec.items_per_place, "Items per place (item 0 is the query)");
    gen->add_option("--dim", spec.dim, "Image embedding dim");
    gen->add_option("--groups", spec.num_groups, "Scene types shared by places");
    gen->add_option("--group-scale", spec.group_scale, "Scene-type direction weight");
    gen->add_option("--place-scale", spec.place_scale, "Place direction weight");
    gen->add_option("--fine-dims", spec.fine_dims, "Rank of the per-item nuisance subspace");
    gen->add_option("--fine-scale", spec.fine_scale, "Per-item nuisance magnitude");
    gen->add_option("--noise", spec.noise, "Isotropic noise magnitude");
    gen->add_option("--quiet-channels", spec.quiet_channels, "Leading near-constant channels");
    gen->add_option("--quiet-scale", spec.quiet_scale, "Scale applied to quiet channels");
    gen->add_option("--quiet-offset", spec.quiet_offset, "Constant offset of quiet channels");
    gen->add_option("--landmark-keep", spec.place_word_keep,
                    "Chance each landmark word appears in a caption");
    gen->add_option("--attribute-vocab", spec.attribute_vocab, "Attribute vocabulary size");

    // fit-codec
    auto* fit = app.add_subcommand("fit-codec", "Fit the caption context model");
    std::string fit_dataset;
    std::string fit_corpus;
    std::string fit_out;
    int fit_order = 3;
    auto* fit_ds_opt = fit->add_option("--dataset", fit_dataset, "Dataset whose reference captions are the corpus");
    fit->add_option("--corpus", fit_corpus, "Text file with one caption per line")
        ->excludes(fit_ds_opt);
    fit->add_option("--order", fit_order, "Context order k in [0, 4]");
    fit->add_option("--out", fit_out, "Model output path")->required();

    // train
    auto* tr = app.add_subcommand("train", "Train an SSR model on the reference split");
    std::string tr_dataset;
    std::string tr_out;
    double tr_fraction = 1.0;
    SsrFlags tr_flags;
    tr->add_option("--dataset", tr_dataset, "Dataset path")->required();
    tr->add_option("--out", tr_out, "Model output path")->required();
    tr->add_option("--fraction", tr_fraction, "Fraction of the reference split to train on");
    tr_flags.attach(tr);

    // fed-train
    auto* fed = app.add_subcommand("fed-train", "Federated SSR training across simulated nodes");
    std::string fed_dataset;
    std::string fed_out;
    FedConfig fed_config;
    std::string fed_partition = "iid";
    SsrFlags fed_flags;
    fed->add_option("--dataset", fed_dataset, "Dataset path")->required();
    fed->add_option("--out", fed_out, "Model output path")->required();
    fed->add_option("--nodes", fed_config.nodes, "Node count A");
    fed->add_option("--rounds", fed_config.rounds, "Communication rounds");
    fed->add_option("--local-epochs", fed_config.local_epochs, "Local epochs per round");
    fed->add_option("--partition", fed_partition, "iid or contiguous")
        ->check(CLI::IsMember({"iid", "contiguous"}));
    fed->add_flag("--weighted", fed_config.weighted, "Weight the average by node data size");
    fed_flags.attach(fed);

    // compress
    auto* comp = app.add_subcommand("compress", "Build a compressed map from the reference split");
    std::string comp_dataset;
    std::string comp_model;
    std::string comp_codec;
    std::string comp_out;
    std::size_t comp_dims = 32;
    std::string comp_encoding = "fp32";
    comp->add_option("--dataset", comp_dataset, "Dataset path")->required();
    comp->add_option("--model", comp_model, "SSR model (required when --dims > 0)");
    comp->add_option("--codec", comp_codec, "Caption context model")->required();
    comp->add_option("--dims", comp_dims, "Prefix length c (0: captions only)");
    comp->add_option("--encoding", comp_encoding, "fp32, fp16 or q<bits>");
    comp->add_option("--out", comp_out, "Map output path")->required();

    // inspect-map
    auto* insp = app.add_subcommand("inspect-map", "Print a map's header and byte accounting");
    std::string insp_map;
    bool insp_elements = false;
    insp->add_option("map", insp_map, "Map path")->required();
    insp->add_flag("--elements", insp_elements, "Also list every element");

    // query
    auto* qry = app.add_subcommand("query", "Retrieve map elements for query records");
    std::string q_map;
    std::string q_model;
    std::string q_dataset;
    std::string q_id;
    std::size_t q_k = 5;
    qry->add_option("--map", q_map, "Map path")->required();
    qry->add_option("--model", q_model, "SSR model used to build the map (when c > 0)");
    qry->add_option("--dataset", q_dataset, "Dataset holding the query records")->required();
    qry->add_option("--id", q_id, "Query only this record id (default: every query record)");
    qry->add_option("-k,--k", q_k, "Results per query");

    // eval-sweep
    auto* sweep = app.add_subcommand("eval-sweep", "Evaluate methods across prefix budgets");
    std::string sw_dataset;
    std::string sw_out;
    SweepOptions sw;
    std::size_t sw_seed_count = 3;
    std::string sw_encoding = "fp32";
    SsrFlags sw_flags;
    sweep->add_option("--dataset", sw_dataset, "Dataset path")->required();
    sweep->add_option("--out", sw_out, "CSV output path (default: stdout)");
    sweep->add_option("--methods", sw.methods, "Methods to evaluate")->delimiter(',');
    sweep->add_option("--dims", sw.dims, "Prefix / code sizes")->delimiter(',');
    sweep->add_option("--k", sw.k, "Cutoff k for mAP@k and Recall@k");
    sweep->add_option("--seeds", sw_seed_count, "Number of seeds, starting at --seed");
    sweep->add_option("--encoding", sw_encoding, "fp32, fp16 or q<bits>");
    sweep->add_option("--fraction", sw.fraction, "Training fraction for learned methods");
    sweep->add_option("--codec-order", sw.codec_order, "Caption context model order");
    sweep->add_option("--nodes", sw.fed.nodes, "Federated node count for ssr-fl");
    sweep->add_option("--rounds", sw.fed.rounds, "Federated rounds for ssr-fl");
    sweep->add_option("--ae-batch-size", sw.ae.batch_size, "Autoencoder minibatch size");
    sw_flags.attach(sweep);

    // zip / unzip
    auto* zip = app.add_subcommand("zip", "Arithmetic-code a text file");
    auto* unzip = app.add_subcommand("unzip", "Decode a file written by zip");
    std::string z_in;
    std::string z_out;
    std::string z_model;
    for (auto* cmd : {zip, unzip}) {
        cmd->add_option("input", z_in, "Input path")->required();
        cmd->add_option("output", z_out, "Output path")->required();
        cmd->add_option("--model", z_model, "Context model file (from fit-codec)")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*gen) {
            spec.seed = seed;
            ConfigLog()
                .add("seed", seed).add("places", spec.num_places).add("items", spec.items_per_place)
                .add("dim", spec.dim).add("groups", spec.num_groups).add("group_scale", spec.group_scale)
                .add("place_scale", spec.place_scale).add("fine_dims", spec.fine_dims)
                .add("fine_scale", spec.fine_scale).add("noise", spec.noise)
                .add("quiet_channels", spec.quiet_channels).add("quiet_scale", spec.quiet_scale)
                .add("quiet_offset", spec.quiet_offset).add("landmark_keep", spec.place_word_keep)
                .add("attribute_vocab", spec.attribute_vocab).add("out", gen_out)
                .emit("gen-synthetic");
            const auto records = generate_synthetic(spec);
            save_dataset(gen_out, records);
            if (!gen_captions.empty()) {
                std::string text;
                for (const auto& r : records) {
                    text += r.caption + "\n";
                }
                write_file_atomic(gen_captions, text);
            }
            std::cout << "wrote " << records.size() << " records to " << gen_out << "\n";
        } else if (*fit) {
            require(!fit_dataset.empty() || !fit_corpus.empty(), ErrorKind::InvalidArgument,
                    "fit-codec needs --dataset or --corpus");
            ConfigLog().add("order", fit_order).add("dataset", fit_dataset).add("corpus", fit_corpus)
                .add("out", fit_out).emit("fit-codec");
            std::vector<std::string> corpus;
            if (!fit_dataset.empty()) {
                corpus = select_split(load_dataset(fit_dataset), Split::Reference).captions;
            } else {
                corpus = split_lines(read_text(fit_corpus));
            }
            const auto model = ContextModel::fit(corpus, fit_order);
            const auto bytes = model.serialize();
            write_file_atomic(fit_out, bytes);
            std::cout << "fit order-" << fit_order << " model on " << corpus.size() << " captions: "
                      << model.context_count() << " contexts, " << bytes.size() << " bytes\n";
        } else if (*tr || *fed) {
            const bool federated = static_cast<bool>(*fed);
            const auto& flags = federated ? fed_flags : tr_flags;
            const auto records = load_dataset(federated ? fed_dataset : tr_dataset);
            const auto ref = select_split(records, Split::Reference);
            require(ref.rows.size() >= 2, ErrorKind::InvalidArgument,
                    "training needs at least 2 reference records");
            const auto d = static_cast<std::size_t>(ref.images.cols());
            const std::size_t d_max = flags.output_dim == 0 ? d : flags.output_dim;
            const SsrConfig config = flags.resolve(seed);
            ConfigLog log;
            log.add("seed", seed).add("input_dim", d).add("output_dim", d_max)
                .add("nested_dims", join(flags.dims)).add("temperature", config.temperature)
                .add("alpha", config.text_weight).add("epochs", config.epochs)
                .add("lr", config.learning_rate).add("batch_size", config.batch_size)
                .add("full_batch", config.full_batch).add("hidden_dim", config.hidden_dim)
                .add("kl_direction", flags.direction);
            SsrModel model = SsrModel::create(d, d_max, config);
            if (federated) {
                fed_config.seed = seed;
                fed_config.partition =
                    fed_partition == "iid" ? PartitionMode::Iid : PartitionMode::Contiguous;
                log.add("nodes", fed_config.nodes).add("rounds", fed_config.rounds)
                    .add("local_epochs", fed_config.local_epochs).add("partition", fed_partition)
                    .add("weighted", fed_config.weighted).add("out", fed_out).emit("fed-train");
                const auto report = fed_train(model, ref.images, ref.texts, fed_config);
                for (std::size_t r = 0; r < report.round_losses.size(); ++r) {
                    std::printf("round %zu loss %.6f\n", r + 1, report.round_losses[r]);
                }
                std::printf("seconds %.2f\n", report.seconds);
                save_model(fed_out, model);
            } else {
                log.add("fraction", tr_fraction).add("out", tr_out).emit("train");
                const auto report = train(model, ref.images, ref.texts, tr_fraction);
                std::printf("elements %zu\ninitial_loss %.6f\n", report.elements_used,
                            report.initial_loss);
                for (std::size_t e = 0; e < report.epoch_losses.size(); ++e) {
                    std::printf("epoch %zu loss %.6f\n", e + 1, report.epoch_losses[e]);
                }
                std::printf("final_loss %.6f\n", report.final_loss);
                const auto dims = config.nested_dims.empty() ? default_nested_dims(d_max)
                                                             : config.nested_dims;
                for (std::size_t i = 0; i < dims.size(); ++i) {
                    std::printf("l_c %zu %.6f\n", dims[i], report.final_dim_losses[i]);
                }
                std::printf("seconds %.2f\n", report.seconds);
                save_model(tr_out, model);
            }
        } else if (*comp) {
            const auto encoding = parse_encoding(comp_encoding);
            ConfigLog().add("dataset", comp_dataset).add("model", comp_model).add("codec", comp_codec)
                .add("dims", comp_dims).add("encoding", encoding_name(encoding)).add("out", comp_out)
                .emit("compress");
            const auto ref = select_split(load_dataset(comp_dataset), Split::Reference);
            const auto codec = load_codec(comp_codec);
            std::optional<SsrModel> model;
            if (comp_dims > 0) {
                require(!comp_model.empty(), ErrorKind::InvalidArgument,
                        "--model is required when --dims > 0");
                model = load_model(comp_model);
            }
            const auto map = write_map_elements(ref.ids, ref.images, ref.captions,
                                                model ? &*model : nullptr, comp_dims, codec, encoding);
            write_map(comp_out, map);
            std::printf("elements %zu\nbytes_per_element %.4f\nbytes_per_element_amortized %.4f\n",
                        map.size(), map.size() ? bytes_per_element(map, false) : 0.0,
                        map.size() ? bytes_per_element(map, true) : 0.0);
        } else if (*insp) {
            const auto bytes = read_file_bytes(insp_map);
            const auto map = parse_map(bytes);
            std::printf("magic SSRM\nversion %u\nelements %zu\ndims %u\nencoding %s\n",
                        static_cast<unsigned>(kMapVersion), map.size(), map.dims,
                        encoding_name({map.encoding, map.bits}).c_str());
            std::printf("codec_model_bytes %zu\nconfig %s\nfile_bytes %zu\nprefix_bytes %zu\n",
                        map.codec_model.size(), map.config_summary.c_str(), bytes.size(),
                        map.prefix_bytes());
            if (map.size() > 0) {
                const double per = bytes_per_element(map, false);
                const double amort = bytes_per_element(map, true);
                std::printf("bytes_per_element %.4f (%.4f KB)\n", per, per / 1000.0);
                std::printf("bytes_per_element_amortized %.4f (%.4f KB)\n", amort, amort / 1000.0);
            }
            if (insp_elements) {
                for (const auto& e : map.elements) {
                    std::printf("%s caption_bytes %u payload_bytes %zu\n", e.id.c_str(),
                                e.caption.original_length, e.caption.payload_bytes());
                }
            }
        } else if (*qry) {
            const auto map = read_map(q_map);
            const auto codec = ContextModel::deserialize(map.codec_model);
            const auto records = load_dataset(q_dataset);
            ConfigLog().add("map", q_map).add("model", q_model).add("dataset", q_dataset)
                .add("id", q_id.empty() ? "all-queries" : q_id).add("k", q_k).emit("query");
            std::vector<const DatasetRecord*> queries;
            for (const auto& r : records) {
                if (q_id.empty() ? r.split == Split::Query : r.id == q_id) {
                    queries.push_back(&r);
                }
            }
            require(!queries.empty(), ErrorKind::InvalidArgument,
                    q_id.empty() ? "dataset has no query records" : "no record with id " + q_id);
            require(map.size() > 0, ErrorKind::InvalidArgument, "map is empty");
            std::optional<SsrModel> model;
            if (map.dims > 0) {
                require(!q_model.empty(), ErrorKind::InvalidArgument,
                        "--model is required for maps with image prefixes");
                model = load_model(q_model);
            }
            const double alpha = model ? model->config().text_weight : 0.0;
            // Reference side: stored prefixes and decoded captions.
            const HashedBowEmbedder embedder;
            Matrix ref_text(static_cast<Eigen::Index>(map.size()),
                            static_cast<Eigen::Index>(embedder.dim()));
            for (std::size_t i = 0; i < map.size(); ++i) {
                ref_text.row(static_cast<Eigen::Index>(i)) =
                    embedder.embed(decode(codec, map.elements[i].caption)).vector.view().transpose();
            }
            Matrix q_text(static_cast<Eigen::Index>(queries.size()), ref_text.cols());
            Matrix q_img(static_cast<Eigen::Index>(queries.size()),
                         static_cast<Eigen::Index>(queries.front()->image_embedding.dim()));
            for (std::size_t i = 0; i < queries.size(); ++i) {
                const auto r = static_cast<Eigen::Index>(i);
                q_text.row(r) = embedder.embed(queries[i]->caption).vector.view().transpose();
                q_img.row(r) = queries[i]->image_embedding.view().transpose();
            }
            Matrix ref_vec = ref_text;
            Matrix q_vec = q_text;
            if (map.dims > 0) {
                // Compress the query prefix with the map's own encoding.
                Matrix prefixes = project_rows(*model, q_img, map.dims);
                CompressedMap probe = map;
                probe.elements.clear();
                for (Eigen::Index i = 0; i < prefixes.rows(); ++i) {
                    MapElement e;
                    e.prefix.assign(row_span(prefixes, i).begin(), row_span(prefixes, i).end());
                    probe.elements.push_back(std::move(e));
                }
                const auto stored = map_prefixes(parse_map(serialize_map(probe)));
                ref_vec = fuse_rows(map_prefixes(map), ref_text, alpha);
                q_vec = fuse_rows(stored, q_text, alpha);
            }
            const auto ranked = rank_by_cosine(q_vec, ref_vec, q_k);
            for (std::size_t i = 0; i < queries.size(); ++i) {
                const auto qv = EmbeddingVector::from_row(q_vec, static_cast<Eigen::Index>(i));
                for (std::size_t r = 0; r < ranked[i].size(); ++r) {
                    const auto idx = ranked[i][r];
                    const auto rv = EmbeddingVector::from_row(ref_vec, static_cast<Eigen::Index>(idx));
                    const double sim = qv.is_zero() || rv.is_zero() ? 0.0 : cosine_similarity(qv, rv);
                    std::printf("%s %zu %s %.6f\n", queries[i]->id.c_str(), r + 1,
                                map.elements[idx].id.c_str(), sim);
                }
            }
        } else if (*sweep) {
            sw.encoding = parse_encoding(sw_encoding);
            sw.seeds.clear();
            for (std::size_t s = 0; s < sw_seed_count; ++s) {
                sw.seeds.push_back(seed + s);
            }
            sw.ssr = sw_flags.resolve(seed);
            require(sw_flags.output_dim == 0, ErrorKind::InvalidArgument,
                    "eval-sweep trains square models; --output-dim is not supported");
            std::string methods;
            for (const auto& m : sw.methods) {
                methods += (methods.empty() ? "" : ",") + m;
            }
            ConfigLog().add("dataset", sw_dataset).add("methods", methods).add("dims", join(sw.dims))
                .add("k", sw.k).add("seeds", sw_seed_count).add("first_seed", seed)
                .add("encoding", encoding_name(sw.encoding)).add("fraction", sw.fraction)
                .add("codec_order", sw.codec_order).add("nodes", sw.fed.nodes)
                .add("rounds", sw.fed.rounds).add("ae_batch_size", sw.ae.batch_size)
                .add("ssr", describe_config(sw.ssr)).emit("eval-sweep");
            const auto rows = run_sweep(load_dataset(sw_dataset), sw);
            const auto csv = format_csv(rows);
            if (sw_out.empty()) {
                std::cout << csv;
            } else {
                write_file_atomic(sw_out, csv);
            }
        } else if (*zip || *unzip) {
            ConfigLog().add("input", z_in).add("output", z_out).add("model", z_model)
                .emit(*zip ? "zip" : "unzip");
            const auto model = load_codec(z_model);
            if (*zip) {
                const auto text = read_text(z_in);
                const auto blob = encode(model, text);
                write_file_atomic(z_out, serialize_blob(blob));
                std::printf("original_bytes %zu\npayload_bytes %zu\n", text.size(),
                            blob.payload_bytes());
            } else {
                const auto blob = parse_blob(read_file_bytes(z_in));
                write_file_atomic(z_out, decode(model, blob));
            }
        }
    } catch (const Error& e) {
        const int code = exit_code_for(e.kind());
        std::cerr << "error " << code << ' ' << to_string(e.kind()) << ": " << e.what() << '\n';
        return code;
    } catch (const std::exception& e) {
        std::cerr << "error " << kOther << " internal: " << e.what() << '\n';
        return kOther;
    }
    return kOk;
}
