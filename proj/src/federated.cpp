#include "ssrmap/federated.hpp"

#include "ssrmap/error.hpp"
#include "ssrmap/rng.hpp"

#include <algorithm>
#include <chrono>

namespace ssrmap {

namespace {

constexpr std::uint64_t kPartitionSalt = 0x6006;

} // namespace

std::vector<std::vector<std::size_t>> partition(std::size_t n, const FedConfig& config) {
    require(config.nodes >= 1, ErrorKind::InvalidArgument, "node count must be at least 1");
    require(n >= config.nodes, ErrorKind::InvalidArgument,
            "cannot split " + std::to_string(n) + " elements across " +
                std::to_string(config.nodes) + " nodes");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        order[i] = i;
    }
    if (config.partition == PartitionMode::Iid) {
        auto rng = make_rng(config.seed, kPartitionSalt);
        deterministic_shuffle(std::span<std::size_t>(order), rng);
    }
    std::vector<std::vector<std::size_t>> parts(config.nodes);
    const std::size_t base = n / config.nodes;
    const std::size_t extra = n % config.nodes;
    std::size_t pos = 0;
    for (std::size_t a = 0; a < config.nodes; ++a) {
        const std::size_t size = base + (a < extra ? 1 : 0);
        parts[a].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        std::sort(parts[a].begin(), parts[a].end());
        pos += size;
    }
    return parts;
}

std::uint64_t derive_seed(std::uint64_t seed, std::size_t node, std::size_t round) {
    return seed + static_cast<std::uint64_t>(node) * 0x9e3779b97f4a7c15ULL +
           static_cast<std::uint64_t>(round) * 0xbf58476d1ce4e5b9ULL;
}

ParamVector local_round(NodeState& node, const SsrModel& shared, const Matrix& images,
                        const Matrix& texts, std::size_t local_epochs, std::uint64_t seed) {
    require(!node.indices.empty(), ErrorKind::InvalidArgument,
            "node " + std::to_string(node.id) + " has no data");
    SsrModel local = shared;
    node.losses = train_epochs(local, images, texts, node.indices, local_epochs, seed);
    node.params = local.net().flatten();
    return node.params;
}

ParamVector fed_average(std::span<const ParamVector> params) {
    require(!params.empty(), ErrorKind::InvalidArgument, "nothing to average");
    const std::size_t n = params.front().size();
    std::vector<double> sum(n, 0.0);
    for (const auto& p : params) {
        require(p.size() == n, ErrorKind::DimensionMismatch,
                "parameter vectors to average have different lengths");
        for (std::size_t i = 0; i < n; ++i) {
            sum[i] += p[i];
        }
    }
    const double inv = 1.0 / static_cast<double>(params.size());
    for (double& v : sum) {
        v *= inv;
    }
    return ParamVector(std::move(sum));
}

ParamVector fed_average_weighted(std::span<const ParamVector> params,
                                 std::span<const std::size_t> sizes) {
    require(!params.empty(), ErrorKind::InvalidArgument, "nothing to average");
    require(params.size() == sizes.size(), ErrorKind::DimensionMismatch,
            "one weight per parameter vector is required");
    const std::size_t n = params.front().size();
    double total = 0.0;
    for (std::size_t s : sizes) {
        total += static_cast<double>(s);
    }
    require(total > 0.0, ErrorKind::InvalidArgument, "weights sum to zero");
    std::vector<double> sum(n, 0.0);
    for (std::size_t a = 0; a < params.size(); ++a) {
        require(params[a].size() == n, ErrorKind::DimensionMismatch,
                "parameter vectors to average have different lengths");
        const double w = static_cast<double>(sizes[a]) / total;
        for (std::size_t i = 0; i < n; ++i) {
            sum[i] += w * params[a][i];
        }
    }
    return ParamVector(std::move(sum));
}

FedReport fed_train(SsrModel& model, const Matrix& images, const Matrix& texts,
                    const FedConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    const auto parts = partition(static_cast<std::size_t>(images.rows()), config);
    std::vector<NodeState> nodes(parts.size());
    for (std::size_t a = 0; a < parts.size(); ++a) {
        nodes[a].id = a;
        nodes[a].indices = parts[a];
    }

    FedReport report;
    std::vector<ParamVector> updates(nodes.size());
    std::vector<std::size_t> sizes(nodes.size());
    for (std::size_t round = 0; round < config.rounds; ++round) {
        double loss = 0.0;
        for (auto& node : nodes) {
            updates[node.id] = local_round(node, model, images, texts, config.local_epochs,
                                           derive_seed(config.seed, node.id, round));
            sizes[node.id] = node.indices.size();
            if (!node.losses.empty()) {
                loss += node.losses.back();
            }
        }
        const ParamVector merged =
            config.weighted ? fed_average_weighted(updates, sizes) : fed_average(updates);
        model.net().unflatten(merged);
        report.round_losses.push_back(loss / static_cast<double>(nodes.size()));
    }
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

} // namespace ssrmap
