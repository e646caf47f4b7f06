#pragma once

// Federated SSR: the training set is split across A simulated nodes; each
// round every node trains from the shared parameters on its own data and
// the server averages the results.

#include "ssrmap/nnkit.hpp"
#include "ssrmap/ssr.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ssrmap {

enum class PartitionMode { Iid, Contiguous };

struct FedConfig {
    std::size_t nodes = 4;
    std::size_t rounds = 20;
    std::size_t local_epochs = 1;
    PartitionMode partition = PartitionMode::Iid;
    bool weighted = false; // weight by node dataset size instead of a plain mean
    std::uint64_t seed = 0;
};

// Disjoint, covering index sets whose sizes differ by at most one. Each set
// is sorted ascending.
std::vector<std::vector<std::size_t>> partition(std::size_t n, const FedConfig& config);

// Seed used by node `node` in round `round`; equals `seed` for node 0, round 0.
std::uint64_t derive_seed(std::uint64_t seed, std::size_t node, std::size_t round);

struct NodeState {
    std::size_t id = 0;
    std::vector<std::size_t> indices;
    ParamVector params;
    std::vector<double> losses; // per local epoch, last round
};

// Loads the shared parameters, trains local_epochs on the node's indices
// with a fresh optimizer, stores and returns the node's parameters.
ParamVector local_round(NodeState& node, const SsrModel& shared, const Matrix& images,
                        const Matrix& texts, std::size_t local_epochs, std::uint64_t seed);

ParamVector fed_average(std::span<const ParamVector> params);
ParamVector fed_average_weighted(std::span<const ParamVector> params,
                                 std::span<const std::size_t> sizes);

struct FedReport {
    std::vector<double> round_losses; // mean over nodes of each node's last local epoch loss
    double seconds = 0.0;
};

// `model` holds the initial parameters and the SSR settings; it is updated in place.
FedReport fed_train(SsrModel& model, const Matrix& images, const Matrix& texts,
                    const FedConfig& config);

} // namespace ssrmap
