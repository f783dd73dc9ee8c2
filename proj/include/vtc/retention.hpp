#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "vtc/bundle.hpp"
#include "vtc/kmeans.hpp"
#include "vtc/saliency.hpp"
#include "vtc/sequence.hpp"

namespace vtc {

/// floor(v + 0.5) for non-negative v.
std::size_t round_half_up(double v);

/// Tokens kept from a cluster of `cluster_size` at x percent: max(1, round(x * size / 100)).
std::size_t static_quota(std::size_t cluster_size, double x_percent);

/// Softmax over clusters of each cluster's mean member saliency.
std::vector<double> cluster_weights(const ClusterModel& model, const SaliencyMap& saliency);

/// max(1, round(min(1, lambda * weight) * cluster_size))
std::size_t dynamic_quota(std::size_t cluster_size, double weight, double lambda);

/// Clusters the bundle's visual tokens on either their embeddings or the
/// stored vision-encoder keys.
ClusterModel cluster_tokens(const TokenBundle& bundle, std::size_t k, ClusterBasis basis,
                            const KMeansOptions& options = {});

/// Trims or pads an ascending selection to exactly `target` indices by global
/// saliency rank: lowest-scoring selected tokens are dropped first (higher
/// index first on ties), highest-scoring unselected tokens are added first
/// (lower index first on ties). Returns ascending indices.
std::vector<std::size_t> fit_to_count(std::vector<std::size_t> selected, std::span<const double> scores,
                                      std::size_t target);

/// Static per-cluster retention: the top static_quota(|c|, x) tokens of every
/// cluster by saliency, in original order. With `retain_count` the pooled
/// selection is trimmed or padded to that exact size.
CompressedSequence variant1_static(const TokenBundle& bundle, const ClusterModel& model, const SaliencyMap& saliency,
                                   double x_percent, std::optional<std::size_t> retain_count = std::nullopt);

/// Dynamic per-cluster retention: cluster c_i keeps dynamic_quota(|c_i|, w_i, lambda)
/// tokens, with w from cluster_weights.
CompressedSequence variant2_dynamic(const TokenBundle& bundle, const ClusterModel& model, const SaliencyMap& saliency,
                                    double lambda, std::optional<std::size_t> retain_count = std::nullopt);

/// Coarse aggregation: the top tokens of every cluster are retained and the
/// rest of each cluster is averaged into one aggregated token. Output is the
/// retained tokens in original order followed by one aggregate per cluster in
/// cluster-id order, so the size is always retained + k. A cluster retains at
/// most |c| - 1 tokens so its aggregate is never empty.
CompressedSequence variant3_coarse(const TokenBundle& bundle, const ClusterModel& model, const SaliencyMap& saliency,
                                   double x_percent);

/// One mean token per cluster, ordered by a seeded shuffle (`random`) or by
/// the raster order of each cluster's rounded mean grid position
/// (`mean_position`, ties by cluster id).
CompressedSequence cluster_aggregate(const TokenBundle& bundle, const ClusterModel& model, std::uint64_t seed,
                                     OrderPolicy order = OrderPolicy::random);

/// cluster_tokens followed by variant1_static.
CompressedSequence cluster_saliency(const TokenBundle& bundle, const SaliencyMap& saliency, std::size_t k,
                                    double x_percent, const KMeansOptions& options,
                                    ClusterBasis basis = ClusterBasis::embeddings,
                                    std::optional<std::size_t> retain_count = std::nullopt);

}  // namespace vtc
