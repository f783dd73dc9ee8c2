#include "vtc/retention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vtc/errors.hpp"
#include "vtc/rng.hpp"
#include "vtc/text.hpp"

namespace vtc {
namespace {

using Reason = ValidationError::Reason;

void check_inputs(const TokenBundle& bundle, const ClusterModel& model, const SaliencyMap* saliency) {
    if (model.labels.size() != bundle.n_visual()) {
        throw ValidationError(Reason::shape_mismatch, "model",
                              "cluster labels cover " + std::to_string(model.labels.size()) + " tokens, bundle has " +
                                  std::to_string(bundle.n_visual()));
    }
    if (saliency && saliency->size() != bundle.n_visual()) {
        throw ValidationError(Reason::shape_mismatch, "saliency",
                              "saliency covers " + std::to_string(saliency->size()) + " tokens, bundle has " +
                                  std::to_string(bundle.n_visual()));
    }
}

// Top `count` members of one cluster by saliency (ties: lower index), ascending.
std::vector<std::size_t> top_members(const std::vector<std::size_t>& members, const SaliencyMap& saliency,
                                     std::size_t count) {
    std::vector<double> local(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) local[i] = saliency.scores[members[i]];
    auto picked = top_k_indices(local, count);
    for (auto& p : picked) p = members[p];
    return picked;
}

template <typename Quota>
std::vector<std::size_t> per_cluster_selection(const ClusterModel& model, const SaliencyMap& saliency, Quota quota) {
    std::vector<std::size_t> selected;
    const auto groups = model.members();
    for (std::size_t c = 0; c < groups.size(); ++c) {
        if (groups[c].empty()) continue;
        const std::size_t q = std::min(quota(c, groups[c].size()), groups[c].size());
        auto top = top_members(groups[c], saliency, q);
        selected.insert(selected.end(), top.begin(), top.end());
    }
    std::sort(selected.begin(), selected.end());
    return selected;
}

void check_retain_count(std::optional<std::size_t> retain_count, std::size_t n) {
    if (retain_count && (*retain_count < 1 || *retain_count > n)) {
        throw ValidationError(Reason::out_of_range, "retain_count",
                              std::to_string(*retain_count) + " not in [1, " + std::to_string(n) + "]");
    }
}

}  // namespace

std::size_t round_half_up(double v) { return static_cast<std::size_t>(std::floor(v + 0.5)); }

std::size_t static_quota(std::size_t cluster_size, double x_percent) {
    return std::max<std::size_t>(1, round_half_up(x_percent * static_cast<double>(cluster_size) / 100.0));
}

std::size_t dynamic_quota(std::size_t cluster_size, double weight, double lambda) {
    const double fraction = std::min(1.0, lambda * weight);
    return std::max<std::size_t>(1, round_half_up(fraction * static_cast<double>(cluster_size)));
}

std::vector<double> cluster_weights(const ClusterModel& model, const SaliencyMap& saliency) {
    std::vector<double> sums(model.k, 0.0);
    std::vector<std::size_t> counts(model.k, 0);
    for (std::size_t i = 0; i < model.labels.size(); ++i) {
        sums[model.labels[i]] += saliency.scores[i];
        ++counts[model.labels[i]];
    }
    std::vector<double> w(model.k, 0.0);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < model.k; ++c) {
        if (counts[c] == 0) continue;
        w[c] = sums[c] / static_cast<double>(counts[c]);
        peak = std::max(peak, w[c]);
    }
    double total = 0.0;
    for (std::size_t c = 0; c < model.k; ++c) {
        w[c] = counts[c] == 0 ? 0.0 : std::exp(w[c] - peak);
        total += w[c];
    }
    for (double& v : w) v /= total;
    return w;
}

ClusterModel cluster_tokens(const TokenBundle& bundle, std::size_t k, ClusterBasis basis, const KMeansOptions& options) {
    if (basis == ClusterBasis::keys && !bundle.visual_keys) {
        throw ValidationError(Reason::bad_parameter, "basis", "key-based clustering needs visual_keys in the bundle");
    }
    const Matrix& points = basis == ClusterBasis::keys ? *bundle.visual_keys : bundle.visual_embeddings;
    auto model = kmeans_pp(points, k, options);
    model.basis = basis;
    return model;
}

std::vector<std::size_t> fit_to_count(std::vector<std::size_t> selected, std::span<const double> scores,
                                      std::size_t target) {
    check_retain_count(target, scores.size());
    std::sort(selected.begin(), selected.end());
    if (selected.size() > target) {
        std::vector<std::size_t> drop_order = selected;
        std::sort(drop_order.begin(), drop_order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] < scores[b];
            return a > b;
        });
        drop_order.resize(selected.size() - target);
        std::sort(drop_order.begin(), drop_order.end());
        std::vector<std::size_t> kept;
        std::set_difference(selected.begin(), selected.end(), drop_order.begin(), drop_order.end(),
                            std::back_inserter(kept));
        return kept;
    }
    if (selected.size() < target) {
        std::vector<std::size_t> all(scores.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        std::vector<std::size_t> candidates;
        std::set_difference(all.begin(), all.end(), selected.begin(), selected.end(), std::back_inserter(candidates));
        std::sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return a < b;
        });
        candidates.resize(target - selected.size());
        selected.insert(selected.end(), candidates.begin(), candidates.end());
        std::sort(selected.begin(), selected.end());
    }
    return selected;
}

CompressedSequence variant1_static(const TokenBundle& bundle, const ClusterModel& model, const SaliencyMap& saliency,
                                   double x_percent, std::optional<std::size_t> retain_count) {
    check_inputs(bundle, model, &saliency);
    if (!(x_percent > 0.0 && x_percent <= 100.0))
        throw ValidationError(Reason::out_of_range, "x_percent", "must be in (0, 100]");
    check_retain_count(retain_count, bundle.n_visual());

    auto selected = per_cluster_selection(
        model, saliency, [&](std::size_t, std::size_t size) { return static_quota(size, x_percent); });
    const std::size_t per_cluster_total = selected.size();
    if (retain_count) selected = fit_to_count(std::move(selected), saliency.scores, *retain_count);

    auto seq = gather(bundle, selected);
    seq.notes["variant"] = "static";
    seq.notes["k"] = std::to_string(model.k);
    seq.notes["x_percent"] = format_double(x_percent);
    seq.notes["per_cluster_total"] = std::to_string(per_cluster_total);
    return seq;
}

CompressedSequence variant2_dynamic(const TokenBundle& bundle, const ClusterModel& model, const SaliencyMap& saliency,
                                    double lambda, std::optional<std::size_t> retain_count) {
    check_inputs(bundle, model, &saliency);
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ValidationError(Reason::out_of_range, "lambda", "must be positive");
    check_retain_count(retain_count, bundle.n_visual());

    const auto weights = cluster_weights(model, saliency);
    auto selected = per_cluster_selection(model, saliency, [&](std::size_t c, std::size_t size) {
        return dynamic_quota(size, weights[c], lambda);
    });
    const std::size_t per_cluster_total = selected.size();
    if (retain_count) selected = fit_to_count(std::move(selected), saliency.scores, *retain_count);

    auto seq = gather(bundle, selected);
    seq.notes["variant"] = "dynamic";
    seq.notes["k"] = std::to_string(model.k);
    seq.notes["lambda"] = format_double(lambda);
    seq.notes["per_cluster_total"] = std::to_string(per_cluster_total);
    return seq;
}

CompressedSequence variant3_coarse(const TokenBundle& bundle, const ClusterModel& model, const SaliencyMap& saliency,
                                   double x_percent) {
    check_inputs(bundle, model, &saliency);
    if (!(x_percent > 0.0 && x_percent < 100.0))
        throw ValidationError(Reason::out_of_range, "x_percent", "must be in (0, 100)");

    const auto groups = model.members();
    std::vector<std::size_t> retained;
    std::vector<std::vector<std::size_t>> remainders(groups.size());
    for (std::size_t c = 0; c < groups.size(); ++c) {
        const auto& members = groups[c];
        if (members.empty()) continue;
        const std::size_t quota = std::min(static_quota(members.size(), x_percent), members.size() - 1);
        std::vector<std::size_t> top;
        if (quota > 0) top = top_members(members, saliency, quota);
        std::set_difference(members.begin(), members.end(), top.begin(), top.end(), std::back_inserter(remainders[c]));
        retained.insert(retained.end(), top.begin(), top.end());
    }
    std::sort(retained.begin(), retained.end());

    CompressedSequence seq;
    seq.embeddings = Matrix(retained.size() + groups.size(), bundle.dim());
    std::size_t out = 0;
    for (auto i : retained) {
        auto src = bundle.visual_embeddings.row(i);
        std::copy(src.begin(), src.end(), seq.embeddings.row(out++).begin());
        seq.provenance.emplace_back(Retained{i});
    }
    for (auto& rest : remainders) {
        const auto mean = mean_embedding(bundle.visual_embeddings, rest);
        std::copy(mean.begin(), mean.end(), seq.embeddings.row(out++).begin());
        seq.provenance.emplace_back(aggregate_provenance(bundle.grid, std::move(rest)));
    }
    seq.notes["variant"] = "coarse";
    seq.notes["k"] = std::to_string(model.k);
    seq.notes["x_percent"] = format_double(x_percent);
    seq.notes["retained"] = std::to_string(retained.size());
    return seq;
}

CompressedSequence cluster_aggregate(const TokenBundle& bundle, const ClusterModel& model, std::uint64_t seed,
                                     OrderPolicy order) {
    check_inputs(bundle, model, nullptr);
    if (order == OrderPolicy::original)
        throw ValidationError(Reason::bad_parameter, "order_policy", "aggregates are ordered randomly or by mean position");

    auto groups = model.members();
    std::vector<Aggregated> aggregates;
    aggregates.reserve(groups.size());
    for (auto& g : groups) aggregates.push_back(aggregate_provenance(bundle.grid, std::move(g)));

    std::vector<std::size_t> cluster_order(aggregates.size());
    std::iota(cluster_order.begin(), cluster_order.end(), std::size_t{0});
    if (order == OrderPolicy::random) {
        Rng rng(seed);
        for (std::size_t i = cluster_order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.below(i));
            std::swap(cluster_order[i - 1], cluster_order[j]);
        }
    } else {
        auto raster = [&](std::size_t c) {
            return round_half_up(aggregates[c].mean_row) * bundle.grid.cols + round_half_up(aggregates[c].mean_col);
        };
        std::stable_sort(cluster_order.begin(), cluster_order.end(),
                         [&](std::size_t a, std::size_t b) { return raster(a) < raster(b); });
    }

    CompressedSequence seq;
    seq.embeddings = Matrix(cluster_order.size(), bundle.dim());
    for (std::size_t out = 0; out < cluster_order.size(); ++out) {
        auto& agg = aggregates[cluster_order[out]];
        const auto mean = mean_embedding(bundle.visual_embeddings, agg.members);
        std::copy(mean.begin(), mean.end(), seq.embeddings.row(out).begin());
        seq.provenance.emplace_back(std::move(agg));
    }
    seq.order_policy = order;
    seq.seed = seed;
    seq.notes["k"] = std::to_string(model.k);
    if (order == OrderPolicy::random) seq.notes["rng"] = Rng::kAlgorithm;
    return seq;
}

CompressedSequence cluster_saliency(const TokenBundle& bundle, const SaliencyMap& saliency, std::size_t k,
                                    double x_percent, const KMeansOptions& options, ClusterBasis basis,
                                    std::optional<std::size_t> retain_count) {
    const auto model = cluster_tokens(bundle, k, basis, options);
    auto seq = variant1_static(bundle, model, saliency, x_percent, retain_count);
    seq.seed = options.seed;
    return seq;
}

}  // namespace vtc
