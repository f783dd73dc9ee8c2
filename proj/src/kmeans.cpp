#include "vtc/kmeans.hpp"

#include <cmath>

#include "vtc/errors.hpp"
#include "vtc/parallel.hpp"
#include "vtc/rng.hpp"

namespace vtc {
namespace {

using Reason = ValidationError::Reason;

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        acc += d * d;
    }
    return acc;
}

// Picks the index whose cumulative weight first exceeds `target`, skipping
// zero-weight entries.
std::size_t pick_weighted(const std::vector<double>& weights, double target) {
    double running = 0.0;
    std::size_t last_positive = weights.size();
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        running += weights[i];
        last_positive = i;
        if (running > target) return i;
    }
    return last_positive;
}

std::size_t local_trials(std::size_t k, std::size_t requested) {
    if (requested > 0) return requested;
    return 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
}

Matrix seed_centers(const Matrix& points, std::size_t k, std::size_t trials, Rng& rng, unsigned threads) {
    const std::size_t n = points.rows();
    std::vector<std::size_t> chosen;
    chosen.reserve(k);
    std::vector<char> taken(n, 0);
    std::vector<double> nearest(n, 0.0);

    const auto first = static_cast<std::size_t>(rng.below(n));
    chosen.push_back(first);
    taken[first] = 1;
    parallel_for(n, threads, [&](std::size_t i) { nearest[i] = squared_distance(points.row(i), points.row(first)); });

    std::vector<double> candidate_nearest(n), best_nearest(n);
    while (chosen.size() < k) {
        double total = 0.0;
        for (double d : nearest) total += d;
        std::size_t next;
        if (total > 0.0) {
            // Draw candidates with probability proportional to D^2 and keep
            // the one that lowers the total potential most.
            next = n;
            double best_potential = 0.0;
            for (std::size_t t = 0; t < trials; ++t) {
                const std::size_t cand = pick_weighted(nearest, rng.uniform01() * total);
                parallel_for(n, threads, [&](std::size_t i) {
                    candidate_nearest[i] = std::min(nearest[i], squared_distance(points.row(i), points.row(cand)));
                });
                double potential = 0.0;
                for (double d : candidate_nearest) potential += d;
                if (next == n || potential < best_potential) {
                    next = cand;
                    best_potential = potential;
                    best_nearest.swap(candidate_nearest);
                }
            }
            nearest.swap(best_nearest);
        } else {
            // Only duplicates of chosen centers remain; take an unused index uniformly.
            std::vector<std::size_t> unused;
            for (std::size_t i = 0; i < n; ++i)
                if (!taken[i]) unused.push_back(i);
            next = unused[static_cast<std::size_t>(rng.below(unused.size()))];
        }
        chosen.push_back(next);
        taken[next] = 1;
        nearest[next] = 0.0;
    }
    return gather_rows(points, chosen);
}

// Nearest centroid per point; lowest centroid index wins ties, except that a
// point keeps its current label when that label is among the nearest.
void assign(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& labels, bool has_labels,
            unsigned threads) {
    parallel_for(points.rows(), threads, [&](std::size_t i) {
        std::size_t best = 0;
        double best_d = squared_distance(points.row(i), centroids.row(0));
        for (std::size_t c = 1; c < centroids.rows(); ++c) {
            const double d = squared_distance(points.row(i), centroids.row(c));
            if (d < best_d) {
                best_d = d;
                best = c;
            }
        }
        if (has_labels && squared_distance(points.row(i), centroids.row(labels[i])) == best_d) return;
        labels[i] = best;
    });
}

std::vector<std::size_t> count_sizes(const std::vector<std::size_t>& labels, std::size_t k) {
    std::vector<std::size_t> sizes(k, 0);
    for (auto l : labels) ++sizes[l];
    return sizes;
}

// Moves the point farthest from its centroid (among clusters that can spare
// one) into each empty cluster.
void repair_empty(const Matrix& points, Matrix& centroids, std::vector<std::size_t>& labels,
                  std::vector<std::size_t>& sizes) {
    for (std::size_t empty = 0; empty < sizes.size(); ++empty) {
        if (sizes[empty] != 0) continue;
        std::size_t far = points.rows();
        double far_d = -1.0;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            if (sizes[labels[i]] < 2) continue;
            const double d = squared_distance(points.row(i), centroids.row(labels[i]));
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        --sizes[labels[far]];
        labels[far] = empty;
        sizes[empty] = 1;
        auto src = points.row(far);
        std::copy(src.begin(), src.end(), centroids.row(empty).begin());
    }
}

Matrix member_means(const Matrix& points, const std::vector<std::size_t>& labels, const std::vector<std::size_t>& sizes) {
    Matrix sums(sizes.size(), points.cols(), 0.0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto dst = sums.row(labels[i]);
        auto src = points.row(i);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    }
    for (std::size_t c = 0; c < sizes.size(); ++c) {
        const double n = static_cast<double>(sizes[c]);
        for (double& v : sums.row(c)) v /= n;
    }
    return sums;
}

}  // namespace

std::vector<std::vector<std::size_t>> ClusterModel::members() const {
    std::vector<std::vector<std::size_t>> out(k);
    for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
    return out;
}

double wcss(const Matrix& points, const std::vector<std::size_t>& labels, const Matrix& centroids) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) total += squared_distance(points.row(i), centroids.row(labels[i]));
    return total;
}

Matrix l2_normalize_rows(const Matrix& points) {
    Matrix out = points;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        double norm = 0.0;
        for (double v : row) norm += v * v;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (double& v : row) v /= norm;
    }
    return out;
}

ClusterModel kmeans_pp(const Matrix& input, std::size_t k, const KMeansOptions& options) {
    const std::size_t n = input.rows();
    if (n == 0 || input.cols() == 0) throw ValidationError(Reason::shape_mismatch, "points", "no points to cluster");
    if (k < 1 || k > n) {
        throw ValidationError(Reason::out_of_range, "k", std::to_string(k) + " not in [1, " + std::to_string(n) + "]");
    }
    for (double v : input.values())
        if (!std::isfinite(v)) throw ValidationError(Reason::non_finite, "points", "non-finite coordinate");

    const Matrix points = options.metric == DistanceMetric::cosine ? l2_normalize_rows(input) : input;

    Rng rng(options.seed);
    Matrix centroids = seed_centers(points, k, local_trials(k, options.seeding_trials), rng, options.threads);

    ClusterModel model;
    model.k = k;
    model.seed = options.seed;
    model.metric = options.metric;
    model.labels.assign(n, 0);

    assign(points, centroids, model.labels, false, options.threads);
    model.objective_trace.push_back(wcss(points, model.labels, centroids));

    for (std::size_t iter = 0; iter < std::max<std::size_t>(options.max_iters, 1); ++iter) {
        if (iter > 0) assign(points, centroids, model.labels, true, options.threads);
        auto sizes = count_sizes(model.labels, k);
        repair_empty(points, centroids, model.labels, sizes);
        Matrix updated = member_means(points, model.labels, sizes);

        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c)
            shift = std::max(shift, std::sqrt(squared_distance(updated.row(c), centroids.row(c))));
        centroids = std::move(updated);
        model.sizes = std::move(sizes);
        model.objective_trace.push_back(wcss(points, model.labels, centroids));
        ++model.iterations;
        if (shift < options.tol) break;
    }

    model.centroids = std::move(centroids);
    model.objective = model.objective_trace.back();
    return model;
}

}  // namespace vtc
