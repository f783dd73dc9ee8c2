#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "vtc/matrix.hpp"

namespace vtc {

enum class ClusterBasis { embeddings, keys };

/// `cosine` L2-normalizes every point before clustering with squared
/// Euclidean distance.
enum class DistanceMetric { euclidean, cosine };

struct KMeansOptions {
    std::uint64_t seed = 0;
    std::size_t max_iters = 100;
    double tol = 1e-6;  // stop once the largest centroid displacement is below this
    DistanceMetric metric = DistanceMetric::euclidean;
    /// Candidates drawn per seeding step; the one lowering the potential most
    /// is kept. 0 = 2 + floor(ln k), 1 = classic single-draw k-means++.
    std::size_t seeding_trials = 0;
    unsigned threads = 1;  // 0 = hardware concurrency; output is identical for any value
};

struct ClusterModel {
    std::size_t k = 0;
    std::vector<std::size_t> labels;  // one per point, in [0, k)
    Matrix centroids;                 // k x D, in the (possibly normalized) clustering space
    std::vector<std::size_t> sizes;   // every entry >= 1
    std::uint64_t seed = 0;
    ClusterBasis basis = ClusterBasis::embeddings;
    DistanceMetric metric = DistanceMetric::euclidean;
    double objective = 0.0;  // WCSS of (labels, centroids)
    std::size_t iterations = 0;
    /// WCSS after seeding and after every Lloyd iteration; non-increasing.
    std::vector<double> objective_trace;

    /// Member indices per cluster, ascending.
    std::vector<std::vector<std::size_t>> members() const;
};

/// Greedy k-means++ seeding (candidates sampled proportional to squared
/// distance) followed by Lloyd iterations. Deterministic for a fixed
/// (points, k, options.seed, tol, max_iters).
ClusterModel kmeans_pp(const Matrix& points, std::size_t k, const KMeansOptions& options = {});

/// Within-cluster sum of squared distances.
double wcss(const Matrix& points, const std::vector<std::size_t>& labels, const Matrix& centroids);

/// Rows scaled to unit L2 norm; zero rows are left as zero.
Matrix l2_normalize_rows(const Matrix& points);

}  // namespace vtc
