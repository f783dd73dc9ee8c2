#pragma once

// Deliberately naive reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "vtc/bundle.hpp"

namespace vtc::testing {

/// Saliency by explicit loops: no shared projections, no max-subtraction
/// tricks beyond the one needed for exp() to stay finite.
inline std::vector<double> saliency_oracle(const TokenBundle& b, std::size_t layer_index, bool scaled) {
    const LayerWeights& w = b.layers[layer_index];
    const std::size_t nv = b.n_visual(), nt = b.n_text(), d = b.dim();
    const double scale = scaled ? 1.0 / std::sqrt(static_cast<double>(w.d_head)) : 1.0;
    std::vector<double> out(nv, 0.0);
    for (std::size_t i = 0; i < nv; ++i) {
        std::vector<double> head_max(nt, -std::numeric_limits<double>::infinity());
        for (std::size_t h = 0; h < w.n_heads; ++h) {
            std::vector<double> logit(nt, 0.0);
            for (std::size_t t = 0; t < nt; ++t) {
                double acc = 0.0;
                for (std::size_t e = 0; e < w.d_head; ++e) {
                    const std::size_t col = h * w.d_head + e;
                    double k = 0.0, q = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        k += b.visual_embeddings(i, j) * w.w_k(j, col);
                        q += b.text_embeddings(t, j) * w.w_q(j, col);
                    }
                    acc += k * q;
                }
                logit[t] = acc * scale;
            }
            const double m = *std::max_element(logit.begin(), logit.end());
            double z = 0.0;
            for (double l : logit) z += std::exp(l - m);
            for (std::size_t t = 0; t < nt; ++t) head_max[t] = std::max(head_max[t], std::exp(logit[t] - m) / z);
        }
        double sum = 0.0;
        for (double v : head_max) sum += v;
        out[i] = sum / static_cast<double>(nt);
    }
    return out;
}

inline double partition_cost(const Matrix& points, const std::vector<std::size_t>& labels, std::size_t k) {
    const std::size_t d = points.cols();
    Matrix sums(k, d);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        ++counts[labels[i]];
        for (std::size_t j = 0; j < d; ++j) sums(labels[i], j) += points(i, j);
    }
    double cost = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const std::size_t c = labels[i];
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = points(i, j) - sums(c, j) / static_cast<double>(counts[c]);
            cost += diff * diff;
        }
    }
    return cost;
}

/// Minimum within-cluster sum of squares over every labeling of the points
/// into exactly k non-empty clusters (k^N enumeration; keep N small).
inline double brute_force_wcss(const Matrix& points, std::size_t k) {
    const std::size_t n = points.rows();
    std::vector<std::size_t> labels(n, 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        std::vector<bool> used(k, false);
        for (std::size_t l : labels) used[l] = true;
        // canonical form: first occurrence of each label in increasing order
        bool canonical = true;
        std::size_t next = 0;
        for (std::size_t l : labels) {
            if (l > next) { canonical = false; break; }
            if (l == next) ++next;
        }
        if (canonical && std::all_of(used.begin(), used.end(), [](bool u) { return u; }))
            best = std::min(best, partition_cost(points, labels, k));
        std::size_t pos = 0;
        while (pos < n && ++labels[pos] == k) labels[pos++] = 0;
        if (pos == n) break;
    }
    return best;
}

/// Prefill cost tallied layer by layer, matrix product by matrix product.
struct CostTally {
    double flops = 0.0;
    double kv_bytes = 0.0;
    double act_bytes = 0.0;
    double weight_bytes = 0.0;
    double params = 0.0;
};

inline CostTally cost_oracle(double L, double d, double H, double dff, bool gated, double V, double T,
                             double bytes_param, double bytes_act, double alpha) {
    CostTally t;
    for (int layer = 0; layer < static_cast<int>(L); ++layer) {
        const double q = 2 * T * d * d, k = 2 * T * d * d, v = 2 * T * d * d, o = 2 * T * d * d;
        const double dh = d / H;
        double scores = 0.0, mix = 0.0;
        for (int h = 0; h < static_cast<int>(H); ++h) {
            scores += 2 * T * T * dh;
            mix += 2 * T * T * dh;
        }
        const double mlp = gated ? (2 * T * d * dff) * 3 : (2 * T * d * dff) * 2;
        t.flops += q + k + v + o + scores + mix + mlp;
        t.kv_bytes += 2 * T * d * bytes_act;
    }
    t.flops += 2 * T * d * V;
    const double layer_params = 4 * d * d + (gated ? 3 : 2) * d * dff + 2 * d;
    t.params = L * layer_params + 2 * V * d + d;
    t.weight_bytes = t.params * bytes_param;
    t.act_bytes = alpha * T * d * bytes_act + H * T * T * bytes_act;
    return t;
}

}  // namespace vtc::testing
