#include "vtc/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "vtc/errors.hpp"
#include "vtc/parallel.hpp"
#include "vtc/text.hpp"

namespace vtc {
namespace {

using Reason = ValidationError::Reason;

// out = row * w, accumulated sequentially over the shared dimension.
void project_row(std::span<const double> row, const Matrix& w, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t j = 0; j < row.size(); ++j) {
        const double x = row[j];
        auto wrow = w.row(j);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += x * wrow[c];
    }
}

// In-place max-subtracted softmax.
void softmax(std::span<double> v) {
    const double peak = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double& x : v) {
        x = std::exp(x - peak);
        sum += x;
    }
    for (double& x : v) x /= sum;
}

Matrix project_all(const Matrix& rows, const Matrix& w, unsigned threads) {
    Matrix out(rows.rows(), w.cols());
    parallel_for(rows.rows(), threads, [&](std::size_t i) { project_row(rows.row(i), w, out.row(i)); });
    return out;
}

double head_dot(std::span<const double> key, std::span<const double> query, std::size_t head, std::size_t d_head) {
    double acc = 0.0;
    const std::size_t base = head * d_head;
    for (std::size_t e = 0; e < d_head; ++e) acc += key[base + e] * query[base + e];
    return acc;
}

}  // namespace

SaliencyMap compute_saliency(const TokenBundle& bundle, const SaliencyOptions& options) {
    if (options.layer_index >= bundle.layers.size()) {
        throw ValidationError(Reason::out_of_range, "layer_index",
                              "layer " + std::to_string(options.layer_index) + " not in bundle (" +
                                  std::to_string(bundle.layers.size()) + " layers)");
    }
    const LayerWeights& layer = bundle.layers[options.layer_index];
    const std::string field = "layers[" + std::to_string(options.layer_index) + "]";
    if (layer.w_q.rows() != bundle.dim() || layer.w_k.rows() != bundle.dim() ||
        bundle.text_embeddings.cols() != bundle.dim()) {
        throw ValidationError(Reason::shape_mismatch, field, "projection rows do not match embedding dim");
    }
    if (layer.w_q.cols() != layer.width() || layer.w_k.cols() != layer.width()) {
        throw ValidationError(Reason::shape_mismatch, field, "projection width != n_heads * d_head");
    }

    const std::size_t n_visual = bundle.n_visual();
    const std::size_t n_text = bundle.n_text();
    const std::size_t n_heads = layer.n_heads;
    const std::size_t d_head = layer.d_head;
    const double scale = options.scaled ? 1.0 / std::sqrt(static_cast<double>(d_head)) : 1.0;

    const Matrix queries = project_all(bundle.text_embeddings, layer.w_q, 1);

    SaliencyMap map;
    map.layer_index = options.layer_index;
    map.softmax_scaled = options.scaled;
    map.axis = options.axis;
    map.scores.assign(n_visual, 0.0);

    if (options.axis == SoftmaxAxis::text) {
        parallel_for(n_visual, options.threads, [&](std::size_t i) {
            std::vector<double> key(layer.width());
            project_row(bundle.visual_embeddings.row(i), layer.w_k, key);
            std::vector<double> logits(n_text);
            std::vector<double> head_max(n_text, 0.0);
            for (std::size_t h = 0; h < n_heads; ++h) {
                for (std::size_t t = 0; t < n_text; ++t) logits[t] = head_dot(key, queries.row(t), h, d_head) * scale;
                softmax(logits);
                for (std::size_t t = 0; t < n_text; ++t) head_max[t] = h == 0 ? logits[t] : std::max(head_max[t], logits[t]);
            }
            double total = 0.0;
            for (double m : head_max) total += m;
            // The exact value lies in [1/N_t, 1]; clamp away summation rounding.
            map.scores[i] = std::clamp(total / static_cast<double>(n_text), 1.0 / static_cast<double>(n_text), 1.0);
        });
        return map;
    }

    // Visual axis: probabilities for (h, t) are normalized across visual tokens.
    const Matrix keys = project_all(bundle.visual_embeddings, layer.w_k, options.threads);
    Matrix head_max(n_visual, n_text, 0.0);
    std::vector<double> column(n_visual);
    for (std::size_t h = 0; h < n_heads; ++h) {
        for (std::size_t t = 0; t < n_text; ++t) {
            for (std::size_t i = 0; i < n_visual; ++i) column[i] = head_dot(keys.row(i), queries.row(t), h, d_head) * scale;
            softmax(column);
            for (std::size_t i = 0; i < n_visual; ++i) head_max(i, t) = h == 0 ? column[i] : std::max(head_max(i, t), column[i]);
        }
    }
    for (std::size_t i = 0; i < n_visual; ++i) {
        double total = 0.0;
        for (double m : head_max.row(i)) total += m;
        map.scores[i] = total / static_cast<double>(n_text);
    }
    return map;
}

std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t retain_count) {
    if (retain_count < 1 || retain_count > scores.size()) {
        throw ValidationError(Reason::out_of_range, "retain_count",
                              std::to_string(retain_count) + " not in [1, " + std::to_string(scores.size()) + "]");
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto by_score = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(retain_count), order.end(), by_score);
    order.resize(retain_count);
    std::sort(order.begin(), order.end());
    return order;
}

std::vector<std::size_t> basic_saliency_select(const SaliencyMap& map, std::size_t retain_count) {
    return top_k_indices(map.scores, retain_count);
}

std::vector<double> average_ranks(std::span<const double> values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        // positions i..j (0-based) share rank mean((i+1)..(j+1))
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t p = i; p <= j; ++p) ranks[order[p]] = rank;
        i = j + 1;
    }
    return ranks;
}

std::optional<double> spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ValidationError(Reason::shape_mismatch, "saliency",
                              "length mismatch " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    if (a.empty()) return std::nullopt;
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double mean = (n + 1.0) / 2.0;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double da = ra[i] - mean;
        const double db = rb[i] - mean;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) return std::nullopt;
    return std::clamp(cov / std::sqrt(va * vb), -1.0, 1.0);
}

std::optional<double> rank_correlation(const SaliencyMap& a, const SaliencyMap& b) { return spearman(a.scores, b.scores); }

std::vector<int> heatmap_levels(std::span<const double> scores) {
    std::vector<int> levels(scores.size(), 128);
    if (scores.empty()) return levels;
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double min = *lo;
    const double range = *hi - *lo;
    if (range == 0.0) return levels;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        levels[i] = std::clamp(static_cast<int>(std::floor((scores[i] - min) / range * 255.0 + 0.5)), 0, 255);
    }
    return levels;
}

void export_heatmap(const SaliencyMap& map, const GridShape& grid, const std::filesystem::path& path,
                    HeatmapFormat format) {
    if (map.size() != grid.count()) {
        throw ValidationError(Reason::shape_mismatch, "grid",
                              "map has " + std::to_string(map.size()) + " scores, grid holds " +
                                  std::to_string(grid.count()));
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError(path, "heatmap", "cannot open for writing");

    if (format == HeatmapFormat::pgm) {
        const auto levels = heatmap_levels(map.scores);
        out << "P2\n" << grid.cols << ' ' << grid.rows << "\n255\n";
        for (std::size_t r = 0; r < grid.rows; ++r) {
            for (std::size_t c = 0; c < grid.cols; ++c) {
                if (c) out << ' ';
                out << levels[r * grid.cols + c];
            }
            out << '\n';
        }
    } else {
        for (std::size_t r = 0; r < grid.rows; ++r) {
            for (std::size_t c = 0; c < grid.cols; ++c) {
                if (c) out << ',';
                out << format_double(map.scores[r * grid.cols + c]);
            }
            out << '\n';
        }
    }
    if (!out) throw IoError(path, "heatmap", "write failed");
}

}  // namespace vtc
