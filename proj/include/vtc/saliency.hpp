#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vtc/bundle.hpp"

namespace vtc {

/// Axis the attention logits are normalized over. `text` is the cross-modal
/// saliency definition; `visual` (standard attention direction) is kept for
/// ablations only.
enum class SoftmaxAxis { text, visual };

struct SaliencyOptions {
    std::size_t layer_index = 0;
    bool scaled = true;  // multiply logits by 1/sqrt(d_head)
    SoftmaxAxis axis = SoftmaxAxis::text;
    unsigned threads = 1;  // 0 = hardware concurrency; output is identical for any value
};

/// One score per visual token. With the text axis every score is in [1/N_t, 1].
struct SaliencyMap {
    std::vector<double> scores;
    std::size_t layer_index = 0;
    bool softmax_scaled = true;
    SoftmaxAxis axis = SoftmaxAxis::text;

    std::size_t size() const noexcept { return scores.size(); }
};

/// Cross-modal saliency of each visual token against the text prompt.
///
/// For visual token i with keys K_i = v_i W_k and text queries Q_t = x_t W_q,
/// both split into H heads, the logit for (head h, text t) is <K_i[h], Q_t[h]>
/// (optionally / sqrt(d_head)). Logits are softmaxed across text tokens per
/// head, maxed over heads per text token, and the maxes averaged over text.
///
/// Layers other than 0 reuse the input embeddings with that layer's weights.
SaliencyMap compute_saliency(const TokenBundle& bundle, const SaliencyOptions& options = {});

/// Indices of the `retain_count` highest scores in ascending index order.
/// Equal scores prefer the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> scores, std::size_t retain_count);

std::vector<std::size_t> basic_saliency_select(const SaliencyMap& map, std::size_t retain_count);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation with average-rank ties. Returns nullopt when
/// either input has zero rank variance (correlation undefined).
std::optional<double> spearman(std::span<const double> a, std::span<const double> b);

std::optional<double> rank_correlation(const SaliencyMap& a, const SaliencyMap& b);

enum class HeatmapFormat { pgm, csv };

/// Min-max normalized 0..255 grey levels (round half up). All-equal input maps to 128.
std::vector<int> heatmap_levels(std::span<const double> scores);

void export_heatmap(const SaliencyMap& map, const GridShape& grid, const std::filesystem::path& path,
                    HeatmapFormat format);

}  // namespace vtc
