#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vtc/matrix.hpp"
#include "vtc/npy.hpp"

namespace vtc {

/// First-layer-style attention projections. Both matrices are D x (n_heads * d_head).
struct LayerWeights {
    Matrix w_q;
    Matrix w_k;
    std::size_t n_heads = 1;
    std::size_t d_head = 1;

    std::size_t width() const noexcept { return n_heads * d_head; }
};

struct GridPosition {
    std::size_t row = 0;
    std::size_t col = 0;
};

/// Patch grid geometry. Token i sits at (i / cols, i % cols).
struct GridShape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t count() const noexcept { return rows * cols; }
    GridPosition position(std::size_t index) const noexcept { return {index / cols, index % cols}; }
};

/// Token embeddings and projection weights dumped for one (image, prompt) pair.
/// Immutable after load.
struct TokenBundle {
    Matrix visual_embeddings;  // N_v x D, post-projector
    Matrix text_embeddings;    // N_t x D
    GridShape grid;
    std::vector<LayerWeights> layers;
    std::optional<Matrix> visual_keys;  // N_v x D_k, vision-encoder keys
    std::map<std::string, std::string> meta;

    std::size_t n_visual() const noexcept { return visual_embeddings.rows(); }
    std::size_t n_text() const noexcept { return text_embeddings.rows(); }
    std::size_t dim() const noexcept { return visual_embeddings.cols(); }
};

/// Throws ValidationError naming the first offending field.
void validate(const TokenBundle& bundle);

/// Loads a bundle directory (manifest.json + NPY arrays) and validates it.
TokenBundle load_bundle(const std::filesystem::path& dir);

struct SaveOptions {
    npy::Dtype dtype = npy::Dtype::f4;
};

/// Writes `bundle` to `dir`, creating it if needed. Values round-trip
/// bit-exactly when they are representable in the chosen dtype.
void save_bundle(const TokenBundle& bundle, const std::filesystem::path& dir, const SaveOptions& options = {});

inline constexpr const char* kManifestName = "manifest.json";
inline constexpr int kBundleVersion = 1;

}  // namespace vtc
