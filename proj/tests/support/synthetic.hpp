#pragma once

// Synthetic bundles and small helpers shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "vtc/bundle.hpp"

namespace vtc::testing {

struct BundleShape {
    std::size_t grid_rows = 2;
    std::size_t grid_cols = 2;
    std::size_t n_text = 2;
    std::size_t dim = 3;
    std::size_t n_heads = 1;
    std::size_t d_head = 3;
    std::size_t n_layers = 1;
    bool with_keys = false;
    double scale = 1.0;  // stddev of embedding entries
};

// Values are rounded through float so a float32 save/load round-trips exactly.
inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& gen, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = static_cast<double>(static_cast<float>(dist(gen)));
    return m;
}

inline TokenBundle random_bundle(const BundleShape& s, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    TokenBundle b;
    b.grid = {s.grid_rows, s.grid_cols};
    b.visual_embeddings = random_matrix(s.grid_rows * s.grid_cols, s.dim, gen, s.scale);
    b.text_embeddings = random_matrix(s.n_text, s.dim, gen, s.scale);
    const double w_scale = 1.0 / std::sqrt(static_cast<double>(s.dim));
    for (std::size_t l = 0; l < s.n_layers; ++l) {
        LayerWeights layer;
        layer.n_heads = s.n_heads;
        layer.d_head = s.d_head;
        layer.w_q = random_matrix(s.dim, s.n_heads * s.d_head, gen, w_scale);
        layer.w_k = random_matrix(s.dim, s.n_heads * s.d_head, gen, w_scale);
        b.layers.push_back(std::move(layer));
    }
    if (s.with_keys) b.visual_keys = random_matrix(s.grid_rows * s.grid_cols, s.dim, gen, 1.0);
    b.meta["source"] = "synthetic";
    b.meta["seed"] = std::to_string(seed);
    return b;
}

/// `n_blobs` Gaussian blobs with uneven, randomly drawn sizes (every blob gets
/// at least `min_size`), laid out in contiguous grid regions.
inline TokenBundle blob_bundle(std::size_t grid_rows, std::size_t grid_cols, std::size_t dim, std::size_t n_blobs,
                               double separation, double spread, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    const std::size_t n = grid_rows * grid_cols;
    std::vector<double> weights(n_blobs);
    std::exponential_distribution<double> expo(1.0);
    for (double& w : weights) w = expo(gen);
    double total = 0.0;
    for (double w : weights) total += w;

    const std::size_t min_size = 2;
    std::vector<std::size_t> sizes(n_blobs, min_size);
    std::size_t assigned = min_size * n_blobs;
    for (std::size_t c = 0; c < n_blobs && assigned < n; ++c) {
        const auto extra = static_cast<std::size_t>(weights[c] / total * static_cast<double>(n - min_size * n_blobs));
        sizes[c] += extra;
        assigned += extra;
    }
    for (std::size_t c = 0; assigned < n; c = (c + 1) % n_blobs, ++assigned) ++sizes[c];

    std::normal_distribution<double> unit(0.0, 1.0);
    Matrix centers(n_blobs, dim);
    for (double& v : centers.values()) v = unit(gen) * separation;

    TokenBundle b;
    b.grid = {grid_rows, grid_cols};
    b.visual_embeddings = Matrix(n, dim);
    std::size_t row = 0;
    for (std::size_t c = 0; c < n_blobs; ++c) {
        for (std::size_t i = 0; i < sizes[c]; ++i, ++row) {
            for (std::size_t j = 0; j < dim; ++j)
                b.visual_embeddings(row, j) = static_cast<double>(static_cast<float>(centers(c, j) + unit(gen) * spread));
        }
    }
    b.text_embeddings = random_matrix(8, dim, gen, 1.0);
    LayerWeights layer;
    layer.n_heads = 4;
    layer.d_head = std::max<std::size_t>(1, dim / 4);
    layer.w_q = random_matrix(dim, layer.width(), gen, 1.0 / std::sqrt(static_cast<double>(dim)));
    layer.w_k = random_matrix(dim, layer.width(), gen, 1.0 / std::sqrt(static_cast<double>(dim)));
    b.layers.push_back(std::move(layer));
    b.meta["source"] = "synthetic-blobs";
    return b;
}

inline bool bit_equal(const Matrix& a, const Matrix& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("vtc_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

/// True when both directory trees hold the same relative file names with
/// byte-identical contents.
inline bool trees_identical(const std::filesystem::path& a, const std::filesystem::path& b, std::string* diff = nullptr) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files_a, files_b;
    for (const auto& e : fs::recursive_directory_iterator(a))
        if (e.is_regular_file()) files_a.push_back(fs::relative(e.path(), a));
    for (const auto& e : fs::recursive_directory_iterator(b))
        if (e.is_regular_file()) files_b.push_back(fs::relative(e.path(), b));
    std::sort(files_a.begin(), files_a.end());
    std::sort(files_b.begin(), files_b.end());
    if (files_a != files_b) {
        if (diff) *diff = "file lists differ";
        return false;
    }
    if (files_a.empty()) {
        if (diff) *diff = "no files";
        return false;
    }
    for (const auto& f : files_a) {
        if (read_file(a / f) != read_file(b / f)) {
            if (diff) *diff = f.string();
            return false;
        }
    }
    return true;
}

}  // namespace vtc::testing
