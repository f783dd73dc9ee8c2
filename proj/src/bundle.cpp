#include "vtc/bundle.hpp"

#include <cmath>
#include <fstream>
#include <system_error>

#include <json.hpp>

#include "vtc/errors.hpp"

namespace vtc {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;
using Reason = ValidationError::Reason;

void require_finite(const Matrix& m, const std::string& field) {
    const auto values = m.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            const auto r = i / m.cols();
            const auto c = i % m.cols();
            throw ValidationError(Reason::non_finite, field,
                                  "non-finite value at (" + std::to_string(r) + ", " + std::to_string(c) + ")");
        }
    }
}

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const std::string& field) {
    if (m.rows() != rows || m.cols() != cols) {
        throw ValidationError(Reason::shape_mismatch, field,
                              "shape (" + std::to_string(m.rows()) + ", " + std::to_string(m.cols()) +
                                  "), expected (" + std::to_string(rows) + ", " + std::to_string(cols) + ")");
    }
}

std::string dtype_name(npy::Dtype d) { return d == npy::Dtype::f4 ? "float32" : "float64"; }

const json& require_key(const json& obj, const std::string& key, const std::string& field) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ValidationError(Reason::malformed, field, "missing manifest key '" + key + "'");
    return *it;
}

std::size_t require_positive(const json& obj, const std::string& key, const std::string& field) {
    const auto& v = require_key(obj, key, field);
    if (!v.is_number_integer() || v.get<long long>() < 1)
        throw ValidationError(Reason::malformed, field, "'" + key + "' must be a positive integer");
    return v.get<std::size_t>();
}

std::string require_string(const json& obj, const std::string& key, const std::string& field) {
    const auto& v = require_key(obj, key, field);
    if (!v.is_string()) throw ValidationError(Reason::malformed, field, "'" + key + "' must be a string");
    return v.get<std::string>();
}

Matrix read_array(const fs::path& dir, const std::string& file, npy::Dtype expected, const std::string& field) {
    auto array = npy::read(dir / file, field);
    if (array.dtype != expected) {
        throw ValidationError(Reason::dtype_mismatch, field,
                              "manifest declares " + dtype_name(expected) + " but array is " +
                                  dtype_name(array.dtype));
    }
    return std::move(array.values);
}

}  // namespace

void validate(const TokenBundle& b) {
    if (b.n_visual() < 1) throw ValidationError(Reason::shape_mismatch, "visual_embeddings", "need at least one visual token");
    if (b.n_text() < 1) throw ValidationError(Reason::shape_mismatch, "text_embeddings", "need at least one text token");
    if (b.dim() < 1) throw ValidationError(Reason::shape_mismatch, "visual_embeddings", "embedding dim must be >= 1");
    require_shape(b.text_embeddings, b.n_text(), b.dim(), "text_embeddings");
    if (b.grid.rows < 1 || b.grid.cols < 1)
        throw ValidationError(Reason::shape_mismatch, "grid_rows", "grid dimensions must be positive");
    if (b.grid.count() != b.n_visual()) {
        throw ValidationError(Reason::shape_mismatch, "grid_rows",
                              "grid " + std::to_string(b.grid.rows) + "x" + std::to_string(b.grid.cols) + " = " +
                                  std::to_string(b.grid.count()) + " does not match n_visual " +
                                  std::to_string(b.n_visual()));
    }
    require_finite(b.visual_embeddings, "visual_embeddings");
    require_finite(b.text_embeddings, "text_embeddings");

    if (b.layers.empty()) throw ValidationError(Reason::malformed, "layers", "need at least one layer");
    for (std::size_t l = 0; l < b.layers.size(); ++l) {
        const auto& layer = b.layers[l];
        const std::string prefix = "layers[" + std::to_string(l) + "]";
        if (layer.n_heads < 1 || layer.d_head < 1)
            throw ValidationError(Reason::malformed, prefix, "n_heads and d_head must be >= 1");
        require_shape(layer.w_q, b.dim(), layer.width(), prefix + ".w_q");
        require_shape(layer.w_k, b.dim(), layer.width(), prefix + ".w_k");
        require_finite(layer.w_q, prefix + ".w_q");
        require_finite(layer.w_k, prefix + ".w_k");
    }

    if (b.visual_keys) {
        if (b.visual_keys->rows() != b.n_visual() || b.visual_keys->cols() < 1) {
            throw ValidationError(Reason::shape_mismatch, "visual_keys",
                                  "expected " + std::to_string(b.n_visual()) + " rows and at least one column");
        }
        require_finite(*b.visual_keys, "visual_keys");
    }
}

TokenBundle load_bundle(const fs::path& dir) {
    const fs::path manifest_path = dir / kManifestName;
    std::ifstream in(manifest_path);
    if (!in) throw IoError(manifest_path, kManifestName, "cannot open manifest");

    json manifest;
    try {
        manifest = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError(Reason::malformed, kManifestName, std::string("invalid JSON: ") + e.what());
    }
    if (!manifest.is_object()) throw ValidationError(Reason::malformed, kManifestName, "manifest must be an object");

    const auto& version = require_key(manifest, "version", "version");
    if (!version.is_number_integer() || version.get<int>() != kBundleVersion)
        throw ValidationError(Reason::malformed, "version", "unsupported bundle version " + version.dump());

    npy::Dtype dtype = npy::Dtype::f4;
    if (auto it = manifest.find("dtype"); it != manifest.end()) {
        if (*it == "float32") dtype = npy::Dtype::f4;
        else if (*it == "float64") dtype = npy::Dtype::f8;
        else throw ValidationError(Reason::dtype_mismatch, "dtype", "unsupported dtype " + it->dump());
    }

    const auto n_visual = require_positive(manifest, "n_visual", "n_visual");
    const auto n_text = require_positive(manifest, "n_text", "n_text");
    const auto dim = require_positive(manifest, "dim", "dim");

    TokenBundle b;
    b.grid.rows = require_positive(manifest, "grid_rows", "grid_rows");
    b.grid.cols = require_positive(manifest, "grid_cols", "grid_cols");
    if (b.grid.count() != n_visual) {
        throw ValidationError(Reason::shape_mismatch, "grid_rows",
                              "grid " + std::to_string(b.grid.rows) + "x" + std::to_string(b.grid.cols) +
                                  " does not match n_visual " + std::to_string(n_visual));
    }

    b.visual_embeddings = read_array(dir, require_string(manifest, "visual_embeddings", "visual_embeddings"), dtype,
                                     "visual_embeddings");
    require_shape(b.visual_embeddings, n_visual, dim, "visual_embeddings");
    b.text_embeddings =
        read_array(dir, require_string(manifest, "text_embeddings", "text_embeddings"), dtype, "text_embeddings");
    require_shape(b.text_embeddings, n_text, dim, "text_embeddings");

    const auto& layers = require_key(manifest, "layers", "layers");
    if (!layers.is_array() || layers.empty())
        throw ValidationError(Reason::malformed, "layers", "'layers' must be a non-empty array");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const std::string prefix = "layers[" + std::to_string(l) + "]";
        const auto& entry = layers[l];
        if (!entry.is_object()) throw ValidationError(Reason::malformed, prefix, "layer entry must be an object");
        LayerWeights layer;
        layer.n_heads = require_positive(entry, "n_heads", prefix + ".n_heads");
        layer.d_head = require_positive(entry, "d_head", prefix + ".d_head");
        layer.w_q = read_array(dir, require_string(entry, "w_q", prefix + ".w_q"), dtype, prefix + ".w_q");
        layer.w_k = read_array(dir, require_string(entry, "w_k", prefix + ".w_k"), dtype, prefix + ".w_k");
        b.layers.push_back(std::move(layer));
    }

    if (auto it = manifest.find("visual_keys"); it != manifest.end() && !it->is_null()) {
        if (!it->is_string()) throw ValidationError(Reason::malformed, "visual_keys", "'visual_keys' must be a string");
        b.visual_keys = read_array(dir, it->get<std::string>(), dtype, "visual_keys");
    }

    if (auto it = manifest.find("meta"); it != manifest.end()) {
        if (!it->is_object()) throw ValidationError(Reason::malformed, "meta", "'meta' must be an object");
        for (const auto& [key, value] : it->items()) {
            if (!value.is_string())
                throw ValidationError(Reason::malformed, "meta." + key, "meta values must be strings");
            b.meta[key] = value.get<std::string>();
        }
    }

    validate(b);
    return b;
}

void save_bundle(const TokenBundle& b, const fs::path& dir, const SaveOptions& options) {
    validate(b);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError(dir, "", "cannot create bundle directory");

    json manifest;
    manifest["version"] = kBundleVersion;
    manifest["dtype"] = dtype_name(options.dtype);
    manifest["n_visual"] = b.n_visual();
    manifest["n_text"] = b.n_text();
    manifest["dim"] = b.dim();
    manifest["grid_rows"] = b.grid.rows;
    manifest["grid_cols"] = b.grid.cols;
    manifest["visual_embeddings"] = "visual_embeddings.npy";
    manifest["text_embeddings"] = "text_embeddings.npy";
    npy::write(dir / "visual_embeddings.npy", b.visual_embeddings, options.dtype, "visual_embeddings");
    npy::write(dir / "text_embeddings.npy", b.text_embeddings, options.dtype, "text_embeddings");

    json layers = json::array();
    for (std::size_t l = 0; l < b.layers.size(); ++l) {
        const auto& layer = b.layers[l];
        const std::string stem = "layer" + std::to_string(l);
        const std::string prefix = "layers[" + std::to_string(l) + "]";
        npy::write(dir / (stem + "_w_q.npy"), layer.w_q, options.dtype, prefix + ".w_q");
        npy::write(dir / (stem + "_w_k.npy"), layer.w_k, options.dtype, prefix + ".w_k");
        layers.push_back(
            {{"w_q", stem + "_w_q.npy"}, {"w_k", stem + "_w_k.npy"}, {"n_heads", layer.n_heads}, {"d_head", layer.d_head}});
    }
    manifest["layers"] = std::move(layers);

    if (b.visual_keys) {
        npy::write(dir / "visual_keys.npy", *b.visual_keys, options.dtype, "visual_keys");
        manifest["visual_keys"] = "visual_keys.npy";
    }
    manifest["meta"] = json::object();
    for (const auto& [key, value] : b.meta) manifest["meta"][key] = value;

    const fs::path manifest_path = dir / kManifestName;
    std::ofstream out(manifest_path, std::ios::trunc);
    if (!out) throw IoError(manifest_path, kManifestName, "cannot write manifest");
    out << manifest.dump(2) << '\n';
    if (!out) throw IoError(manifest_path, kManifestName, "write failed");
}

}  // namespace vtc
