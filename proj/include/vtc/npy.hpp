#pragma once

#include <filesystem>
#include <string>

#include "vtc/matrix.hpp"

namespace vtc::npy {

enum class Dtype { f4, f8 };

/// "<f4" / "<f8"
std::string descr(Dtype dtype);

struct Array {
    Dtype dtype = Dtype::f4;
    Matrix values;
};

/// Reads a 2-D little-endian C-order float NPY file (format v1.0 or v2.0).
/// `field` is carried into any error for reporting.
Array read(const std::filesystem::path& path, const std::string& field);

/// Writes `m` as NPY v1.0, C-order, little-endian. Values are narrowed to
/// float32 when `dtype` is f4.
void write(const std::filesystem::path& path, const Matrix& m, Dtype dtype, const std::string& field);

}  // namespace vtc::npy
