#include "vtc/npy.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string_view>

#include "vtc/errors.hpp"

namespace vtc::npy {
namespace {

constexpr std::array<char, 6> kMagic = {'\x93', 'N', 'U', 'M', 'P', 'Y'};

template <typename T>
T from_le(const char* p) {
    std::array<char, sizeof(T)> buf;
    std::memcpy(buf.data(), p, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    T v;
    std::memcpy(&v, buf.data(), sizeof(T));
    return v;
}

template <typename T>
void to_le(T v, char* p) {
    std::array<char, sizeof(T)> buf;
    std::memcpy(buf.data(), &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
    std::memcpy(p, buf.data(), sizeof(T));
}

ValidationError malformed(const std::string& field, const std::string& what) {
    return {ValidationError::Reason::malformed, field, "malformed NPY: " + what};
}

// Returns the text following `'key':` up to (not including) the next
// top-level comma or closing brace, with surrounding whitespace removed.
std::optional<std::string> dict_value(std::string_view header, std::string_view key) {
    std::string quoted = "'" + std::string(key) + "'";
    auto pos = header.find(quoted);
    if (pos == std::string_view::npos) return std::nullopt;
    pos = header.find(':', pos + quoted.size());
    if (pos == std::string_view::npos) return std::nullopt;
    ++pos;
    int depth = 0;
    std::size_t end = pos;
    for (; end < header.size(); ++end) {
        char c = header[end];
        if (c == '(') ++depth;
        else if (c == ')') --depth;
        else if ((c == ',' || c == '}') && depth == 0) break;
    }
    auto value = header.substr(pos, end - pos);
    while (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    while (!value.empty() && value.back() == ' ') value.remove_suffix(1);
    return std::string(value);
}

std::vector<std::size_t> parse_shape(const std::string& text, const std::string& field) {
    if (text.size() < 2 || text.front() != '(' || text.back() != ')') throw malformed(field, "shape " + text);
    std::vector<std::size_t> dims;
    std::string inner = text.substr(1, text.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto first = item.find_first_not_of(' ');
        if (first == std::string::npos) continue;
        item = item.substr(first, item.find_last_not_of(' ') - first + 1);
        std::size_t consumed = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &consumed);
        } catch (const std::exception&) {
            throw malformed(field, "shape " + text);
        }
        if (consumed != item.size()) throw malformed(field, "shape " + text);
        dims.push_back(static_cast<std::size_t>(v));
    }
    return dims;
}

}  // namespace

std::string descr(Dtype dtype) { return dtype == Dtype::f4 ? "<f4" : "<f8"; }

Array read(const std::filesystem::path& path, const std::string& field) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, field, "cannot open array file");
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError(path, field, "read failed");

    if (bytes.size() < 10 || !std::equal(kMagic.begin(), kMagic.end(), bytes.begin()))
        throw malformed(field, "bad magic");
    const auto major = static_cast<unsigned char>(bytes[6]);
    std::size_t header_len = 0;
    std::size_t prefix = 0;
    if (major == 1) {
        header_len = from_le<std::uint16_t>(bytes.data() + 8);
        prefix = 10;
    } else if (major == 2) {
        if (bytes.size() < 12) throw malformed(field, "truncated header");
        header_len = from_le<std::uint32_t>(bytes.data() + 8);
        prefix = 12;
    } else {
        throw malformed(field, "unsupported version " + std::to_string(major));
    }
    if (bytes.size() < prefix + header_len) throw malformed(field, "truncated header");
    std::string_view header(bytes.data() + prefix, header_len);

    auto descr_text = dict_value(header, "descr");
    auto fortran = dict_value(header, "fortran_order");
    auto shape_text = dict_value(header, "shape");
    if (!descr_text || !fortran || !shape_text) throw malformed(field, "missing header key");

    Array out;
    if (*descr_text == "'<f4'") out.dtype = Dtype::f4;
    else if (*descr_text == "'<f8'") out.dtype = Dtype::f8;
    else
        throw ValidationError(ValidationError::Reason::dtype_mismatch, field,
                              "unsupported NPY dtype " + *descr_text + " (expected '<f4' or '<f8')");
    if (*fortran != "False")
        throw ValidationError(ValidationError::Reason::malformed, field, "Fortran-order arrays are not supported");

    auto dims = parse_shape(*shape_text, field);
    if (dims.size() != 2)
        throw ValidationError(ValidationError::Reason::shape_mismatch, field,
                              "expected a 2-D array, got " + std::to_string(dims.size()) + " dimensions");

    const std::size_t count = dims[0] * dims[1];
    const std::size_t width = out.dtype == Dtype::f4 ? 4 : 8;
    const std::size_t payload = bytes.size() - prefix - header_len;
    if (payload != count * width)
        throw ValidationError(ValidationError::Reason::shape_mismatch, field,
                              "payload has " + std::to_string(payload) + " bytes, shape needs " +
                                  std::to_string(count * width));

    std::vector<double> values(count);
    const char* p = bytes.data() + prefix + header_len;
    for (std::size_t i = 0; i < count; ++i, p += width) {
        values[i] = out.dtype == Dtype::f4 ? static_cast<double>(from_le<float>(p)) : from_le<double>(p);
    }
    out.values = Matrix(dims[0], dims[1], std::move(values));
    return out;
}

void write(const std::filesystem::path& path, const Matrix& m, Dtype dtype, const std::string& field) {
    std::string header = "{'descr': '" + descr(dtype) + "', 'fortran_order': False, 'shape': (" +
                         std::to_string(m.rows()) + ", " + std::to_string(m.cols()) + "), }";
    // magic(6) + version(2) + len(2) + header + '\n' padded to a multiple of 64
    const std::size_t unpadded = 10 + header.size() + 1;
    header.append((64 - unpadded % 64) % 64, ' ');
    header.push_back('\n');

    const std::size_t width = dtype == Dtype::f4 ? 4 : 8;
    std::vector<char> bytes(10 + header.size() + m.size() * width);
    std::copy(kMagic.begin(), kMagic.end(), bytes.begin());
    bytes[6] = 1;
    bytes[7] = 0;
    to_le(static_cast<std::uint16_t>(header.size()), bytes.data() + 8);
    std::copy(header.begin(), header.end(), bytes.begin() + 10);
    char* p = bytes.data() + 10 + header.size();
    for (double v : m.values()) {
        if (dtype == Dtype::f4) to_le(static_cast<float>(v), p);
        else to_le(v, p);
        p += width;
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, field, "cannot open array file for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError(path, field, "write failed");
}

}  // namespace vtc::npy
