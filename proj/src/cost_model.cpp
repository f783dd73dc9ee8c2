#include "vtc/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vtc/errors.hpp"
#include "vtc/text.hpp"

namespace vtc::cost {
namespace {

using Reason = ValidationError::Reason;
using json = nlohmann::json;

std::uint64_t mul(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out;
    if (__builtin_mul_overflow(a, b, &out)) throw ValidationError(Reason::out_of_range, "cost", "64-bit overflow");
    return out;
}

std::uint64_t mul(std::initializer_list<std::uint64_t> factors) {
    std::uint64_t out = 1;
    for (auto f : factors) out = mul(out, f);
    return out;
}

std::uint64_t add(std::uint64_t a, std::uint64_t b) {
    std::uint64_t out;
    if (__builtin_add_overflow(a, b, &out)) throw ValidationError(Reason::out_of_range, "cost", "64-bit overflow");
    return out;
}

double ratio(double value, double reference) { return reference == 0.0 ? 1.0 : value / reference; }

CostReport raw_estimate(const ModelConfig& m, const HardwareConfig& hw, std::uint64_t tokens, double retention,
                        const CostOptions& options) {
    const std::uint64_t t = tokens;
    const std::uint64_t d = m.hidden_dim;
    const std::uint64_t l = m.n_layers;
    const std::uint64_t mlp_macs = m.ffn_style == FfnStyle::gated ? 3 : 2;

    CostReport r;
    r.retention = retention;
    r.tokens = t;
    r.projection_flops = static_cast<double>(mul({l, 8, t, d, d}));
    r.attention_flops = static_cast<double>(mul({l, 4, t, t, d}));
    r.mlp_flops = static_cast<double>(mul({l, 2 * mlp_macs, t, d, m.ffn_dim}));
    r.lm_head_flops = static_cast<double>(mul({2, t, d, m.vocab_size}));
    const std::uint64_t total_flops =
        add(add(mul({l, 8, t, d, d}), mul({l, 4, t, t, d})),
            add(mul({l, 2 * mlp_macs, t, d, m.ffn_dim}), mul({2, t, d, m.vocab_size})));
    r.prefill_flops = static_cast<double>(total_flops);

    r.weight_bytes = static_cast<double>(parameter_count(m)) * m.bytes_per_param;
    r.kv_cache_bytes = static_cast<double>(mul({2, l, t, d})) * m.bytes_per_act;
    r.attention_matrix_bytes = static_cast<double>(mul({m.n_heads, t, t})) * m.bytes_per_act;
    r.activation_bytes_peak =
        static_cast<double>(mul(t, d)) * m.bytes_per_act * options.activation_multiplier + r.attention_matrix_bytes;
    r.memory_bytes = r.weight_bytes + r.kv_cache_bytes + r.activation_bytes_peak;
    r.prefill_time_s = std::max(r.prefill_flops / hw.peak_flops, r.memory_bytes / hw.mem_bandwidth);
    return r;
}

template <typename T>
T get_positive(const json& doc, const char* key, const char* kind) {
    auto it = doc.find(key);
    if (it == doc.end() || !it->is_number())
        throw ValidationError(Reason::malformed, std::string(kind) + "." + key, "missing or non-numeric");
    if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer() || it->get<long long>() < 1)
            throw ValidationError(Reason::malformed, std::string(kind) + "." + key, "must be a positive integer");
    } else {
        if (!(it->get<double>() > 0.0))
            throw ValidationError(Reason::malformed, std::string(kind) + "." + key, "must be positive");
    }
    return it->get<T>();
}

json parse_object(const std::string& text, const char* kind) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(Reason::malformed, kind, std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError(Reason::malformed, kind, "expected a JSON object");
    return doc;
}

std::string read_file(const std::filesystem::path& path, const char* field) {
    std::ifstream in(path);
    if (!in) throw IoError(path, field, "cannot open config");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::uint64_t CostQuery::total_tokens() const {
    const auto visual = static_cast<std::uint64_t>(std::floor(retention * static_cast<double>(n_visual_tokens_full) + 0.5));
    return n_text_tokens + visual;
}

void validate(const ModelConfig& m) {
    if (m.n_layers < 1 || m.hidden_dim < 1 || m.n_heads < 1 || m.head_dim < 1 || m.ffn_dim < 1 || m.vocab_size < 1)
        throw ValidationError(Reason::bad_parameter, "model", "all dimensions must be positive");
    if (m.n_heads * m.head_dim != m.hidden_dim)
        throw ValidationError(Reason::bad_parameter, "model.head_dim", "n_heads * head_dim must equal hidden_dim");
    if (!(m.bytes_per_param > 0.0) || !(m.bytes_per_act > 0.0))
        throw ValidationError(Reason::bad_parameter, "model", "byte widths must be positive");
}

void validate(const HardwareConfig& hw) {
    if (!(hw.peak_flops > 0.0) || !std::isfinite(hw.peak_flops))
        throw ValidationError(Reason::bad_parameter, "hardware.peak_flops", "must be positive");
    if (!(hw.mem_bandwidth > 0.0) || !std::isfinite(hw.mem_bandwidth))
        throw ValidationError(Reason::bad_parameter, "hardware.mem_bandwidth", "must be positive");
}

std::uint64_t parameter_count(const ModelConfig& m) {
    const std::uint64_t d = m.hidden_dim;
    const std::uint64_t mlp = mul({m.ffn_style == FfnStyle::gated ? 3u : 2u, d, m.ffn_dim});
    // attention projections + MLP + two norms per layer; embeddings, LM head, final norm
    const std::uint64_t per_layer = add(add(mul({4, d, d}), mlp), mul(2, d));
    return add(add(mul(m.n_layers, per_layer), mul({2, m.vocab_size, d})), d);
}

CostReport estimate(const ModelConfig& model, const HardwareConfig& hw, const CostQuery& query,
                    const CostOptions& options) {
    validate(model);
    validate(hw);
    if (!(query.retention > 0.0 && query.retention <= 1.0))
        throw ValidationError(Reason::out_of_range, "retention", "must be in (0, 1]");
    if (!(options.activation_multiplier >= 0.0))
        throw ValidationError(Reason::bad_parameter, "activation_multiplier", "must be non-negative");
    const auto tokens = query.total_tokens();
    if (tokens < 1) throw ValidationError(Reason::out_of_range, "tokens", "query has no tokens");

    auto report = raw_estimate(model, hw, tokens, query.retention, options);
    CostQuery full = query;
    full.retention = 1.0;
    const auto ref = raw_estimate(model, hw, full.total_tokens(), 1.0, options);

    report.flops_ratio = ratio(report.prefill_flops, ref.prefill_flops);
    report.weight_bytes_ratio = ratio(report.weight_bytes, ref.weight_bytes);
    report.kv_cache_ratio = ratio(report.kv_cache_bytes, ref.kv_cache_bytes);
    report.activation_ratio = ratio(report.activation_bytes_peak, ref.activation_bytes_peak);
    report.memory_ratio = ratio(report.memory_bytes, ref.memory_bytes);
    report.time_ratio = ratio(report.prefill_time_s, ref.prefill_time_s);
    return report;
}

std::vector<CostReport> sweep(const ModelConfig& model, const HardwareConfig& hw, const CostQuery& base,
                              std::span<const double> retentions, const CostOptions& options) {
    std::vector<CostReport> out;
    out.reserve(retentions.size());
    for (double r : retentions) {
        CostQuery q = base;
        q.retention = r;
        out.push_back(estimate(model, hw, q, options));
    }
    return out;
}

void write_csv(std::ostream& out, std::span<const CostReport> reports) {
    out << "r,T,flops,kv_bytes,act_bytes,time_s,flops_ratio,kv_bytes_ratio,act_bytes_ratio,time_s_ratio\n";
    for (const auto& r : reports) {
        out << format_double(r.retention) << ',' << r.tokens << ',' << format_double(r.prefill_flops) << ','
            << format_double(r.kv_cache_bytes) << ',' << format_double(r.activation_bytes_peak) << ','
            << format_double(r.prefill_time_s) << ',' << format_double(r.flops_ratio) << ','
            << format_double(r.kv_cache_ratio) << ',' << format_double(r.activation_ratio) << ','
            << format_double(r.time_ratio) << '\n';
    }
}

ModelConfig parse_model_config(const std::string& text) {
    const auto doc = parse_object(text, "model");
    ModelConfig m;
    m.name = doc.value("name", std::string("model"));
    m.n_layers = get_positive<std::uint64_t>(doc, "n_layers", "model");
    m.hidden_dim = get_positive<std::uint64_t>(doc, "hidden_dim", "model");
    m.n_heads = get_positive<std::uint64_t>(doc, "n_heads", "model");
    m.head_dim = doc.contains("head_dim") ? get_positive<std::uint64_t>(doc, "head_dim", "model")
                                          : m.hidden_dim / m.n_heads;
    m.ffn_dim = get_positive<std::uint64_t>(doc, "ffn_dim", "model");
    m.vocab_size = get_positive<std::uint64_t>(doc, "vocab_size", "model");
    const auto style = doc.value("ffn_style", std::string("gated"));
    if (style == "gated") m.ffn_style = FfnStyle::gated;
    else if (style == "plain") m.ffn_style = FfnStyle::plain;
    else throw ValidationError(Reason::malformed, "model.ffn_style", "expected 'gated' or 'plain'");
    if (doc.contains("bytes_per_param")) m.bytes_per_param = get_positive<double>(doc, "bytes_per_param", "model");
    if (doc.contains("bytes_per_act")) m.bytes_per_act = get_positive<double>(doc, "bytes_per_act", "model");
    validate(m);
    return m;
}

HardwareConfig parse_hardware_config(const std::string& text) {
    const auto doc = parse_object(text, "hardware");
    HardwareConfig hw;
    hw.name = doc.value("name", std::string("hardware"));
    hw.peak_flops = get_positive<double>(doc, "peak_flops", "hardware");
    hw.mem_bandwidth = get_positive<double>(doc, "mem_bandwidth", "hardware");
    validate(hw);
    return hw;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
    return parse_model_config(read_file(path, "model"));
}

HardwareConfig load_hardware_config(const std::filesystem::path& path) {
    return parse_hardware_config(read_file(path, "hardware"));
}

ModelConfig llama2_7b() {
    ModelConfig m;
    m.name = "llama2-7b";
    m.n_layers = 32;
    m.hidden_dim = 4096;
    m.n_heads = 32;
    m.head_dim = 128;
    m.ffn_dim = 11008;
    m.ffn_style = FfnStyle::gated;
    m.vocab_size = 32000;
    m.bytes_per_param = 2.0;
    m.bytes_per_act = 2.0;
    return m;
}

}  // namespace vtc::cost
