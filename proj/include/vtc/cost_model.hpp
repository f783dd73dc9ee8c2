#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace vtc::cost {

enum class FfnStyle { gated, plain };

/// Dense decoder-only transformer shape (standard multi-head attention).
struct ModelConfig {
    std::string name;
    std::uint64_t n_layers = 0;
    std::uint64_t hidden_dim = 0;
    std::uint64_t n_heads = 0;
    std::uint64_t head_dim = 0;  // hidden_dim / n_heads
    std::uint64_t ffn_dim = 0;
    FfnStyle ffn_style = FfnStyle::gated;
    std::uint64_t vocab_size = 0;
    double bytes_per_param = 2.0;
    double bytes_per_act = 2.0;
};

struct HardwareConfig {
    std::string name;
    double peak_flops = 0.0;     // FLOP/s
    double mem_bandwidth = 0.0;  // bytes/s
};

struct CostQuery {
    std::uint64_t n_text_tokens = 0;
    std::uint64_t n_visual_tokens_full = 0;
    double retention = 1.0;  // fraction of visual tokens kept, in (0, 1]

    /// n_text + round_half_up(retention * n_visual_full)
    std::uint64_t total_tokens() const;
};

struct CostOptions {
    /// Per-token activation working set in units of hidden_dim * bytes_per_act.
    double activation_multiplier = 12.0;
};

struct CostReport {
    double retention = 1.0;
    std::uint64_t tokens = 0;

    double projection_flops = 0.0;  // Q, K, V, O over all layers
    double attention_flops = 0.0;   // QK^T scores and value mixing over all layers
    double mlp_flops = 0.0;
    double lm_head_flops = 0.0;
    double prefill_flops = 0.0;

    double weight_bytes = 0.0;
    double kv_cache_bytes = 0.0;
    double attention_matrix_bytes = 0.0;  // one layer's H x T x T scores
    double activation_bytes_peak = 0.0;
    double memory_bytes = 0.0;  // weights + KV cache + activations
    double prefill_time_s = 0.0;

    // Ratios against the same query at retention 1.
    double flops_ratio = 1.0;
    double weight_bytes_ratio = 1.0;
    double kv_cache_ratio = 1.0;
    double activation_ratio = 1.0;
    double memory_ratio = 1.0;
    double time_ratio = 1.0;
};

/// Throws ValidationError for inconsistent or non-positive configuration.
void validate(const ModelConfig& model);
void validate(const HardwareConfig& hw);

std::uint64_t parameter_count(const ModelConfig& model);

/// Prefill cost with 2 FLOPs per multiply-accumulate:
///   per layer   8*T*d^2 (QKV + output) + 4*T^2*d (scores + mixing)
///               + 6*T*d*d_ff (gated) or 4*T*d*d_ff (plain)
///   once        2*T*d*V (LM head)
/// KV cache is 2*L*T*d*bytes_per_act; peak activations are
/// alpha*T*d*bytes_per_act + H*T^2*bytes_per_act; prefill time is the
/// roofline max of compute time and memory time.
CostReport estimate(const ModelConfig& model, const HardwareConfig& hw, const CostQuery& query,
                    const CostOptions& options = {});

std::vector<CostReport> sweep(const ModelConfig& model, const HardwareConfig& hw, const CostQuery& base,
                              std::span<const double> retentions, const CostOptions& options = {});

/// r,T,flops,kv_bytes,act_bytes,time_s,flops_ratio,kv_bytes_ratio,act_bytes_ratio,time_s_ratio
void write_csv(std::ostream& out, std::span<const CostReport> reports);

ModelConfig load_model_config(const std::filesystem::path& path);
HardwareConfig load_hardware_config(const std::filesystem::path& path);
ModelConfig parse_model_config(const std::string& json_text);
HardwareConfig parse_hardware_config(const std::string& json_text);

/// LLaMA-2-7B shape: 32 layers, d=4096, 32 heads, d_ff=11008 gated, V=32000, fp16.
ModelConfig llama2_7b();

}  // namespace vtc::cost
