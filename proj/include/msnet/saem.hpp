#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "msnet/optim.hpp"
#include "msnet/tensor.hpp"

namespace msnet {

struct SaemConfig {
  std::size_t channels = 16;
  std::size_t heads = 4;   // M
  std::size_t kernel = 3;  // k, also the attention window
};

struct SaemParams {
  SaemConfig config;
  Tensor proj_q;     // [C, C, 1, 1]
  Tensor proj_k;     // [C, C, 1, 1]
  Tensor proj_v;     // [C, C, 1, 1]
  Tensor fc_expand;  // [k*k*C, 3C, 1, 1]; slice (m*k + n) holds the (m, n) tap
  Tensor alpha;      // [1]
  Tensor beta;       // [1]
};

void validate(const SaemConfig& config);
SaemParams init_saem(const SaemConfig& config, Rng& rng);
void register_params(ParameterSet& params, const std::string& prefix, const SaemParams& saem);

struct Qkv {
  Tensor q, k, v;
};

/// Shared 1x1 projections of F [C, H, W].
Qkv project_qkv(const Tensor& f, const SaemParams& params);
/// Expands concat(Q, K, V) into k*k per-tap maps, shifts tap (m, n) by
/// (m - k/2, n - k/2) and sums: a k x k convolution built from 1x1 pieces.
Tensor conv_path(const Qkv& qkv, const SaemParams& params);
/// Windowed multi-head softmax attention, heads concatenated.
Tensor attn_path(const Qkv& qkv, const SaemParams& params);
/// alpha * F_att + beta * F_conv.
Tensor fuse(const Tensor& f_att, const Tensor& f_conv, const Tensor& alpha, const Tensor& beta);
Tensor saem_forward(const Tensor& f, const SaemParams& params);

/// Writes a k x k kernel [C, 3C, k, k] into fc_expand so that conv_path
/// reproduces conv2d(concat(Q, K, V), kernel).
void embed_kernel(SaemParams& params, const std::vector<double>& kernel);

struct BottleneckConfig {
  std::size_t in_channels = 16;
  std::size_t out_channels = 16;
  std::size_t mid_channels = 8;
  std::size_t groups = 4;
  bool saem = true;
  std::size_t heads = 4;
  std::size_t kernel = 3;
};

/// 1x1 reduce -> GN -> ReLU -> SAEM (or plain 3x3 conv) -> GN -> ReLU ->
/// 1x1 expand -> GN -> add shortcut -> ReLU. Convolutions carry no bias.
struct BottleneckParams {
  BottleneckConfig config;
  Tensor reduce;  // [mid, in, 1, 1]
  Tensor gn1_gamma, gn1_beta;
  std::optional<SaemParams> saem;
  Tensor conv;  // [mid, mid, 3, 3] when SAEM is disabled
  Tensor gn2_gamma, gn2_beta;
  Tensor expand;  // [out, mid, 1, 1]
  Tensor gn3_gamma, gn3_beta;
  Tensor shortcut;  // [out, in, 1, 1] when in != out, else undefined
};

void validate(const BottleneckConfig& config);
BottleneckParams init_bottleneck(const BottleneckConfig& config, Rng& rng);
void register_params(ParameterSet& params, const std::string& prefix, const BottleneckParams& block);
Tensor saem_bottleneck(const Tensor& x, const BottleneckParams& params);

struct FusionRatio {
  std::string layer;
  double abs_alpha = 0.0;
  double abs_beta = 0.0;
  double log_ratio = 0.0;
};

FusionRatio fusion_ratio(const std::string& layer, const SaemParams& params);
/// CSV `layer,abs_alpha,abs_beta,log_ratio`; infinite ratios print as inf.
void write_fusion_ratios(const std::filesystem::path& path, const std::vector<FusionRatio>& ratios);

}  // namespace msnet
