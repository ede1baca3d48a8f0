#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msnet/image.hpp"
#include "msnet/optim.hpp"
#include "msnet/saem.hpp"
#include "msnet/sieb.hpp"

namespace msnet {

struct EncoderConfig {
  std::vector<std::size_t> stage_channels{16, 32, 64};
  std::vector<std::size_t> blocks_per_stage{2, 2, 2};
  std::vector<bool> saem_enabled{true, true, true};
  std::size_t input_size = 64;
  std::size_t groups = 4;
  std::size_t saem_heads = 4;
  std::size_t saem_kernel = 3;
  bool sieb_enabled = true;
  std::size_t size_dim = 32;
  int sieb_recursions = 2;
  std::pair<double, double> size_range{0.0, 100.0};

  std::size_t embedding_dim() const { return stage_channels.empty() ? 0 : stage_channels.back(); }
  /// Stem pooling plus one pooling per later stage.
  std::size_t downsampling() const { return std::size_t{1} << stage_channels.size(); }
};

/// Throws ConfigError naming the violated invariant.
void validate(const EncoderConfig& config);

/// Residual CNN (stem conv -> GN -> ReLU -> pool, then stages of bottleneck
/// blocks, pooling before every stage after the first), global average
/// pooling, and the optional size branch on the pooled feature.
struct Encoder {
  EncoderConfig config;
  Tensor stem_conv;  // [C0, 1, 3, 3]
  Tensor stem_gamma, stem_beta;
  std::vector<std::vector<BottleneckParams>> stages;
  std::optional<SiebParams> sieb;
  ParameterSet params;

  Encoder() = default;
  Encoder(const Encoder&) = delete;
  Encoder& operator=(const Encoder&) = delete;
  Encoder(Encoder&&) = default;
  Encoder& operator=(Encoder&&) = default;
};

/// Parameter names are prefixed with `prefix` (default "encoder").
Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed, const std::string& prefix = "encoder");

/// Output of the last stage before pooling, [d_i, h, w].
Tensor final_feature_map(const Encoder& encoder, const Tensor& image);
/// z_i^0: backbone features after global average pooling, [d_i].
Tensor backbone_features(const Encoder& encoder, const Tensor& image);
/// Full embedding z_i^N. `size_m` is (length, wingspan) in meters; without
/// it, or with the size branch disabled, the pooled feature is returned.
Tensor encode(const Encoder& encoder, const Tensor& image,
              const std::optional<std::pair<double, double>>& size_m = std::nullopt);
Tensor encode(const Encoder& encoder, const GrayImage& image,
              const std::optional<std::pair<double, double>>& size_m = std::nullopt);

/// One fusion record per SAEM block in depth order.
std::vector<FusionRatio> report_fusion_ratios(const Encoder& encoder);

}  // namespace msnet
