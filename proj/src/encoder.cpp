#include "msnet/encoder.hpp"

#include "msnet/errors.hpp"
#include "msnet/ops.hpp"
#include "msnet/ssp.hpp"

namespace msnet {

void validate(const EncoderConfig& c) {
  const std::size_t stages = c.stage_channels.size();
  if (stages == 0) throw ConfigError("encoder: need at least one stage");
  if (c.blocks_per_stage.size() != stages || c.saem_enabled.size() != stages) {
    throw ConfigError("encoder: stage_channels, blocks_per_stage and saem_enabled must have equal length");
  }
  for (std::size_t s = 0; s < stages; ++s) {
    if (c.blocks_per_stage[s] == 0) throw ConfigError("encoder: every stage needs at least one block");
    const std::size_t ch = c.stage_channels[s];
    if (ch < 2 || ch % 2 != 0) throw ConfigError("encoder: stage channel counts must be even");
    if (ch % c.groups != 0 || (ch / 2) % c.groups != 0) {
      throw ConfigError("encoder: group count " + std::to_string(c.groups) + " must divide " +
                        std::to_string(ch) + " and its bottleneck width " + std::to_string(ch / 2));
    }
    if (c.saem_enabled[s] && (ch / 2) % c.saem_heads != 0) {
      throw ConfigError("encoder: SAEM head count " + std::to_string(c.saem_heads) +
                        " must divide bottleneck width " + std::to_string(ch / 2));
    }
  }
  if (c.saem_kernel == 0 || c.saem_kernel % 2 == 0) throw ConfigError("encoder: SAEM kernel must be odd");
  if (c.input_size == 0 || c.input_size % c.downsampling() != 0) {
    throw ConfigError("encoder: input_size " + std::to_string(c.input_size) +
                      " must be divisible by the total downsampling factor " + std::to_string(c.downsampling()));
  }
  if (!(c.size_range.first < c.size_range.second)) throw ConfigError("encoder: size range needs lo < hi");
  if (c.sieb_recursions < 0) throw ConfigError("encoder: SIEB recursion count must be non-negative");
  if (c.sieb_enabled && c.size_dim == 0) throw ConfigError("encoder: SIEB size dimension must be positive");
}

Encoder build_encoder(const EncoderConfig& config, std::uint64_t seed, const std::string& prefix) {
  validate(config);
  Encoder e;
  e.config = config;
  Rng rng = derive_rng(seed, 0x656e636f646572);
  const std::size_t c0 = config.stage_channels.front();
  e.stem_conv = Tensor::zeros({c0, 1, 3, 3});
  kaiming_uniform(e.stem_conv, 9, rng);
  e.stem_gamma = Tensor::full({c0}, 1.0);
  e.stem_beta = Tensor::zeros({c0});
  e.params.add(prefix + ".stem.conv.weight", e.stem_conv);
  e.params.add(prefix + ".stem.gn.gamma", e.stem_gamma);
  e.params.add(prefix + ".stem.gn.beta", e.stem_beta);

  std::size_t in = c0;
  for (std::size_t s = 0; s < config.stage_channels.size(); ++s) {
    const std::size_t out = config.stage_channels[s];
    e.stages.emplace_back();
    for (std::size_t b = 0; b < config.blocks_per_stage[s]; ++b) {
      BottleneckConfig bc;
      bc.in_channels = in;
      bc.out_channels = out;
      bc.mid_channels = out / 2;
      bc.groups = config.groups;
      bc.saem = config.saem_enabled[s];
      bc.heads = config.saem_heads;
      bc.kernel = config.saem_kernel;
      e.stages.back().push_back(init_bottleneck(bc, rng));
      register_params(e.params,
                      prefix + ".stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1),
                      e.stages.back().back());
      in = out;
    }
  }
  if (config.sieb_enabled) {
    e.sieb = init_sieb({config.size_dim, config.embedding_dim(), config.sieb_recursions}, rng);
    register_params(e.params, prefix + ".sieb", *e.sieb);
  }
  return e;
}

Tensor final_feature_map(const Encoder& e, const Tensor& image) {
  const std::size_t n = e.config.input_size;
  if (image.shape() != Shape{1, n, n}) {
    throw ArgumentError("encode: expected a [1, " + std::to_string(n) + ", " + std::to_string(n) +
                        "] image, got " + shape_str(image.shape()));
  }
  Tensor h = relu(group_norm(conv2d(image, e.stem_conv), e.stem_gamma, e.stem_beta, e.config.groups));
  h = avg_pool2(h);
  for (std::size_t s = 0; s < e.stages.size(); ++s) {
    if (s > 0) h = avg_pool2(h);
    for (const auto& block : e.stages[s]) h = saem_bottleneck(h, block);
  }
  return h;
}

Tensor backbone_features(const Encoder& e, const Tensor& image) { return global_avg_pool(final_feature_map(e, image)); }

Tensor encode(const Encoder& e, const Tensor& image, const std::optional<std::pair<double, double>>& size_m) {
  const Tensor z0 = backbone_features(e, image);
  if (!e.sieb || !size_m) return z0;
  const auto [len, wid] = normalize_size(size_m->first, size_m->second, e.config.size_range);
  return sieb_forward(z0, Tensor::vector({len, wid}), *e.sieb);
}

Tensor encode(const Encoder& e, const GrayImage& image, const std::optional<std::pair<double, double>>& size_m) {
  return encode(e, to_tensor(image), size_m);
}

std::vector<FusionRatio> report_fusion_ratios(const Encoder& e) {
  std::vector<FusionRatio> out;
  for (std::size_t s = 0; s < e.stages.size(); ++s)
    for (std::size_t b = 0; b < e.stages[s].size(); ++b) {
      const auto& block = e.stages[s][b];
      if (block.saem) {
        out.push_back(fusion_ratio("stage" + std::to_string(s + 1) + ".block" + std::to_string(b + 1), *block.saem));
      }
    }
  return out;
}

}  // namespace msnet
