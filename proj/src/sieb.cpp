#include "msnet/sieb.hpp"

#include <numbers>

#include "msnet/errors.hpp"
#include "msnet/ops.hpp"

namespace msnet {

void validate(const SiebConfig& config) {
  if (config.size_dim == 0 || config.image_dim == 0) throw ConfigError("sieb: dimensions must be positive");
  if (config.recursions < 0) throw ConfigError("sieb: recursion count must be non-negative");
}

SiebParams init_sieb(const SiebConfig& config, Rng& rng) {
  validate(config);
  const std::size_t de = config.size_dim, di = config.image_dim;
  SiebParams p;
  p.config = config;
  p.mlp_weight = Tensor::zeros({de, 4});
  kaiming_uniform(p.mlp_weight, 4, rng);
  p.mlp_bias = Tensor::zeros({de});
  p.size_gamma = Tensor::full({de}, 1.0);
  p.size_beta = Tensor::zeros({de});
  p.proj_weight = Tensor::zeros({di * di, de});
  kaiming_uniform(p.proj_weight, de, rng);
  p.proj_bias = Tensor::zeros({di * di});
  p.image_gamma = Tensor::full({di}, 1.0);
  p.image_beta = Tensor::zeros({di});
  return p;
}

void register_params(ParameterSet& params, const std::string& prefix, const SiebParams& s) {
  params.add(prefix + ".mlp.weight", s.mlp_weight);
  params.add(prefix + ".mlp.bias", s.mlp_bias);
  params.add(prefix + ".size_ln.gamma", s.size_gamma);
  params.add(prefix + ".size_ln.beta", s.size_beta);
  params.add(prefix + ".proj.weight", s.proj_weight);
  params.add(prefix + ".proj.bias", s.proj_bias);
  params.add(prefix + ".image_ln.gamma", s.image_gamma);
  params.add(prefix + ".image_ln.beta", s.image_beta);
}

Tensor encode_size(const Tensor& x_hat) {
  if (x_hat.shape() != Shape{2}) throw DimensionError("encode_size: expected a 2-vector, got " + shape_str(x_hat.shape()));
  for (double v : x_hat.values()) {
    if (!(v >= -1.0 && v <= 1.0)) throw ArgumentError("encode_size: components must lie in [-1, 1]");
  }
  const Tensor scaled = mul_scalar(x_hat, std::numbers::pi);
  return concat({sin(scaled), cos(scaled)}, 0);
}

Tensor domain_feature(const Tensor& x_e, const SiebParams& p) {
  return relu(layer_norm(add(matvec(p.mlp_weight, x_e), p.mlp_bias), p.size_gamma, p.size_beta));
}

Tensor gen_projection(const Tensor& z_e, const SiebParams& p) {
  const std::size_t di = p.config.image_dim;
  return reshape(add(matvec(p.proj_weight, z_e), p.proj_bias), {di, di});
}

Tensor adaptive_project(const Tensor& z_i0, const Tensor& weight, const SiebParams& p, int recursions) {
  if (recursions < 0) throw ArgumentError("adaptive_project: recursion count must be non-negative");
  Tensor z = z_i0;
  for (int n = 0; n < recursions; ++n) z = relu(layer_norm(matvec(weight, z), p.image_gamma, p.image_beta));
  return z;
}

Tensor sieb_forward(const Tensor& z_i0, const Tensor& x_hat, const SiebParams& p) {
  const Tensor weight = gen_projection(domain_feature(encode_size(x_hat), p), p);
  return adaptive_project(z_i0, weight, p, p.config.recursions);
}

}  // namespace msnet
