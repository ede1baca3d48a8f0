#pragma once

#include <string>
#include <utility>

#include "msnet/optim.hpp"
#include "msnet/tensor.hpp"

namespace msnet {

struct SiebConfig {
  std::size_t size_dim = 32;   // d_e
  std::size_t image_dim = 64;  // d_i
  int recursions = 2;          // N
};

/// Size branch parameters. Tensors are shared handles, so the same objects
/// are also registered in the owning model's ParameterSet.
struct SiebParams {
  SiebConfig config;
  Tensor mlp_weight;    // [d_e, 4]
  Tensor mlp_bias;      // [d_e]
  Tensor size_gamma;    // [d_e]
  Tensor size_beta;     // [d_e]
  Tensor proj_weight;   // [d_i * d_i, d_e]
  Tensor proj_bias;     // [d_i * d_i]
  Tensor image_gamma;   // [d_i]
  Tensor image_beta;    // [d_i]
};

void validate(const SiebConfig& config);
SiebParams init_sieb(const SiebConfig& config, Rng& rng);
void register_params(ParameterSet& params, const std::string& prefix, const SiebParams& sieb);

/// [sin(pi x1), sin(pi x2), cos(pi x1), cos(pi x2)] for x in [-1, 1]^2.
Tensor encode_size(const Tensor& x_hat);
/// z_e = ReLU(LN(mlp(x_e))).
Tensor domain_feature(const Tensor& x_e, const SiebParams& params);
/// Row-major reshape of proj(z_e) to [d_i, d_i].
Tensor gen_projection(const Tensor& z_e, const SiebParams& params);
/// Applies z <- ReLU(LN(W z)) `recursions` times with a fixed W.
Tensor adaptive_project(const Tensor& z_i0, const Tensor& weight, const SiebParams& params, int recursions);

/// Whole branch: size -> W -> recursion on the pooled image feature.
Tensor sieb_forward(const Tensor& z_i0, const Tensor& x_hat, const SiebParams& params);

}  // namespace msnet
