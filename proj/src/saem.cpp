#include "msnet/saem.hpp"

#include <cmath>
#include <sstream>

#include "msnet/errors.hpp"
#include "msnet/image.hpp"
#include "msnet/ops.hpp"
#include "msnet/text.hpp"

namespace msnet {

void validate(const SaemConfig& c) {
  if (c.channels == 0) throw ConfigError("saem: channel count must be positive");
  if (c.heads == 0 || c.channels % c.heads != 0) {
    throw ConfigError("saem: head count " + std::to_string(c.heads) + " must divide channel count " +
                      std::to_string(c.channels));
  }
  if (c.kernel == 0 || c.kernel % 2 == 0) throw ConfigError("saem: kernel extent must be odd and >= 1");
}

SaemParams init_saem(const SaemConfig& config, Rng& rng) {
  validate(config);
  const std::size_t c = config.channels, kk = config.kernel * config.kernel;
  SaemParams p;
  p.config = config;
  for (Tensor* t : {&p.proj_q, &p.proj_k, &p.proj_v}) {
    *t = Tensor::zeros({c, c, 1, 1});
    kaiming_uniform(*t, c, rng);
  }
  p.fc_expand = Tensor::zeros({kk * c, 3 * c, 1, 1});
  kaiming_uniform(p.fc_expand, 3 * c * kk, rng);
  p.alpha = Tensor::full({1}, 1.0);
  p.beta = Tensor::full({1}, 1.0);
  return p;
}

void register_params(ParameterSet& params, const std::string& prefix, const SaemParams& s) {
  params.add(prefix + ".q.weight", s.proj_q);
  params.add(prefix + ".k.weight", s.proj_k);
  params.add(prefix + ".v.weight", s.proj_v);
  params.add(prefix + ".fc_expand.weight", s.fc_expand);
  params.add(prefix + ".alpha", s.alpha);
  params.add(prefix + ".beta", s.beta);
}

Qkv project_qkv(const Tensor& f, const SaemParams& p) {
  validate(p.config);
  if (f.rank() != 3 || f.dim(0) != p.config.channels) {
    throw DimensionError("project_qkv: expected [" + std::to_string(p.config.channels) + ", H, W], got " +
                         shape_str(f.shape()));
  }
  return {conv2d(f, p.proj_q), conv2d(f, p.proj_k), conv2d(f, p.proj_v)};
}

Tensor conv_path(const Qkv& qkv, const SaemParams& p) {
  const std::size_t c = p.config.channels, k = p.config.kernel;
  const long r = static_cast<long>(k / 2);
  const Tensor taps = conv2d(concat({qkv.q, qkv.k, qkv.v}, 0), p.fc_expand);
  Tensor out;
  for (std::size_t m = 0; m < k; ++m)
    for (std::size_t n = 0; n < k; ++n) {
      const Tensor moved = shift(slice(taps, (m * k + n) * c, c), static_cast<long>(m) - r, static_cast<long>(n) - r);
      out = out.defined() ? add(out, moved) : moved;
    }
  return out;
}

Tensor attn_path(const Qkv& qkv, const SaemParams& p) {
  return local_attention(qkv.q, qkv.k, qkv.v, p.config.heads, p.config.kernel);
}

Tensor fuse(const Tensor& f_att, const Tensor& f_conv, const Tensor& alpha, const Tensor& beta) {
  if (f_att.shape() != f_conv.shape()) {
    throw DimensionError("fuse: shape mismatch " + shape_str(f_att.shape()) + " vs " + shape_str(f_conv.shape()));
  }
  return add(scale(f_att, alpha), scale(f_conv, beta));
}

Tensor saem_forward(const Tensor& f, const SaemParams& p) {
  const Qkv qkv = project_qkv(f, p);
  return fuse(attn_path(qkv, p), conv_path(qkv, p), p.alpha, p.beta);
}

void embed_kernel(SaemParams& p, const std::vector<double>& kernel) {
  const std::size_t c = p.config.channels, k = p.config.kernel, cin = 3 * c;
  if (kernel.size() != c * cin * k * k) throw DimensionError("embed_kernel: kernel must be [C, 3C, k, k]");
  auto w = p.fc_expand.mutable_values();
  for (std::size_t co = 0; co < c; ++co)
    for (std::size_t ci = 0; ci < cin; ++ci)
      for (std::size_t m = 0; m < k; ++m)
        for (std::size_t n = 0; n < k; ++n)
          w[((m * k + n) * c + co) * cin + ci] = kernel[((co * cin + ci) * k + m) * k + n];
}

void validate(const BottleneckConfig& c) {
  if (c.in_channels == 0 || c.out_channels == 0 || c.mid_channels == 0) {
    throw ConfigError("bottleneck: channel counts must be positive");
  }
  if (c.groups == 0 || c.mid_channels % c.groups != 0 || c.out_channels % c.groups != 0) {
    throw ConfigError("bottleneck: group count " + std::to_string(c.groups) +
                      " must divide mid and out channel counts");
  }
  if (c.saem) validate(SaemConfig{c.mid_channels, c.heads, c.kernel});
}

BottleneckParams init_bottleneck(const BottleneckConfig& config, Rng& rng) {
  validate(config);
  const std::size_t in = config.in_channels, mid = config.mid_channels, out = config.out_channels;
  BottleneckParams b;
  b.config = config;
  b.reduce = Tensor::zeros({mid, in, 1, 1});
  kaiming_uniform(b.reduce, in, rng);
  b.gn1_gamma = Tensor::full({mid}, 1.0);
  b.gn1_beta = Tensor::zeros({mid});
  if (config.saem) {
    b.saem = init_saem({mid, config.heads, config.kernel}, rng);
  } else {
    b.conv = Tensor::zeros({mid, mid, 3, 3});
    kaiming_uniform(b.conv, mid * 9, rng);
  }
  b.gn2_gamma = Tensor::full({mid}, 1.0);
  b.gn2_beta = Tensor::zeros({mid});
  b.expand = Tensor::zeros({out, mid, 1, 1});
  kaiming_uniform(b.expand, mid, rng);
  b.gn3_gamma = Tensor::full({out}, 1.0);
  b.gn3_beta = Tensor::zeros({out});
  if (in != out) {
    b.shortcut = Tensor::zeros({out, in, 1, 1});
    kaiming_uniform(b.shortcut, in, rng);
  }
  return b;
}

void register_params(ParameterSet& params, const std::string& prefix, const BottleneckParams& b) {
  params.add(prefix + ".reduce.weight", b.reduce);
  params.add(prefix + ".gn1.gamma", b.gn1_gamma);
  params.add(prefix + ".gn1.beta", b.gn1_beta);
  if (b.saem) {
    register_params(params, prefix + ".saem", *b.saem);
  } else {
    params.add(prefix + ".conv.weight", b.conv);
  }
  params.add(prefix + ".gn2.gamma", b.gn2_gamma);
  params.add(prefix + ".gn2.beta", b.gn2_beta);
  params.add(prefix + ".expand.weight", b.expand);
  params.add(prefix + ".gn3.gamma", b.gn3_gamma);
  params.add(prefix + ".gn3.beta", b.gn3_beta);
  if (b.shortcut.defined()) params.add(prefix + ".shortcut.weight", b.shortcut);
}

Tensor saem_bottleneck(const Tensor& x, const BottleneckParams& b) {
  const auto& c = b.config;
  if (x.rank() != 3 || x.dim(0) != c.in_channels) {
    throw DimensionError("saem_bottleneck: expected [" + std::to_string(c.in_channels) + ", H, W], got " +
                         shape_str(x.shape()));
  }
  Tensor h = relu(group_norm(conv2d(x, b.reduce), b.gn1_gamma, b.gn1_beta, c.groups));
  h = b.saem ? saem_forward(h, *b.saem) : conv2d(h, b.conv);
  h = relu(group_norm(h, b.gn2_gamma, b.gn2_beta, c.groups));
  h = group_norm(conv2d(h, b.expand), b.gn3_gamma, b.gn3_beta, c.groups);
  const Tensor skip = b.shortcut.defined() ? conv2d(x, b.shortcut) : x;
  return relu(add(h, skip));
}

FusionRatio fusion_ratio(const std::string& layer, const SaemParams& p) {
  FusionRatio r;
  r.layer = layer;
  r.abs_alpha = std::abs(p.alpha.item());
  r.abs_beta = std::abs(p.beta.item());
  if (r.abs_beta == 0.0) {
    r.log_ratio = r.abs_alpha == 0.0 ? std::nan("") : INFINITY;
  } else {
    r.log_ratio = std::log(r.abs_alpha / r.abs_beta);
  }
  return r;
}

void write_fusion_ratios(const std::filesystem::path& path, const std::vector<FusionRatio>& ratios) {
  std::ostringstream os;
  os << "layer,abs_alpha,abs_beta,log_ratio\n";
  for (const auto& r : ratios) {
    os << r.layer << ',' << format_double(r.abs_alpha) << ',' << format_double(r.abs_beta) << ','
       << format_double(r.log_ratio) << '\n';
  }
  write_file_atomic(path, os.str());
}

}  // namespace msnet
