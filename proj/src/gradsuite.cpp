#include "msnet/gradsuite.hpp"

#include <chrono>
#include <cmath>
#include <functional>

#include "msnet/cssl.hpp"
#include "msnet/encoder.hpp"
#include "msnet/ops.hpp"
#include "msnet/saem.hpp"
#include "msnet/sieb.hpp"

namespace msnet {

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

void randomize(const Tensor& t, Rng& rng, double lo, double hi) {
  Tensor handle = t;
  for (auto& x : handle.mutable_values()) x = uniform(rng, lo, hi);
}

std::vector<NamedTensor> named(const ParameterSet& params) {
  std::vector<NamedTensor> out;
  for (const auto& p : params.items()) out.emplace_back(p.name, p.tensor);
  return out;
}

std::vector<double> unit_vector(std::size_t d, Rng& rng) {
  std::vector<double> v(d);
  double n = 0.0;
  for (auto& x : v) {
    x = normal(rng, 0.0, 1.0);
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

NegativeQueue random_queue(std::size_t k, std::size_t d, Rng& rng) {
  NegativeQueue q(k, d);
  for (std::size_t i = 0; i < k; ++i) q.enqueue({unit_vector(d, rng)});
  return q;
}

NamedGradReport timed(std::string name, const std::function<GradCheckReport()>& run) {
  const auto start = std::chrono::steady_clock::now();
  NamedGradReport r{std::move(name), run(), 0.0};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

std::vector<NamedGradReport> run_gradient_suite(std::uint64_t seed, const GradCheckOptions& base) {
  std::vector<NamedGradReport> out;
  GradCheckOptions opt = base;
  opt.seed = seed;

  out.push_back(timed("sieb", [&] {
    Rng rng = derive_rng(seed, 1);
    SiebParams p = init_sieb({6, 5, 2}, rng);
    randomize(p.mlp_bias, rng, -0.5, 0.5);
    randomize(p.size_gamma, rng, 0.5, 1.5);
    randomize(p.size_beta, rng, -0.3, 0.3);
    randomize(p.proj_bias, rng, -0.5, 0.5);
    randomize(p.image_gamma, rng, 0.5, 1.5);
    randomize(p.image_beta, rng, -0.3, 0.3);
    ParameterSet ps;
    register_params(ps, "sieb", p);
    const Tensor z0 = random_tensor({5}, rng, true, 0.0, 1.0);
    const Tensor xh = random_tensor({2}, rng, true, -0.9, 0.9);
    const Tensor r = random_tensor({5}, rng, false);
    auto wrt = named(ps);
    wrt.emplace_back("z_i0", z0);
    wrt.emplace_back("x_hat", xh);
    return grad_check([&] { return dot(sieb_forward(z0, xh, p), r); }, wrt, opt);
  }));

  out.push_back(timed("saem_block", [&] {
    Rng rng = derive_rng(seed, 2);
    BottleneckParams b = init_bottleneck({4, 8, 4, 2, true, 2, 3}, rng);
    ParameterSet ps;
    register_params(ps, "block", b);
    for (const auto& prm : ps.items()) randomize(prm.tensor, rng, -1.0, 1.0);
    const Tensor x = random_tensor({4, 5, 5}, rng, true);
    const Tensor r = random_tensor({8, 5, 5}, rng, false);
    auto wrt = named(ps);
    wrt.emplace_back("x", x);
    return grad_check([&] { return dot(saem_bottleneck(x, b), r); }, wrt, opt);
  }));

  out.push_back(timed("info_nce", [&] {
    Rng rng = derive_rng(seed, 3);
    const NegativeQueue queue = random_queue(16, 6, rng);
    const Tensor q = random_tensor({6}, rng, true);
    const Tensor k = random_tensor({6}, rng, false);
    return grad_check([&] { return info_nce(l2_normalize(q), l2_normalize(k), queue, 0.5); }, {{"q", q}}, opt);
  }));

  out.push_back(timed("d_ec_pair", [&] {
    Rng rng = derive_rng(seed, 4);
    const Tensor x = random_tensor({7}, rng, true, -2.0, 2.0);
    const Tensor y = random_tensor({7}, rng, true, -2.0, 2.0);
    return grad_check([&] { return d_ec_pair(softmax(x), softmax(y)); }, {{"x", x}, {"y", y}}, opt);
  }));

  out.push_back(timed("d_ec_sets", [&] {
    Rng rng = derive_rng(seed, 5);
    std::vector<Tensor> a, b;
    std::vector<NamedTensor> wrt;
    for (int i = 0; i < 2; ++i) {
      a.push_back(random_tensor({5}, rng, true, -2.0, 2.0));
      wrt.emplace_back("a" + std::to_string(i), a.back());
    }
    for (int i = 0; i < 3; ++i) {
      b.push_back(random_tensor({5}, rng, true, -2.0, 2.0));
      wrt.emplace_back("b" + std::to_string(i), b.back());
    }
    return grad_check(
        [&] {
          std::vector<Tensor> pa, pb;
          for (const auto& t : a) pa.push_back(softmax(t));
          for (const auto& t : b) pb.push_back(softmax(t));
          return d_ec_sets(pa, pb);
        },
        wrt, opt);
  }));

  for (DecMode mode : {DecMode::pairwise, DecMode::class_sets}) {
    out.push_back(timed(std::string("sp_loss_") + to_string(mode), [&] {
      Rng rng = derive_rng(seed, 6, static_cast<std::uint64_t>(mode));
      const NegativeQueue queue = random_queue(8, 6, rng);
      const ProjectionHead head = init_head(5, 6, rng);
      ParameterSet ps;
      register_params(ps, "head", head);
      std::vector<Tensor> z, k;
      auto wrt = named(ps);
      for (int i = 0; i < 3; ++i) {
        z.push_back(random_tensor({5}, rng, true));
        k.push_back(random_tensor({6}, rng, false, -2.0, 2.0));
        wrt.emplace_back("z" + std::to_string(i), z.back());
      }
      const std::vector<std::string> labels{"a", "b", "a"};
      const SpLossConfig cfg{0.07, mode};
      return grad_check(
          [&] {
            std::vector<Tensor> q;
            for (const auto& zi : z) q.push_back(head_forward(head, zi));
            return sp_loss(q, k, queue, cfg, labels).total;
          },
          wrt, opt);
    }));
  }

  out.push_back(timed("desk_encoder", [&] {
    const Encoder e = build_encoder(EncoderConfig{}, seed);
    Rng rng = derive_rng(seed, 7);
    for (const auto& p : e.params.items()) {
      if (p.name.find("beta") != std::string::npos && p.name.find("saem") == std::string::npos) {
        randomize(p.tensor, rng, -0.2, 0.2);
      }
    }
    const std::size_t n = e.config.input_size;
    const Tensor img = random_tensor({1, n, n}, rng, false, 0.0, 1.0);
    const Tensor r = random_tensor({e.config.embedding_dim()}, rng, false);
    GradCheckOptions sub = opt;
    if (sub.max_coords_per_tensor == 0) sub.max_coords_per_tensor = 4;
    return grad_check([&] { return dot(encode(e, img, std::pair{35.0, 30.0}), r); }, named(e.params), sub);
  }));
  return out;
}

}  // namespace msnet
