#include "msnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "msnet/errors.hpp"
#include "msnet/optim.hpp"

namespace msnet {

namespace {

struct Probe {
  double value;
  std::uint64_t kinks;
};

Probe evaluate(const std::function<Tensor()>& fragment) {
  NoGradGuard no_grad;
  KinkMonitor monitor;
  const Tensor loss = fragment();
  if (loss.numel() != 1) {
    throw ArgumentError("grad_check: fragment must return a scalar, got " +
                        shape_str(loss.shape()));
  }
  return {loss.item(), monitor.signature()};
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& fragment, std::vector<NamedTensor> wrt,
                           const GradCheckOptions& options) {
  if (!(options.h >= 1e-7 && options.h <= 1e-3)) {
    throw ArgumentError("grad_check: h must lie in [1e-7, 1e-3]");
  }
  for (auto& [name, t] : wrt) {
    t.set_requires_grad(true);
    t.clear_grad();
  }
  const Tensor loss = fragment();
  if (loss.numel() != 1) {
    throw ArgumentError("grad_check: fragment must return a scalar, got " +
                        shape_str(loss.shape()));
  }
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (auto& [name, t] : wrt) {
    analytic.emplace_back(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
  }

  const Probe base = evaluate(fragment);
  const Probe again = evaluate(fragment);
  if (base.value != again.value || base.kinks != again.kinks || base.value != loss.item()) {
    throw StateError("grad_check: fragment is not deterministic");
  }

  GradCheckReport report;
  report.tol = options.tol;
  Rng rng = derive_rng(options.seed, 0x67636b);
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    auto& [name, t] = wrt[ti];
    std::vector<std::size_t> coords(t.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coords_per_tensor && coords.size() > options.max_coords_per_tensor) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    auto values = t.mutable_values();
    for (std::size_t idx : coords) {
      const double saved = values[idx];
      bool smooth = false;
      double numeric = 0.0;
      for (double h = options.h; h >= 1e-7 * (1 - 1e-12); h /= 10.0) {
        values[idx] = saved + h;
        const Probe plus = evaluate(fragment);
        values[idx] = saved - h;
        const Probe minus = evaluate(fragment);
        values[idx] = saved;
        if (plus.kinks == base.kinks && minus.kinks == base.kinks) {
          numeric = (plus.value - minus.value) / (2.0 * h);
          smooth = true;
          break;
        }
      }
      if (!smooth) {
        ++report.skipped_at_kinks;
        continue;
      }
      const double a = analytic[ti][idx];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
      const double err = std::abs(a - numeric) / denom;
      ++report.checked;
      if (err > report.max_rel_error || report.worst_coordinate.empty()) {
        if (err >= report.max_rel_error) {
          report.max_rel_error = err;
          report.worst_coordinate = name + "[" + std::to_string(idx) + "]";
        }
      }
    }
  }
  return report;
}

}  // namespace msnet
