#include "msnet/cssl.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

#include "msnet/errors.hpp"
#include "msnet/ops.hpp"
#include "msnet/text.hpp"

namespace msnet {

namespace {

constexpr std::uint64_t kWarmupStream = 0x7761726d;
constexpr std::uint64_t kAugmentStream = 0x6175676d;
constexpr std::uint64_t kShuffleStream = 0x73687566;
constexpr std::uint64_t kBranchStream = 0x6272616e;

void require_unit(const char* op, const char* what, std::span<const double> v, double tol) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  if (!(std::abs(std::sqrt(n2) - 1.0) <= tol)) {
    throw ArgumentError(std::string(op) + ": " + what + " must be unit norm, got norm " +
                        format_double(std::sqrt(n2)));
  }
}

void require_simplex(const Tensor& p) {
  if (p.rank() != 1) throw DimensionError("d_ec_pair: expected a vector, got " + shape_str(p.shape()));
  double s = 0.0;
  for (double x : p.values()) {
    if (!(x >= 0.0)) throw ArgumentError("d_ec_pair: probability vector has a negative entry");
    s += x;
  }
  if (!(std::abs(s - 1.0) <= 1e-6)) {
    throw ArgumentError("d_ec_pair: probabilities sum to " + format_double(s) + ", expected 1");
  }
}

GrayImage crop_region(const GrayImage& src, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  GrayImage out = make_image(h, w, 0.0, src.resolution_m_per_px);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = src.at(top + r, left + c);
  return out;
}

double border_mean(const GrayImage& img) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < img.height; ++r)
    for (std::size_t c = 0; c < img.width; ++c) {
      if (r == 0 || c == 0 || r + 1 == img.height || c + 1 == img.width) {
        s += img.at(r, c);
        ++n;
      }
    }
  return n ? s / static_cast<double>(n) : 0.0;
}

GrayImage rotate_image(const GrayImage& img, double angle_rad) {
  GrayImage out = img;
  const double fill = border_mean(img);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  const double cs = std::cos(angle_rad), sn = std::sin(angle_rad);
  const auto h = static_cast<long>(img.height), w = static_cast<long>(img.width);
  for (long r = 0; r < h; ++r)
    for (long c = 0; c < w; ++c) {
      const double dx = static_cast<double>(c) - cx, dy = static_cast<double>(r) - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const auto x0 = static_cast<long>(fx), y0 = static_cast<long>(fy);
      const double ax = sx - fx, ay = sy - fy;
      auto px = [&](long y, long x) { return (y < 0 || x < 0 || y >= h || x >= w) ? fill : img.at(y, x); };
      const double v = (1 - ay) * ((1 - ax) * px(y0, x0) + ax * px(y0, x0 + 1)) +
                       ay * ((1 - ax) * px(y0 + 1, x0) + ax * px(y0 + 1, x0 + 1));
      out.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = std::clamp(v, 0.0, 1.0);
    }
  return out;
}

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

void check_batch(const char* op, std::span<const Tensor> q, std::span<const Tensor> k, const SpLossConfig& config,
                 std::span<const std::string> labels) {
  if (q.empty()) throw ArgumentError(std::string(op) + ": empty batch");
  if (q.size() != k.size()) throw ArgumentError(std::string(op) + ": query and key batch sizes differ");
  if (!(config.tau > 0.0)) throw ArgumentError(std::string(op) + ": tau must be positive");
  if (config.dec_mode == DecMode::class_sets && labels.size() != q.size()) {
    throw ArgumentError(std::string(op) + ": class_sets mode needs one label per sample");
  }
}

std::map<std::string, std::vector<std::size_t>> group_by_label(std::span<const std::string> labels) {
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  return groups;
}

}  // namespace

void validate(const AugmentationPolicy& p) {
  if (p.output_size < kMinImageExtent) throw ConfigError("augmentation: output size below minimum extent");
  if (!(p.crop_area_min > 0.0 && p.crop_area_min <= p.crop_area_max && p.crop_area_max <= 1.0)) {
    throw ConfigError("augmentation: crop area range must satisfy 0 < min <= max <= 1");
  }
  if (!(p.flip_probability >= 0.0 && p.flip_probability <= 1.0) ||
      !(p.blur_probability >= 0.0 && p.blur_probability <= 1.0)) {
    throw ConfigError("augmentation: probabilities must lie in [0, 1]");
  }
  if (!(p.rotation_max_deg >= 0.0 && p.rotation_max_deg <= 180.0)) {
    throw ConfigError("augmentation: rotation range must lie in [0, 180] degrees");
  }
  if (!(p.blur_sigma_min > 0.0 && p.blur_sigma_min <= p.blur_sigma_max)) {
    throw ConfigError("augmentation: blur sigma range must satisfy 0 < min <= max");
  }
}

GrayImage augment(const GrayImage& image, const AugmentationPolicy& policy, Rng& rng) {
  validate(policy);
  validate(image);
  GrayImage out = image;
  if (policy.crop) {
    const double area = uniform(rng, policy.crop_area_min, policy.crop_area_max);
    const double side = std::sqrt(area);
    const auto h = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * image.height)), 1, image.height);
    const auto w = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(side * image.width)), 1, image.width);
    const auto top = std::min(static_cast<std::size_t>(uniform(rng, 0.0, 1.0) * (image.height - h + 1)), image.height - h);
    const auto left = std::min(static_cast<std::size_t>(uniform(rng, 0.0, 1.0) * (image.width - w + 1)), image.width - w);
    out = crop_region(image, top, left, h, w);
  }
  out = resize_bilinear(out, policy.output_size, policy.output_size);
  if (policy.flip && uniform(rng, 0.0, 1.0) < policy.flip_probability) {
    for (std::size_t r = 0; r < out.height; ++r) {
      auto row = out.pixels.begin() + static_cast<std::ptrdiff_t>(r * out.width);
      std::reverse(row, row + static_cast<std::ptrdiff_t>(out.width));
    }
  }
  if (policy.rotate && policy.rotation_max_deg > 0.0) {
    const double deg = uniform(rng, -policy.rotation_max_deg, policy.rotation_max_deg);
    out = rotate_image(out, deg * std::numbers::pi / 180.0);
  }
  if (policy.blur && uniform(rng, 0.0, 1.0) < policy.blur_probability) {
    out = gaussian_blur(out, uniform(rng, policy.blur_sigma_min, policy.blur_sigma_max));
  }
  for (auto& v : out.pixels) v = std::clamp(v, 0.0, 1.0);
  return out;
}

NegativeQueue::NegativeQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), storage_(capacity * dim, 0.0) {
  if (capacity == 0 || dim == 0) throw ArgumentError("NegativeQueue: capacity and dimension must be positive");
}

void NegativeQueue::enqueue(const std::vector<std::vector<double>>& keys) {
  if (keys.size() > capacity_) {
    throw ArgumentError("enqueue: batch of " + std::to_string(keys.size()) + " exceeds queue capacity " +
                        std::to_string(capacity_));
  }
  for (const auto& k : keys) {
    if (k.size() != dim_) throw ArgumentError("enqueue: key dimension " + std::to_string(k.size()) + " != " + std::to_string(dim_));
    require_unit("enqueue", "key", k, 1e-9);
  }
  for (const auto& k : keys) {
    std::size_t slot;
    if (size_ < capacity_) {
      slot = (head_ + size_) % capacity_;
      ++size_;
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
    }
    std::copy(k.begin(), k.end(), storage_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
  }
  if (!keys.empty()) matrix_ = Tensor();
}

std::span<const double> NegativeQueue::entry(std::size_t i) const {
  if (i >= size_) throw ArgumentError("NegativeQueue::entry: index out of range");
  return std::span<const double>(storage_).subspan(((head_ + i) % capacity_) * dim_, dim_);
}

const Tensor& NegativeQueue::matrix() const {
  if (size_ == 0) throw StateError("NegativeQueue: empty queue has no matrix");
  if (!matrix_.defined()) {
    std::vector<double> v;
    v.reserve(size_ * dim_);
    for (std::size_t i = 0; i < size_; ++i) {
      auto e = entry(i);
      v.insert(v.end(), e.begin(), e.end());
    }
    matrix_ = Tensor::from({size_, dim_}, std::move(v));
  }
  return matrix_;
}

Tensor info_nce(const Tensor& q, const Tensor& k_plus, const NegativeQueue& queue, double tau) {
  if (!(tau > 0.0)) throw ArgumentError("info_nce: tau must be positive");
  if (queue.size() == 0) throw ArgumentError("info_nce: negative queue is empty");
  if (q.shape() != Shape{queue.dim()} || k_plus.shape() != Shape{queue.dim()}) {
    throw DimensionError("info_nce: q " + shape_str(q.shape()) + " and k+ " + shape_str(k_plus.shape()) +
                         " must both be [" + std::to_string(queue.dim()) + "]");
  }
  require_unit("info_nce", "q", q.values(), 1e-6);
  require_unit("info_nce", "k+", k_plus.values(), 1e-6);
  const Tensor logits = mul_scalar(concat({dot(q, k_plus.detach()), matvec(queue.matrix(), q)}, 0), 1.0 / tau);
  return mul_scalar(select(log_softmax(logits), 0), -1.0);
}

Tensor d_ec_pair(const Tensor& p1, const Tensor& p2) {
  require_simplex(p1);
  require_simplex(p2);
  if (p1.shape() != p2.shape()) {
    throw DimensionError("d_ec_pair: shapes " + shape_str(p1.shape()) + " and " + shape_str(p2.shape()) + " differ");
  }
  const Tensor d = sub(p1, p2);
  return dot(d, d);
}

Tensor d_ec_sets(std::span<const Tensor> s_i, std::span<const Tensor> s_j) {
  if (s_i.empty() || s_j.empty()) throw ArgumentError("d_ec_sets: both sets must be non-empty");
  Tensor acc;
  for (const auto& a : s_i)
    for (const auto& b : s_j) {
      const Tensor d = d_ec_pair(a, b);
      acc = acc.defined() ? add(acc, d) : d;
    }
  return mul_scalar(acc, 1.0 / static_cast<double>(s_i.size() * s_j.size()));
}

const char* to_string(DecMode mode) {
  switch (mode) {
    case DecMode::pairwise:
      return "pairwise";
    case DecMode::class_sets:
      return "class_sets";
    case DecMode::none:
      break;
  }
  return "none";
}

std::optional<DecMode> parse_dec_mode(std::string_view text) {
  if (text == "pairwise") return DecMode::pairwise;
  if (text == "class_sets") return DecMode::class_sets;
  if (text == "none") return DecMode::none;
  return std::nullopt;
}

SpLossTerms sp_loss(std::span<const Tensor> q_logits, std::span<const Tensor> k_logits, const NegativeQueue& queue,
                    const SpLossConfig& config, std::span<const std::string> labels) {
  check_batch("sp_loss", q_logits, k_logits, config, labels);
  const double inv_b = 1.0 / static_cast<double>(q_logits.size());
  std::vector<Tensor> infos, pq, pk;
  for (std::size_t b = 0; b < q_logits.size(); ++b) {
    const Tensor k = k_logits[b].detach();
    infos.push_back(info_nce(l2_normalize(q_logits[b]), l2_normalize(k), queue, config.tau));
    pq.push_back(softmax(q_logits[b]));
    pk.push_back(softmax(k));
  }
  SpLossTerms t;
  t.info_nce = mul_scalar(sum(concat(std::span<const Tensor>(infos), 0)), inv_b);
  switch (config.dec_mode) {
    case DecMode::pairwise: {
      std::vector<Tensor> d;
      for (std::size_t b = 0; b < pq.size(); ++b) d.push_back(d_ec_pair(pq[b], pk[b]));
      t.d_ec = mul_scalar(sum(concat(std::span<const Tensor>(d), 0)), inv_b);
      break;
    }
    case DecMode::class_sets: {
      std::vector<Tensor> d;
      for (const auto& [label, idx] : group_by_label(labels)) {
        std::vector<Tensor> sq, sk;
        for (auto i : idx) {
          sq.push_back(pq[i]);
          sk.push_back(pk[i]);
        }
        d.push_back(d_ec_sets(sq, sk));
      }
      t.d_ec = mul_scalar(sum(concat(std::span<const Tensor>(d), 0)), 1.0 / static_cast<double>(d.size()));
      break;
    }
    case DecMode::none:
      t.d_ec = Tensor::scalar(0.0);
      break;
  }
  t.total = add(t.info_nce, t.d_ec);
  return t;
}

SpLossTerms sp_loss_sample(const Tensor& q_logits, std::size_t index, std::span<const Tensor> k_logits,
                           const NegativeQueue& queue, const SpLossConfig& config, std::span<const std::string> labels) {
  if (!(config.tau > 0.0)) throw ArgumentError("sp_loss_sample: tau must be positive");
  if (index >= k_logits.size()) throw ArgumentError("sp_loss_sample: index outside the batch");
  if (config.dec_mode == DecMode::class_sets && labels.size() != k_logits.size()) {
    throw ArgumentError("sp_loss_sample: class_sets mode needs one label per sample");
  }
  const double inv_b = 1.0 / static_cast<double>(k_logits.size());
  const Tensor k = k_logits[index].detach();
  SpLossTerms t;
  t.info_nce = mul_scalar(info_nce(l2_normalize(q_logits), l2_normalize(k), queue, config.tau), inv_b);
  const Tensor pq = softmax(q_logits);
  switch (config.dec_mode) {
    case DecMode::pairwise:
      t.d_ec = mul_scalar(d_ec_pair(pq, softmax(k)), inv_b);
      break;
    case DecMode::class_sets: {
      const auto groups = group_by_label(labels);
      const auto& members = groups.at(labels[index]);
      Tensor acc;
      for (auto v : members) {
        const Tensor d = d_ec_pair(pq, softmax(k_logits[v].detach()));
        acc = acc.defined() ? add(acc, d) : d;
      }
      const double m = static_cast<double>(members.size());
      t.d_ec = mul_scalar(acc, 1.0 / (static_cast<double>(groups.size()) * m * m));
      break;
    }
    case DecMode::none:
      t.d_ec = Tensor::scalar(0.0);
      break;
  }
  t.total = add(t.info_nce, t.d_ec);
  return t;
}

ProjectionHead init_head(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  if (in_dim == 0 || out_dim == 0) throw ConfigError("projection head: dimensions must be positive");
  ProjectionHead h;
  h.fc1_weight = Tensor::zeros({in_dim, in_dim});
  kaiming_uniform(h.fc1_weight, in_dim, rng);
  h.fc1_bias = Tensor::zeros({in_dim});
  h.fc2_weight = Tensor::zeros({out_dim, in_dim});
  kaiming_uniform(h.fc2_weight, in_dim, rng);
  h.fc2_bias = Tensor::zeros({out_dim});
  return h;
}

void register_params(ParameterSet& params, const std::string& prefix, const ProjectionHead& head) {
  params.add(prefix + ".fc1.weight", head.fc1_weight);
  params.add(prefix + ".fc1.bias", head.fc1_bias);
  params.add(prefix + ".fc2.weight", head.fc2_weight);
  params.add(prefix + ".fc2.bias", head.fc2_bias);
}

Tensor head_forward(const ProjectionHead& head, const Tensor& z) {
  const Tensor h = relu(add(matvec(head.fc1_weight, z), head.fc1_bias));
  return add(matvec(head.fc2_weight, h), head.fc2_bias);
}

Tensor ContrastiveModel::logits(const GrayImage& image, const std::optional<std::pair<double, double>>& size_m) const {
  return head_forward(head, encode(encoder, image, size_m));
}

ContrastiveModel build_contrastive_model(const EncoderConfig& config, std::size_t head_dim, std::uint64_t seed) {
  ContrastiveModel m;
  m.encoder = build_encoder(config, seed);
  Rng rng = derive_rng(seed, 0x68656164);
  m.head = init_head(config.embedding_dim(), head_dim, rng);
  for (const auto& p : m.encoder.params.items()) m.params.add(p.name, p.tensor);
  register_params(m.params, "head", m.head);
  return m;
}

void momentum_update(ParameterSet& key, const ParameterSet& query, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ArgumentError("momentum_update: m must lie in [0, 1), got " + format_double(m));
  if (key.size() != query.size()) {
    throw StateError("momentum_update: key has " + std::to_string(key.size()) + " parameters, query " +
                     std::to_string(query.size()));
  }
  for (std::size_t i = 0; i < key.size(); ++i) {
    const auto& k = key.items()[i];
    const auto& q = query.items()[i];
    if (k.name != q.name || k.tensor.shape() != q.tensor.shape()) {
      throw StateError("momentum_update: parameter mismatch at " + k.name + " / " + q.name);
    }
  }
  for (std::size_t i = 0; i < key.size(); ++i) {
    auto kv = key.items()[i].tensor.mutable_values();
    auto qv = query.items()[i].tensor.values();
    for (std::size_t j = 0; j < kv.size(); ++j) kv[j] = m * kv[j] + (1.0 - m) * qv[j];
  }
}

void momentum_update(MomentumPair& pair) { momentum_update(pair.key.params, pair.query.params, pair.m); }

void validate(const PretrainConfig& c) {
  validate(c.encoder);
  validate(c.augmentation);
  validate(c.schedule);
  if (c.augmentation.output_size != c.encoder.input_size) {
    throw ConfigError("pretrain: augmentation output size " + std::to_string(c.augmentation.output_size) +
                      " must equal encoder input size " + std::to_string(c.encoder.input_size));
  }
  if (c.head_dim == 0) throw ConfigError("pretrain: head dimension must be positive");
  if (!(c.tau > 0.0)) throw ConfigError("pretrain: tau must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("pretrain: momentum coefficient must lie in [0, 1)");
  if (!(c.sgd_momentum >= 0.0 && c.sgd_momentum < 1.0)) throw ConfigError("pretrain: SGD momentum must lie in [0, 1)");
  if (c.batch_size == 0) throw ConfigError("pretrain: batch size must be positive");
  if (c.queue_size < c.batch_size) throw ConfigError("pretrain: queue size must be at least the batch size");
}

PretrainResult pretrain(const std::vector<Sample>& samples, const PretrainConfig& config, const EpochCallback& on_epoch) {
  validate(config);
  if (samples.empty()) throw ArgumentError("pretrain: no training samples");
  const std::size_t n = samples.size();
  const SpLossConfig loss_config{config.tau, config.dec_mode};
  std::vector<std::string> labels;
  for (const auto& s : samples) labels.push_back(s.label);

  PretrainResult result{
      MomentumPair{build_contrastive_model(config.encoder, config.head_dim, config.seed),
                   build_contrastive_model(config.encoder, config.head_dim, config.seed), config.momentum},
      {}};
  MomentumPair& models = result.models;
  models.key.params.copy_values_from(models.query.params);
  models.key.params.set_requires_grad(false);

  NegativeQueue queue(config.queue_size, config.head_dim);
  {
    NoGradGuard no_grad;
    for (std::size_t i = 0; i < config.queue_size; ++i) {
      const Sample& s = samples[i % n];
      Rng rng = derive_rng(config.seed, kWarmupStream, i);
      const Tensor k = l2_normalize(models.key.logits(augment(s.image, config.augmentation, rng), s.size_m));
      queue.enqueue({as_vector(k)});
    }
  }

  for (int epoch = 0; epoch < config.schedule.total_epochs; ++epoch) {
    const double lr = lr_at(config.schedule, epoch);
    Rng shuffle_rng = derive_rng(config.seed, (kShuffleStream << 20) + static_cast<std::uint64_t>(epoch));
    const auto order = permutation(n, shuffle_rng);
    double sum_total = 0.0, sum_info = 0.0, sum_dec = 0.0;

    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t bsize = std::min(config.batch_size, n - start);
      std::vector<GrayImage> query_views;
      std::vector<Tensor> k_logits;
      std::vector<std::string> batch_labels;
      {
        NoGradGuard no_grad;
        for (std::size_t b = 0; b < bsize; ++b) {
          const std::size_t idx = order[start + b];
          Rng rng = derive_rng(config.seed, (kAugmentStream << 20) + static_cast<std::uint64_t>(epoch), idx);
          query_views.push_back(augment(samples[idx].image, config.augmentation, rng));
          const GrayImage key_view = augment(samples[idx].image, config.augmentation, rng);
          k_logits.push_back(models.key.logits(key_view, samples[idx].size_m));
          batch_labels.push_back(labels[idx]);
        }
      }

      for (auto& p : models.query.params.items()) {
        auto g = p.tensor.mutable_grad();
        std::fill(g.begin(), g.end(), 0.0);
      }
      double batch_total = 0.0, batch_info = 0.0, batch_dec = 0.0;
      for (std::size_t b = 0; b < bsize; ++b) {
        const Sample& s = samples[order[start + b]];
        const Tensor q = models.query.logits(query_views[b], s.size_m);
        const SpLossTerms t = sp_loss_sample(q, b, k_logits, queue, loss_config, batch_labels);
        if (!std::isfinite(t.total.item())) {
          throw NumericError("pretrain: non-finite loss at epoch " + std::to_string(epoch + 1) + " on " + s.path);
        }
        t.total.backward();
        batch_total += t.total.item();
        batch_info += t.info_nce.item();
        batch_dec += t.d_ec.item();
      }
      sgd_step(models.query.params, lr, config.sgd_momentum);
      momentum_update(models);

      std::vector<std::vector<double>> keys;
      for (const auto& k : k_logits) {
        NoGradGuard no_grad;
        keys.push_back(as_vector(l2_normalize(k)));
      }
      queue.enqueue(keys);

      const auto w = static_cast<double>(bsize);
      sum_total += batch_total * w;
      sum_info += batch_info * w;
      sum_dec += batch_dec * w;
    }
    models.query.params.clear_grad();

    const auto nd = static_cast<double>(n);
    result.metrics.push_back({epoch + 1, sum_total / nd, sum_info / nd, sum_dec / nd, lr});
    if (!std::isfinite(result.metrics.back().mean_loss)) {
      throw NumericError("pretrain: non-finite mean loss at epoch " + std::to_string(epoch + 1));
    }
    if (on_epoch) on_epoch(result.metrics, models);
  }
  return result;
}

void write_pretrain_metrics(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics) {
  std::ostringstream out;
  out << "epoch,mean_loss,info_nce,d_ec,lr\n";
  for (const auto& m : metrics) {
    out << m.epoch << ',' << format_double(m.mean_loss) << ',' << format_double(m.info_nce) << ','
        << format_double(m.d_ec) << ',' << format_double(m.lr) << '\n';
  }
  write_file_atomic(path, out.str());
}

double mean_branch_dec(const MomentumPair& models, const std::vector<Sample>& samples, const AugmentationPolicy& policy,
                       std::uint64_t seed) {
  if (samples.empty()) throw ArgumentError("mean_branch_dec: no samples");
  NoGradGuard no_grad;
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    Rng rng = derive_rng(seed, kBranchStream, i);
    const GrayImage v1 = augment(samples[i].image, policy, rng);
    const GrayImage v2 = augment(samples[i].image, policy, rng);
    const Tensor pq = softmax(models.query.logits(v1, samples[i].size_m));
    const Tensor pk = softmax(models.key.logits(v2, samples[i].size_m));
    total += d_ec_pair(pq, pk).item();
  }
  return total / static_cast<double>(samples.size());
}

}  // namespace msnet
