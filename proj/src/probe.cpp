#include "msnet/probe.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "msnet/errors.hpp"
#include "msnet/ops.hpp"
#include "msnet/text.hpp"

namespace msnet {

namespace {

constexpr std::uint64_t kSplitStream = 0x73706c74;
constexpr std::uint64_t kProbeStream = 0x70726f62;

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::vector<double> as_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

double accuracy_of(const LinearHead& head, const std::vector<std::vector<double>>& x,
                   const std::vector<std::size_t>& y) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.size(); ++i) correct += head.predict(x[i]) == y[i] ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(x.size());
}

LinearHead copy_head(const LinearHead& h) {
  return {h.classes, Tensor::from(h.weight.shape(), as_vector(h.weight)), Tensor::from(h.bias.shape(), as_vector(h.bias))};
}

}  // namespace

DatasetManifest split_labeled(const DatasetManifest& manifest, const SplitSpec& spec,
                              const std::vector<std::string>& required_labels) {
  if (!(spec.fraction > 0.0 && spec.fraction <= 1.0)) {
    throw ArgumentError("split_labeled: fraction must lie in (0, 1], got " + format_double(spec.fraction));
  }
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) by_class[manifest.records[i].label].push_back(i);
  for (const auto& label : required_labels) {
    if (!by_class.count(label)) throw ArgumentError("split_labeled: class " + label + " has no samples");
  }
  std::vector<bool> keep(manifest.records.size(), false);
  for (const auto& [label, rows] : by_class) {
    const auto n = static_cast<double>(rows.size());
    const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(spec.fraction * n + 1e-9)));
    Rng rng = derive_rng(spec.seed, kSplitStream, fnv1a(label));
    const auto order = permutation(rows.size(), rng);
    for (std::size_t i = 0; i < k; ++i) keep[rows[order[i]]] = true;
  }
  DatasetManifest out{manifest.root, {}};
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (keep[i]) out.records.push_back(manifest.records[i]);
  }
  return out;
}

std::size_t LinearHead::predict(const std::vector<double>& embedding) const {
  const std::size_t c = weight.dim(0), d = weight.dim(1);
  if (embedding.size() != d) {
    throw DimensionError("LinearHead::predict: embedding of length " + std::to_string(embedding.size()) +
                         ", head expects " + std::to_string(d));
  }
  auto w = weight.values();
  auto b = bias.values();
  std::size_t best = 0;
  double best_score = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    double s = b[i];
    for (std::size_t j = 0; j < d; ++j) s += w[i * d + j] * embedding[j];
    if (i == 0 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

void validate(const ProbeConfig& c) {
  if (c.epochs < 0) throw ConfigError("probe: epochs must be non-negative");
  if (!(c.lr > 0.0)) throw ConfigError("probe: learning rate must be positive");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("probe: momentum must lie in [0, 1)");
  if (c.batch_size == 0) throw ConfigError("probe: batch size must be positive");
}

ProbeResult train_linear_probe(const std::vector<std::vector<double>>& x, const std::vector<std::size_t>& y,
                               const std::vector<std::string>& classes, const ProbeConfig& config) {
  validate(config);
  if (x.empty() || x.size() != y.size()) throw ArgumentError("linear probe: need one label per embedding");
  if (classes.size() < 2) throw DataError("linear probe: need at least two classes");
  const std::size_t n = x.size(), d = x[0].size(), c = classes.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i].size() != d) throw DimensionError("linear probe: embeddings differ in length");
    if (y[i] >= c) throw DataError("linear probe: label index out of range");
  }

  // Standardize features for conditioning; the scaling is folded back into
  // the head so it applies to raw embeddings.
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (const auto& v : x)
    for (std::size_t j = 0; j < d; ++j) mu[j] += v[j] / static_cast<double>(n);
  for (const auto& v : x)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (v[j] - mu[j]) * (v[j] - mu[j]) / static_cast<double>(n);
  for (auto& s : sd) s = std::sqrt(s) + 1e-8;
  std::vector<Tensor> xs;
  for (const auto& v : x) {
    std::vector<double> z(d);
    for (std::size_t j = 0; j < d; ++j) z[j] = (v[j] - mu[j]) / sd[j];
    xs.push_back(Tensor::from({d}, std::move(z)));
  }

  Rng rng = derive_rng(config.seed, kProbeStream);
  ParameterSet params;
  Tensor w = Tensor::zeros({c, d});
  kaiming_uniform(w, d, rng);
  w = params.add("probe.weight", w);
  Tensor b = params.add("probe.bias", Tensor::zeros({c}));

  auto export_head = [&] {
    LinearHead h{classes, Tensor::zeros({c, d}), Tensor::zeros({c})};
    auto wv = w.values();
    auto bv = b.values();
    auto hw = h.weight.mutable_values();
    auto hb = h.bias.mutable_values();
    for (std::size_t i = 0; i < c; ++i) {
      hb[i] = bv[i];
      for (std::size_t j = 0; j < d; ++j) {
        hw[i * d + j] = wv[i * d + j] / sd[j];
        hb[i] -= wv[i * d + j] * mu[j] / sd[j];
      }
    }
    return h;
  };

  ProbeResult result;
  result.head = export_head();
  double best_acc = accuracy_of(result.head, x, y);
  const LrSchedule schedule{config.lr, 0, std::max(config.epochs, 1)};
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng shuffle = derive_rng(config.seed, kProbeStream + 1, static_cast<std::uint64_t>(epoch));
    const auto order = permutation(n, shuffle);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const std::size_t bsize = std::min(config.batch_size, n - start);
      params.zero_grad();
      for (std::size_t k = 0; k < bsize; ++k) {
        const std::size_t i = order[start + k];
        const Tensor logits = add(matvec(w, xs[i]), b);
        const Tensor loss = mul_scalar(select(log_softmax(logits), y[i]), -1.0 / static_cast<double>(bsize));
        loss.backward();
        loss_sum += loss.item() * static_cast<double>(bsize);
      }
      sgd_step(params, lr_at(schedule, epoch), config.momentum);
    }
    const LinearHead current = export_head();
    const double acc = accuracy_of(current, x, y);
    result.history.push_back({epoch + 1, loss_sum / static_cast<double>(n), acc});
    if (acc > best_acc) {
      best_acc = acc;
      result.best_epoch = epoch + 1;
      result.head = copy_head(current);
    }
  }
  return result;
}

std::vector<std::vector<double>> embed_samples(const Encoder& encoder, const std::vector<Sample>& samples) {
  NoGradGuard no_grad;
  std::vector<std::vector<double>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const GrayImage img = s.image.height == encoder.config.input_size && s.image.width == encoder.config.input_size
                              ? s.image
                              : resize_bilinear(s.image, encoder.config.input_size, encoder.config.input_size);
    out.push_back(as_vector(encode(encoder, img, s.size_m)));
  }
  return out;
}

ProbeResult linear_probe(const Encoder& encoder, const std::vector<Sample>& train, const ProbeConfig& config) {
  std::map<std::string, std::string> label_of;
  std::set<std::string> classes;
  for (const auto& s : train) {
    auto [it, inserted] = label_of.emplace(s.path, s.label);
    if (!inserted && it->second != s.label) {
      throw DataError("linear probe: " + s.path + " is labeled both " + it->second + " and " + s.label);
    }
    classes.insert(s.label);
  }
  if (classes.size() < 2) throw DataError("linear probe: training set spans fewer than two classes");
  const std::vector<std::string> names(classes.begin(), classes.end());
  std::vector<std::size_t> y;
  for (const auto& s : train) y.push_back(static_cast<std::size_t>(std::find(names.begin(), names.end(), s.label) - names.begin()));
  return train_linear_probe(embed_samples(encoder, train), y, names, config);
}

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts)
    for (auto v : row) t += v;
  return t;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t += counts[i][i];
  return t;
}

Evaluation evaluate_predictions(const std::vector<std::string>& classes, const std::vector<std::string>& truth,
                                const std::vector<std::size_t>& predicted) {
  if (truth.size() != predicted.size()) throw ArgumentError("evaluate: truth and predictions differ in length");
  if (truth.empty()) throw ArgumentError("evaluate: empty test set");
  Evaluation e;
  e.confusion.classes = classes;
  e.confusion.counts.assign(classes.size(), std::vector<std::size_t>(classes.size(), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto it = std::find(classes.begin(), classes.end(), truth[i]);
    if (it == classes.end()) throw DataError("evaluate: test label " + truth[i] + " unknown to the classifier");
    if (predicted[i] >= classes.size()) throw ArgumentError("evaluate: prediction index out of range");
    ++e.confusion.counts[static_cast<std::size_t>(it - classes.begin())][predicted[i]];
  }
  e.accuracy = static_cast<double>(e.confusion.trace()) / static_cast<double>(e.confusion.total());
  return e;
}

Evaluation evaluate(const Encoder& encoder, const LinearHead& head, const std::vector<Sample>& test) {
  std::vector<std::string> truth;
  std::vector<std::size_t> predicted;
  for (const auto& s : test) {
    if (std::find(head.classes.begin(), head.classes.end(), s.label) == head.classes.end()) {
      throw DataError("evaluate: test label " + s.label + " unknown to the classifier");
    }
  }
  const auto emb = embed_samples(encoder, test);
  for (std::size_t i = 0; i < test.size(); ++i) {
    truth.push_back(test[i].label);
    predicted.push_back(head.predict(emb[i]));
  }
  return evaluate_predictions(head.classes, truth, predicted);
}

Evaluation evaluate(const Encoder& encoder, const LinearHead& head, const DatasetManifest& test) {
  return evaluate(encoder, head, load_samples(test));
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm) {
  std::ostringstream out;
  out << "label";
  for (const auto& c : cm.classes) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < cm.classes.size(); ++i) {
    out << cm.classes[i];
    for (auto v : cm.counts[i]) out << ',' << v;
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

void write_probe_metrics(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& rows) {
  std::ostringstream out;
  out << "split_fraction,accuracy\n";
  for (const auto& [f, a] : rows) out << format_double(f) << ',' << format_double(a) << '\n';
  write_file_atomic(path, out.str());
}

void export_embeddings(const Encoder& encoder, const std::vector<Sample>& samples, const std::filesystem::path& path) {
  const auto emb = embed_samples(encoder, samples);
  std::ostringstream out;
  out << "path,label";
  for (std::size_t j = 0; j < encoder.config.embedding_dim(); ++j) out << ",e" << j;
  out << '\n';
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out << samples[i].path << ',' << samples[i].label;
    for (double v : emb[i]) out << ',' << format_double(v);
    out << '\n';
  }
  write_file_atomic(path, out.str());
}

GrayImage activation_map(const Encoder& encoder, const GrayImage& image) {
  NoGradGuard no_grad;
  const Tensor f = final_feature_map(encoder, to_tensor(image));
  const std::size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  GrayImage map = make_image(h, w, 0.0, image.resolution_m_per_px);
  auto v = f.values();
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * w; ++i) map.pixels[i] += v[ch * h * w + i] / static_cast<double>(c);
  if (h != image.height || w != image.width) map = resize_bilinear(map, image.height, image.width);
  const auto [lo, hi] = std::minmax_element(map.pixels.begin(), map.pixels.end());
  const double mn = *lo, range = *hi - *lo;
  for (auto& p : map.pixels) p = range > 0.0 ? std::clamp((p - mn) / range, 0.0, 1.0) : 0.0;
  return map;
}

void export_activation_map(const Encoder& encoder, const GrayImage& image, const std::filesystem::path& path) {
  write_pgm(path, activation_map(encoder, image));
}

ParameterSet head_params(const LinearHead& head) {
  ParameterSet p;
  p.add("probe.weight", head.weight);
  p.add("probe.bias", head.bias);
  return p;
}

}  // namespace msnet
