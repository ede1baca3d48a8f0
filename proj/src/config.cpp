#include "msnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "msnet/errors.hpp"
#include "msnet/text.hpp"

namespace msnet {

namespace {

struct Entry {
  ConfigKey key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

[[noreturn]] void bad_value(std::string_view key, std::string_view value, const char* expected) {
  throw ConfigError("config key " + std::string(key) + ": expected " + expected + ", got '" + std::string(value) + "'");
}

double as_double(std::string_view key, std::string_view v) {
  auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) bad_value(key, v, "a finite number");
  return *d;
}

long long as_int(std::string_view key, std::string_view v) {
  auto i = parse_int(v);
  if (!i) bad_value(key, v, "an integer");
  return *i;
}

std::size_t as_count(std::string_view key, std::string_view v) {
  const auto i = as_int(key, v);
  if (i < 0) bad_value(key, v, "a non-negative integer");
  return static_cast<std::size_t>(i);
}

int as_small_int(std::string_view key, std::string_view v) {
  const auto i = as_int(key, v);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) bad_value(key, v, "an int");
  return static_cast<int>(i);
}

bool as_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, v, "true or false");
}

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

#define MSNET_DOUBLE(field, help)                                                        \
  Entry {                                                                                \
    {#field, help}, [](RunConfig& c, std::string_view v) { c.field = as_double(#field, v); }, \
        [](const RunConfig& c) { return format_double(c.field); }                        \
  }
#define MSNET_INT(field, help)                                                              \
  Entry {                                                                                   \
    {#field, help}, [](RunConfig& c, std::string_view v) { c.field = as_small_int(#field, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                          \
  }
#define MSNET_COUNT(field, help)                                                         \
  Entry {                                                                                \
    {#field, help}, [](RunConfig& c, std::string_view v) { c.field = as_count(#field, v); }, \
        [](const RunConfig& c) { return std::to_string(c.field); }                       \
  }
#define MSNET_BOOL(field, help)                                                         \
  Entry {                                                                               \
    {#field, help}, [](RunConfig& c, std::string_view v) { c.field = as_bool(#field, v); }, \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }      \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      MSNET_DOUBLE(base_lr, "initial SGD learning rate (0.01)"),
      MSNET_DOUBLE(sgd_momentum, "SGD momentum factor (0.9)"),
      MSNET_INT(warmup_epochs, "linear warmup epochs before cosine decay (5)"),
      MSNET_INT(supervised_epochs, "epochs for fully supervised training (400)"),
      MSNET_INT(pretrain_epochs, "contrastive pretraining epochs (desk default 30; published scale 300)"),
      MSNET_INT(probe_epochs, "linear-probe epochs (desk default 50; published scale 200)"),
      MSNET_DOUBLE(probe_lr, "linear-probe learning rate (0.1)"),
      MSNET_DOUBLE(momentum, "momentum-encoder coefficient m (0.999)"),
      MSNET_DOUBLE(tau, "InfoNCE temperature (0.07)"),
      MSNET_COUNT(queue_size, "negative queue length K (desk default 1024)"),
      MSNET_COUNT(batch_size, "batch size (32)"),
      Entry{{"seed", "random seed (falls back to MSNET_SEED, then 0)"},
            [](RunConfig& c, std::string_view v) {
              const auto i = as_int("seed", v);
              if (i < 0) bad_value("seed", v, "a non-negative integer");
              c.seed = static_cast<std::uint64_t>(i);
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      MSNET_INT(sieb_recursions, "size-branch adaptive projection recursions N (2)"),
      MSNET_COUNT(saem_heads, "attention heads M in the enhancement module (4)"),
      MSNET_COUNT(saem_kernel, "enhancement-module kernel / window size k (3)"),
      MSNET_DOUBLE(size_min, "lower bound of the physical size range in meters (0)"),
      MSNET_DOUBLE(size_max, "upper bound of the physical size range in meters (100)"),
      MSNET_COUNT(input_size, "encoder input size in pixels (desk default 64; published scale 224)"),
      MSNET_COUNT(head_dim, "projection-head output dimension (desk default 32)"),
      Entry{{"dec_mode", "Euclidean-metric term: pairwise, class_sets, or none (pairwise)"},
            [](RunConfig& c, std::string_view v) {
              auto m = parse_dec_mode(v);
              if (!m) bad_value("dec_mode", v, "pairwise, class_sets, or none");
              c.dec_mode = *m;
            },
            [](const RunConfig& c) { return std::string(to_string(c.dec_mode)); }},
      MSNET_BOOL(sieb, "enable the size-information branch (true)"),
      MSNET_BOOL(saem, "enable the self-attention enhancement modules (true)"),
      MSNET_INT(checkpoint_every, "write a checkpoint every N pretraining epochs; 0 only at the end (5)"),
      Entry{{"split_fractions", "comma-separated label fractions for the probe (0.1,0.2,0.5,1)"},
            [](RunConfig& c, std::string_view v) {
              std::vector<double> out;
              for (const auto& f : split_csv(v)) out.push_back(as_double("split_fractions", trim(f)));
              if (out.empty()) bad_value("split_fractions", v, "at least one fraction");
              c.split_fractions = out;
            },
            [](const RunConfig& c) { return join(c.split_fractions); }},
  };
  return table;
}

#undef MSNET_DOUBLE
#undef MSNET_INT
#undef MSNET_COUNT
#undef MSNET_BOOL

const Entry& find_entry(std::string_view key) {
  for (const auto& e : entries()) {
    if (e.key.name == key) return e;
  }
  throw ConfigError("unknown config key: " + std::string(key));
}

}  // namespace

void apply_paper_scale(RunConfig& c) {
  c.pretrain_epochs = 300;
  c.probe_epochs = 200;
  c.input_size = 224;
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void set_config_value(RunConfig& config, std::string_view key, std::string_view value) {
  find_entry(key).set(config, trim(value));
}

std::string get_config_value(const RunConfig& config, std::string_view key) { return find_entry(key).get(config); }

void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) {
      if (end == text.size()) break;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    try {
      set_config_value(config, key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (end == text.size()) break;
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str(), path.string());
}

std::string render_config(const RunConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += e.key.name + " = " + e.get(config) + "\n";
  return out;
}

void validate(const RunConfig& c) {
  if (!(c.base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(c.probe_lr > 0.0)) throw ConfigError("probe_lr must be positive");
  if (!(c.sgd_momentum >= 0.0 && c.sgd_momentum < 1.0)) throw ConfigError("sgd_momentum must lie in [0, 1)");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(c.tau > 0.0)) throw ConfigError("tau must be positive");
  if (c.pretrain_epochs < 0 || c.probe_epochs < 0 || c.supervised_epochs < 0) {
    throw ConfigError("epoch counts must be non-negative");
  }
  if (c.warmup_epochs < 0) throw ConfigError("warmup_epochs must be non-negative");
  if (c.checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
  for (double f : c.split_fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw ConfigError("split_fractions entries must lie in (0, 1]");
  }
  validate(encoder_config(c));
}

EncoderConfig encoder_config(const RunConfig& c) {
  EncoderConfig e;
  e.input_size = c.input_size;
  e.saem_heads = c.saem_heads;
  e.saem_kernel = c.saem_kernel;
  e.saem_enabled.assign(e.stage_channels.size(), c.saem);
  e.sieb_enabled = c.sieb;
  e.sieb_recursions = c.sieb_recursions;
  e.size_range = {c.size_min, c.size_max};
  return e;
}

PretrainConfig pretrain_config(const RunConfig& c) {
  PretrainConfig p;
  p.encoder = encoder_config(c);
  p.head_dim = c.head_dim;
  p.augmentation.output_size = c.input_size;
  p.schedule = {c.base_lr, std::min(c.warmup_epochs, std::max(c.pretrain_epochs - 1, 0)), c.pretrain_epochs};
  p.sgd_momentum = c.sgd_momentum;
  p.momentum = c.momentum;
  p.tau = c.tau;
  p.queue_size = c.queue_size;
  p.batch_size = c.batch_size;
  p.dec_mode = c.dec_mode;
  p.seed = c.seed;
  return p;
}

ProbeConfig probe_config(const RunConfig& c) {
  ProbeConfig p;
  p.epochs = c.probe_epochs;
  p.lr = c.probe_lr;
  p.momentum = c.sgd_momentum;
  p.batch_size = c.batch_size;
  p.seed = c.seed;
  return p;
}

}  // namespace msnet
