#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "msnet/cssl.hpp"
#include "msnet/encoder.hpp"
#include "msnet/probe.hpp"

namespace msnet {

/// Every tunable of the command-line pipeline. Defaults are the desk-scale
/// values; apply_paper_scale switches the epoch counts and input size to the
/// published training setup.
struct RunConfig {
  double base_lr = 0.01;
  double sgd_momentum = 0.9;
  int warmup_epochs = 5;
  int supervised_epochs = 400;
  int pretrain_epochs = 30;
  int probe_epochs = 50;
  double probe_lr = 0.1;
  double momentum = 0.999;
  double tau = 0.07;
  std::size_t queue_size = 1024;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  int sieb_recursions = 2;
  std::size_t saem_heads = 4;
  std::size_t saem_kernel = 3;
  double size_min = 0.0;
  double size_max = 100.0;
  std::size_t input_size = 64;
  std::size_t head_dim = 32;
  DecMode dec_mode = DecMode::pairwise;
  bool sieb = true;
  bool saem = true;
  int checkpoint_every = 5;
  std::vector<double> split_fractions{0.1, 0.2, 0.5, 1.0};
};

void apply_paper_scale(RunConfig& config);

struct ConfigKey {
  std::string name;
  std::string help;
};

/// All keys accepted in config files and as `--<key>` flags (underscores
/// become dashes on the command line).
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form. Throws ConfigError naming the key for an
/// unknown key or an unparsable value.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

/// Applies `key = value` lines; `#` starts a comment. Throws ConfigError
/// with the line number on a malformed line or unknown key.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin);
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
/// Every key in `key = value` form, in config_keys() order.
std::string render_config(const RunConfig& config);

/// Throws ConfigError naming the first violated constraint.
void validate(const RunConfig& config);

EncoderConfig encoder_config(const RunConfig& config);
PretrainConfig pretrain_config(const RunConfig& config);
ProbeConfig probe_config(const RunConfig& config);

}  // namespace msnet
