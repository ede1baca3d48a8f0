#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "msnet/checkpoint.hpp"
#include "msnet/config.hpp"
#include "msnet/cssl.hpp"
#include "msnet/encoder.hpp"
#include "msnet/errors.hpp"
#include "msnet/gradsuite.hpp"
#include "msnet/probe.hpp"
#include "msnet/samples.hpp"
#include "msnet/ssp.hpp"
#include "msnet/synth.hpp"
#include "msnet/text.hpp"

namespace msnet::cli {

namespace fs = std::filesystem;

namespace {

struct Common {
  std::string config_file;
  bool paper_scale = false;
  std::string out;
  std::map<std::string, std::string> overrides;
};

std::string flag_name(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_file, "Config file of `key = value` lines; flags override its values");
  app->add_flag("--paper-scale", c.paper_scale,
                "Use the published training scale: 300 pretraining epochs, 200 probe epochs, 224 px input");
  for (const auto& k : config_keys()) {
    app->add_option_function<std::string>(
        "--" + flag_name(k.name), [&c, name = k.name](const std::string& v) { c.overrides[name] = v; }, k.help);
  }
}

/// Defaults, then --paper-scale, then MSNET_SEED, then the config file, then
/// flags; later sources win.
RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (c.paper_scale) apply_paper_scale(cfg);
  if (const char* env = std::getenv("MSNET_SEED"); env != nullptr && *env != '\0') {
    try {
      set_config_value(cfg, "seed", env);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("MSNET_SEED: ") + e.what());
    }
  }
  if (!c.config_file.empty()) apply_config_file(cfg, c.config_file);
  for (const auto& [key, value] : c.overrides) set_config_value(cfg, key, value);
  validate(cfg);
  return cfg;
}

fs::path require_out(const Common& c) {
  if (c.out.empty()) throw ConfigError("--out DIR is required");
  fs::create_directories(c.out);
  return c.out;
}

DatasetManifest require_manifest(const std::string& path, const char* flag) {
  if (path.empty()) throw ConfigError(std::string(flag) + " is required");
  if (!fs::exists(path)) throw DataError("manifest not found: " + path);
  return read_manifest(path);
}

Encoder load_encoder(const RunConfig& cfg, const std::string& checkpoint) {
  Encoder e = build_encoder(encoder_config(cfg), cfg.seed);
  if (!checkpoint.empty()) {
    if (!fs::exists(checkpoint)) throw DataError("checkpoint not found: " + checkpoint);
    apply_checkpoint(e.params, load_checkpoint(checkpoint));
  }
  return e;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << v;
  return ss.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    auto t = trim(line);
    if (!t.empty()) lines.emplace_back(t);
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

struct SynthArgs {
  std::size_t per_class = 100;
  bool long_tail = false;
  std::string format = "pgm";
  std::size_t image_size = 64;
};

int cmd_synth(const RunConfig& cfg, const Common& c, const SynthArgs& a, std::ostream& out) {
  if (a.format != "pgm" && a.format != "png") throw ConfigError("--format must be pgm or png");
  const fs::path dir = require_out(c);
  const auto specs = default_class_specs();
  DatasetOptions opts;
  opts.image_extension = "." + a.format;
  opts.slice.image_size = a.image_size;
  const auto manifest = gen_dataset(specs, std::vector<std::size_t>(specs.size(), a.per_class), a.long_tail,
                                    cfg.seed, dir, opts);
  std::map<std::string, std::size_t> counts;
  for (const auto& r : manifest.records) ++counts[r.label];
  out << "wrote " << manifest.records.size() << " images and " << (dir / opts.manifest_name).string() << "\n";
  for (const auto& [label, n] : counts) out << "  " << label << ": " << n << "\n";
  return kExitOk;
}

int cmd_extract_size(const Common& c, const std::string& manifest_path, double resolution, std::ostream& out) {
  const auto manifest = require_manifest(manifest_path, "--manifest");
  const fs::path dir = require_out(c);
  std::vector<SizeRecord> records;
  for (const auto& r : manifest.records) {
    const GrayImage img = read_image(manifest.root / r.path, resolution);
    if (auto rec = extract_size(img, r.path)) records.push_back(*rec);
  }
  write_size_csv(dir / "sizes.csv", records);
  out << "measured " << records.size() << " of " << manifest.records.size() << " slices; wrote "
      << (dir / "sizes.csv").string() << "\n";
  return kExitOk;
}

int cmd_pretrain(RunConfig cfg, const Common& c, const std::string& manifest_path, int epochs, std::ostream& out) {
  if (epochs >= 0) cfg.pretrain_epochs = epochs;
  validate(cfg);
  const auto manifest = require_manifest(manifest_path, "--manifest");
  const fs::path dir = require_out(c);
  const auto samples = load_samples(manifest);
  const PretrainConfig pc = pretrain_config(cfg);
  validate(pc);
  write_file_atomic(dir / "config.txt", render_config(cfg));
  const fs::path ckpt = dir / "checkpoint.msnc";
  const fs::path key_ckpt = dir / "key_checkpoint.msnc";
  auto on_epoch = [&](const std::vector<EpochMetrics>& m, const MomentumPair& models) {
    const auto& e = m.back();
    write_pretrain_metrics(dir / "metrics.csv", m);
    out << "epoch " << e.epoch << " loss " << fixed(e.mean_loss, 6) << " info_nce " << fixed(e.info_nce, 6)
        << " d_ec " << fixed(e.d_ec, 6) << " lr " << fixed(e.lr, 6) << std::endl;
    if (cfg.checkpoint_every > 0 && e.epoch % cfg.checkpoint_every == 0) {
      save_checkpoint(models.query.params, ckpt);
      save_checkpoint(models.key.params, key_ckpt);
    }
  };
  const auto result = pretrain(samples, pc, on_epoch);
  save_checkpoint(result.models.query.params, ckpt);
  save_checkpoint(result.models.key.params, key_ckpt);
  write_pretrain_metrics(dir / "metrics.csv", result.metrics);
  out << "wrote " << (dir / "metrics.csv").string() << " and " << ckpt.string() << "\n";
  return kExitOk;
}

struct ProbeArgs {
  std::string manifest;
  std::string test_manifest;
  std::string checkpoint;
  int epochs = -1;
};

int cmd_probe(RunConfig cfg, const Common& c, const ProbeArgs& a, std::ostream& out) {
  if (a.epochs >= 0) cfg.probe_epochs = a.epochs;
  validate(cfg);
  const auto train_manifest = require_manifest(a.manifest, "--manifest");
  const auto test_manifest = require_manifest(a.test_manifest, "--test-manifest");
  const fs::path dir = require_out(c);
  const Encoder encoder = load_encoder(cfg, a.checkpoint);
  const auto train = load_samples(train_manifest);
  const auto test = load_samples(test_manifest);
  const auto classes = train_manifest.labels();
  const ProbeConfig pc = probe_config(cfg);

  std::vector<std::pair<double, double>> rows;
  for (double f : cfg.split_fractions) {
    const auto split = split_labeled(train_manifest, {f, cfg.seed}, classes);
    std::vector<Sample> picked;
    std::size_t j = 0;
    for (std::size_t i = 0; i < train_manifest.records.size() && j < split.records.size(); ++i) {
      if (train_manifest.records[i] == split.records[j]) {
        picked.push_back(train[i]);
        ++j;
      }
    }
    const auto result = linear_probe(encoder, picked, pc);
    const auto ev = evaluate(encoder, result.head, test);
    const std::string tag = format_double(f);
    write_confusion_csv(dir / ("confusion_" + tag + ".csv"), ev.confusion);
    save_checkpoint(head_params(result.head), dir / ("head_" + tag + ".msnc"));
    rows.emplace_back(f, ev.accuracy);
    out << "fraction " << tag << " train " << picked.size() << " accuracy " << fixed(ev.accuracy) << std::endl;
  }
  write_probe_metrics(dir / "metrics.csv", rows);
  write_file_atomic(dir / "classes.txt", join_lines(classes));
  return kExitOk;
}

struct EvalArgs {
  std::string manifest;
  std::string checkpoint;
  std::string head;
  std::string classes;
  bool embeddings = false;
  std::size_t activation_maps = 0;
};

LinearHead load_head(const std::string& head_path, const std::string& classes_path) {
  if (head_path.empty()) throw ConfigError("--head is required");
  if (!fs::exists(head_path)) throw DataError("head checkpoint not found: " + head_path);
  const fs::path cls = classes_path.empty() ? fs::path(head_path).parent_path() / "classes.txt" : fs::path(classes_path);
  const auto entries = load_checkpoint(head_path);
  const auto w = std::find_if(entries.begin(), entries.end(), [](const auto& e) { return e.name == "probe.weight"; });
  if (w == entries.end() || w->shape.size() != 2) throw DataError(head_path + ": no probe.weight matrix");
  LinearHead head{read_lines(cls), Tensor::zeros({w->shape[0], w->shape[1]}), Tensor::zeros({w->shape[0]})};
  if (head.classes.size() != w->shape[0]) {
    throw DataError(cls.string() + ": " + std::to_string(head.classes.size()) + " classes but the head has " +
                    std::to_string(w->shape[0]) + " outputs");
  }
  ParameterSet ps = head_params(head);
  apply_checkpoint(ps, entries);
  return head;
}

int cmd_eval(const RunConfig& cfg, const Common& c, const EvalArgs& a, std::ostream& out) {
  const auto manifest = require_manifest(a.manifest, "--manifest");
  const Encoder encoder = load_encoder(cfg, a.checkpoint);
  const LinearHead head = load_head(a.head, a.classes);
  const auto samples = load_samples(manifest);
  const auto ev = evaluate(encoder, head, samples);
  out << "accuracy " << fixed(ev.accuracy) << " (" << ev.confusion.trace() << "/" << ev.confusion.total() << ")\n";
  if (!c.out.empty()) {
    const fs::path dir = require_out(c);
    write_confusion_csv(dir / "confusion.csv", ev.confusion);
    if (a.embeddings) export_embeddings(encoder, samples, dir / "embeddings.csv");
    const std::size_t maps = std::min(a.activation_maps, samples.size());
    if (maps > 0) fs::create_directories(dir / "activation");
    for (std::size_t i = 0; i < maps; ++i) {
      export_activation_map(encoder, samples[i].image, dir / "activation" / ("map_" + std::to_string(i) + ".pgm"));
    }
  } else if (a.embeddings || a.activation_maps > 0) {
    throw ConfigError("--out DIR is required for embedding or activation-map export");
  }
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& cfg, std::ostream& out) {
  double worst = 0.0;
  for (const auto& r : run_gradient_suite(cfg.seed)) {
    worst = std::max(worst, r.report.max_rel_error);
    out << std::left << std::setw(22) << r.name << " max_rel_error " << std::scientific << std::setprecision(3)
        << r.report.max_rel_error << std::defaultfloat << " checked " << r.report.checked << " skipped_at_kinks "
        << r.report.skipped_at_kinks << " seconds " << fixed(r.seconds, 2) << "\n";
  }
  const bool ok = worst < 1e-5;
  out << "max relative error " << std::scientific << std::setprecision(3) << worst << std::defaultfloat
      << (ok ? " PASS" : " FAIL") << " (tolerance 1e-5)\n";
  return ok ? kExitOk : kExitNumeric;
}

int cmd_report_ratios(const RunConfig& cfg, const Common& c, const std::string& checkpoint, std::ostream& out) {
  const Encoder encoder = load_encoder(cfg, checkpoint);
  const auto ratios = report_fusion_ratios(encoder);
  out << "layer,abs_alpha,abs_beta,log_ratio\n";
  for (const auto& r : ratios) {
    out << r.layer << "," << format_double(r.abs_alpha) << "," << format_double(r.abs_beta) << ","
        << (std::isinf(r.log_ratio) ? std::string("inf") : format_double(r.log_ratio)) << "\n";
  }
  if (!c.out.empty()) write_fusion_ratios(require_out(c) / "fusion_ratios.csv", ratios);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Size-aware SAR aircraft representation learning: synthetic data, scattering-point size "
               "extraction, contrastive pretraining, and linear-probe evaluation"};
  app.name("msnet");
  app.require_subcommand(1);

  Common common;
  SynthArgs synth_args;
  ProbeArgs probe_args;
  EvalArgs eval_args;
  std::string manifest;
  std::string checkpoint;
  double resolution = 1.0;
  int pretrain_epochs = -1;

  auto* synth = app.add_subcommand("synth", "Generate a labeled synthetic SAR aircraft dataset");
  add_common(synth, common);
  synth->add_option("--out", common.out, "Output directory (images/ and manifest.csv)");
  synth->add_option("--per-class", synth_args.per_class, "Images per class before long-tail redistribution")
      ->capture_default_str();
  synth->add_flag("--long-tail", synth_args.long_tail, "Redistribute counts geometrically (max/min >= 10)");
  synth->add_option("--format", synth_args.format, "Image format: pgm or png")->capture_default_str();
  synth->add_option("--image-size", synth_args.image_size, "Slice side in pixels")->capture_default_str();

  auto* extract = app.add_subcommand("extract-size", "Measure length and wingspan from strong scattering points");
  add_common(extract, common);
  extract->add_option("--manifest", manifest, "Dataset manifest CSV");
  extract->add_option("--out", common.out, "Output directory (sizes.csv)");
  extract->add_option("--resolution", resolution, "Meters per pixel")->capture_default_str();

  auto* pre = app.add_subcommand("pretrain", "Contrastive pretraining with the momentum encoder and negative queue");
  add_common(pre, common);
  pre->add_option("--manifest", manifest, "Unlabeled training manifest CSV (labels used only by dec_mode=class_sets)");
  pre->add_option("--out", common.out, "Output directory (metrics.csv, checkpoint.msnc, key_checkpoint.msnc, config.txt)");
  pre->add_option("--epochs", pretrain_epochs, "Shorthand for --pretrain-epochs (desk default 30; published scale 300)");

  auto* probe = app.add_subcommand("probe", "Linear probe on a frozen backbone at each label fraction");
  add_common(probe, common);
  probe->add_option("--manifest", probe_args.manifest, "Labeled training manifest CSV");
  probe->add_option("--test-manifest", probe_args.test_manifest, "Held-out test manifest CSV");
  probe->add_option("--checkpoint", probe_args.checkpoint, "Pretrained checkpoint; omitted means random init");
  probe->add_option("--out", common.out,
                    "Output directory (metrics.csv, confusion_<f>.csv, head_<f>.msnc, classes.txt)");
  probe->add_option("--epochs", probe_args.epochs, "Shorthand for --probe-epochs (desk default 50; published scale 200)");

  auto* eval = app.add_subcommand("eval", "Evaluate a backbone plus linear head on a labeled manifest");
  add_common(eval, common);
  eval->add_option("--manifest", eval_args.manifest, "Labeled test manifest CSV");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Backbone checkpoint; omitted means random init");
  eval->add_option("--head", eval_args.head, "Linear head checkpoint written by probe");
  eval->add_option("--classes", eval_args.classes, "Class list (defaults to classes.txt beside the head)");
  eval->add_option("--out", common.out, "Optional output directory (confusion.csv and exports)");
  eval->add_flag("--export-embeddings", eval_args.embeddings, "Write embeddings.csv");
  eval->add_option("--activation-maps", eval_args.activation_maps, "Write activation maps for the first N samples");

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite; exit 0 iff every error < 1e-5");
  add_common(grad, common);

  auto* ratios = app.add_subcommand("report-ratios", "Report attention/convolution fusion weights per block");
  add_common(ratios, common);
  ratios->add_option("--checkpoint", checkpoint, "Backbone checkpoint; omitted means random init");
  ratios->add_option("--out", common.out, "Optional output directory (fusion_ratios.csv)");

  std::vector<std::string> argv_store{"msnet"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : argv_store) argv.push_back(s.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const RunConfig cfg = resolve(common);
    if (synth->parsed()) return cmd_synth(cfg, common, synth_args, out);
    if (extract->parsed()) return cmd_extract_size(common, manifest, resolution, out);
    if (pre->parsed()) return cmd_pretrain(cfg, common, manifest, pretrain_epochs, out);
    if (probe->parsed()) return cmd_probe(cfg, common, probe_args, out);
    if (eval->parsed()) return cmd_eval(cfg, common, eval_args, out);
    if (grad->parsed()) return cmd_gradcheck(cfg, out);
    if (ratios->parsed()) return cmd_report_ratios(cfg, common, checkpoint, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

}  // namespace msnet::cli
