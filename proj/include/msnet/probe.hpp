#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "msnet/encoder.hpp"
#include "msnet/samples.hpp"
#include "msnet/synth.hpp"

namespace msnet {

struct SplitSpec {
  double fraction = 1.0;
  std::uint64_t seed = 0;
};

/// Per-class subsample of floor(fraction * class size) rows (minimum 1), in
/// manifest order. For a fixed seed, smaller fractions give subsets of
/// larger ones. Every label in `required_labels` must occur, otherwise
/// ArgumentError.
DatasetManifest split_labeled(const DatasetManifest& manifest, const SplitSpec& spec,
                              const std::vector<std::string>& required_labels = {});

/// Linear classifier over frozen embeddings.
struct LinearHead {
  std::vector<std::string> classes;
  Tensor weight;  // [C, d]
  Tensor bias;    // [C]

  std::size_t predict(const std::vector<double>& embedding) const;
};

struct ProbeConfig {
  int epochs = 50;
  double lr = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

void validate(const ProbeConfig& config);

struct ProbeEpoch {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;
};

struct ProbeResult {
  LinearHead head;  // the epoch with the best training accuracy
  int best_epoch = 0;  // 0 means the initialization
  std::vector<ProbeEpoch> history;
};

/// Softmax cross-entropy training of a linear head with SGD and a cosine
/// learning rate. `labels` index into `classes`.
ProbeResult train_linear_probe(const std::vector<std::vector<double>>& embeddings,
                               const std::vector<std::size_t>& labels, const std::vector<std::string>& classes,
                               const ProbeConfig& config);

/// Embedding of every sample (with its size when available), without
/// recording gradients.
std::vector<std::vector<double>> embed_samples(const Encoder& encoder, const std::vector<Sample>& samples);

/// Embeds the samples once and trains the head; the encoder is not modified.
/// Throws DataError when the samples span fewer than two classes or a path
/// appears with two different labels.
ProbeResult linear_probe(const Encoder& encoder, const std::vector<Sample>& train, const ProbeConfig& config);

struct ConfusionMatrix {
  std::vector<std::string> classes;
  std::vector<std::vector<std::size_t>> counts;  // [true][predicted]

  std::size_t total() const;
  std::size_t trace() const;
};

struct Evaluation {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

/// Throws DataError for a label outside `classes`.
Evaluation evaluate_predictions(const std::vector<std::string>& classes, const std::vector<std::string>& truth,
                                const std::vector<std::size_t>& predicted);
Evaluation evaluate(const Encoder& encoder, const LinearHead& head, const std::vector<Sample>& test);
Evaluation evaluate(const Encoder& encoder, const LinearHead& head, const DatasetManifest& test);

/// CSV whose first row and column hold the class names.
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm);
/// CSV with header `split_fraction,accuracy`.
void write_probe_metrics(const std::filesystem::path& path, const std::vector<std::pair<double, double>>& rows);

/// CSV with header `path,label,e0..e{d-1}`, one row per sample in order.
void export_embeddings(const Encoder& encoder, const std::vector<Sample>& samples,
                       const std::filesystem::path& path);

/// Channel mean of the last feature map, min-max normalized (a constant map
/// becomes all zeros), bilinearly upsampled to the input size.
GrayImage activation_map(const Encoder& encoder, const GrayImage& image);
/// Writes activation_map as an 8-bit PGM.
void export_activation_map(const Encoder& encoder, const GrayImage& image, const std::filesystem::path& path);

/// Linear head stored as head.weight / head.bias for checkpoints.
ParameterSet head_params(const LinearHead& head);

}  // namespace msnet
