#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "msnet/encoder.hpp"
#include "msnet/image.hpp"
#include "msnet/optim.hpp"
#include "msnet/samples.hpp"

namespace msnet {

struct AugmentationPolicy {
  std::size_t output_size = 64;
  bool crop = true;
  double crop_area_min = 0.7;  // fraction of the source area kept
  double crop_area_max = 1.0;
  bool flip = true;
  double flip_probability = 0.5;
  bool rotate = true;
  double rotation_max_deg = 30.0;
  bool blur = true;
  double blur_probability = 0.5;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;
};

void validate(const AugmentationPolicy& policy);

/// Random crop (then resize to output_size), horizontal flip, rotation about
/// the center, and Gaussian blur, in that order, drawing from `rng`.
GrayImage augment(const GrayImage& image, const AugmentationPolicy& policy, Rng& rng);

/// FIFO of unit-norm key embeddings with a fixed capacity.
class NegativeQueue {
 public:
  NegativeQueue(std::size_t capacity, std::size_t dim);

  std::size_t capacity() const { return capacity_; }
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return size_; }
  bool full() const { return size_ == capacity_; }

  /// Appends keys in order, evicting the oldest entries beyond capacity.
  /// Throws ArgumentError for a batch larger than the capacity, a wrong
  /// dimension, or a key whose norm deviates from 1 by more than 1e-9.
  void enqueue(const std::vector<std::vector<double>>& keys);
  /// i-th entry counted from the oldest.
  std::span<const double> entry(std::size_t i) const;
  /// [size, dim] matrix of entries, oldest first.
  const Tensor& matrix() const;

 private:
  std::size_t capacity_, dim_;
  std::size_t size_ = 0, head_ = 0;  // head_: slot of the oldest entry
  std::vector<double> storage_;
  mutable Tensor matrix_;
};

/// -log softmax over [q.k+, q.k_1 .. q.k_K] / tau at the positive. k_plus is
/// treated as a constant. Throws ArgumentError if q or k_plus is not unit
/// norm within 1e-6, tau <= 0, or the queue is empty.
Tensor info_nce(const Tensor& q, const Tensor& k_plus, const NegativeQueue& queue, double tau);

/// Squared Euclidean distance between two probability vectors. Throws
/// ArgumentError off the simplex (negative entry or sum off by > 1e-6).
Tensor d_ec_pair(const Tensor& p1, const Tensor& p2);
/// Mean of d_ec_pair over all cross pairs of the two sets.
Tensor d_ec_sets(std::span<const Tensor> s_i, std::span<const Tensor> s_j);

enum class DecMode { pairwise, class_sets, none };

const char* to_string(DecMode mode);
std::optional<DecMode> parse_dec_mode(std::string_view text);

struct SpLossConfig {
  double tau = 0.07;
  DecMode dec_mode = DecMode::pairwise;
};

struct SpLossTerms {
  Tensor total, info_nce, d_ec;
};

/// Batch loss from projection-head logits: InfoNCE on the L2-normalized
/// logits plus D_EC on their softmax distributions. class_sets groups the
/// batch by `labels` and averages the set metric over the classes present.
SpLossTerms sp_loss(std::span<const Tensor> q_logits, std::span<const Tensor> k_logits,
                    const NegativeQueue& queue, const SpLossConfig& config,
                    std::span<const std::string> labels = {});

/// Contribution of sample `index` to sp_loss with the key logits held
/// constant; summing over the batch reproduces sp_loss in value and in the
/// gradient with respect to the query branch.
SpLossTerms sp_loss_sample(const Tensor& q_logits, std::size_t index, std::span<const Tensor> k_logits,
                           const NegativeQueue& queue, const SpLossConfig& config,
                           std::span<const std::string> labels = {});

/// Two-layer MLP with ReLU on top of the encoder embedding.
struct ProjectionHead {
  Tensor fc1_weight, fc1_bias;  // [d, d], [d]
  Tensor fc2_weight, fc2_bias;  // [out, d], [out]
};

ProjectionHead init_head(std::size_t in_dim, std::size_t out_dim, Rng& rng);
void register_params(ParameterSet& params, const std::string& prefix, const ProjectionHead& head);
Tensor head_forward(const ProjectionHead& head, const Tensor& z);

/// Encoder plus projection head; `params` lists both under "encoder.*" and
/// "head.*".
struct ContrastiveModel {
  Encoder encoder;
  ProjectionHead head;
  ParameterSet params;

  Tensor logits(const GrayImage& image, const std::optional<std::pair<double, double>>& size_m) const;
};

ContrastiveModel build_contrastive_model(const EncoderConfig& config, std::size_t head_dim, std::uint64_t seed);

/// Query/key models tied by the momentum update.
struct MomentumPair {
  ContrastiveModel query;
  ContrastiveModel key;
  double m = 0.999;
};

/// key <- m * key + (1 - m) * query, elementwise. Throws StateError naming a
/// parameter whose name or shape differs and ArgumentError for m outside
/// [0, 1).
void momentum_update(ParameterSet& key, const ParameterSet& query, double m);
void momentum_update(MomentumPair& pair);

struct PretrainConfig {
  EncoderConfig encoder;
  std::size_t head_dim = 32;
  AugmentationPolicy augmentation;
  LrSchedule schedule{0.01, 5, 30};
  double sgd_momentum = 0.9;
  double momentum = 0.999;
  double tau = 0.07;
  std::size_t queue_size = 1024;
  std::size_t batch_size = 32;
  DecMode dec_mode = DecMode::pairwise;
  std::uint64_t seed = 0;
};

void validate(const PretrainConfig& config);

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double mean_loss = 0.0;
  double info_nce = 0.0;
  double d_ec = 0.0;
  double lr = 0.0;
};

/// Called after every epoch with the metrics so far and the current models.
using EpochCallback = std::function<void(const std::vector<EpochMetrics>&, const MomentumPair&)>;

struct PretrainResult {
  MomentumPair models;
  std::vector<EpochMetrics> metrics;
};

/// Momentum-contrast pretraining. The queue is first filled with key
/// embeddings of augmented training views; each batch then encodes two
/// views per sample, backpropagates the per-sample loss contributions into
/// the query model, takes an SGD step, applies the momentum update, and
/// enqueues the batch keys. Throws ArgumentError for an empty sample list
/// and NumericError when a loss is not finite.
PretrainResult pretrain(const std::vector<Sample>& samples, const PretrainConfig& config,
                        const EpochCallback& on_epoch = {});

/// CSV with header `epoch,mean_loss,info_nce,d_ec,lr`.
void write_pretrain_metrics(const std::filesystem::path& path, const std::vector<EpochMetrics>& metrics);

/// Mean D_EC between the query and key branch distributions over one pair
/// of augmented views per sample.
double mean_branch_dec(const MomentumPair& models, const std::vector<Sample>& samples,
                       const AugmentationPolicy& policy, std::uint64_t seed);

}  // namespace msnet
