#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "ssac/dataset.hpp"
#include "ssac/encoder.hpp"
#include "ssac/kvconfig.hpp"
#include "ssac/loss.hpp"
#include "ssac/metrics.hpp"
#include "ssac/subspace.hpp"

namespace ssac {
inline namespace SSAC_ABI {

enum class HeadKind {
  Subspace,
  /// Affine p -> C layer trained with CE; the comparison baseline.
  Linear,
};

const char* head_name(HeadKind h);
HeadKind parse_head(const std::string& name);

struct TrainConfig {
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 150;
  std::size_t k = 20;
  double lambda = 1;
  double m_near = 0;
  double m_far = 1;
  std::size_t n_init = 30;
  std::size_t p = 128;
  std::uint64_t seed = 0;
  std::vector<std::size_t> channels{3, 64, 64, 64, 128, 1024};
  DistanceForm form = DistanceForm::Centered;
  Reduction ce_reduction = Reduction::Sum;
  HeadKind head = HeadKind::Subspace;
  /// Optimize cross-entropy alone through the plain CE path.
  bool ce_only = false;

  void validate() const;
  KeyValueBinder binder();
  std::vector<std::pair<std::string, std::string>> entries() const;
  EncoderConfig encoder_config() const;
  LossConfig loss_config() const;
};

TrainConfig load_train_config(const std::string& path);

/// 0.5 lr0 (1 + cos(pi epoch / epochs)).
double cosine_lr(std::size_t epoch, const TrainConfig& cfg);

struct AdamSlot {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// Adam moments, one slot per parameter tensor in the order given to
/// adam_step. Each slot keeps its own step count so that a reset slot starts
/// bias correction afresh.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::vector<AdamSlot> slots;

  void reset(std::size_t first, std::size_t count);
};

/// g <- grad + wd theta, then the bias-corrected Adam update. Every gradient
/// is checked for NaN/Inf before any parameter is touched. A parameter with
/// no gradient buffer is treated as having a zero gradient.
void adam_step(std::span<const Tensor> params, OptimizerState& state, double lr, double weight_decay);

struct Model {
  EncoderParams encoder;
  HeadKind head = HeadKind::Subspace;
  SubspaceSet subspaces;  // Subspace head
  Tensor linear_w;        // Linear head, p x C
  Tensor linear_b;        // C

  std::size_t classes() const;
  std::vector<Tensor> learnable() const;
  /// Offset of the head's tensors within learnable().
  std::size_t head_offset() const { return encoder.learnable().size(); }
  std::size_t head_learnable_count() const;
  Model clone() const;
};

Model model_init(const TrainConfig& cfg, std::size_t classes);

/// d[B x C]. For the linear head the negated logits stand in for distances,
/// so classification, probabilities and scores share one code path.
Tensor head_distances(const Model& model, const Tensor& features);

struct StepLosses {
  double total = 0;
  double ce = 0;
  double pos = 0;
  double neg = 0;
  double ineq = 0;
};

/// Train-mode forward and backward over one batch. Leaves gradients in the
/// learnable tensors (accumulated onto whatever is there) and updates the
/// batch-norm running statistics.
StepLosses forward_backward(Model& model, const Tensor& x, std::span<const int> labels, const TrainConfig& cfg);

/// Eval-mode representations of every sample, in order, as [n x p].
Tensor encode_all(Model& model, const PointSet& set, std::size_t batch_size = 32);

/// Recomputes every (W_c, b_c) from eval-mode training representations and
/// zeroes the Adam slots of the subspace parameters.
void svd_warm_reinit(Model& model, const PointSet& train_set, OptimizerState& opt, std::size_t k,
                     std::uint64_t seed);

struct Inference {
  Real score = 0;             // s: minimum distance
  std::vector<Real> probabilities;
  int predicted = 0;
  std::vector<Real> distances;
};

/// Points [N x 3] or [1 x N x 3].
Inference infer(Model& model, const Tensor& points);
std::vector<Inference> infer_all(Model& model, const PointSet& set, std::size_t batch_size = 32);

MetricsReport evaluate(Model& model, const PointSet& set, std::size_t batch_size = 32);

struct TrainEvent {
  enum class Kind { Reinit, Step } kind;
  std::size_t epoch = 0;
  std::size_t batch = 0;
};

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  StepLosses losses;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  StepLosses losses;  // summed over the epoch's batches
  double val_acc = 0;
  double val_ba = 0;
  double val_f1 = 0;

  /// "epoch=... lr=... loss=... ce=... pos=... neg=... ineq=... val_acc=... val_ba=... val_f1=..."
  std::string line() const;
};

struct TrainedModel {
  Model model;
  TrainConfig config;
  MetricsReport validation;
  std::size_t epoch = 0;  // epoch after which this snapshot was taken
};

struct TrainResult {
  TrainedModel final_model;
  /// Snapshot with the best validation balanced accuracy (latest on ties).
  TrainedModel best_model;
  std::vector<EpochRecord> epochs;
  std::vector<StepRecord> steps;
  std::vector<TrainEvent> events;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const PointSet& train_set, const PointSet& val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// train() with the linear head and CE only.
TrainResult mlp_baseline_train(const PointSet& train_set, const PointSet& val_set, TrainConfig cfg,
                               const EpochCallback& on_epoch = {});

}  // namespace SSAC_ABI
}  // namespace ssac
