#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "match/autodiff.hpp"
#include "match/corpus.hpp"
#include "match/encoder.hpp"
#include "match/metrics.hpp"
#include "match/sphere_embed.hpp"
#include "match/taxonomy.hpp"

namespace match {

struct TrainConfig {
  /// Weight of the parent/child weight-vector penalty.
  double lambda_param = 1e-3;
  /// Weight of the child-above-parent probability penalty.
  double lambda_output = 1e-2;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::size_t epochs = 20;
  /// Stop after this many epochs without a validation NDCG@3 improvement;
  /// 0 disables early stopping.
  std::size_t patience = 3;
  std::uint64_t seed = 0;
  double clamp = 1e-7;
  bool init_head_from_labels = false;
  bool freeze_embeddings = false;
  /// Window for the recent-loss average reported per epoch.
  std::size_t loss_window = 100;

  void validate() const;
  void write(std::map<std::string, std::string>& out) const;
};

/// Per-label weight columns over the document representation, plus bias.
struct PredictionHead {
  ad::Parameter weights;  // input_dim x labels
  ad::Parameter bias;     // 1 x labels

  static PredictionHead random(std::size_t input_dim, std::size_t labels, Rng& rng);
  std::size_t labels() const { return static_cast<std::size_t>(weights.value.cols()); }
};

struct Model {
  encoder::EncoderConfig config;
  encoder::EncoderParams encoder;
  PredictionHead head;

  std::vector<ad::Parameter*> parameters();

  /// Encoder settings and tensors plus head tensors; `extra` settings are
  /// stored alongside.
  void save(const std::filesystem::path& path,
            const std::map<std::string, std::string>& extra = {}) const;
  static Model load(const std::filesystem::path& path);
};

/// sigmoid(reps * W + b); reps is batch x input_dim.
ad::Var predict_probabilities(const ad::Var& representations, PredictionHead& head);

/// Mean over the batch of the summed per-label binary cross-entropy, with
/// probabilities clamped to [clamp, 1 - clamp].
ad::Var bce_loss(const ad::Var& probabilities, const ad::Tensor& targets, double clamp = 1e-7);

/// Sum over hierarchy edges of 0.5 * ||w_child - w_parent||^2. Returns a
/// zero constant when the hierarchy has no edges.
ad::Var parameter_regularizer(const ad::Var& weights, const LabelHierarchy& hierarchy);

/// Batch mean of the summed max(0, p_child - p_parent) over edges.
ad::Var output_regularizer(const ad::Var& probabilities, const LabelHierarchy& hierarchy);

struct ObjectiveParts {
  ad::Var total;
  ad::Var bce;
  ad::Var parameter;
  ad::Var output;
};

/// Full objective on a batch of documents. Dropout is active when
/// `dropout_rng` is non-null.
ObjectiveParts total_objective(ad::Tape& tape, Model& model,
                               std::span<const Document* const> batch,
                               const LabelHierarchy& hierarchy, const TrainConfig& config,
                               Rng* dropout_rng = nullptr);

/// Multi-hot target rows for a batch.
ad::Tensor label_targets(std::span<const Document* const> batch, std::size_t labels);

/// Evaluation-mode label probabilities for one document.
std::vector<double> predict(Model& model, const Document& document);
std::vector<std::vector<double>> predict_all(Model& model, const Corpus& corpus,
                                             std::span<const std::size_t> documents);

/// Label ids of the k largest probabilities, descending, ties to the smaller
/// id; k is clamped to the label count.
std::vector<LabelId> top_k_labels(std::span<const double> probabilities, std::size_t k);

/// Fraction of (document, edge) pairs with p_child > p_parent.
double inversion_rate(std::span<const std::vector<double>> predictions,
                      const LabelHierarchy& hierarchy);

/// Mean Euclidean distance between child and parent weight columns.
double mean_edge_weight_distance(const PredictionHead& head, const LabelHierarchy& hierarchy);

EvalReport evaluate_model(Model& model, const Corpus& corpus,
                          std::span<const std::size_t> documents,
                          std::vector<DocumentScores>* per_document = nullptr);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  /// Mean loss of the last loss_window batches.
  double recent_loss = 0.0;
  bool has_validation = false;
  EvalReport validation;
  double seconds = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<EpochLog> history;
  /// 1-based epoch whose parameters were kept.
  std::size_t best_epoch = 0;
};

using TrainObserver = std::function<void(const EpochLog&)>;

/// Adam training with best-validation selection. `space` supplies the
/// initial token embeddings; null means random unit vectors.
TrainResult train_classifier(const Corpus& corpus, std::span<const std::size_t> train_docs,
                             std::span<const std::size_t> validation_docs,
                             const LabelHierarchy& hierarchy,
                             const encoder::EncoderConfig& encoder_config,
                             const TrainConfig& config, const sphere::EmbeddingSpace* space,
                             const TrainObserver& observer = {});

}  // namespace match
