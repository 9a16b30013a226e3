#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "match/corpus.hpp"
#include "match/rng.hpp"

namespace match::sphere {

/// Dense row-major table of `rows` vectors of width `dim`.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  EmbeddingTable(std::size_t rows, std::size_t dim) : rows_(rows), dim_(dim), data_(rows * dim) {}

  /// Rows drawn i.i.d. Gaussian, then normalized to unit length.
  static EmbeddingTable random_unit(std::size_t rows, std::size_t dim, Rng& rng);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * dim_, dim_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  const std::vector<double>& data() const noexcept { return data_; }

  /// max_i | ||row_i|| - 1 |
  double max_norm_deviation() const;

  bool operator==(const EmbeddingTable&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
};

/// Unit-sphere tables for documents, metadata (one table per type), labels,
/// center words and context words. Row ids match the Vocabulary ids and the
/// corpus document order.
struct EmbeddingSpace {
  std::size_t dim = 0;
  EmbeddingTable documents;
  std::vector<std::string> metadata_types;
  std::vector<EmbeddingTable> metadata;
  EmbeddingTable labels;
  EmbeddingTable words;
  EmbeddingTable contexts;

  static EmbeddingSpace random(const Vocabulary& vocabulary, std::size_t num_documents,
                               std::size_t dim, Rng& rng);

  double max_norm_deviation() const;

  /// Text dump: a `match-embeddings 1` line, then per table a
  /// `table <name> <count> <dim>` header followed by one vector per line.
  void save(const std::filesystem::path& path) const;
  static EmbeddingSpace load(const std::filesystem::path& path);

  bool operator==(const EmbeddingSpace&) const = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);

/// [gamma + negative.anchor - positive.anchor]_+
double margin_term(std::span<const double> anchor, std::span<const double> positive,
                   std::span<const double> negative, double gamma);

/// Tangent-space projection (I - e e^T) g. Requires ||e|| = 1 (within 1e-6).
std::vector<double> riemannian_project(std::span<const double> e, std::span<const double> euclidean);

/// Returns (e + alpha*step) / ||e + alpha*step|| with step = -gradient
/// (or +gradient when `ascend`). Throws DegenerateStepError when the
/// unnormalized point is zero.
std::vector<double> retract(std::span<const double> e, std::span<const double> riemannian_gradient,
                            double alpha, bool ascend = false);

enum class Part : std::size_t { kDocMeta = 0, kDocLabel = 1, kDocWord = 2, kWordContext = 3 };
inline constexpr std::size_t kNumParts = 4;
const char* part_name(Part part);

/// One positive/negative pair. The anchor is a document row for the first
/// three parts; for kWordContext it is the context-word row c_w, and
/// positive/negative index center-word rows.
struct TrainingSample {
  Part part = Part::kDocMeta;
  std::size_t document = 0;
  std::size_t meta_type = 0;  // kDocMeta only
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

/// Word ids at positions within `window` of `center`, excluding the center.
std::vector<std::size_t> context_window(std::span<const std::size_t> words, std::size_t center,
                                        std::size_t window);

/// Draws training pairs for each part from a fixed document subset.
///
/// Negatives are uniform over: V_m minus {m+} (UNK excluded) for metadata,
/// L minus L_d for labels, W minus {w+} for words.
class PairSampler {
 public:
  PairSampler(const Corpus& corpus, std::span<const std::size_t> documents, std::size_t window,
              std::vector<bool> metadata_enabled = {});

  /// False when the part has no positive pairs in the document subset.
  bool has_positives(Part part) const;

  /// Throws SamplingError when no positive exists or the negative set is
  /// empty.
  TrainingSample sample(Part part, Rng& rng) const;

  /// Draws a negative metadata instance for a given positive.
  std::size_t sample_metadata_negative(std::size_t type, std::size_t positive, Rng& rng) const;
  std::size_t sample_label_negative(std::span<const LabelId> document_labels, Rng& rng) const;
  std::size_t sample_word_negative(std::size_t positive, Rng& rng) const;

 private:
  const Corpus* corpus_;
  std::size_t window_;
  std::vector<bool> metadata_enabled_;
  std::vector<std::size_t> docs_;
  std::vector<std::size_t> docs_with_metadata_;
  std::vector<std::size_t> docs_with_words_;
  std::vector<std::size_t> docs_with_pairs_;
};

/// Touched vector and its Euclidean gradient.
struct VectorGradient {
  EmbeddingTable* table = nullptr;
  std::size_t row = 0;
  std::vector<double> gradient;
};

struct SampleGradients {
  double loss = 0.0;
  bool active = false;
  std::array<VectorGradient, 3> vectors;  // anchor, positive, negative
};

/// Hinge value and Euclidean gradients of one sample; gradients are zero
/// when the hinge is inactive.
SampleGradients euclidean_gradients(const TrainingSample& sample, double gamma,
                                    EmbeddingSpace& space);

/// Applies one Riemannian step for the sample. Returns the hinge value
/// before the update.
double apply_sample(const TrainingSample& sample, double gamma, double alpha,
                    EmbeddingSpace& space, bool ascend = false);

struct PretrainConfig {
  std::size_t dim = 100;
  double gamma = 0.3;
  std::size_t window = 5;
  double learning_rate = 0.1;
  /// Learning rate decays linearly to learning_rate * final_lr_fraction.
  double final_lr_fraction = 0.1;
  std::size_t epochs = 5;
  /// 0 means 64 * (number of training documents).
  std::size_t iterations_per_epoch = 0;
  std::uint64_t seed = 0;
  /// Step along +grad (ascent) instead of descending.
  bool literal_ascent = false;
  /// Per metadata type; empty means all enabled. Disabled types take no part
  /// in the document-metadata objective.
  std::vector<bool> metadata_enabled;

  void validate() const;
};

/// alpha_t for step t of `total` steps; monotone non-increasing.
double learning_rate_at(const PretrainConfig& config, std::size_t step, std::size_t total);

struct EpochStats {
  std::array<double, kNumParts> mean_loss{};
  std::array<std::size_t, kNumParts> samples{};
  /// Exponential moving average of the per-sample hinge at epoch end.
  std::array<double, kNumParts> moving_average{};
  double total_mean() const;
};

struct PretrainResult {
  EmbeddingSpace space;
  std::vector<EpochStats> history;
  std::size_t updates = 0;
};

using PretrainObserver = std::function<void(std::size_t epoch, const EpochStats&,
                                            const EmbeddingSpace&)>;

/// Round-robin DM -> DL -> DW -> WW, one part per iteration (parts without
/// positives are skipped). Deterministic given the seed.
PretrainResult pretrain(const Corpus& corpus, std::span<const std::size_t> training_docs,
                        const PretrainConfig& config, const PretrainObserver& observer = {});

}  // namespace match::sphere
