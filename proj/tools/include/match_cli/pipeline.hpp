#pragma once

#include <cstddef>
#include <vector>

#include "match/classifier.hpp"
#include "match/corpus.hpp"
#include "match/errors.hpp"
#include "match/metrics.hpp"
#include "match/sphere_embed.hpp"
#include "match/taxonomy.hpp"
#include "match_cli/run_config.hpp"

namespace match::cli {

/// Raised when a command needs an artifact an earlier command produces.
class MissingArtifact : public Error {
 public:
  using Error::Error;
};

/// Corpus resolved against a vocabulary built from the training split.
struct PreparedData {
  Corpus corpus;
  LabelHierarchy hierarchy;
  CorpusSplit split;
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::vector<bool> metadata_mask;
};

/// Deterministic in the config; writes vocab.txt and split.txt.
PreparedData prepare_data(const RunConfig& config);

struct EvalOutcome {
  EvalReport report;
  double inversion_rate = 0.0;
  double edge_weight_distance = 0.0;
};

void run_synth(const RunConfig& config);
sphere::PretrainResult run_pretrain(const RunConfig& config);
TrainResult run_train(const RunConfig& config);
void run_predict(const RunConfig& config);
EvalOutcome run_eval(const RunConfig& config);
/// synth (when no corpus is configured), pretrain (when enabled), train, eval.
EvalOutcome run_all(const RunConfig& config);

}  // namespace match::cli
