#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "match/taxonomy.hpp"

namespace match {

/// Fraction of the first k ranked labels that are true. k is reduced to the
/// ranking length when the ranking is shorter. Throws ArgumentError for k < 1.
double precision_at_k(std::span<const LabelId> truth, std::span<const LabelId> ranking,
                      std::size_t k);

/// DCG@k with gain 1/log2(rank + 1), normalized by the ideal DCG over
/// min(k, |truth|) hits. Throws ArgumentError for k < 1 or empty truth.
double ndcg_at_k(std::span<const LabelId> truth, std::span<const LabelId> ranking, std::size_t k);

struct DocumentScores {
  std::string id;
  double p1 = 0, p3 = 0, p5 = 0;
  double ndcg1 = 0, ndcg3 = 0, ndcg5 = 0;
};

struct EvalReport {
  double p1 = 0, p3 = 0, p5 = 0;
  double ndcg1 = 0, ndcg3 = 0, ndcg5 = 0;
  std::size_t documents = 0;
  /// Documents skipped because they have no true label.
  std::size_t excluded = 0;
  std::string fingerprint;

  /// `metric,value` rows.
  void write_csv(const std::filesystem::path& path) const;
  bool operator==(const EvalReport&) const = default;
};

/// Averages per-document metrics. `ids` may be empty; otherwise it names
/// each document in `per_document`. Throws ArgumentError when sizes differ
/// or no document has a true label.
EvalReport evaluate_rankings(std::span<const std::vector<LabelId>> truths,
                             std::span<const std::vector<LabelId>> rankings,
                             std::vector<DocumentScores>* per_document = nullptr,
                             std::span<const std::string> ids = {});

void write_per_document(const std::filesystem::path& path,
                        std::span<const DocumentScores> scores);

}  // namespace match
