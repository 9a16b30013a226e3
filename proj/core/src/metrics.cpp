#include "match/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "match/errors.hpp"

namespace match {

namespace {

bool contains(std::span<const LabelId> truth, LabelId l) {
  return std::find(truth.begin(), truth.end(), l) != truth.end();
}

}  // namespace

double precision_at_k(std::span<const LabelId> truth, std::span<const LabelId> ranking,
                      std::size_t k) {
  if (k < 1) throw ArgumentError("k must be >= 1");
  const std::size_t n = std::min(k, ranking.size());
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) hits += contains(truth, ranking[i]) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(n);
}

double ndcg_at_k(std::span<const LabelId> truth, std::span<const LabelId> ranking, std::size_t k) {
  if (k < 1) throw ArgumentError("k must be >= 1");
  if (truth.empty()) throw ArgumentError("NDCG is undefined for a document without true labels");
  double dcg = 0.0;
  for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
    if (contains(truth, ranking[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  double ideal = 0.0;
  for (std::size_t i = 0; i < std::min(k, truth.size()); ++i) {
    ideal += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg / ideal;
}

EvalReport evaluate_rankings(std::span<const std::vector<LabelId>> truths,
                             std::span<const std::vector<LabelId>> rankings,
                             std::vector<DocumentScores>* per_document,
                             std::span<const std::string> ids) {
  if (truths.size() != rankings.size()) {
    throw ArgumentError("evaluate: " + std::to_string(truths.size()) + " truth sets but " +
                        std::to_string(rankings.size()) + " rankings");
  }
  if (!ids.empty() && ids.size() != truths.size()) {
    throw ArgumentError("evaluate: id list does not match the document count");
  }
  EvalReport r;
  for (std::size_t d = 0; d < truths.size(); ++d) {
    if (truths[d].empty()) {
      ++r.excluded;
      continue;
    }
    DocumentScores s;
    if (!ids.empty()) s.id = ids[d];
    s.p1 = precision_at_k(truths[d], rankings[d], 1);
    s.p3 = precision_at_k(truths[d], rankings[d], 3);
    s.p5 = precision_at_k(truths[d], rankings[d], 5);
    s.ndcg1 = ndcg_at_k(truths[d], rankings[d], 1);
    s.ndcg3 = ndcg_at_k(truths[d], rankings[d], 3);
    s.ndcg5 = ndcg_at_k(truths[d], rankings[d], 5);
    r.p1 += s.p1;
    r.p3 += s.p3;
    r.p5 += s.p5;
    r.ndcg1 += s.ndcg1;
    r.ndcg3 += s.ndcg3;
    r.ndcg5 += s.ndcg5;
    ++r.documents;
    if (per_document != nullptr) per_document->push_back(std::move(s));
  }
  if (r.documents == 0) throw ArgumentError("evaluate: no document with a true label");
  const auto n = static_cast<double>(r.documents);
  for (double* v : {&r.p1, &r.p3, &r.p5, &r.ndcg1, &r.ndcg3, &r.ndcg5}) *v /= n;
  return r;
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write report " + path.string());
  char buf[64];
  out << "metric,value\n";
  const std::pair<const char*, double> rows[] = {{"P@1", p1},       {"P@3", p3},
                                                 {"P@5", p5},       {"NDCG@1", ndcg1},
                                                 {"NDCG@3", ndcg3}, {"NDCG@5", ndcg5}};
  for (const auto& [name, value] : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", value);
    out << name << ',' << buf << '\n';
  }
  out << "documents," << documents << '\n';
  out << "excluded," << excluded << '\n';
  if (!fingerprint.empty()) out << "fingerprint," << fingerprint << '\n';
}

void write_per_document(const std::filesystem::path& path,
                        std::span<const DocumentScores> scores) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "id,P@1,P@3,P@5,NDCG@1,NDCG@3,NDCG@5\n";
  char buf[160];
  for (const auto& s : scores) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", s.p1, s.p3, s.p5,
                  s.ndcg1, s.ndcg3, s.ndcg5);
    out << s.id << buf << '\n';
  }
}

}  // namespace match
