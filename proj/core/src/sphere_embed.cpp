#include "match/sphere_embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "match/errors.hpp"

namespace match::sphere {

// ---------------------------------------------------------------------------
// Tables

EmbeddingTable EmbeddingTable::random_unit(std::size_t rows, std::size_t dim, Rng& rng) {
  if (dim == 0) throw ArgumentError("embedding dimension must be positive");
  EmbeddingTable t(rows, dim);
  for (std::size_t i = 0; i < rows; ++i) {
    auto r = t.row(i);
    double n = 0.0;
    while (n == 0.0) {
      for (auto& x : r) x = rng.normal();
      n = norm(r);
    }
    for (auto& x : r) x /= n;
  }
  return t;
}

double EmbeddingTable::max_norm_deviation() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < rows_; ++i) worst = std::max(worst, std::abs(norm(row(i)) - 1.0));
  return worst;
}

EmbeddingSpace EmbeddingSpace::random(const Vocabulary& vocabulary, std::size_t num_documents,
                                      std::size_t dim, Rng& rng) {
  EmbeddingSpace s;
  s.dim = dim;
  s.documents = EmbeddingTable::random_unit(num_documents, dim, rng);
  s.metadata_types = vocabulary.metadata_types;
  for (const auto& table : vocabulary.metadata) {
    s.metadata.push_back(EmbeddingTable::random_unit(table.size(), dim, rng));
  }
  s.labels = EmbeddingTable::random_unit(vocabulary.labels.size(), dim, rng);
  s.words = EmbeddingTable::random_unit(vocabulary.words.size(), dim, rng);
  s.contexts = EmbeddingTable::random_unit(vocabulary.words.size(), dim, rng);
  return s;
}

double EmbeddingSpace::max_norm_deviation() const {
  double worst = std::max({documents.max_norm_deviation(), labels.max_norm_deviation(),
                           words.max_norm_deviation(), contexts.max_norm_deviation()});
  for (const auto& t : metadata) worst = std::max(worst, t.max_norm_deviation());
  return worst;
}

namespace {

void write_table(std::ostream& out, const std::string& name, const EmbeddingTable& t) {
  out << "table " << name << ' ' << t.rows() << ' ' << t.dim() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < t.rows(); ++i) {
    auto r = t.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", r[j]);
      if (j > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

EmbeddingTable read_table(std::istream& in, const std::string& expected_name, std::size_t dim) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("missing table '" + expected_name + "'", 0);
  std::istringstream header(line);
  std::string keyword, name;
  std::size_t rows = 0, cols = 0;
  if (!(header >> keyword >> name >> rows >> cols) || keyword != "table") {
    throw ParseError("bad table header '" + line + "'", 0);
  }
  if (name != expected_name) {
    throw ParseError("expected table '" + expected_name + "', found '" + name + "'", 0);
  }
  if (cols != dim) throw ParseError("table '" + name + "' has mismatched dimension", 0);
  EmbeddingTable t(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!std::getline(in, line)) throw ParseError("table '" + name + "' truncated", 0);
    std::istringstream values(line);
    for (auto& x : t.row(i)) {
      if (!(values >> x)) throw ParseError("table '" + name + "' has a short row", 0);
    }
  }
  return t;
}

}  // namespace

void EmbeddingSpace::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write embeddings file " + path.string());
  out << "match-embeddings 1 " << dim << ' ' << metadata_types.size() << '\n';
  write_table(out, "documents", documents);
  for (std::size_t t = 0; t < metadata.size(); ++t) {
    write_table(out, "metadata:" + metadata_types[t], metadata[t]);
  }
  write_table(out, "labels", labels);
  write_table(out, "words", words);
  write_table(out, "contexts", contexts);
}

EmbeddingSpace EmbeddingSpace::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embeddings file " + path.string());
  std::string line;
  std::getline(in, line);
  std::istringstream header(line);
  std::string magic;
  int version = 0;
  std::size_t types = 0;
  EmbeddingSpace s;
  if (!(header >> magic >> version >> s.dim >> types) || magic != "match-embeddings" ||
      version != 1) {
    throw ParseError("not a match-embeddings v1 file", 1);
  }
  s.documents = read_table(in, "documents", s.dim);
  for (std::size_t t = 0; t < types; ++t) {
    const auto pos = in.tellg();
    std::getline(in, line);
    std::istringstream h(line);
    std::string keyword, name;
    h >> keyword >> name;
    if (name.rfind("metadata:", 0) != 0) throw ParseError("expected a metadata table", 0);
    in.seekg(pos);
    s.metadata_types.push_back(name.substr(9));
    s.metadata.push_back(read_table(in, name, s.dim));
  }
  s.labels = read_table(in, "labels", s.dim);
  s.words = read_table(in, "words", s.dim);
  s.contexts = read_table(in, "contexts", s.dim);
  return s;
}

// ---------------------------------------------------------------------------
// Geometry

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double margin_term(std::span<const double> anchor, std::span<const double> positive,
                   std::span<const double> negative, double gamma) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size()) {
    throw ShapeError("margin_term: dimension mismatch (" + std::to_string(anchor.size()) + ", " +
                     std::to_string(positive.size()) + ", " + std::to_string(negative.size()) + ")");
  }
  return std::max(0.0, gamma + dot(negative, anchor) - dot(positive, anchor));
}

std::vector<double> riemannian_project(std::span<const double> e,
                                       std::span<const double> euclidean) {
  if (e.size() != euclidean.size()) throw ShapeError("riemannian_project: dimension mismatch");
  if (std::abs(norm(e) - 1.0) > 1e-6) {
    throw ArgumentError("riemannian_project: base point is not unit-norm");
  }
  const double radial = dot(e, euclidean);
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = euclidean[i] - radial * e[i];
  return out;
}

std::vector<double> retract(std::span<const double> e, std::span<const double> riemannian_gradient,
                            double alpha, bool ascend) {
  if (e.size() != riemannian_gradient.size()) throw ShapeError("retract: dimension mismatch");
  if (!(alpha > 0.0)) throw ArgumentError("retract: step size must be positive");
  const double sign = ascend ? alpha : -alpha;
  std::vector<double> out(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out[i] = e[i] + sign * riemannian_gradient[i];
  const double n = norm(out);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateStepError("retract: step lands on the origin");
  for (auto& x : out) x /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Sampling

const char* part_name(Part part) {
  switch (part) {
    case Part::kDocMeta: return "DM";
    case Part::kDocLabel: return "DL";
    case Part::kDocWord: return "DW";
    case Part::kWordContext: return "WW";
  }
  return "?";
}

std::vector<std::size_t> context_window(std::span<const std::size_t> words, std::size_t center,
                                        std::size_t window) {
  std::vector<std::size_t> out;
  const std::size_t lo = center >= window ? center - window : 0;
  const std::size_t hi = std::min(words.size(), center + window + 1);
  for (std::size_t j = lo; j < hi; ++j) {
    if (j != center) out.push_back(words[j]);
  }
  return out;
}

PairSampler::PairSampler(const Corpus& corpus, std::span<const std::size_t> documents,
                         std::size_t window, std::vector<bool> metadata_enabled)
    : corpus_(&corpus), window_(window), metadata_enabled_(std::move(metadata_enabled)) {
  if (window_ < 1) throw ArgumentError("context window must be >= 1");
  const std::size_t types = corpus.vocabulary.metadata_types.size();
  if (metadata_enabled_.empty()) metadata_enabled_.assign(types, true);
  if (metadata_enabled_.size() != types) {
    throw ArgumentError("metadata mask size does not match the number of metadata types");
  }
  docs_.assign(documents.begin(), documents.end());
  for (std::size_t d : docs_) {
    const auto& doc = corpus.documents.at(d);
    const bool any_meta = std::any_of(doc.metadata.begin(), doc.metadata.end(),
                                      [&](const MetadataToken& m) { return metadata_enabled_[m.type]; });
    if (any_meta) docs_with_metadata_.push_back(d);
    if (!doc.words.empty()) docs_with_words_.push_back(d);
    if (doc.words.size() >= 2) docs_with_pairs_.push_back(d);
  }
}

bool PairSampler::has_positives(Part part) const {
  switch (part) {
    case Part::kDocMeta: return !docs_with_metadata_.empty();
    case Part::kDocLabel: return !docs_.empty();
    case Part::kDocWord: return !docs_with_words_.empty();
    case Part::kWordContext: return !docs_with_pairs_.empty();
  }
  return false;
}

std::size_t PairSampler::sample_metadata_negative(std::size_t type, std::size_t positive,
                                                  Rng& rng) const {
  const std::size_t size = corpus_->vocabulary.metadata.at(type).size();
  // Candidates are ids 1..size-1 minus the positive.
  const std::size_t candidates = size - 1 - (positive != Vocabulary::kUnk ? 1 : 0);
  if (size < 1 || candidates == 0 || candidates > size) {
    throw SamplingError("metadata type '" + corpus_->vocabulary.metadata_types[type] +
                        "' has no negative candidates");
  }
  std::size_t id = rng.uniform_index(candidates) + 1;
  if (positive != Vocabulary::kUnk && id >= positive) ++id;
  return id;
}

std::size_t PairSampler::sample_label_negative(std::span<const LabelId> document_labels,
                                               Rng& rng) const {
  const std::size_t total = corpus_->vocabulary.labels.size();
  if (document_labels.size() >= total) {
    throw SamplingError("document carries every label; no negative label exists");
  }
  std::size_t r = rng.uniform_index(total - document_labels.size());
  // Labels are sorted; walk the gaps.
  std::size_t id = r;
  for (LabelId l : document_labels) {
    if (l <= id) ++id;
    else break;
  }
  return id;
}

std::size_t PairSampler::sample_word_negative(std::size_t positive, Rng& rng) const {
  const std::size_t size = corpus_->vocabulary.words.size();
  if (size < 2) throw SamplingError("word vocabulary has no negative candidates");
  std::size_t id = rng.uniform_index(size - 1);
  if (id >= positive) ++id;
  return id;
}

TrainingSample PairSampler::sample(Part part, Rng& rng) const {
  if (!has_positives(part)) {
    throw SamplingError(std::string("no positive pairs for part ") + part_name(part));
  }
  TrainingSample s;
  s.part = part;
  switch (part) {
    case Part::kDocMeta: {
      s.document = docs_with_metadata_[rng.uniform_index(docs_with_metadata_.size())];
      const auto& meta = corpus_->documents[s.document].metadata;
      std::size_t enabled = 0;
      for (const auto& m : meta) enabled += metadata_enabled_[m.type] ? 1 : 0;
      std::size_t pick = rng.uniform_index(enabled);
      for (const auto& m : meta) {
        if (!metadata_enabled_[m.type]) continue;
        if (pick-- == 0) {
          s.meta_type = m.type;
          s.positive = m.instance;
          break;
        }
      }
      s.anchor = s.document;
      s.negative = sample_metadata_negative(s.meta_type, s.positive, rng);
      break;
    }
    case Part::kDocLabel: {
      s.document = docs_[rng.uniform_index(docs_.size())];
      const auto& labels = corpus_->documents[s.document].labels;
      s.anchor = s.document;
      s.positive = labels[rng.uniform_index(labels.size())];
      s.negative = sample_label_negative(labels, rng);
      break;
    }
    case Part::kDocWord: {
      s.document = docs_with_words_[rng.uniform_index(docs_with_words_.size())];
      const auto& words = corpus_->documents[s.document].words;
      s.anchor = s.document;
      s.positive = words[rng.uniform_index(words.size())];
      s.negative = sample_word_negative(s.positive, rng);
      break;
    }
    case Part::kWordContext: {
      s.document = docs_with_pairs_[rng.uniform_index(docs_with_pairs_.size())];
      const auto& words = corpus_->documents[s.document].words;
      const std::size_t center = rng.uniform_index(words.size());
      const auto context = context_window(words, center, window_);
      s.anchor = context[rng.uniform_index(context.size())];
      s.positive = words[center];
      s.negative = sample_word_negative(s.positive, rng);
      break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Updates

SampleGradients euclidean_gradients(const TrainingSample& sample, double gamma,
                                    EmbeddingSpace& space) {
  EmbeddingTable* anchor_table = &space.documents;
  EmbeddingTable* target_table = nullptr;
  switch (sample.part) {
    case Part::kDocMeta: target_table = &space.metadata.at(sample.meta_type); break;
    case Part::kDocLabel: target_table = &space.labels; break;
    case Part::kDocWord: target_table = &space.words; break;
    case Part::kWordContext:
      anchor_table = &space.contexts;
      target_table = &space.words;
      break;
  }
  if (sample.anchor >= anchor_table->rows() || sample.positive >= target_table->rows() ||
      sample.negative >= target_table->rows()) {
    throw LookupError("training sample id out of range");
  }
  const auto anchor = anchor_table->row(sample.anchor);
  const auto pos = target_table->row(sample.positive);
  const auto neg = target_table->row(sample.negative);

  SampleGradients g;
  g.loss = margin_term(anchor, pos, neg, gamma);
  g.active = g.loss > 0.0;
  const std::size_t dim = anchor.size();
  g.vectors[0] = {anchor_table, sample.anchor, std::vector<double>(dim, 0.0)};
  g.vectors[1] = {target_table, sample.positive, std::vector<double>(dim, 0.0)};
  g.vectors[2] = {target_table, sample.negative, std::vector<double>(dim, 0.0)};
  if (g.active) {
    for (std::size_t i = 0; i < dim; ++i) {
      g.vectors[0].gradient[i] = neg[i] - pos[i];
      g.vectors[1].gradient[i] = -anchor[i];
      g.vectors[2].gradient[i] = anchor[i];
    }
  }
  return g;
}

double apply_sample(const TrainingSample& sample, double gamma, double alpha,
                    EmbeddingSpace& space, bool ascend) {
  auto grads = euclidean_gradients(sample, gamma, space);
  if (!grads.active) return grads.loss;
  // All three projections use pre-update values.
  std::array<std::vector<double>, 3> riemannian;
  for (std::size_t k = 0; k < 3; ++k) {
    auto& v = grads.vectors[k];
    riemannian[k] = riemannian_project(v.table->row(v.row), v.gradient);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    auto& v = grads.vectors[k];
    auto row = v.table->row(v.row);
    double step = alpha;
    for (;;) {
      try {
        const auto next = retract(row, riemannian[k], step, ascend);
        std::copy(next.begin(), next.end(), row.begin());
        break;
      } catch (const DegenerateStepError&) {
        step *= 0.5;
        if (step < 1e-300) throw;
      }
    }
  }
  return grads.loss;
}

// ---------------------------------------------------------------------------
// Training loop

void PretrainConfig::validate() const {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (!(gamma > 0.0)) throw ConfigError("margin gamma must be > 0");
  if (window < 1) throw ConfigError("context window must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("pre-training learning rate must be > 0");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0)) {
    throw ConfigError("final learning-rate fraction must lie in (0, 1]");
  }
  if (epochs < 1) throw ConfigError("pre-training epochs must be >= 1");
}

double learning_rate_at(const PretrainConfig& config, std::size_t step, std::size_t total) {
  if (total == 0) return config.learning_rate;
  const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return config.learning_rate * (1.0 - (1.0 - config.final_lr_fraction) * progress);
}

double EpochStats::total_mean() const {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t p = 0; p < kNumParts; ++p) {
    sum += mean_loss[p] * static_cast<double>(samples[p]);
    n += samples[p];
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

PretrainResult pretrain(const Corpus& corpus, std::span<const std::size_t> training_docs,
                        const PretrainConfig& config, const PretrainObserver& observer) {
  config.validate();
  if (training_docs.empty()) throw ConfigError("pre-training needs at least one training document");
  const auto& vocab = corpus.vocabulary;
  PairSampler sampler(corpus, training_docs, config.window, config.metadata_enabled);

  // Candidate sets must be non-empty before any update happens.
  if (vocab.labels.size() < 2) throw ConfigError("pre-training needs at least two labels");
  if (vocab.words.size() < 2) throw ConfigError("pre-training needs at least two words");
  for (std::size_t d : training_docs) {
    if (corpus.documents.at(d).labels.size() >= vocab.labels.size()) {
      throw ConfigError("document '" + corpus.documents[d].id +
                        "' carries every label; the label objective has no negatives");
    }
  }
  std::vector<bool> enabled = config.metadata_enabled;
  if (enabled.empty()) enabled.assign(vocab.metadata_types.size(), true);
  for (std::size_t t = 0; t < vocab.metadata.size(); ++t) {
    if (enabled[t] && vocab.metadata[t].size() < 3) {
      bool used = false;
      for (std::size_t d : training_docs) {
        for (const auto& m : corpus.documents[d].metadata) used = used || m.type == t;
      }
      if (used) {
        throw ConfigError("metadata type '" + vocab.metadata_types[t] +
                          "' has a single instance; no negatives exist");
      }
    }
  }

  std::vector<Part> schedule;
  for (Part p : {Part::kDocMeta, Part::kDocLabel, Part::kDocWord, Part::kWordContext}) {
    if (sampler.has_positives(p)) schedule.push_back(p);
  }
  if (schedule.empty()) throw ConfigError("no positive pairs for any pre-training objective");

  Rng rng(config.seed);
  Rng init_rng = rng.fork(1);
  Rng sample_rng = rng.fork(2);

  PretrainResult result;
  result.space = EmbeddingSpace::random(vocab, corpus.documents.size(), config.dim, init_rng);

  const std::size_t per_epoch =
      config.iterations_per_epoch > 0 ? config.iterations_per_epoch : 64 * training_docs.size();
  const std::size_t total = per_epoch * config.epochs;
  constexpr double kDecay = 0.999;
  std::array<double, kNumParts> ema{};
  std::array<bool, kNumParts> ema_started{};

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochStats stats;
    std::array<double, kNumParts> sums{};
    for (std::size_t it = 0; it < per_epoch; ++it, ++step) {
      const Part part = schedule[step % schedule.size()];
      const auto p = static_cast<std::size_t>(part);
      const TrainingSample s = sampler.sample(part, sample_rng);
      const double alpha = learning_rate_at(config, step, total);
      const double loss = apply_sample(s, config.gamma, alpha, result.space, config.literal_ascent);
      sums[p] += loss;
      ++stats.samples[p];
      ema[p] = ema_started[p] ? kDecay * ema[p] + (1.0 - kDecay) * loss : loss;
      ema_started[p] = true;
    }
    for (std::size_t p = 0; p < kNumParts; ++p) {
      stats.mean_loss[p] =
          stats.samples[p] == 0 ? 0.0 : sums[p] / static_cast<double>(stats.samples[p]);
      stats.moving_average[p] = ema[p];
    }
    result.history.push_back(stats);
    if (observer) observer(epoch, stats, result.space);
  }
  result.updates = step;
  return result;
}

}  // namespace match::sphere
