#include "match/classifier.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <sstream>

#include "match/adam.hpp"
#include "match/errors.hpp"

namespace match {

using ad::Parameter;
using ad::Tensor;
using ad::Var;

void TrainConfig::validate() const {
  if (!(lambda_param >= 0.0)) throw ConfigError("lambda_param must be >= 0");
  if (!(lambda_output >= 0.0)) throw ConfigError("lambda_output must be >= 0");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(clamp > 0.0 && clamp < 0.5)) throw ConfigError("clamp must lie in (0, 0.5)");
  if (loss_window < 1) throw ConfigError("loss_window must be >= 1");
}

void TrainConfig::write(std::map<std::string, std::string>& out) const {
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  };
  out["train.lambda_param"] = num(lambda_param);
  out["train.lambda_output"] = num(lambda_output);
  out["train.learning_rate"] = num(learning_rate);
  out["train.batch_size"] = std::to_string(batch_size);
  out["train.epochs"] = std::to_string(epochs);
  out["train.patience"] = std::to_string(patience);
  out["train.seed"] = std::to_string(seed);
  out["train.clamp"] = num(clamp);
}

PredictionHead PredictionHead::random(std::size_t input_dim, std::size_t labels, Rng& rng) {
  const double sd = std::sqrt(2.0 / static_cast<double>(input_dim + labels));
  Tensor w(input_dim, labels);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = sd * rng.normal();
  PredictionHead h;
  h.weights = Parameter("head.weights", std::move(w));
  h.bias = Parameter("head.bias", Tensor::Zero(1, labels));
  return h;
}

std::vector<Parameter*> Model::parameters() {
  auto out = encoder.parameters();
  out.push_back(&head.weights);
  out.push_back(&head.bias);
  return out;
}

void Model::save(const std::filesystem::path& path,
                 const std::map<std::string, std::string>& extra) const {
  Checkpoint ck;
  ck.config = extra;
  config.write(ck);
  encoder.write(ck);
  ck.tensors[head.weights.name] = head.weights.value;
  ck.tensors[head.bias.name] = head.bias.value;
  ck.config["model.labels"] = std::to_string(head.labels());
  ck.save(path);
}

Model Model::load(const std::filesystem::path& path) {
  Checkpoint ck = Checkpoint::load(path);
  Model m;
  m.config = encoder::EncoderConfig::read(ck);
  m.encoder = encoder::EncoderParams::read(ck, m.config);
  const Tensor& w = ck.tensor("head.weights");
  const Tensor& b = ck.tensor("head.bias");
  if (w.rows() != static_cast<Eigen::Index>(m.config.output_dim()) || b.rows() != 1 ||
      b.cols() != w.cols()) {
    throw ShapeError("checkpoint head has shapes " + ad::shape_string(w) + " and " +
                     ad::shape_string(b));
  }
  m.head.weights = Parameter("head.weights", w);
  m.head.bias = Parameter("head.bias", b);
  return m;
}

// ---------------------------------------------------------------------------
// Objective pieces

Var predict_probabilities(const Var& representations, PredictionHead& head) {
  if (representations.cols() != head.weights.value.rows()) {
    throw ShapeError("representation width " + std::to_string(representations.cols()) +
                     " does not match head input " + std::to_string(head.weights.value.rows()));
  }
  ad::Tape& tape = *representations.tape();
  return ad::sigmoid(ad::add_row(ad::matmul(representations, tape.leaf(head.weights)),
                                 tape.leaf(head.bias)));
}

Var bce_loss(const Var& probabilities, const Tensor& targets, double clamp) {
  if (probabilities.rows() != targets.rows() || probabilities.cols() != targets.cols()) {
    throw ShapeError("bce: probabilities " + ad::shape_string(probabilities.value()) +
                     " vs targets " + ad::shape_string(targets));
  }
  ad::Tape& tape = *probabilities.tape();
  Var p = ad::clamp(probabilities, clamp, 1.0 - clamp);
  Var pos = ad::mul(tape.constant(targets), ad::log(p));
  Tensor negatives = (1.0 - targets.array()).matrix();
  Var neg = ad::mul(tape.constant(std::move(negatives)), ad::log(ad::affine(p, -1.0, 1.0)));
  return ad::affine(ad::sum(ad::add(pos, neg)), -1.0 / static_cast<double>(targets.rows()));
}

namespace {

void edge_columns(const LabelHierarchy& hierarchy, std::size_t labels,
                  std::vector<std::size_t>& children, std::vector<std::size_t>& parents) {
  if (hierarchy.size() != labels) {
    throw ValidationError("hierarchy has " + std::to_string(hierarchy.size()) +
                          " labels, the model predicts " + std::to_string(labels));
  }
  for (const auto& e : hierarchy.edge_list()) {
    children.push_back(e.child);
    parents.push_back(e.parent);
  }
}

}  // namespace

Var parameter_regularizer(const Var& weights, const LabelHierarchy& hierarchy) {
  std::vector<std::size_t> children, parents;
  edge_columns(hierarchy, static_cast<std::size_t>(weights.cols()), children, parents);
  if (children.empty()) return weights.tape()->constant(Tensor::Zero(1, 1));
  Var diff = ad::sub(ad::gather_cols(weights, children), ad::gather_cols(weights, parents));
  return ad::affine(ad::sum(ad::square(diff)), 0.5);
}

Var output_regularizer(const Var& probabilities, const LabelHierarchy& hierarchy) {
  std::vector<std::size_t> children, parents;
  edge_columns(hierarchy, static_cast<std::size_t>(probabilities.cols()), children, parents);
  if (children.empty()) return probabilities.tape()->constant(Tensor::Zero(1, 1));
  Var excess = ad::relu(
      ad::sub(ad::gather_cols(probabilities, children), ad::gather_cols(probabilities, parents)));
  return ad::affine(ad::sum(excess), 1.0 / static_cast<double>(probabilities.rows()));
}

Tensor label_targets(std::span<const Document* const> batch, std::size_t labels) {
  Tensor y = Tensor::Zero(static_cast<Eigen::Index>(batch.size()),
                          static_cast<Eigen::Index>(labels));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    for (LabelId l : batch[i]->labels) {
      if (l >= labels) {
        throw ValidationError("document '" + batch[i]->id + "' has label id " +
                              std::to_string(l) + " outside the model's " +
                              std::to_string(labels) + " labels");
      }
      y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(l)) = 1.0;
    }
  }
  return y;
}

ObjectiveParts total_objective(ad::Tape& tape, Model& model,
                               std::span<const Document* const> batch,
                               const LabelHierarchy& hierarchy, const TrainConfig& config,
                               Rng* dropout_rng) {
  if (batch.empty()) throw ArgumentError("objective needs a non-empty batch");
  std::vector<Var> reps;
  reps.reserve(batch.size());
  for (const Document* d : batch) {
    reps.push_back(encoder::encode_document(tape, *d, model.encoder, model.config, dropout_rng));
  }
  Var probs = predict_probabilities(ad::concat_rows(reps), model.head);
  ObjectiveParts parts;
  parts.bce = bce_loss(probs, label_targets(batch, model.head.labels()), config.clamp);
  parts.parameter = parameter_regularizer(tape.leaf(model.head.weights), hierarchy);
  parts.output = output_regularizer(probs, hierarchy);
  parts.total = ad::add(ad::add(parts.bce, ad::affine(parts.parameter, config.lambda_param)),
                        ad::affine(parts.output, config.lambda_output));
  return parts;
}

// ---------------------------------------------------------------------------
// Inference

std::vector<double> predict(Model& model, const Document& document) {
  ad::Tape tape;
  Var rep = encoder::encode_document(tape, document, model.encoder, model.config);
  const Tensor& p = predict_probabilities(rep, model.head).value();
  return std::vector<double>(p.data(), p.data() + p.size());
}

std::vector<std::vector<double>> predict_all(Model& model, const Corpus& corpus,
                                             std::span<const std::size_t> documents) {
  std::vector<std::vector<double>> out;
  out.reserve(documents.size());
  for (std::size_t d : documents) out.push_back(predict(model, corpus.documents.at(d)));
  return out;
}

std::vector<LabelId> top_k_labels(std::span<const double> probabilities, std::size_t k) {
  std::vector<LabelId> order(probabilities.size());
  std::iota(order.begin(), order.end(), LabelId{0});
  const std::size_t n = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n), order.end(),
                    [&](LabelId a, LabelId b) {
                      if (probabilities[a] != probabilities[b]) {
                        return probabilities[a] > probabilities[b];
                      }
                      return a < b;
                    });
  order.resize(n);
  return order;
}

double inversion_rate(std::span<const std::vector<double>> predictions,
                      const LabelHierarchy& hierarchy) {
  const auto edges = hierarchy.edge_list();
  if (edges.empty() || predictions.empty()) return 0.0;
  std::size_t inverted = 0;
  for (const auto& p : predictions) {
    if (p.size() != hierarchy.size()) {
      throw ShapeError("prediction covers " + std::to_string(p.size()) + " labels, hierarchy " +
                       std::to_string(hierarchy.size()));
    }
    for (const auto& e : edges) inverted += p[e.child] > p[e.parent] ? 1 : 0;
  }
  return static_cast<double>(inverted) /
         static_cast<double>(edges.size() * predictions.size());
}

double mean_edge_weight_distance(const PredictionHead& head, const LabelHierarchy& hierarchy) {
  const auto edges = hierarchy.edge_list();
  if (edges.empty()) return 0.0;
  if (hierarchy.size() != head.labels()) {
    throw ValidationError("hierarchy and head disagree on the label count");
  }
  double total = 0.0;
  const Tensor& w = head.weights.value;
  for (const auto& e : edges) {
    total += (w.col(static_cast<Eigen::Index>(e.child)) -
              w.col(static_cast<Eigen::Index>(e.parent))).norm();
  }
  return total / static_cast<double>(edges.size());
}

EvalReport evaluate_model(Model& model, const Corpus& corpus,
                          std::span<const std::size_t> documents,
                          std::vector<DocumentScores>* per_document) {
  if (documents.empty()) throw ArgumentError("cannot evaluate an empty split");
  std::vector<std::vector<LabelId>> truths, rankings;
  std::vector<std::string> ids;
  for (std::size_t d : documents) {
    const Document& doc = corpus.documents.at(d);
    truths.push_back(doc.labels);
    rankings.push_back(top_k_labels(predict(model, doc), 5));
    ids.push_back(doc.id);
  }
  return evaluate_rankings(truths, rankings, per_document, ids);
}

// ---------------------------------------------------------------------------
// Training

namespace {

std::vector<Tensor> snapshot(std::span<Parameter* const> params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->value);
  return out;
}

void restore(std::span<Parameter* const> params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = values[i];
}

}  // namespace

TrainResult train_classifier(const Corpus& corpus, std::span<const std::size_t> train_docs,
                             std::span<const std::size_t> validation_docs,
                             const LabelHierarchy& hierarchy,
                             const encoder::EncoderConfig& encoder_config,
                             const TrainConfig& config, const sphere::EmbeddingSpace* space,
                             const TrainObserver& observer) {
  config.validate();
  encoder_config.validate();
  if (train_docs.empty()) throw ArgumentError("training split is empty");
  if (hierarchy.size() != corpus.num_labels()) {
    throw ValidationError("hierarchy has " + std::to_string(hierarchy.size()) +
                          " labels, the corpus " + std::to_string(corpus.num_labels()));
  }

  Rng root(config.seed);
  Rng init_rng = root.fork(1);
  Rng order_rng = root.fork(2);
  Rng dropout_rng = root.fork(3);

  TrainResult result;
  Model& model = result.model;
  model.config = encoder_config;
  model.encoder =
      encoder::EncoderParams::initialize(encoder_config, corpus.vocabulary, space, init_rng);
  model.encoder.set_embeddings_trainable(!config.freeze_embeddings);
  model.head = PredictionHead::random(encoder_config.output_dim(), corpus.num_labels(), init_rng);
  if (config.init_head_from_labels) {
    if (space == nullptr) throw ConfigError("init_head_from_labels needs pre-trained embeddings");
    const double scale = 1.0 / std::sqrt(static_cast<double>(encoder_config.cls_tokens));
    for (std::size_t l = 0; l < corpus.num_labels(); ++l) {
      auto row = space->labels.row(l);
      for (std::size_t c = 0; c < encoder_config.cls_tokens; ++c) {
        for (std::size_t j = 0; j < encoder_config.dim; ++j) {
          model.head.weights.value(static_cast<Eigen::Index>(c * encoder_config.dim + j),
                                   static_cast<Eigen::Index>(l)) = scale * row[j];
        }
      }
    }
  }

  const auto params = model.parameters();
  ad::Adam adam({.learning_rate = config.learning_rate});
  std::vector<std::size_t> order(train_docs.begin(), train_docs.end());
  std::deque<double> recent;
  double best_score = -1.0;
  std::vector<Tensor> best = snapshot(params);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    order_rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += config.batch_size) {
      std::vector<const Document*> batch;
      for (std::size_t i = b; i < std::min(order.size(), b + config.batch_size); ++i) {
        batch.push_back(&corpus.documents.at(order[i]));
      }
      for (auto* p : params) p->zero_grad();
      ad::Tape tape;
      ObjectiveParts parts = total_objective(tape, model, batch, hierarchy, config, &dropout_rng);
      tape.backward(parts.total);
      adam.step(params);
      const double loss = parts.total.scalar();
      loss_sum += loss;
      ++batches;
      recent.push_back(loss);
      if (recent.size() > config.loss_window) recent.pop_front();
    }

    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(batches);
    log.recent_loss = std::accumulate(recent.begin(), recent.end(), 0.0) /
                      static_cast<double>(recent.size());
    bool improved = true;
    if (!validation_docs.empty()) {
      log.has_validation = true;
      log.validation = evaluate_model(model, corpus, validation_docs);
      improved = log.validation.ndcg3 > best_score;
    }
    log.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(log);
    if (observer) observer(log);

    if (improved) {
      best_score = log.has_validation ? log.validation.ndcg3 : best_score;
      best = snapshot(params);
      result.best_epoch = epoch;
      stale = 0;
    } else if (config.patience > 0 && ++stale >= config.patience) {
      break;
    }
  }
  restore(params, best);
  return result;
}

}  // namespace match
