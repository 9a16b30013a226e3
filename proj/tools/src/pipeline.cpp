#include "match_cli/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "match/errors.hpp"
#include "match/synthetic.hpp"

namespace match::cli {

namespace fs = std::filesystem;

namespace {

void require(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw MissingArtifact("missing " + path.string() + ": " + hint);
}

std::vector<std::pair<std::string, std::string>> input_notes(const RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> notes;
  notes.emplace_back("corpus", config.corpus_path().string() + " fnv1a64=" +
                                   file_fingerprint(config.corpus_path()));
  if (auto h = config.hierarchy_path()) {
    notes.emplace_back("hierarchy", h->string() + " fnv1a64=" + file_fingerprint(*h));
  }
  return notes;
}

void manifest(const RunConfig& config, const std::string& command) {
  write_manifest(config.output_path("manifest-" + command + ".txt"), config, command,
                 input_notes(config));
}

std::string fixed(double v, int digits = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

PreparedData prepare_data(const RunConfig& config) {
  const fs::path corpus_path = config.corpus_path();
  require(corpus_path, config.corpus.empty() ? "run `match synth` first or set corpus"
                                             : "check the corpus setting");
  RawCorpus raw = read_jsonl(corpus_path, config.schema);

  PreparedData data;
  std::optional<LabelHierarchy> hierarchy;
  if (auto h = config.hierarchy_path()) {
    require(*h, "check the hierarchy setting");
    hierarchy = LabelHierarchy::load(*h, nullptr, {.remove_root = config.remove_root});
  }

  std::vector<std::string> ids;
  for (const auto& d : raw.documents) ids.push_back(d.id);
  data.split = split_corpus(ids, config.split, config.seed);
  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < ids.size(); ++i) position.emplace(ids[i], i);
  std::vector<std::size_t> raw_train;
  for (const auto& id : data.split.train) raw_train.push_back(position.at(id));

  Vocabulary vocabulary = build_vocabulary(raw, config.min_count,
                                           hierarchy ? &*hierarchy : nullptr, raw_train);
  data.hierarchy = hierarchy ? std::move(*hierarchy)
                             : LabelHierarchy::from_edges({}, &vocabulary.labels);
  data.corpus = resolve(raw, std::move(vocabulary), &data.hierarchy);
  data.train = indices_of(data.corpus, data.split.train);
  data.validation = indices_of(data.corpus, data.split.validation);
  data.test = indices_of(data.corpus, data.split.test);
  data.metadata_mask = config.metadata_mask(data.corpus.vocabulary.metadata_types);

  fs::create_directories(config.output_dir);
  data.corpus.vocabulary.save(config.output_path("vocab.txt"));
  data.split.save(config.output_path("split.txt"));
  spdlog::info("corpus: {} documents, {} words, {} labels, {} edges; split {}/{}/{}",
               data.corpus.documents.size(), data.corpus.vocabulary.words.size(),
               data.corpus.num_labels(), data.hierarchy.edge_list().size(), data.train.size(),
               data.validation.size(), data.test.size());
  return data;
}

void run_synth(const RunConfig& config) {
  fs::create_directories(config.output_dir);
  SyntheticData data = generate_synthetic(config.synth, config.seed);
  CorpusSchema schema;
  schema.metadata_fields = data.corpus.metadata_types;
  write_jsonl(config.output_path("corpus.jsonl"), data.corpus, schema);
  data.hierarchy.save(config.output_path("hierarchy.tsv"));
  spdlog::info("synth: wrote {} documents and {} labels to {}", data.corpus.documents.size(),
               data.hierarchy.size(), config.output_dir);
  write_manifest(config.output_path("manifest-synth.txt"), config, "synth");
}

sphere::PretrainResult run_pretrain(const RunConfig& config) {
  PreparedData data = prepare_data(config);
  sphere::PretrainConfig pc = config.pretraining;
  pc.seed = config.seed;
  pc.metadata_enabled = data.metadata_mask;
  auto result = sphere::pretrain(
      data.corpus, data.train, pc,
      [](std::size_t epoch, const sphere::EpochStats& s, const sphere::EmbeddingSpace& space) {
        spdlog::info("pretrain epoch {}: loss {} (DM {} DL {} DW {} WW {}), max norm error {:.2e}",
                     epoch + 1, fixed(s.total_mean()), fixed(s.mean_loss[0]),
                     fixed(s.mean_loss[1]), fixed(s.mean_loss[2]), fixed(s.mean_loss[3]),
                     space.max_norm_deviation());
      });
  result.space.save(config.output_path("embeddings.txt"));
  manifest(config, "pretrain");
  return result;
}

TrainResult run_train(const RunConfig& config) {
  std::optional<sphere::EmbeddingSpace> space;
  if (config.pretrain) {
    const fs::path path = config.output_path("embeddings.txt");
    require(path, "run `match pretrain` first or pass --no-pretrain");
    space = sphere::EmbeddingSpace::load(path);
  }
  PreparedData data = prepare_data(config);
  encoder::EncoderConfig ec = config.encoder;
  ec.metadata_enabled = data.metadata_mask;
  TrainConfig tc = config.train;
  tc.seed = config.seed;

  std::ofstream log(config.output_path("train.log"));
  log << "epoch\ttrain_loss\trecent_loss\tval_P@1\tval_P@3\tval_P@5\tval_NDCG@3\tval_NDCG@5\tseconds\n";
  auto result = train_classifier(
      data.corpus, data.train, data.validation, data.hierarchy, ec, tc,
      space ? &*space : nullptr, [&](const EpochLog& e) {
        spdlog::info("epoch {}: loss {} (last batches {}), val P@1 {} NDCG@3 {} NDCG@5 {}, {:.1f}s",
                     e.epoch, fixed(e.train_loss), fixed(e.recent_loss),
                     fixed(e.validation.p1), fixed(e.validation.ndcg3),
                     fixed(e.validation.ndcg5), e.seconds);
        log << e.epoch << '\t' << fixed(e.train_loss, 6) << '\t' << fixed(e.recent_loss, 6)
            << '\t' << fixed(e.validation.p1, 6) << '\t' << fixed(e.validation.p3, 6) << '\t'
            << fixed(e.validation.p5, 6) << '\t' << fixed(e.validation.ndcg3, 6) << '\t'
            << fixed(e.validation.ndcg5, 6) << '\t' << fixed(e.seconds, 2) << '\n';
        log.flush();
      });
  spdlog::info("kept epoch {}", result.best_epoch);

  std::map<std::string, std::string> extra;
  tc.write(extra);
  extra["run.seed"] = std::to_string(config.seed);
  extra["run.best_epoch"] = std::to_string(result.best_epoch);
  result.model.save(config.output_path("model.ckpt"), extra);
  manifest(config, "train");
  return result;
}

namespace {

Model load_model(const RunConfig& config, const PreparedData& data) {
  const fs::path path = config.output_path("model.ckpt");
  require(path, "run `match train` first");
  Model model = Model::load(path);
  if (model.head.labels() != data.corpus.num_labels()) {
    throw ValidationError("model.ckpt predicts " + std::to_string(model.head.labels()) +
                          " labels but the corpus has " +
                          std::to_string(data.corpus.num_labels()));
  }
  if (model.encoder.words.value.rows() !=
      static_cast<Eigen::Index>(data.corpus.vocabulary.words.size())) {
    throw ValidationError("model.ckpt was trained on a different vocabulary");
  }
  return model;
}

}  // namespace

void run_predict(const RunConfig& config) {
  PreparedData data = prepare_data(config);
  Model model = load_model(config, data);
  std::vector<std::size_t> docs;
  if (config.predict_split == "train") docs = data.train;
  else if (config.predict_split == "validation") docs = data.validation;
  else if (config.predict_split == "test") docs = data.test;
  else for (std::size_t i = 0; i < data.corpus.documents.size(); ++i) docs.push_back(i);

  std::ofstream out(config.output_path("predictions.tsv"));
  if (!out) throw Error("cannot write predictions.tsv");
  out << "# seed=" << config.seed << '\n';
  char buf[32];
  for (std::size_t d : docs) {
    const auto probs = predict(model, data.corpus.documents[d]);
    out << data.corpus.documents[d].id;
    for (LabelId l : top_k_labels(probs, config.top_k)) {
      std::snprintf(buf, sizeof buf, "%.6f", probs[l]);
      out << '\t' << data.corpus.vocabulary.labels.surface(l) << ':' << buf;
    }
    out << '\n';
  }
  spdlog::info("predict: wrote {} documents to {}", docs.size(),
               config.output_path("predictions.tsv").string());
  manifest(config, "predict");
}

EvalOutcome run_eval(const RunConfig& config) {
  PreparedData data = prepare_data(config);
  Model model = load_model(config, data);
  EvalOutcome outcome;
  std::vector<DocumentScores> per_doc;
  outcome.report = evaluate_model(model, data.corpus, data.test, &per_doc);
  if (outcome.report.excluded > 0) {
    spdlog::warn("{} test documents without labels were skipped", outcome.report.excluded);
  }
  std::string canonical;
  for (const auto& [k, v] : config.entries()) canonical += k + "=" + v + "\n";
  outcome.report.fingerprint = text_fingerprint(canonical);
  outcome.inversion_rate = inversion_rate(predict_all(model, data.corpus, data.validation),
                                          data.hierarchy);
  outcome.edge_weight_distance = mean_edge_weight_distance(model.head, data.hierarchy);

  outcome.report.write_csv(config.output_path("report.csv"));
  write_per_document(config.output_path("per_doc.csv"), per_doc);
  const auto& r = outcome.report;
  spdlog::info("test ({} docs): P@1 {} P@3 {} P@5 {} NDCG@3 {} NDCG@5 {}", r.documents,
               fixed(r.p1), fixed(r.p3), fixed(r.p5), fixed(r.ndcg3), fixed(r.ndcg5));
  spdlog::info("validation inversion rate {}, mean edge weight distance {}",
               fixed(outcome.inversion_rate), fixed(outcome.edge_weight_distance));
  manifest(config, "eval");
  return outcome;
}

EvalOutcome run_all(const RunConfig& config) {
  if (config.corpus.empty()) run_synth(config);
  if (config.pretrain) run_pretrain(config);
  run_train(config);
  return run_eval(config);
}

}  // namespace match::cli
