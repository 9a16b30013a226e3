#include "match_cli/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "match/errors.hpp"

namespace match::cli {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_number(const std::string& key, const std::string& v) {
  double out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> parse_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

std::string format_list(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ",") + s;
  return out;
}

struct KeyDef {
  KeyInfo info;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename Get>
KeyDef uint_key(std::string name, std::string help, Get field) {
  return {{name, "int", std::move(help)},
          [name, field](RunConfig& c, const std::string& v) {
            field(c) = static_cast<std::remove_reference_t<decltype(field(c))>>(parse_uint(name, v));
          },
          [field](const RunConfig& c) {
            return std::to_string(field(const_cast<RunConfig&>(c)));
          }};
}

template <typename Get>
KeyDef number_key(std::string name, std::string help, Get field) {
  return {{name, "number", std::move(help)},
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_number(name, v); },
          [field](const RunConfig& c) { return format_number(field(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
KeyDef bool_key(std::string name, std::string help, Get field) {
  return {{name, "bool", std::move(help)},
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); },
          [field](const RunConfig& c) { return format_bool(field(const_cast<RunConfig&>(c))); }};
}

template <typename Get>
KeyDef string_key(std::string name, std::string help, Get field) {
  return {{name, "string", std::move(help)},
          [field](RunConfig& c, const std::string& v) { field(c) = v; },
          [field](const RunConfig& c) { return field(const_cast<RunConfig&>(c)); }};
}

template <typename Get>
KeyDef list_key(std::string name, std::string help, Get field) {
  return {{name, "list", std::move(help)},
          [field](RunConfig& c, const std::string& v) { field(c) = parse_list(v); },
          [field](const RunConfig& c) { return format_list(field(const_cast<RunConfig&>(c))); }};
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    t.push_back({{"seed", "int", "seed for splitting, synthesis, pre-training and training"},
                 [](RunConfig& c, const std::string& v) {
                   c.seed = parse_uint("seed", v);
                   c.pretraining.seed = c.seed;
                   c.train.seed = c.seed;
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    t.push_back(string_key("output_dir", "directory for every artifact",
                           [](RunConfig& c) -> auto& { return c.output_dir; }));
    t.push_back(string_key("corpus", "JSON-lines corpus (empty: <output_dir>/corpus.jsonl)",
                           [](RunConfig& c) -> auto& { return c.corpus; }));
    t.push_back(string_key("hierarchy", "child<TAB>parent label file (empty: flat labels)",
                           [](RunConfig& c) -> auto& { return c.hierarchy; }));
    t.push_back(bool_key("remove_root", "drop the single taxonomy root",
                         [](RunConfig& c) -> auto& { return c.remove_root; }));
    t.push_back(list_key("text_fields", "JSON fields holding text, in order",
                         [](RunConfig& c) -> auto& { return c.schema.text_fields; }));
    t.push_back(list_key("metadata_fields", "JSON fields holding metadata, one type each",
                         [](RunConfig& c) -> auto& { return c.schema.metadata_fields; }));
    t.push_back(uint_key("min_count", "minimum training frequency for words and metadata",
                         [](RunConfig& c) -> auto& { return c.min_count; }));
    t.push_back(number_key("split_train", "training fraction",
                           [](RunConfig& c) -> auto& { return c.split.train; }));
    t.push_back(number_key("split_validation", "validation fraction",
                           [](RunConfig& c) -> auto& { return c.split.validation; }));
    t.push_back(number_key("split_test", "test fraction",
                           [](RunConfig& c) -> auto& { return c.split.test; }));
    t.push_back(uint_key("top_k", "labels written per document by predict",
                         [](RunConfig& c) -> auto& { return c.top_k; }));
    t.push_back(string_key("predict_split", "split used by predict: train|validation|test|all",
                           [](RunConfig& c) -> auto& { return c.predict_split; }));
    t.push_back(string_key("log_level", "trace|debug|info|warn|error|off",
                           [](RunConfig& c) -> auto& { return c.log_level; }));

    t.push_back(uint_key("synth_documents", "synthetic corpus size",
                         [](RunConfig& c) -> auto& { return c.synth.num_documents; }));
    t.push_back({{"synth_branching", "list", "children per node at each synthetic tree depth"},
                 [](RunConfig& c, const std::string& v) {
                   std::vector<std::size_t> b;
                   for (const auto& s : parse_list(v)) b.push_back(parse_uint("synth_branching", s));
                   c.synth.branching = b;
                 },
                 [](const RunConfig& c) {
                   std::string out;
                   for (auto b : c.synth.branching) out += (out.empty() ? "" : ",") + std::to_string(b);
                   return out;
                 }});
    t.push_back(uint_key("synth_leaves_per_document", "leaf labels drawn per synthetic document",
                         [](RunConfig& c) -> auto& { return c.synth.leaves_per_document; }));
    t.push_back(uint_key("synth_words_per_document", "words per synthetic document",
                         [](RunConfig& c) -> auto& { return c.synth.words_per_document; }));
    t.push_back(number_key("synth_word_noise", "probability a synthetic word slot is noise",
                           [](RunConfig& c) -> auto& { return c.synth.word_noise; }));
    t.push_back(number_key("synth_venue_signal", "probability the venue follows the label",
                           [](RunConfig& c) -> auto& { return c.synth.venue_signal; }));
    t.push_back(number_key("synth_author_signal", "probability an author follows the label",
                           [](RunConfig& c) -> auto& { return c.synth.author_signal; }));
    t.push_back(number_key("synth_reference_signal", "probability a reference follows the label",
                           [](RunConfig& c) -> auto& { return c.synth.reference_signal; }));

    t.push_back(bool_key("pretrain", "initialize token embeddings from pre-training",
                         [](RunConfig& c) -> auto& { return c.pretrain; }));
    t.push_back(number_key("gamma", "pre-training margin",
                           [](RunConfig& c) -> auto& { return c.pretraining.gamma; }));
    t.push_back(uint_key("window", "word context window",
                         [](RunConfig& c) -> auto& { return c.pretraining.window; }));
    t.push_back(number_key("pretrain_learning_rate", "initial sphere step size",
                           [](RunConfig& c) -> auto& { return c.pretraining.learning_rate; }));
    t.push_back(number_key("pretrain_final_lr_fraction", "final step size as a fraction",
                           [](RunConfig& c) -> auto& { return c.pretraining.final_lr_fraction; }));
    t.push_back(uint_key("pretrain_epochs", "pre-training epochs",
                         [](RunConfig& c) -> auto& { return c.pretraining.epochs; }));
    t.push_back(uint_key("pretrain_iterations", "updates per epoch (0: 64 per training document)",
                         [](RunConfig& c) -> auto& { return c.pretraining.iterations_per_epoch; }));
    t.push_back(bool_key("literal_ascent", "step along +gradient during pre-training",
                         [](RunConfig& c) -> auto& { return c.pretraining.literal_ascent; }));

    t.push_back({{"dim", "int", "embedding and model width"},
                 [](RunConfig& c, const std::string& v) {
                   c.encoder.dim = parse_uint("dim", v);
                   c.pretraining.dim = c.encoder.dim;
                 },
                 [](const RunConfig& c) { return std::to_string(c.encoder.dim); }});
    t.push_back(uint_key("layers", "encoder layers",
                         [](RunConfig& c) -> auto& { return c.encoder.layers; }));
    t.push_back(uint_key("heads", "attention heads",
                         [](RunConfig& c) -> auto& { return c.encoder.heads; }));
    t.push_back(uint_key("cls_tokens", "CLS tokens per document",
                         [](RunConfig& c) -> auto& { return c.encoder.cls_tokens; }));
    t.push_back(uint_key("ffn_dim", "feed-forward width (0: 4 * dim)",
                         [](RunConfig& c) -> auto& { return c.encoder.ffn_dim; }));
    t.push_back(number_key("dropout", "dropout rate",
                           [](RunConfig& c) -> auto& { return c.encoder.dropout; }));
    t.push_back(uint_key("max_length", "tokens per document including CLS",
                         [](RunConfig& c) -> auto& { return c.encoder.max_length; }));
    t.push_back(list_key("drop_metadata", "metadata types to leave out, or all",
                         [](RunConfig& c) -> auto& { return c.drop_metadata; }));

    t.push_back(number_key("lambda_param", "parent/child weight penalty",
                           [](RunConfig& c) -> auto& { return c.train.lambda_param; }));
    t.push_back(number_key("lambda_output", "child-above-parent probability penalty",
                           [](RunConfig& c) -> auto& { return c.train.lambda_output; }));
    t.push_back(number_key("learning_rate", "Adam learning rate",
                           [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
    t.push_back(uint_key("batch_size", "documents per batch",
                         [](RunConfig& c) -> auto& { return c.train.batch_size; }));
    t.push_back(uint_key("epochs", "maximum training epochs",
                         [](RunConfig& c) -> auto& { return c.train.epochs; }));
    t.push_back(uint_key("patience", "epochs without validation gain before stopping (0: never)",
                         [](RunConfig& c) -> auto& { return c.train.patience; }));
    t.push_back(number_key("clamp", "probability clamp before logs",
                           [](RunConfig& c) -> auto& { return c.train.clamp; }));
    t.push_back(bool_key("init_head_from_labels", "seed head weights with label embeddings",
                         [](RunConfig& c) -> auto& { return c.train.init_head_from_labels; }));
    t.push_back(bool_key("freeze_embeddings", "keep token embeddings fixed while training",
                         [](RunConfig& c) -> auto& { return c.train.freeze_embeddings; }));
    return t;
  }();
  return table;
}

}  // namespace

const std::vector<KeyInfo>& config_keys() {
  static const std::vector<KeyInfo> keys = [] {
    std::vector<KeyInfo> out;
    for (const auto& k : key_table()) out.push_back(k.info);
    return out;
  }();
  return keys;
}

void set_key(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& k : key_table()) {
    if (k.info.name == key) {
      k.set(config, value);
      return;
    }
  }
  std::string valid;
  for (const auto& k : key_table()) valid += (valid.empty() ? "" : ", ") + k.info.name;
  throw ConfigError("unknown key '" + key + "'; valid keys: " + valid);
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set_key(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

RunConfig parse_config(const std::filesystem::path& path,
                       std::span<const std::pair<std::string, std::string>> overrides) {
  RunConfig c;
  if (!path.empty()) apply_config_file(c, path);
  for (const auto& [k, v] : overrides) set_key(c, k, v);
  c.validate();
  return c;
}

std::vector<std::pair<std::string, std::string>> RunConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : key_table()) out.emplace_back(k.info.name, k.get(*this));
  return out;
}

void RunConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
  if (min_count < 1) throw ConfigError("min_count must be >= 1");
  if (schema.text_fields.empty() && schema.metadata_fields.empty()) {
    throw ConfigError("at least one text or metadata field is required");
  }
  if (!(split.train > 0 && split.validation > 0 && split.test > 0)) {
    throw ConfigError("split fractions must be positive");
  }
  if (std::abs(split.train + split.validation + split.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
  if (top_k < 1) throw ConfigError("top_k must be >= 1");
  static const char* splits[] = {"train", "validation", "test", "all"};
  if (std::none_of(std::begin(splits), std::end(splits),
                   [&](const char* s) { return predict_split == s; })) {
    throw ConfigError("predict_split must be train, validation, test or all");
  }
  static const char* levels[] = {"trace", "debug", "info", "warn", "error", "off"};
  if (std::none_of(std::begin(levels), std::end(levels),
                   [&](const char* s) { return log_level == s; })) {
    throw ConfigError("log_level must be one of trace, debug, info, warn, error, off");
  }
  try {
    synth.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const ArgumentError& e) {
    throw ConfigError(e.what());
  }
  pretraining.validate();
  encoder.validate();
  train.validate();
  if (pretraining.dim != encoder.dim) throw ConfigError("pre-training and encoder dims differ");
}

std::filesystem::path RunConfig::corpus_path() const {
  return corpus.empty() ? output_path("corpus.jsonl") : std::filesystem::path(corpus);
}

std::optional<std::filesystem::path> RunConfig::hierarchy_path() const {
  if (!hierarchy.empty()) return std::filesystem::path(hierarchy);
  if (corpus.empty()) {
    auto p = output_path("hierarchy.tsv");
    if (std::filesystem::exists(p)) return p;
  }
  return std::nullopt;
}

std::vector<bool> RunConfig::metadata_mask(std::span<const std::string> types) const {
  std::vector<bool> mask(types.size(), true);
  for (const auto& name : drop_metadata) {
    if (name == "all") {
      std::fill(mask.begin(), mask.end(), false);
      continue;
    }
    auto it = std::find(types.begin(), types.end(), name);
    if (it == types.end()) {
      throw ConfigError("drop_metadata names unknown type '" + name +
                        "'; corpus types: " + format_list({types.begin(), types.end()}));
    }
    mask[static_cast<std::size_t>(it - types.begin())] = false;
  }
  return mask;
}

std::string text_fingerprint(std::string_view text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_fingerprint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return text_fingerprint(ss.str());
}

void write_manifest(const std::filesystem::path& path, const RunConfig& config,
                    const std::string& command,
                    std::span<const std::pair<std::string, std::string>> notes) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest " + path.string());
  out << "# match " << kVersion << " manifest\n";
  out << "# command " << command << '\n';
  for (const auto& [k, v] : notes) out << "# " << k << ' ' << v << '\n';
  for (const auto& [k, v] : config.entries()) out << k << " = " << v << '\n';
}

}  // namespace match::cli
