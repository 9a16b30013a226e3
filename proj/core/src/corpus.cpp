#include "match/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "match/errors.hpp"
#include "match/rng.hpp"

namespace match {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::with_types(std::vector<std::string> types) {
  Vocabulary v;
  v.words.intern(kUnkSurface, 0);
  v.words.intern(kSeparatorSurface, 0);
  v.metadata_types = std::move(types);
  v.metadata.resize(v.metadata_types.size());
  for (auto& table : v.metadata) table.intern(kUnkSurface, 0);
  return v;
}

std::optional<std::size_t> Vocabulary::metadata_type(std::string_view name) const {
  for (std::size_t t = 0; t < metadata_types.size(); ++t) {
    if (metadata_types[t] == name) return t;
  }
  return std::nullopt;
}

namespace {

void write_table(std::ostream& out, const IdTable& table) {
  for (std::size_t id = 0; id < table.size(); ++id) {
    out << table.surface(id) << '\t' << id << '\t' << table.frequency(id) << '\n';
  }
}

void check_surface(const std::string& s) {
  if (s.find_first_of("\t\n") != std::string::npos) {
    throw ValidationError("surface form contains a tab or newline: '" + s + "'");
  }
}

}  // namespace

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write vocabulary file " + path.string());
  out << "[words]\n";
  write_table(out, words);
  for (std::size_t t = 0; t < metadata_types.size(); ++t) {
    out << "[metadata " << metadata_types[t] << "]\n";
    write_table(out, metadata[t]);
  }
  out << "[labels]\n";
  write_table(out, labels);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary file " + path.string());
  Vocabulary v;
  IdTable* current = nullptr;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line == "[words]") {
        current = &v.words;
      } else if (line == "[labels]") {
        current = &v.labels;
      } else if (line.rfind("[metadata ", 0) == 0 && line.back() == ']') {
        v.metadata_types.push_back(line.substr(10, line.size() - 11));
        v.metadata.emplace_back();
        current = &v.metadata.back();
      } else {
        throw ParseError("unknown vocabulary section " + line, lineno);
      }
      continue;
    }
    if (current == nullptr) throw ParseError("entry before any section header", lineno);
    std::istringstream fields(line);
    std::string surface, id_text, freq_text;
    if (!std::getline(fields, surface, '\t') || !std::getline(fields, id_text, '\t') ||
        !std::getline(fields, freq_text)) {
      throw ParseError("expected 'surface<TAB>id<TAB>frequency'", lineno);
    }
    std::size_t id = 0;
    std::uint64_t freq = 0;
    try {
      id = std::stoull(id_text);
      freq = std::stoull(freq_text);
    } catch (const std::exception&) {
      throw ParseError("non-numeric id or frequency", lineno);
    }
    if (id != current->size()) throw ParseError("ids must be contiguous from 0", lineno);
    if (current->find(surface)) throw ParseError("duplicate surface '" + surface + "'", lineno);
    current->intern(surface, freq);
  }
  if (v.words.size() < 2 || v.words.surface(kUnk) != kUnkSurface ||
      v.words.surface(kSeparator) != kSeparatorSurface) {
    throw ValidationError("vocabulary file lacks the reserved word entries");
  }
  for (std::size_t t = 0; t < v.metadata.size(); ++t) {
    if (v.metadata[t].empty() || v.metadata[t].surface(kUnk) != kUnkSurface) {
      throw ValidationError("metadata table '" + v.metadata_types[t] + "' lacks its UNK entry");
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// JSON-lines I/O

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) || c == '_' || c == '-' || c == '\'' || c == '<' || c == '>' ||
        c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

namespace {

std::vector<std::string> string_list(const json& value, const std::string& field,
                                     std::size_t lineno) {
  std::vector<std::string> out;
  if (value.is_null()) return out;
  if (value.is_string()) {
    out.push_back(value.get<std::string>());
    return out;
  }
  if (!value.is_array()) {
    throw ParseError("field '" + field + "' must be a string or an array of strings", lineno);
  }
  for (const auto& item : value) {
    if (!item.is_string()) {
      throw ParseError("field '" + field + "' must contain only strings", lineno);
    }
    out.push_back(item.get<std::string>());
  }
  return out;
}

}  // namespace

RawCorpus parse_jsonl(std::istream& in, const CorpusSchema& schema) {
  RawCorpus corpus;
  corpus.metadata_types = schema.metadata_fields;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), lineno);
    }
    if (!obj.is_object()) throw ParseError("expected a JSON object", lineno);

    RawDocument doc;
    auto id_it = obj.find(schema.id_field);
    if (id_it == obj.end() || !id_it->is_string()) {
      throw ParseError("missing string field '" + schema.id_field + "'", lineno);
    }
    doc.id = id_it->get<std::string>();
    if (doc.id.empty()) throw ParseError("empty document id", lineno);

    auto labels_it = obj.find(schema.labels_field);
    if (labels_it == obj.end()) {
      throw ParseError("missing field '" + schema.labels_field + "'", lineno);
    }
    doc.labels = string_list(*labels_it, schema.labels_field, lineno);

    for (const auto& field : schema.text_fields) {
      auto it = obj.find(field);
      if (it == obj.end() || it->is_null()) continue;
      if (!it->is_string()) throw ParseError("text field '" + field + "' must be a string", lineno);
      auto tokens = tokenize(it->get<std::string>());
      if (tokens.empty()) continue;
      if (!doc.words.empty()) doc.words.emplace_back(Vocabulary::kSeparatorSurface);
      for (auto& t : tokens) doc.words.push_back(std::move(t));
    }
    for (std::size_t t = 0; t < schema.metadata_fields.size(); ++t) {
      const auto& field = schema.metadata_fields[t];
      auto it = obj.find(field);
      if (it == obj.end()) continue;
      for (auto& instance : string_list(*it, field, lineno)) {
        if (instance.empty()) continue;
        doc.metadata.emplace_back(t, std::move(instance));
      }
    }

    if (!seen_ids.insert(doc.id).second) {
      throw ValidationError("line " + std::to_string(lineno) + ": duplicate document id '" +
                            doc.id + "'");
    }
    if (doc.labels.empty()) {
      throw ValidationError("line " + std::to_string(lineno) + ": document '" + doc.id +
                            "' has no labels");
    }
    if (doc.words.empty() && doc.metadata.empty()) {
      throw ValidationError("line " + std::to_string(lineno) + ": document '" + doc.id +
                            "' has neither text nor metadata");
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

RawCorpus read_jsonl(const std::filesystem::path& path, const CorpusSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return parse_jsonl(in, schema);
}

void write_jsonl(std::ostream& out, const RawCorpus& corpus, const CorpusSchema& schema) {
  if (schema.text_fields.empty()) throw ArgumentError("schema has no text field to write into");
  for (const auto& doc : corpus.documents) {
    json obj = json::object();
    obj[schema.id_field] = doc.id;
    std::string text;
    for (const auto& w : doc.words) {
      if (!text.empty()) text.push_back(' ');
      text += w;
    }
    obj[schema.text_fields.front()] = text;
    for (std::size_t t = 0; t < corpus.metadata_types.size(); ++t) {
      json values = json::array();
      for (const auto& [type, instance] : doc.metadata) {
        if (type == t) values.push_back(instance);
      }
      obj[corpus.metadata_types[t]] = std::move(values);
    }
    obj[schema.labels_field] = doc.labels;
    out << obj.dump() << '\n';
  }
}

void write_jsonl(const std::filesystem::path& path, const RawCorpus& corpus,
                 const CorpusSchema& schema) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file " + path.string());
  write_jsonl(out, corpus, schema);
}

// ---------------------------------------------------------------------------
// Vocabulary construction and id resolution

Vocabulary build_vocabulary(const RawCorpus& corpus, std::size_t min_count,
                            const LabelHierarchy* hierarchy,
                            std::span<const std::size_t> training_docs) {
  if (min_count < 1) throw ArgumentError("min_count must be >= 1");
  if (corpus.documents.empty()) throw ArgumentError("cannot build a vocabulary from an empty corpus");

  std::vector<std::size_t> docs(training_docs.begin(), training_docs.end());
  if (docs.empty()) {
    docs.resize(corpus.documents.size());
    for (std::size_t i = 0; i < docs.size(); ++i) docs[i] = i;
  }

  Vocabulary v = Vocabulary::with_types(corpus.metadata_types);

  // Words: first-appearance order among those meeting min_count.
  std::unordered_map<std::string, std::uint64_t> counts;
  std::vector<std::string> order;
  for (std::size_t d : docs) {
    for (const auto& w : corpus.documents.at(d).words) {
      auto [it, inserted] = counts.try_emplace(w, 0);
      if (inserted) order.push_back(w);
      ++it->second;
    }
  }
  std::uint64_t unk = 0;
  for (const auto& w : order) {
    const auto c = counts[w];
    if (w == Vocabulary::kSeparatorSurface) {
      v.words.set_frequency(Vocabulary::kSeparator, c);
    } else if (w == Vocabulary::kUnkSurface || c < min_count) {
      unk += c;
    } else {
      check_surface(w);
      v.words.intern(w, c);
    }
  }
  v.words.set_frequency(Vocabulary::kUnk, unk);

  for (std::size_t d : docs) {
    for (const auto& [type, instance] : corpus.documents[d].metadata) {
      check_surface(instance);
      v.metadata.at(type).intern(instance);
    }
  }

  if (hierarchy != nullptr) {
    v.labels = hierarchy->labels();
    for (std::size_t l = 0; l < v.labels.size(); ++l) v.labels.set_frequency(l, 0);
    for (const auto& doc : corpus.documents) {
      for (const auto& name : doc.labels) {
        if (v.labels.find(name)) v.labels.intern(name);
      }
    }
  } else {
    for (const auto& doc : corpus.documents) {
      for (const auto& name : doc.labels) {
        check_surface(name);
        v.labels.intern(name);
      }
    }
  }
  return v;
}

Corpus resolve(const RawCorpus& raw, Vocabulary vocabulary, const LabelHierarchy* hierarchy) {
  if (hierarchy != nullptr && hierarchy->labels().surfaces() != vocabulary.labels.surfaces()) {
    throw ValidationError("label vocabulary is not aligned with the hierarchy");
  }
  std::vector<std::size_t> type_map(raw.metadata_types.size());
  for (std::size_t t = 0; t < raw.metadata_types.size(); ++t) {
    auto mapped = vocabulary.metadata_type(raw.metadata_types[t]);
    if (!mapped) {
      throw ValidationError("metadata type '" + raw.metadata_types[t] +
                            "' is not in the vocabulary");
    }
    type_map[t] = *mapped;
  }

  Corpus corpus;
  corpus.documents.reserve(raw.documents.size());
  for (const auto& rd : raw.documents) {
    Document doc;
    doc.id = rd.id;
    doc.words.reserve(rd.words.size());
    for (const auto& w : rd.words) {
      doc.words.push_back(vocabulary.words.find(w).value_or(Vocabulary::kUnk));
    }
    for (const auto& [type, instance] : rd.metadata) {
      const std::size_t t = type_map.at(type);
      doc.metadata.push_back({t, vocabulary.metadata[t].find(instance).value_or(Vocabulary::kUnk)});
    }
    for (const auto& name : rd.labels) {
      if (auto id = vocabulary.labels.find(name)) {
        doc.labels.push_back(*id);
        continue;
      }
      if (hierarchy != nullptr) {
        const auto& removed = hierarchy->removed_labels();
        if (std::find(removed.begin(), removed.end(), name) != removed.end()) continue;
      }
      throw ValidationError("document '" + rd.id + "': unknown label '" + name + "'");
    }
    std::sort(doc.labels.begin(), doc.labels.end());
    doc.labels.erase(std::unique(doc.labels.begin(), doc.labels.end()), doc.labels.end());
    if (doc.labels.empty()) {
      throw ValidationError("document '" + rd.id + "' has no labels after resolution");
    }
    corpus.documents.push_back(std::move(doc));
  }
  corpus.vocabulary = std::move(vocabulary);
  return corpus;
}

RawCorpus to_raw(const Corpus& corpus) {
  const auto& v = corpus.vocabulary;
  RawCorpus raw;
  raw.metadata_types = v.metadata_types;
  raw.documents.reserve(corpus.documents.size());
  for (const auto& doc : corpus.documents) {
    RawDocument rd;
    rd.id = doc.id;
    for (auto w : doc.words) rd.words.push_back(v.words.surface(w));
    for (const auto& m : doc.metadata) {
      rd.metadata.emplace_back(m.type, v.metadata.at(m.type).surface(m.instance));
    }
    for (auto l : doc.labels) rd.labels.push_back(v.labels.surface(l));
    raw.documents.push_back(std::move(rd));
  }
  return raw;
}

Corpus load_corpus(const std::filesystem::path& path, const CorpusSchema& schema,
                   const Vocabulary* vocabulary, const LabelHierarchy* hierarchy,
                   std::size_t min_count) {
  RawCorpus raw = read_jsonl(path, schema);
  Vocabulary v = vocabulary != nullptr ? *vocabulary : build_vocabulary(raw, min_count, hierarchy);
  Corpus corpus = resolve(raw, std::move(v), hierarchy);
  validate_corpus(corpus);
  return corpus;
}

void validate_corpus(const Corpus& corpus) {
  const auto& v = corpus.vocabulary;
  if (v.metadata.size() != v.metadata_types.size()) {
    throw ValidationError("vocabulary metadata tables do not match its type list");
  }
  std::unordered_set<std::string> ids;
  for (const auto& doc : corpus.documents) {
    if (!ids.insert(doc.id).second) throw ValidationError("duplicate document id '" + doc.id + "'");
    for (auto w : doc.words) {
      if (w >= v.words.size()) throw ValidationError("document '" + doc.id + "': word id out of range");
    }
    for (const auto& m : doc.metadata) {
      if (m.type >= v.metadata.size() || m.instance >= v.metadata[m.type].size()) {
        throw ValidationError("document '" + doc.id + "': metadata id out of range");
      }
    }
    if (doc.labels.empty()) throw ValidationError("document '" + doc.id + "' has no labels");
    for (auto l : doc.labels) {
      if (l >= v.labels.size()) throw ValidationError("document '" + doc.id + "': label id out of range");
    }
  }
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  for (std::size_t i = 0; i < documents.size(); ++i) {
    if (documents[i].id == id) return i;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Splits

CorpusSplit split_corpus(std::span<const std::string> document_ids, SplitRatios ratios,
                         std::uint64_t seed) {
  if (!(ratios.train > 0.0 && ratios.validation > 0.0 && ratios.test > 0.0)) {
    throw ArgumentError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9) {
    throw ArgumentError("split ratios must sum to 1");
  }
  const std::size_t n = document_ids.size();
  if (n < 3) throw ArgumentError("cannot split a corpus with fewer than 3 documents");

  std::vector<std::string> shuffled(document_ids.begin(), document_ids.end());
  Rng rng(seed);
  rng.shuffle(shuffled);

  const auto n_train = static_cast<std::size_t>(std::llround(ratios.train * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(ratios.validation * static_cast<double>(n)));
  if (n_train + n_val > n) n_val = n - n_train;

  CorpusSplit split;
  split.seed = seed;
  auto it = shuffled.begin();
  split.train.assign(it, it + static_cast<std::ptrdiff_t>(n_train));
  it += static_cast<std::ptrdiff_t>(n_train);
  split.validation.assign(it, it + static_cast<std::ptrdiff_t>(n_val));
  it += static_cast<std::ptrdiff_t>(n_val);
  split.test.assign(it, shuffled.end());
  return split;
}

CorpusSplit split_corpus(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(corpus.documents.size());
  for (const auto& d : corpus.documents) ids.push_back(d.id);
  return split_corpus(ids, ratios, seed);
}

void CorpusSplit::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write split file " + path.string());
  out << "# seed=" << seed << '\n';
  for (const auto& id : train) out << "train\t" << id << '\n';
  for (const auto& id : validation) out << "validation\t" << id << '\n';
  for (const auto& id : test) out << "test\t" << id << '\n';
}

CorpusSplit CorpusSplit::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open split file " + path.string());
  CorpusSplit split;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# seed=", 0) == 0) {
      split.seed = std::stoull(line.substr(7));
      continue;
    }
    if (line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("expected '<partition><TAB><id>'", lineno);
    const std::string part = line.substr(0, tab);
    std::string id = line.substr(tab + 1);
    if (part == "train") {
      split.train.push_back(std::move(id));
    } else if (part == "validation") {
      split.validation.push_back(std::move(id));
    } else if (part == "test") {
      split.test.push_back(std::move(id));
    } else {
      throw ParseError("unknown partition '" + part + "'", lineno);
    }
  }
  return split;
}

std::vector<std::size_t> indices_of(const Corpus& corpus, std::span<const std::string> ids) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.documents.size(); ++i) index.emplace(corpus.documents[i].id, i);
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw LookupError("document id '" + id + "' not in corpus");
    out.push_back(it->second);
  }
  return out;
}

}  // namespace match
