#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "match/id_table.hpp"
#include "match/taxonomy.hpp"

namespace match {

struct MetadataToken {
  std::size_t type = 0;      // index into Vocabulary::metadata_types
  std::size_t instance = 0;  // id within that type's table
  auto operator<=>(const MetadataToken&) const = default;
};

struct Document {
  std::string id;
  std::vector<std::size_t> words;
  std::vector<MetadataToken> metadata;
  std::vector<LabelId> labels;  // sorted, unique, non-empty
  bool operator==(const Document&) const = default;
};

/// All id tables. Id 0 of the word table and of every metadata table is the
/// reserved UNK entry; word id 1 separates concatenated text fields.
struct Vocabulary {
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kSeparator = 1;
  static constexpr std::string_view kUnkSurface = "<unk>";
  static constexpr std::string_view kSeparatorSurface = "<sep>";

  IdTable words;
  std::vector<std::string> metadata_types;
  std::vector<IdTable> metadata;
  IdTable labels;

  /// Creates a vocabulary with the reserved entries for the given types.
  static Vocabulary with_types(std::vector<std::string> types);

  std::optional<std::size_t> metadata_type(std::string_view name) const;

  /// Section-based text dump: `[words]`, `[metadata <type>]`, `[labels]`
  /// headers, then `surface<TAB>id<TAB>frequency` lines.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary&) const = default;
};

/// Maps JSON object fields onto document parts. Each metadata field becomes
/// one metadata type named after the field; its value may be a string or an
/// array of strings.
struct CorpusSchema {
  std::string id_field = "id";
  std::vector<std::string> text_fields{"title", "abstract"};
  std::vector<std::string> metadata_fields{"venue", "authors", "references"};
  std::string labels_field = "labels";
};

/// A document before id resolution.
struct RawDocument {
  std::string id;
  std::vector<std::string> words;
  std::vector<std::pair<std::size_t, std::string>> metadata;  // (type index, instance)
  std::vector<std::string> labels;
  bool operator==(const RawDocument&) const = default;
};

struct RawCorpus {
  std::vector<std::string> metadata_types;
  std::vector<RawDocument> documents;
};

struct Corpus {
  Vocabulary vocabulary;
  std::vector<Document> documents;

  std::optional<std::size_t> find(std::string_view id) const;
  std::size_t num_labels() const { return vocabulary.labels.size(); }
};

/// Lowercases and splits on characters outside [a-z0-9_'<>-].
std::vector<std::string> tokenize(std::string_view text);

/// Reads one JSON object per line. Text fields are concatenated in schema
/// order with a single separator token between non-empty fields.
RawCorpus parse_jsonl(std::istream& in, const CorpusSchema& schema);
RawCorpus read_jsonl(const std::filesystem::path& path, const CorpusSchema& schema);

/// Writes a raw corpus with all words in the first text field and every
/// metadata field as an array.
void write_jsonl(std::ostream& out, const RawCorpus& corpus, const CorpusSchema& schema);
void write_jsonl(const std::filesystem::path& path, const RawCorpus& corpus,
                 const CorpusSchema& schema);

/// Counts words/metadata over `training_docs` (all documents when empty).
/// Labels come from `hierarchy` when supplied, else from every document.
Vocabulary build_vocabulary(const RawCorpus& corpus, std::size_t min_count,
                            const LabelHierarchy* hierarchy = nullptr,
                            std::span<const std::size_t> training_docs = {});

/// Resolves strings to ids. Unknown words and metadata map to UNK; unknown
/// labels are a ValidationError (labels the hierarchy removed are dropped).
Corpus resolve(const RawCorpus& corpus, Vocabulary vocabulary,
               const LabelHierarchy* hierarchy = nullptr);

/// Inverse of resolve, up to UNK collapsing.
RawCorpus to_raw(const Corpus& corpus);

/// read_jsonl + build_vocabulary (unless `vocabulary` given) + resolve.
Corpus load_corpus(const std::filesystem::path& path, const CorpusSchema& schema,
                   const Vocabulary* vocabulary = nullptr,
                   const LabelHierarchy* hierarchy = nullptr, std::size_t min_count = 1);

/// Checks that every id in every document resolves in the vocabulary.
void validate_corpus(const Corpus& corpus);

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  std::uint64_t seed = 0;

  /// Lines `<partition><TAB><doc-id>` after a `# seed=<n>` header.
  void save(const std::filesystem::path& path) const;
  static CorpusSplit load(const std::filesystem::path& path);

  bool operator==(const CorpusSplit&) const = default;
};

CorpusSplit split_corpus(std::span<const std::string> document_ids, SplitRatios ratios,
                         std::uint64_t seed);
CorpusSplit split_corpus(const Corpus& corpus, SplitRatios ratios, std::uint64_t seed);

/// Document indices for a list of ids; throws LookupError for unknown ids.
std::vector<std::size_t> indices_of(const Corpus& corpus, std::span<const std::string> ids);

}  // namespace match
