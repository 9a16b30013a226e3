#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "match/classifier.hpp"
#include "match/corpus.hpp"
#include "match/encoder.hpp"
#include "match/sphere_embed.hpp"
#include "match/synthetic.hpp"

namespace match::cli {

/// Everything a command needs. Built from defaults, then a key=value file,
/// then flag overrides.
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "match-out";
  /// Empty: the corpus and hierarchy written by `synth` in output_dir.
  std::string corpus;
  std::string hierarchy;
  bool remove_root = false;
  CorpusSchema schema;
  std::size_t min_count = 1;
  SplitRatios split;
  std::size_t top_k = 5;
  std::string predict_split = "test";
  std::string log_level = "info";

  SynthConfig synth;

  bool pretrain = true;
  sphere::PretrainConfig pretraining;
  encoder::EncoderConfig encoder;
  /// Metadata type names removed from pre-training and the encoder; "all"
  /// removes every type.
  std::vector<std::string> drop_metadata;
  TrainConfig train;

  void validate() const;

  /// Canonical key=value pairs for every key, in table order.
  std::vector<std::pair<std::string, std::string>> entries() const;

  std::filesystem::path output_path(const std::string& name) const {
    return std::filesystem::path(output_dir) / name;
  }
  std::filesystem::path corpus_path() const;
  /// Explicit hierarchy, or the synth one when the corpus is the synth one
  /// and the file exists. Empty means a flat label set.
  std::optional<std::filesystem::path> hierarchy_path() const;

  /// Per metadata type, whether it survives drop_metadata. Throws
  /// ConfigError for names not in `types`.
  std::vector<bool> metadata_mask(std::span<const std::string> types) const;
};

struct KeyInfo {
  std::string name;
  std::string type;  // "int", "number", "bool", "string", "list"
  std::string help;
};

/// All accepted keys, in the order manifests list them.
const std::vector<KeyInfo>& config_keys();

/// Sets one key from its text form. Throws ConfigError for unknown keys
/// (listing the valid ones) and for values of the wrong type.
void set_key(RunConfig& config, const std::string& key, const std::string& value);

/// Reads `key = value` lines; '#' starts a comment.
void apply_config_file(RunConfig& config, const std::filesystem::path& path);

/// Defaults, then `path` (if non-empty), then overrides in order; validated.
RunConfig parse_config(const std::filesystem::path& path,
                       std::span<const std::pair<std::string, std::string>> overrides = {});

/// 64-bit FNV-1a of a file's bytes, as 16 hex digits.
std::string file_fingerprint(const std::filesystem::path& path);
std::string text_fingerprint(std::string_view text);

/// Config as key=value lines preceded by '#' comment lines for the
/// command, version and input fingerprints. Loadable as a config file.
void write_manifest(const std::filesystem::path& path, const RunConfig& config,
                    const std::string& command,
                    std::span<const std::pair<std::string, std::string>> notes = {});

inline constexpr const char* kVersion = "0.1.0";

}  // namespace match::cli
