#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "match/corpus.hpp"
#include "match/taxonomy.hpp"

namespace match {

/// Planted-signal corpus generator.
///
/// Builds a label tree with `branching[i]` children per node at depth i,
/// then draws documents whose words and metadata depend on a sampled leaf
/// label set:
///  - every label carries one signature word and a pool of topic words;
///    each label of a document contributes its signature word with
///    probability 1 - word_noise, and each remaining word slot is noise with
///    probability word_noise, else a topic word of one of the document's
///    labels;
///  - venues are tied to depth-1 labels, references to depth-2 labels and
///    authors to leaves, each drawn from the tied pool with the given signal
///    probability and uniformly otherwise.
struct SynthConfig {
  std::vector<std::size_t> branching{3, 3, 2};
  std::size_t num_documents = 2000;
  std::size_t leaves_per_document = 1;
  bool ancestor_closure = true;

  std::size_t words_per_document = 12;
  std::size_t words_per_label = 5;
  std::size_t noise_vocabulary = 200;
  double word_noise = 0.9;

  std::size_t venues_per_top_label = 2;
  double venue_signal = 0.9;
  std::size_t authors_per_leaf = 4;
  std::size_t authors_per_document = 2;
  double author_signal = 0.7;
  std::size_t references_per_mid_label = 6;
  std::size_t references_per_document = 3;
  double reference_signal = 0.6;

  /// Throws ArgumentError for an inconsistent configuration.
  void validate() const;
};

struct SyntheticData {
  RawCorpus corpus;
  LabelHierarchy hierarchy;
};

SyntheticData generate_synthetic(const SynthConfig& config, std::uint64_t seed);

}  // namespace match
