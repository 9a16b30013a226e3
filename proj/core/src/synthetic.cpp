#include "match/synthetic.hpp"

#include <algorithm>
#include <string>

#include "match/errors.hpp"
#include "match/rng.hpp"

namespace match {

void SynthConfig::validate() const {
  if (branching.empty()) throw ArgumentError("synthetic hierarchy depth must be >= 1");
  for (auto b : branching) {
    if (b == 0) throw ArgumentError("synthetic branching factors must be >= 1");
  }
  if (num_documents == 0) throw ArgumentError("synthetic corpus needs at least one document");
  if (leaves_per_document == 0) throw ArgumentError("leaves_per_document must be >= 1");
  if (words_per_label == 0) throw ArgumentError("words_per_label must be >= 1");
  if (words_per_document == 0) throw ArgumentError("words_per_document must be >= 1");
  if (noise_vocabulary == 0 && word_noise > 0.0) {
    throw ArgumentError("word_noise > 0 needs a non-empty noise vocabulary");
  }
  for (double p : {word_noise, venue_signal, author_signal, reference_signal}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ArgumentError("synthetic probabilities must lie in [0, 1]");
  }
  if (venues_per_top_label == 0 || authors_per_leaf == 0 || references_per_mid_label == 0) {
    throw ArgumentError("metadata pools must be non-empty");
  }
  std::size_t leaves = 1;
  for (auto b : branching) leaves *= b;
  if (leaves_per_document > leaves) {
    throw ArgumentError("leaves_per_document exceeds the number of leaves");
  }
}

namespace {

struct TreeNode {
  std::string name;
  std::size_t depth;  // 1-based
  std::size_t parent;  // index into nodes; npos for depth-1 nodes
  std::size_t top;     // depth-1 ancestor (self at depth 1)
  std::size_t mid;     // depth-2 ancestor (or self / top when shallower)
};

}  // namespace

SyntheticData generate_synthetic(const SynthConfig& config, std::uint64_t seed) {
  config.validate();
  constexpr auto npos = static_cast<std::size_t>(-1);

  // Breadth-first label tree.
  std::vector<TreeNode> nodes;
  std::vector<std::size_t> frontier;
  for (std::size_t i = 0; i < config.branching[0]; ++i) {
    nodes.push_back({"c" + std::to_string(i), 1, npos, nodes.size(), nodes.size()});
    frontier.push_back(nodes.size() - 1);
  }
  for (std::size_t depth = 2; depth <= config.branching.size(); ++depth) {
    std::vector<std::size_t> next;
    for (std::size_t p : frontier) {
      for (std::size_t i = 0; i < config.branching[depth - 1]; ++i) {
        const std::size_t idx = nodes.size();
        const std::size_t mid = depth == 2 ? idx : nodes[p].mid;
        nodes.push_back({nodes[p].name + "_" + std::to_string(i), depth, p, nodes[p].top, mid});
        next.push_back(idx);
      }
    }
    frontier = std::move(next);
  }
  const std::vector<std::size_t> leaves = frontier;

  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<std::string> isolated;
  for (const auto& n : nodes) {
    if (n.parent != npos) {
      edges.emplace_back(n.name, nodes[n.parent].name);
    } else if (config.branching.size() == 1) {
      isolated.push_back(n.name);
    }
  }

  SyntheticData data;
  data.hierarchy = LabelHierarchy::from_edges(edges, nullptr, {}, isolated);
  data.corpus.metadata_types = {"venue", "authors", "references"};

  auto topic_word = [&](std::size_t node, std::size_t j) {
    return "w_" + nodes[node].name + "_" + std::to_string(j);
  };
  auto venue_name = [&](std::size_t top, std::size_t j) {
    return "venue_" + nodes[top].name + "_" + std::to_string(j);
  };
  auto author_name = [&](std::size_t leaf, std::size_t j) {
    return "author_" + nodes[leaf].name + "_" + std::to_string(j);
  };
  auto reference_name = [&](std::size_t mid, std::size_t j) {
    return "ref_" + nodes[mid].name + "_" + std::to_string(j);
  };
  std::vector<std::size_t> tops, mids;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].top == i) tops.push_back(i);
    if (nodes[i].mid == i) mids.push_back(i);
  }

  Rng rng(seed);
  const std::size_t width = std::to_string(config.num_documents - 1).size();
  for (std::size_t d = 0; d < config.num_documents; ++d) {
    RawDocument doc;
    std::string number = std::to_string(d);
    doc.id = "doc" + std::string(width - number.size(), '0') + number;

    std::vector<std::size_t> doc_leaves;
    while (doc_leaves.size() < config.leaves_per_document) {
      const std::size_t leaf = leaves[rng.uniform_index(leaves.size())];
      if (std::find(doc_leaves.begin(), doc_leaves.end(), leaf) == doc_leaves.end()) {
        doc_leaves.push_back(leaf);
      }
    }
    std::vector<std::size_t> doc_labels = doc_leaves;
    if (config.ancestor_closure) {
      for (std::size_t leaf : doc_leaves) {
        for (std::size_t p = nodes[leaf].parent; p != npos; p = nodes[p].parent) {
          doc_labels.push_back(p);
        }
      }
    }
    std::sort(doc_labels.begin(), doc_labels.end());
    doc_labels.erase(std::unique(doc_labels.begin(), doc_labels.end()), doc_labels.end());

    for (std::size_t l : doc_labels) {
      if (!rng.bernoulli(config.word_noise)) doc.words.push_back("sig_" + nodes[l].name);
    }
    while (doc.words.size() < config.words_per_document) {
      if (rng.bernoulli(config.word_noise)) {
        doc.words.push_back("n" + std::to_string(rng.uniform_index(config.noise_vocabulary)));
      } else {
        const std::size_t l = doc_labels[rng.uniform_index(doc_labels.size())];
        doc.words.push_back(topic_word(l, rng.uniform_index(config.words_per_label)));
      }
    }
    rng.shuffle(doc.words);

    const std::size_t primary = doc_leaves.front();
    if (rng.bernoulli(config.venue_signal)) {
      doc.metadata.emplace_back(
          0, venue_name(nodes[primary].top, rng.uniform_index(config.venues_per_top_label)));
    } else {
      doc.metadata.emplace_back(0, venue_name(tops[rng.uniform_index(tops.size())],
                                              rng.uniform_index(config.venues_per_top_label)));
    }
    for (std::size_t a = 0; a < config.authors_per_document; ++a) {
      const std::size_t leaf = rng.bernoulli(config.author_signal)
                                   ? doc_leaves[rng.uniform_index(doc_leaves.size())]
                                   : leaves[rng.uniform_index(leaves.size())];
      doc.metadata.emplace_back(1, author_name(leaf, rng.uniform_index(config.authors_per_leaf)));
    }
    for (std::size_t r = 0; r < config.references_per_document; ++r) {
      const std::size_t mid =
          rng.bernoulli(config.reference_signal)
              ? nodes[doc_leaves[rng.uniform_index(doc_leaves.size())]].mid
              : mids[rng.uniform_index(mids.size())];
      doc.metadata.emplace_back(
          2, reference_name(mid, rng.uniform_index(config.references_per_mid_label)));
    }

    for (std::size_t l : doc_labels) doc.labels.push_back(nodes[l].name);
    data.corpus.documents.push_back(std::move(doc));
  }
  return data;
}

}  // namespace match
