#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "match/id_table.hpp"

namespace match {

using LabelId = std::size_t;

struct HierarchyEdge {
  LabelId child;
  LabelId parent;
  bool operator==(const HierarchyEdge&) const = default;
};

struct HierarchyOptions {
  /// Drop the single taxonomy root and re-root its children.
  bool remove_root = false;
};

/// Label DAG. `parents(l)` is the parent set of l (empty for roots).
///
/// Edge files are tab-separated `child<TAB>parent` lines. A line holding a
/// single label declares an isolated label. Blank lines and lines starting
/// with '#' are ignored. Duplicate edges collapse to one.
class LabelHierarchy {
 public:
  LabelHierarchy() = default;

  /// Builds from named (child, parent) pairs. When `labels` is given, label
  /// ids follow that table and every endpoint must be present in it;
  /// otherwise ids follow first appearance in `edges`.
  static LabelHierarchy from_edges(std::span<const std::pair<std::string, std::string>> edges,
                                   const IdTable* labels = nullptr,
                                   HierarchyOptions options = {},
                                   std::span<const std::string> isolated = {});

  static LabelHierarchy load(const std::filesystem::path& path, const IdTable* labels = nullptr,
                             HierarchyOptions options = {});

  void save(const std::filesystem::path& path) const;

  std::size_t size() const noexcept { return labels_.size(); }
  const IdTable& labels() const noexcept { return labels_; }
  const std::string& name(LabelId l) const { return labels_.surface(l); }

  /// Throws LookupError for an unknown label.
  const std::vector<LabelId>& parents(LabelId l) const;
  const std::vector<LabelId>& children(LabelId l) const;

  /// Every (child, parent) pair exactly once, ordered by child id then by
  /// parent id.
  std::span<const HierarchyEdge> edge_list() const noexcept { return edges_; }

  std::vector<LabelId> roots() const;
  std::vector<LabelId> leaves() const;

  /// Transitive ancestors of l, ascending ids, excluding l.
  std::vector<LabelId> ancestors(LabelId l) const;

  /// Parents before children.
  const std::vector<LabelId>& topological_order() const noexcept { return topo_order_; }

  /// Length of the longest path to a root; roots have level 0.
  std::size_t level(LabelId l) const;

  /// Labels dropped by `remove_root` (by name).
  const std::vector<std::string>& removed_labels() const noexcept { return removed_; }

 private:
  void finalize();

  IdTable labels_;
  std::vector<std::vector<LabelId>> parents_;
  std::vector<std::vector<LabelId>> children_;
  std::vector<HierarchyEdge> edges_;
  std::vector<LabelId> topo_order_;
  std::vector<std::size_t> levels_;
  std::vector<std::string> removed_;
};

}  // namespace match
