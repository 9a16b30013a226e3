#include "match/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "match/errors.hpp"

namespace match {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \r\n");
  return std::string(s.substr(first, last - first + 1));
}

}  // namespace

LabelHierarchy LabelHierarchy::from_edges(
    std::span<const std::pair<std::string, std::string>> edges, const IdTable* labels,
    HierarchyOptions options, std::span<const std::string> isolated) {
  std::vector<std::pair<std::string, std::string>> named(edges.begin(), edges.end());
  std::vector<std::string> declared(isolated.begin(), isolated.end());

  LabelHierarchy h;

  if (options.remove_root) {
    std::set<std::string> has_parent;
    std::vector<std::string> order;
    std::set<std::string> seen;
    auto note = [&](const std::string& s) {
      if (seen.insert(s).second) order.push_back(s);
    };
    for (const auto& [child, parent] : named) {
      note(child);
      note(parent);
      has_parent.insert(child);
    }
    for (const auto& s : declared) note(s);
    std::vector<std::string> roots;
    for (const auto& s : order) {
      if (!has_parent.contains(s)) roots.push_back(s);
    }
    if (roots.size() != 1) {
      throw ValidationError("remove_root requires exactly one taxonomy root, found " +
                            std::to_string(roots.size()));
    }
    const std::string root = roots.front();
    std::set<std::string> orphaned;
    std::erase_if(named, [&](const auto& e) {
      if (e.second == root) {
        orphaned.insert(e.first);
        return true;
      }
      return false;
    });
    std::erase(declared, root);
    // Children whose only parent was the root stay as isolated roots.
    for (const auto& child : orphaned) declared.push_back(child);
    h.removed_.push_back(root);
    if (labels != nullptr && labels->find(root)) {
      throw ValidationError("removed root '" + root + "' is present in the supplied label table");
    }
  }

  if (labels != nullptr) {
    h.labels_ = *labels;
  }
  auto resolve = [&](const std::string& name) -> LabelId {
    if (name.empty()) throw ValidationError("empty label name in hierarchy");
    if (labels != nullptr) {
      auto id = h.labels_.find(name);
      if (!id) throw ValidationError("dangling label '" + name + "' not in label vocabulary");
      return *id;
    }
    auto id = h.labels_.find(name);
    return id ? *id : h.labels_.intern(name, 0);
  };

  std::vector<HierarchyEdge> resolved;
  resolved.reserve(named.size());
  for (const auto& [child, parent] : named) {
    resolved.push_back({resolve(child), resolve(parent)});
  }
  for (const auto& name : declared) resolve(name);

  h.parents_.assign(h.labels_.size(), {});
  h.children_.assign(h.labels_.size(), {});
  for (const auto& e : resolved) {
    if (e.child == e.parent) {
      throw ValidationError("cycle detected: " + h.labels_.surface(e.child) + " -> " +
                            h.labels_.surface(e.child));
    }
    h.parents_[e.child].push_back(e.parent);
  }
  h.finalize();
  return h;
}

void LabelHierarchy::finalize() {
  const std::size_t n = labels_.size();
  for (auto& p : parents_) {
    std::sort(p.begin(), p.end());
    p.erase(std::unique(p.begin(), p.end()), p.end());
  }
  children_.assign(n, {});
  edges_.clear();
  for (LabelId c = 0; c < n; ++c) {
    for (LabelId p : parents_[c]) {
      edges_.push_back({c, p});
      children_[p].push_back(c);
    }
  }

  // Kahn's algorithm, parents first.
  std::vector<std::size_t> pending(n);
  std::vector<LabelId> frontier;
  for (LabelId l = 0; l < n; ++l) {
    pending[l] = parents_[l].size();
    if (pending[l] == 0) frontier.push_back(l);
  }
  topo_order_.clear();
  levels_.assign(n, 0);
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const LabelId l = frontier[head];
    topo_order_.push_back(l);
    for (LabelId c : children_[l]) {
      levels_[c] = std::max(levels_[c], levels_[l] + 1);
      if (--pending[c] == 0) frontier.push_back(c);
    }
  }
  if (topo_order_.size() != n) {
    // Every unprocessed label still has an unprocessed parent, so following
    // those parent links must revisit a label.
    LabelId start = 0;
    while (pending[start] == 0) ++start;
    std::vector<LabelId> path;
    std::vector<std::size_t> position(n, n);
    LabelId cur = start;
    while (position[cur] == n) {
      position[cur] = path.size();
      path.push_back(cur);
      for (LabelId p : parents_[cur]) {
        if (pending[p] != 0) {
          cur = p;
          break;
        }
      }
    }
    std::string cycle;
    for (std::size_t i = position[cur]; i < path.size(); ++i) {
      cycle += labels_.surface(path[i]) + " -> ";
    }
    cycle += labels_.surface(cur);
    throw ValidationError("cycle detected: " + cycle);
  }
}

LabelHierarchy LabelHierarchy::load(const std::filesystem::path& path, const IdTable* labels,
                                    HierarchyOptions options) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open hierarchy file " + path.string());
  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<std::string> isolated;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line.front() == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      isolated.push_back(trim(line));
      continue;
    }
    if (line.find('\t', tab + 1) != std::string::npos) {
      throw ParseError("expected 'child<TAB>parent'", lineno);
    }
    std::string child = trim(std::string_view(line).substr(0, tab));
    std::string parent = trim(std::string_view(line).substr(tab + 1));
    if (child.empty() || parent.empty()) throw ParseError("empty label in edge", lineno);
    edges.emplace_back(std::move(child), std::move(parent));
  }
  return from_edges(edges, labels, options, isolated);
}

void LabelHierarchy::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write hierarchy file " + path.string());
  for (LabelId l = 0; l < size(); ++l) {
    if (parents_[l].empty() && children_[l].empty()) out << labels_.surface(l) << '\n';
  }
  for (const auto& e : edges_) {
    out << labels_.surface(e.child) << '\t' << labels_.surface(e.parent) << '\n';
  }
}

const std::vector<LabelId>& LabelHierarchy::parents(LabelId l) const {
  if (l >= parents_.size()) throw LookupError("unknown label id " + std::to_string(l));
  return parents_[l];
}

const std::vector<LabelId>& LabelHierarchy::children(LabelId l) const {
  if (l >= children_.size()) throw LookupError("unknown label id " + std::to_string(l));
  return children_[l];
}

std::vector<LabelId> LabelHierarchy::roots() const {
  std::vector<LabelId> out;
  for (LabelId l = 0; l < size(); ++l) {
    if (parents_[l].empty()) out.push_back(l);
  }
  return out;
}

std::vector<LabelId> LabelHierarchy::leaves() const {
  std::vector<LabelId> out;
  for (LabelId l = 0; l < size(); ++l) {
    if (children_[l].empty()) out.push_back(l);
  }
  return out;
}

std::vector<LabelId> LabelHierarchy::ancestors(LabelId l) const {
  std::vector<char> seen(size(), 0);
  std::vector<LabelId> stack(parents(l).begin(), parents(l).end());
  std::vector<LabelId> out;
  while (!stack.empty()) {
    LabelId p = stack.back();
    stack.pop_back();
    if (seen[p]) continue;
    seen[p] = 1;
    out.push_back(p);
    for (LabelId q : parents_[p]) stack.push_back(q);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t LabelHierarchy::level(LabelId l) const {
  if (l >= levels_.size()) throw LookupError("unknown label id " + std::to_string(l));
  return levels_[l];
}

}  // namespace match
