#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace match {

/// Bidirectional surface-form <-> dense id table with occurrence counts.
/// Ids are assigned contiguously from 0 in insertion order.
class IdTable {
 public:
  /// Returns the id of `surface`, inserting it if absent; adds `count` to its
  /// frequency either way.
  std::size_t intern(std::string_view surface, std::uint64_t count = 1);

  std::optional<std::size_t> find(std::string_view surface) const;

  /// Throws LookupError when absent.
  std::size_t at(std::string_view surface) const;

  const std::string& surface(std::size_t id) const;
  std::uint64_t frequency(std::size_t id) const;
  void set_frequency(std::size_t id, std::uint64_t count);

  std::size_t size() const noexcept { return surfaces_.size(); }
  bool empty() const noexcept { return surfaces_.empty(); }
  const std::vector<std::string>& surfaces() const noexcept { return surfaces_; }

  bool operator==(const IdTable& other) const {
    return surfaces_ == other.surfaces_ && frequencies_ == other.frequencies_;
  }

 private:
  std::vector<std::string> surfaces_;
  std::vector<std::uint64_t> frequencies_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace match
