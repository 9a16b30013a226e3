#include "match/id_table.hpp"

#include "match/errors.hpp"

namespace match {

std::size_t IdTable::intern(std::string_view surface, std::uint64_t count) {
  auto [it, inserted] = index_.try_emplace(std::string(surface), surfaces_.size());
  if (inserted) {
    surfaces_.emplace_back(surface);
    frequencies_.push_back(0);
  }
  frequencies_[it->second] += count;
  return it->second;
}

std::optional<std::size_t> IdTable::find(std::string_view surface) const {
  auto it = index_.find(std::string(surface));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t IdTable::at(std::string_view surface) const {
  if (auto id = find(surface)) return *id;
  throw LookupError("unknown entry '" + std::string(surface) + "'");
}

const std::string& IdTable::surface(std::size_t id) const {
  if (id >= surfaces_.size()) {
    throw LookupError("id " + std::to_string(id) + " out of range (table size " +
                      std::to_string(surfaces_.size()) + ")");
  }
  return surfaces_[id];
}

std::uint64_t IdTable::frequency(std::size_t id) const {
  surface(id);
  return frequencies_[id];
}

void IdTable::set_frequency(std::size_t id, std::uint64_t count) {
  surface(id);
  frequencies_[id] = count;
}

}  // namespace match
