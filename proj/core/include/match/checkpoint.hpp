#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "match/autodiff.hpp"

namespace match {

/// Named tensors plus string settings, stored as text with round-trip
/// precision.
///
///   match-checkpoint 1
///   config <key> <value>
///   tensor <name> <rows> <cols>
///   <row values...>
struct Checkpoint {
  std::map<std::string, std::string> config;
  std::map<std::string, ad::Tensor> tensors;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  /// Throws LookupError when absent.
  const ad::Tensor& tensor(const std::string& name) const;
  const std::string& setting(const std::string& key) const;
};

}  // namespace match
