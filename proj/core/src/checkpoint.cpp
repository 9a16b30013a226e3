#include "match/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "match/errors.hpp"

namespace match {

namespace {
constexpr const char* kMagic = "match-checkpoint 1";
}

void Checkpoint::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << kMagic << '\n';
  for (const auto& [key, value] : config) {
    if (key.find_first_of(" \t\n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ArgumentError("checkpoint setting '" + key + "' contains whitespace");
    }
    out << "config " << key << ' ' << value << '\n';
  }
  char buf[32];
  for (const auto& [name, t] : tensors) {
    out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (Eigen::Index r = 0; r < t.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%.17g", t(r, c));
        if (c > 0) out << ' ';
        out << buf;
      }
      out << '\n';
    }
  }
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read checkpoint " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kMagic) {
    throw ParseError("not a checkpoint file: " + path.string(), line_no);
  }
  Checkpoint ck;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string kind;
    fields >> kind;
    if (kind == "config") {
      std::string key;
      fields >> key;
      std::string value;
      std::getline(fields >> std::ws, value);
      ck.config[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      long rows = -1, cols = -1;
      if (!(fields >> name >> rows >> cols) || rows < 0 || cols < 0) {
        throw ParseError("malformed tensor header", line_no);
      }
      ad::Tensor t(rows, cols);
      for (long r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw ParseError("truncated tensor '" + name + "'", line_no);
        ++line_no;
        std::istringstream values(line);
        for (long c = 0; c < cols; ++c) {
          if (!(values >> t(r, c))) throw ParseError("bad value in tensor '" + name + "'", line_no);
        }
      }
      ck.tensors[name] = std::move(t);
    } else {
      throw ParseError("unknown record '" + kind + "'", line_no);
    }
  }
  return ck;
}

const ad::Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw LookupError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

const std::string& Checkpoint::setting(const std::string& key) const {
  auto it = config.find(key);
  if (it == config.end()) throw LookupError("checkpoint has no setting '" + key + "'");
  return it->second;
}

}  // namespace match
