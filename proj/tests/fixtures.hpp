#pragma once

#include <cctype>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dyattack/model.hpp"

namespace fixtures {

inline std::string path(const std::string& rel) { return std::string(DYATTACK_SOURCE_DIR) + "/" + rel; }

inline std::string read(const std::string& rel) {
  std::ifstream in(path(rel));
  if (!in) throw std::runtime_error("missing fixture " + rel);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline dyattack::ProtocolModel model(const std::string& name) {
  return dyattack::parse_model(read("models/" + name + ".model"));
}

/// Tokens of a model text, comment lines excluded.
inline std::vector<std::string> tokens(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::size_t i = 0;
    while (i < line.size()) {
      unsigned char c = static_cast<unsigned char>(line[i]);
      if (std::isspace(c)) {
        ++i;
      } else if (std::isalnum(c) || c == '_') {
        std::size_t b = i;
        while (i < line.size() && (std::isalnum(static_cast<unsigned char>(line[i])) || line[i] == '_')) ++i;
        out.push_back(line.substr(b, i - b));
      } else {
        out.push_back(std::string(1, line[i++]));
      }
    }
  }
  return out;
}

/// Insertions plus deletions needed to turn one token stream into the other.
inline std::size_t token_diff(const std::string& a, const std::string& b) {
  auto x = tokens(a), y = tokens(b);
  std::vector<std::size_t> prev(y.size() + 1, 0), cur(y.size() + 1, 0);
  for (std::size_t i = 1; i <= x.size(); ++i) {
    for (std::size_t j = 1; j <= y.size(); ++j)
      cur[j] = x[i - 1] == y[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return x.size() + y.size() - 2 * prev[y.size()];
}

}  // namespace fixtures
