#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ecgan {

// Expression class. Index 0 is always "neutral"; indices are dense in [0, K).
struct ExpressionLabel {
  int index = 0;
  std::string name;

  friend bool operator==(const ExpressionLabel& a, const ExpressionLabel& b) {
    return a.index == b.index && a.name == b.name;
  }
};

// Validates an ordered class list: neutral first, names unique.
inline std::vector<ExpressionLabel> make_expression_set(
    const std::vector<std::string>& names) {
  if (names.empty()) throw std::invalid_argument("expression set: empty");
  if (names[0] != "neutral")
    throw std::invalid_argument("expression set: index 0 must be \"neutral\"");
  std::vector<ExpressionLabel> out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j)
      if (names[j] == names[i])
        throw std::invalid_argument("expression set: duplicate name " + names[i]);
    out.push_back({static_cast<int>(i), names[i]});
  }
  return out;
}

inline const ExpressionLabel& find_expression(
    const std::vector<ExpressionLabel>& set, const std::string& name) {
  for (const auto& e : set)
    if (e.name == name) return e;
  throw std::invalid_argument("unknown expression: " + name);
}

}  // namespace ecgan
