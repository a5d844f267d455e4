#pragma once

#include <string>
#include <string_view>

#include "telegraph/error.hpp"

namespace telegraph {

// Class labels. Binary models predict p(factual); `Other` is stored but never trained on.
enum class Label { Factual, Misinformation, Other };

inline std::string_view to_string(Label l) {
  switch (l) {
    case Label::Factual: return "factual";
    case Label::Misinformation: return "misinformation";
    case Label::Other: return "other";
  }
  return "other";
}

inline Label parse_label(std::string_view s) {
  if (s == "factual") return Label::Factual;
  if (s == "misinformation") return Label::Misinformation;
  if (s == "other") return Label::Other;
  throw InvalidArgument("unknown label '" + std::string(s) + "'");
}

inline bool is_binary(Label l) { return l != Label::Other; }

}  // namespace telegraph
