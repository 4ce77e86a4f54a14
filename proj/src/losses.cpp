#include "capit/losses.hpp"

namespace capit {

std::vector<std::pair<int, int>> window_indices(int i, int j, const WindowSpec& spec, int height, int width) {
  CAPIT_REQUIRE(i >= 0 && i < height && j >= 0 && j < width, InvalidInput, "window_indices: pixel out of bounds");
  CAPIT_REQUIRE(spec.k_h >= 0 && spec.k_w >= 0, InvalidInput, "window half-sizes must be non-negative");
  std::vector<std::pair<int, int>> out;
  for (int a = std::max(0, i - spec.k_h); a <= std::min(height - 1, i + spec.k_h); ++a) {
    for (int b = std::max(0, j - spec.k_w); b <= std::min(width - 1, j + spec.k_w); ++b) out.emplace_back(a, b);
  }
  return out;
}

std::string to_string(GanMode m) {
  switch (m) {
    case GanMode::unpaired: return "unpaired";
    case GanMode::conditional: return "conditional";
    case GanMode::paired: return "paired";
  }
  return "?";
}

std::string to_string(GanForm f) { return f == GanForm::cross_entropy ? "cross-entropy" : "least-squares"; }

GanMode parse_gan_mode(const std::string& s) {
  if (s == "unpaired") return GanMode::unpaired;
  if (s == "conditional") return GanMode::conditional;
  if (s == "paired") return GanMode::paired;
  throw ConfigError("unknown gan mode '" + s + "'");
}

GanForm parse_gan_form(const std::string& s) {
  if (s == "cross-entropy" || s == "cross_entropy") return GanForm::cross_entropy;
  if (s == "least-squares" || s == "least_squares") return GanForm::least_squares;
  throw ConfigError("unknown gan form '" + s + "'");
}

}  // namespace capit
