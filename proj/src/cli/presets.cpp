#include "bayesmech/cli/presets.hpp"

namespace bayesmech::cli {

std::optional<std::string> find_preset(std::string_view name) {
  for (const auto& p : presets()) {
    if (p.name == name) return std::string(p.text);
  }
  return std::nullopt;
}

}  // namespace bayesmech::cli
