#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace bayesmech::cli {

struct Preset {
  std::string_view name;
  std::string_view text;
};

/// Configs shipped in presets/, compiled into the binary.
const std::vector<Preset>& presets();
std::optional<std::string> find_preset(std::string_view name);

}  // namespace bayesmech::cli
