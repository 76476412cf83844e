#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

namespace kmpc {

/// Shortest round-trip decimal representation of a double.
std::string fmt_num(double v);

void write_text(const std::filesystem::path& path, std::string_view text);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace kmpc
