// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rcs::detail {

std::string_view trim(std::string_view s);
std::string_view strip_bom(std::string_view s);
/// Split on commas and trim each field. No quoting support.
std::vector<std::string> split_csv_line(std::string_view line);
std::optional<double> parse_double(std::string_view s);
/// Shortest round-trip decimal representation.
std::string format_double(double value);
std::string format_float(float value);
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace rcs::detail
