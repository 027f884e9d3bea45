#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace kfat {

// Shortest decimal form that parses back to the identical double, so CSV and
// JSON round trips are lossless.
std::string format_double(double v);

double parse_double(std::string_view field, const std::string& context, std::size_t line_no);

std::vector<std::string_view> split_csv_line(std::string_view line);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

} // namespace kfat
