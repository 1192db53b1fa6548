#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lagcoder::csv {

using Row = std::vector<std::string>;

/// RFC-4180 style reader: quoted fields may contain commas, quotes ("") and newlines.
std::vector<Row> parse(std::string_view text);
std::vector<Row> read_file(const std::filesystem::path& path);

std::string escape(std::string_view field);
std::string join(const Row& row);

/// Column lookup by header name; throws ShapeMismatch when absent.
std::size_t column(const Row& header, std::string_view name);

}  // namespace lagcoder::csv
