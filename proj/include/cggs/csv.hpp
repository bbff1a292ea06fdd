#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cggs::csv {

/// Shortest decimal form that parses back to the identical double.
std::string format(double value);

/// Numeric table with a fixed header. Every row must have header-many cells.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Throws ParseError on an empty file, a header mismatch, a ragged row or a
/// cell that is not a complete number.
Table read(const std::filesystem::path& path, const std::vector<std::string>& expected_header);

void write(const std::filesystem::path& path, const Table& table);

} // namespace cggs::csv
