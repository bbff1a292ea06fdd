#include "cggs/csv.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cggs/error.hpp"

namespace cggs::csv {

namespace {

std::vector<std::string_view> split(std::string_view line)
{
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        cells.push_back(line.substr(start, comma - start));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return cells;
}

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

} // namespace

std::string format(double value)
{
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

Table read(const std::filesystem::path& path, const std::vector<std::string>& expected_header)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) {
        throw ParseError(path.string() + ": empty file");
    }
    Table table;
    for (auto cell : split(trim(line))) {
        table.header.emplace_back(trim(cell));
    }
    if (table.header != expected_header) {
        std::string want;
        for (const auto& h : expected_header) {
            want += (want.empty() ? "" : ",") + h;
        }
        throw ParseError(path.string() + ": expected header `" + want + "`");
    }

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto body = trim(line);
        if (body.empty()) {
            continue;
        }
        const auto cells = split(body);
        if (cells.size() != table.header.size()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                             std::to_string(table.header.size()) + " cells, got " + std::to_string(cells.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (auto cell : cells) {
            cell = trim(cell);
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size() || cell.empty()) {
                throw ParseError(path.string() + ":" + std::to_string(line_no) + ": not a number: `" +
                                 std::string(cell) + "`");
            }
            row.push_back(v);
        }
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write(const std::filesystem::path& path, const Table& table)
{
    std::ostringstream os;
    for (std::size_t k = 0; k < table.header.size(); ++k) {
        os << (k ? "," : "") << table.header[k];
    }
    os << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t k = 0; k < row.size(); ++k) {
            os << (k ? "," : "") << format(row[k]);
        }
        os << '\n';
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << os.str();
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

} // namespace cggs::csv
