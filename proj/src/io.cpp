#include "dopinv/io.hpp"

#include "dopinv/mesh.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <sstream>

namespace dopinv::io {

std::string format_double(double v)
{
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return {buf.data(), res.ptr};
}

CsvWriter::CsvWriter(const std::filesystem::path& path, std::span<const std::string_view> header)
    : out_(path)
{
    if (!out_) {
        throw InvalidArgument("cannot open " + path.string() + " for writing");
    }
    for (auto h : header) {
        *this << h;
    }
    end_row();
}

void CsvWriter::separator()
{
    if (!first_in_row_) {
        out_ << ',';
    }
    first_in_row_ = false;
}

CsvWriter& CsvWriter::operator<<(double v)
{
    separator();
    out_ << format_double(v);
    return *this;
}

CsvWriter& CsvWriter::operator<<(long long v)
{
    separator();
    out_ << v;
    return *this;
}

CsvWriter& CsvWriter::operator<<(std::string_view s)
{
    separator();
    out_ << s;
    return *this;
}

void CsvWriter::end_row()
{
    out_ << '\n';
    first_in_row_ = true;
}

std::size_t CsvTable::column(std::string_view name) const
{
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) {
            return i;
        }
    }
    throw InvalidArgument("CSV has no column '" + std::string(name) + "'");
}

std::vector<double> CsvTable::numeric_column(std::string_view name) const
{
    const auto c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& row : rows) {
        if (c >= row.size()) {
            throw InvalidArgument("short CSV row");
        }
        out.push_back(std::stod(row[c]));
    }
    return out;
}

namespace {

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') {
            cell.pop_back();
        }
        cells.push_back(cell);
    }
    return cells;
}

} // namespace

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw InvalidArgument("cannot open " + path.string());
    }
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) {
        throw InvalidArgument(path.string() + " is empty");
    }
    table.header = split(line);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        table.rows.push_back(split(line));
    }
    return table;
}

void write_field_csv(const std::filesystem::path& path, std::span<const double> values, std::string_view value_name)
{
    const std::array<std::string_view, 2> header{"id", value_name};
    CsvWriter w(path, header);
    for (std::size_t i = 0; i < values.size(); ++i) {
        w << static_cast<long long>(i) << values[i];
        w.end_row();
    }
}

std::vector<double> read_field_csv(const std::filesystem::path& path, std::string_view value_name)
{
    return read_csv(path).numeric_column(value_name);
}

void ensure_directory(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw InvalidArgument("cannot create directory " + dir.string() + ": " + ec.message());
    }
}

} // namespace dopinv::io
