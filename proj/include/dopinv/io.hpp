#pragma once

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dopinv::io {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

/// Minimal CSV writer. Numbers go through format_double so that repeated
/// runs produce byte-identical files.
class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, std::span<const std::string_view> header);

    CsvWriter& operator<<(double v);
    CsvWriter& operator<<(long long v);
    CsvWriter& operator<<(int v) { return *this << static_cast<long long>(v); }
    CsvWriter& operator<<(std::string_view s);
    void end_row();

private:
    std::ofstream out_;
    bool first_in_row_ = true;
    void separator();
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(std::string_view name) const;
    [[nodiscard]] std::vector<double> numeric_column(std::string_view name) const;
};

CsvTable read_csv(const std::filesystem::path& path);

/// Writes id,value rows for a nodal field.
void write_field_csv(const std::filesystem::path& path, std::span<const double> values,
                     std::string_view value_name = "value");
std::vector<double> read_field_csv(const std::filesystem::path& path, std::string_view value_name = "value");

void ensure_directory(const std::filesystem::path& dir);

} // namespace dopinv::io
