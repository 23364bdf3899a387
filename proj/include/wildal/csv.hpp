#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace wildal::csv {

using Row = std::vector<std::string>;

struct Table {
    Row header;
    std::vector<Row> rows;

    // Column index by header name, or -1.
    int column(const std::string& name) const;
};

// RFC 4180 style: quoted fields, doubled quotes, CRLF tolerated.
// Rows are padded with empty fields up to the header width.
Table read(std::istream& in);
Table read_file(const std::filesystem::path& path);

std::string escape(const std::string& field);
void write_row(std::ostream& out, const Row& row);

// Locale-independent shortest round-trip formatting of a double.
std::string format_double(double v);

}  // namespace wildal::csv
