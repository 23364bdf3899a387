#include "wildal/csv.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "wildal/error.hpp"

namespace wildal::csv {

int Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return static_cast<int>(i);
    }
    return -1;
}

namespace {

// Returns false at end of input.
bool read_record(std::istream& in, Row& row, std::size_t& line) {
    row.clear();
    std::string field;
    bool in_quotes = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
        } else if (c == '\r') {
            // dropped; handles CRLF
        } else if (c == '\n') {
            ++line;
            row.push_back(std::move(field));
            return true;
        } else {
            field.push_back(c);
        }
    }
    if (in_quotes) {
        throw Error(Errc::MalformedRecord, "unterminated quoted field at line " + std::to_string(line));
    }
    if (!any) return false;
    row.push_back(std::move(field));
    return true;
}

bool blank(const Row& row) { return row.size() == 1 && row[0].empty(); }

}  // namespace

Table read(std::istream& in) {
    Table table;
    std::size_t line = 1;
    Row row;
    while (read_record(in, row, line)) {
        if (blank(row)) continue;
        if (table.header.empty()) {
            // Strip a UTF-8 BOM left by spreadsheet exports.
            if (row[0].rfind("\xEF\xBB\xBF", 0) == 0) row[0].erase(0, 3);
            table.header = row;
            continue;
        }
        if (row.size() > table.header.size()) {
            throw Error(Errc::MalformedRecord,
                        "line " + std::to_string(line - 1) + " has " + std::to_string(row.size()) +
                            " fields, header has " + std::to_string(table.header.size()));
        }
        row.resize(table.header.size());
        table.rows.push_back(row);
    }
    return table;
}

Table read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::MissingFile, path.string());
    return read(in);
}

std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void write_row(std::ostream& out, const Row& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ',';
        out << escape(row[i]);
    }
    out << '\n';
}

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace wildal::csv
