#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "gpatch/error.hpp"

namespace gpatch {

/// Formats a double with enough digits to round-trip exactly.
inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// Column-oriented CSV writer. Every file starts with a `#` comment line
/// recording the command invocation, then the header row.
class CsvWriter {
public:
    CsvWriter(const std::string &path, const std::string &invocation,
              const std::vector<std::string> &header)
        : out_(path) {
        if (!out_) throw Error(ErrorCode::ParseError, "cannot open for writing: " + path);
        out_ << "# " << invocation << "\n";
        write_row_raw(header);
    }

    void write_row(const std::vector<std::string> &cells) { write_row_raw(cells); }

    static std::string cell(double v) { return format_double(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(long v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return v ? "true" : "false"; }
    static std::string cell(const std::string &v) { return v; }

private:
    void write_row_raw(const std::vector<std::string> &cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ",";
            out_ << cells[i];
        }
        out_ << "\n";
    }

    std::ofstream out_;
};

/// Reads a file written by CsvWriter back into rows of cells: `#` comment
/// lines and blank lines are skipped, cells split on commas (no quoting).
/// The first returned row is the header.
inline std::vector<std::vector<std::string>> read_csv(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, "cannot open: " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const auto comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    return rows;
}

} // namespace gpatch
