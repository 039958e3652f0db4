#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "error.hpp"

namespace xfuse {

// Comma-separated table with a mandatory header row. Fields never contain
// commas or quotes here, so no escaping layer is needed.
struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::string csv_field(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string csv_field(size_t v) { return std::to_string(v); }

inline std::string csv_text(const Csv& t) {
    auto join = [](const std::vector<std::string>& cells) {
        std::string line;
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) line += ",";
            line += cells[i];
        }
        return line;
    };
    std::string out = join(t.header) + "\n";
    for (const auto& row : t.rows) out += join(row) + "\n";
    return out;
}

inline Csv parse_csv(const std::string& text) {
    Csv t;
    size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        pos = eol + 1;
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> cells;
        size_t start = 0;
        while (true) {
            const size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? comma : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (t.header.empty()) {
            t.header = cells;
        } else {
            if (cells.size() != t.header.size())
                throw ValidationError("csv: line " + std::to_string(line_no) + " has " +
                                      std::to_string(cells.size()) + " fields, header has " +
                                      std::to_string(t.header.size()));
            t.rows.push_back(cells);
        }
    }
    if (t.header.empty()) throw ValidationError("csv: no header row");
    return t;
}

inline double csv_number(const std::string& field, size_t row_index) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(field.c_str(), &end);
    if (field.empty() || end != field.c_str() + field.size())
        throw ValidationError("csv: line " + std::to_string(row_index + 2) +
                              " has non-numeric field '" + field + "'");
    return v;
}

// Whole-file text I/O. Writes go through a temp file and rename so readers
// never observe a half-written artifact.
inline std::string read_text_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw ValidationError("cannot open " + path);
    std::string text;
    char buf[1 << 14];
    size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, n);
    std::fclose(f);
    return text;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
    }
    const std::string tmp = path + ".tmp";
    std::FILE* f = std::fopen(tmp.c_str(), "wb");
    if (!f) throw ValidationError("cannot write " + tmp);
    const size_t written = std::fwrite(text.data(), 1, text.size(), f);
    const bool flushed = std::fclose(f) == 0;
    if (written != text.size() || !flushed) {
        std::remove(tmp.c_str());
        throw ValidationError("short write to " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw ValidationError("cannot rename " + tmp + " to " + path);
    }
}

} // namespace xfuse
