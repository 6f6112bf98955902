#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace descan::csv {

struct Record {
    std::vector<std::string> fields;
    std::size_t line = 0;  // line where the record starts (1-based)
};

/// RFC-4180 reader: quoted fields may contain commas, doubled quotes and
/// line breaks. CRLF and LF line endings are both accepted.
class Reader {
public:
    explicit Reader(std::istream& in, std::string source = {}) : in_(in), source_(std::move(source)) {}

    std::optional<Record> next();

private:
    std::istream& in_;
    std::string source_;
    std::size_t line_ = 1;
};

/// Reads a whole file with a header row into name-addressable rows.
struct Table {
    std::vector<std::string> header;
    std::vector<Record> rows;

    int column(const std::string& name) const;
    const std::string& at(const Record& r, const std::string& name) const;
    std::optional<std::string> get(const Record& r, const std::string& name) const;
};

Table read_table(const std::string& path);

std::string escape(const std::string& field);
void write_row(std::ostream& out, const std::vector<std::string>& fields);

}  // namespace descan::csv
