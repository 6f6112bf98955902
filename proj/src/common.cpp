#include "descan/common.hpp"
#include "descan/csv.hpp"

#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>

namespace descan {

void parallel_tasks(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& task) {
    if (n == 0) return;
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::min<std::size_t>(n, 1024))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) task(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = cursor++; i < n; i = cursor++) task(i);
            } catch (...) {
                errors[t] = std::current_exception();
                cursor = n;
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        const std::size_t start = i;
        while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file", path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

namespace csv {

std::optional<Record> Reader::next() {
    Record rec;
    rec.line = line_;
    std::string field;
    bool in_quotes = false;
    bool any = false;
    bool field_was_quoted = false;
    char c;
    while (in_.get(c)) {
        any = true;
        if (in_quotes) {
            if (c == '"') {
                if (in_.peek() == '"') {
                    in_.get(c);
                    field += '"';
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line_;
                field += c;
            }
            continue;
        }
        if (c == '"') {
            if (!field.empty() || field_was_quoted)
                throw DataError("unexpected quote inside unquoted field", source_, line_);
            in_quotes = true;
            field_was_quoted = true;
        } else if (c == ',') {
            rec.fields.push_back(std::move(field));
            field.clear();
            field_was_quoted = false;
        } else if (c == '\r') {
            if (in_.peek() == '\n') in_.get(c);
            ++line_;
            rec.fields.push_back(std::move(field));
            return rec;
        } else if (c == '\n') {
            ++line_;
            rec.fields.push_back(std::move(field));
            return rec;
        } else {
            if (field_was_quoted) throw DataError("characters after closing quote", source_, line_);
            field += c;
        }
    }
    if (in_quotes) throw DataError("unterminated quoted field", source_, rec.line);
    if (!any) return std::nullopt;
    rec.fields.push_back(std::move(field));
    return rec;
}

int Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
    return -1;
}

const std::string& Table::at(const Record& r, const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw DataError("missing column '" + name + "'", {}, r.line);
    if (static_cast<std::size_t>(c) >= r.fields.size())
        throw DataError("record has too few fields for column '" + name + "'", {}, r.line);
    return r.fields[static_cast<std::size_t>(c)];
}

std::optional<std::string> Table::get(const Record& r, const std::string& name) const {
    const int c = column(name);
    if (c < 0 || static_cast<std::size_t>(c) >= r.fields.size()) return std::nullopt;
    return r.fields[static_cast<std::size_t>(c)];
}

Table read_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file", path);
    Reader reader(in, path);
    Table t;
    auto head = reader.next();
    if (!head) throw DataError("empty CSV file", path);
    t.header = head->fields;
    if (!t.header.empty() && t.header[0].rfind("\xEF\xBB\xBF", 0) == 0) t.header[0].erase(0, 3);
    while (auto rec = reader.next()) {
        if (rec->fields.size() == 1 && rec->fields[0].empty()) continue;  // blank line
        if (rec->fields.size() != t.header.size())
            throw DataError("expected " + std::to_string(t.header.size()) + " fields, got " +
                                std::to_string(rec->fields.size()),
                            path, rec->line);
        t.rows.push_back(std::move(*rec));
    }
    return t;
}

std::string escape(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_row(std::ostream& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out << ',';
        out << escape(fields[i]);
    }
    out << '\n';
}

}  // namespace csv
}  // namespace descan
